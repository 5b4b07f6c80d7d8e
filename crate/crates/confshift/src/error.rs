//! Crate-wide error type.
//!
//! Variants are grouped by how a caller should react: `Io` means the
//! filesystem or OS failed, everything else means the inputs (files,
//! arguments, spec values) were bad. The CLI maps `Io` to exit code 2 and
//! the rest to exit code 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: invalid parameter combinations, missing knobs.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input values outside an operation's domain (empty calibration set,
    /// negative weights, u outside [0,1], ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A file parsed structurally but a row or field was malformed.
    /// `row` is zero-based over data rows (the header is not counted).
    #[error("parse error{}: {message}", match row { Some(r) => format!(" at row {r}"), None => String::new() })]
    Parse {
        row: Option<usize>,
        message: String,
    },

    /// Numerical failure: singular matrix, non-finite intermediate.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn parse_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            row: Some(row),
            message: msg.into(),
        }
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse {
            row: None,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True when the failure came from the OS rather than from input content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!("is_io_error guaranteed an Io kind"),
            }
        } else {
            Error::Parse {
                row: None,
                message: e.to_string(),
            }
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
        } else {
            Error::Parse {
                row: None,
                message: format!("json: {e}"),
            }
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse {
            row: None,
            message: format!("toml: {e}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
