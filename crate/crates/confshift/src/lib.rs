//! Conformal anomaly detection under covariate shift.
//!
//! The pipeline: score points against a clean training sample, estimate
//! importance weights for the calibration-to-test shift by probabilistic
//! classification, turn test scores into weighted conformal p-values
//! (discrete, randomized, or KDE-smoothed), and select discoveries with
//! BH or weighted conformal selection at a target FDR.
//!
//! The discrete weighted p-value cannot fall below w_j / (sum_i w_i + w_j),
//! so heavy shift silently caps the resolution of every test point; the
//! randomized and KDE variants trade that floor away at the price of extra
//! variance. The [`sim`] harness exists to make that trade-off measurable.

pub mod classify;
pub mod conformal;
pub mod error;
pub mod evaluation;
pub mod kde;
pub mod multiple_testing;
pub mod scoring;
pub mod seeding;
pub mod sim;
pub mod weights;

pub use error::{Error, Result};
