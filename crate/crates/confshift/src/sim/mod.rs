//! Synthetic shifted anomaly problems and the two-phase experiment protocol.
//!
//! The generator draws 2-D inliers from a two-component Gaussian mixture and
//! anomalies from a displaced component, applies a controllable covariate
//! shift to the test inliers, and hands closed-form oracle weights to tests
//! that want the estimation error factored out. The runner does scorer
//! selection on a labeled validation split (phase 1), then p-values and
//! FDR selection per method on fresh calibration/test splits (phase 2),
//! repeated over deterministically derived seeds.

pub mod generate;
pub mod run;

pub use generate::{generate_problem, true_weight, true_weight_profile, GeneratedProblem};
pub use run::{
    emit_artifacts, read_results_csv, run_experiment, run_experiment_with_threads, run_phase1,
    run_phase2, run_trial, summarize, write_results_csv, write_summary_json, ExperimentOutput,
    SelectedScorer,
};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::ClassifierKind;
use crate::error::{Error, Result};
use crate::multiple_testing::PruneStrategy;

/// The six p-value pipelines compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Edf,
    Wedf,
    EdfRand,
    WedfRand,
    Kde,
    Wkde,
}

/// Canonical execution and reporting order; result rows never depend on the
/// order methods were listed in the spec.
pub const METHOD_ORDER: [Method; 6] = [
    Method::Edf,
    Method::Wedf,
    Method::EdfRand,
    Method::WedfRand,
    Method::Kde,
    Method::Wkde,
];

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Edf => "edf",
            Method::Wedf => "wedf",
            Method::EdfRand => "edf_rand",
            Method::WedfRand => "wedf_rand",
            Method::Kde => "kde",
            Method::Wkde => "wkde",
        }
    }

    /// Stable id mixed into per-method sub-seeds.
    pub fn id(self) -> u64 {
        match self {
            Method::Edf => 0,
            Method::Wedf => 1,
            Method::EdfRand => 2,
            Method::WedfRand => 3,
            Method::Kde => 4,
            Method::Wkde => 5,
        }
    }

    /// Weighted methods share one estimated WeightProfile and go through
    /// WCS; unweighted ones use unit weights and BH.
    pub fn is_weighted(self) -> bool {
        matches!(self, Method::Wedf | Method::WedfRand | Method::Wkde)
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Method::EdfRand | Method::WedfRand)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Covariate shift applied to test-split inlier features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShiftSpec {
    None,
    /// Rigid translation of the inlier distribution by `delta`.
    MeanShift { delta: Vec<f64> },
    /// Mean shift of magnitude `strength` along the first coordinate; the
    /// true likelihood ratio is exp(strength * z1 - strength^2 / 2).
    Localization { strength: f64 },
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec::None
    }
}

/// Weight-estimation knobs for phase 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub bootstrap: usize,
    pub gamma: f64,
    pub classifier: ClassifierKind,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            bootstrap: 8,
            gamma: 0.05,
            classifier: ClassifierKind::Logistic,
        }
    }
}

/// Anomaly-component knobs. Defaults put anomalies on the shift axis so
/// they collect the largest estimated weights, the regime where the
/// discrete p-value floor bites hardest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub anomaly_mean: Vec<f64>,
    pub anomaly_scale: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            anomaly_mean: vec![6.0, 0.0],
            anomaly_scale: 1.0,
        }
    }
}

fn default_name() -> String {
    "synthetic".to_string()
}

fn default_validation_fraction() -> f64 {
    0.3
}

fn default_pruning() -> PruneStrategy {
    PruneStrategy::Deterministic
}

/// Full description of one experiment; everything downstream is a pure
/// function of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub anomaly_rate: f64,
    #[serde(default)]
    pub shift: ShiftSpec,
    pub methods: Vec<Method>,
    #[serde(default = "default_pruning")]
    pub pruning: PruneStrategy,
    pub alpha: f64,
    pub n_seeds: usize,
    pub master_seed: u64,
    /// Size of the labeled validation split relative to n_train.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_cal == 0 || self.n_test == 0 {
            return Err(Error::config("split sizes must be positive"));
        }
        if !(0.0 < self.anomaly_rate && self.anomaly_rate < 0.5) {
            return Err(Error::config(format!(
                "anomaly_rate must lie in (0, 0.5), got {}",
                self.anomaly_rate
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.n_seeds == 0 {
            return Err(Error::config("n_seeds must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("at least one method is required"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config(format!(
                "validation_fraction must lie in [0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.weights.bootstrap == 0 {
            return Err(Error::config("weights.bootstrap must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.weights.gamma) {
            return Err(Error::config(format!(
                "weights.gamma must lie in [0, 0.5), got {}",
                self.weights.gamma
            )));
        }
        if let ShiftSpec::MeanShift { delta } = &self.shift {
            if delta.len() != generate::DIM {
                return Err(Error::config(format!(
                    "shift delta must have {} coordinates, got {}",
                    generate::DIM,
                    delta.len()
                )));
            }
            if delta.iter().any(|d| !d.is_finite()) {
                return Err(Error::config("shift delta must be finite"));
            }
        }
        if let ShiftSpec::Localization { strength } = self.shift {
            if !strength.is_finite() {
                return Err(Error::config("localization strength must be finite"));
            }
        }
        if self.generator.anomaly_mean.len() != generate::DIM {
            return Err(Error::config(format!(
                "generator.anomaly_mean must have {} coordinates",
                generate::DIM
            )));
        }
        if !(self.generator.anomaly_scale.is_finite() && self.generator.anomaly_scale > 0.0) {
            return Err(Error::config("generator.anomaly_scale must be positive"));
        }
        Ok(())
    }

    /// Requested methods in canonical order, duplicates collapsed.
    pub fn ordered_methods(&self) -> Vec<Method> {
        METHOD_ORDER
            .iter()
            .copied()
            .filter(|m| self.methods.contains(m))
            .collect()
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: ExperimentSpec = toml::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_file(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("spec serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// One (seed, method, pruning) outcome row of results.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Trial index; the actual RNG seeds are derived from it.
    pub seed: u64,
    pub method: String,
    pub pruning: String,
    pub fdp: f64,
    /// Empty when the trial drew no true anomalies.
    pub power: Option<f64>,
    pub n_rejected: usize,
    /// Kish effective size of the calibration weights the method consumed.
    pub n_eff: f64,
    /// Largest discrete p-value floor across test points; 0 for randomized
    /// and KDE methods, which have no floor.
    pub floor_max: f64,
}
