//! Importance weights w(z) = dQ/dP(z) for covariate shift.
//!
//! The density-ratio trick: stack calibration (Y=0) and test (Y=1)
//! covariates, fit a probabilistic classifier, and convert its probability
//! into an odds ratio,
//!
//! ```text
//!     w_hat(z) = (N_cal / N_test) * p(z) / (1 - p(z))
//! ```
//!
//! Raw odds are noisy, so the estimator is stabilized in three steps that
//! every downstream method shares:
//!
//!   1. balanced bootstrap bagging: B replicas, each fit on S = min(|C|,|T|)
//!      rows drawn with replacement from each pool (so the replica prior is
//!      exactly 1/2 and the prior ratio is 1), each evaluated on the FULL
//!      pool Z = calib ∪ test;
//!   2. geometric aggregation, exp(mean of log w) per instance;
//!   3. winsorization of the aggregated weights to their empirical
//!      [gamma, 1-gamma] quantiles over Z.
//!
//! One `WeightProfile` per experiment is reused bit-identically by every
//! weighted method, keeping comparisons fair.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{ClassifierKind, ClassifierModel};
use crate::error::{Error, Result};
use crate::scoring::FeatureMatrix;
use crate::seeding::derive_seed;

/// Stabilized importance weights for one calibration/test pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub calib_weights: Vec<f64>,
    pub test_weights: Vec<f64>,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub gamma: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
}

impl WeightProfile {
    /// Uniform unit weights, the no-shift baseline.
    pub fn unit(n_calib: usize, n_test: usize) -> Self {
        WeightProfile {
            calib_weights: vec![1.0; n_calib],
            test_weights: vec![1.0; n_test],
            clip_lo: 1.0,
            clip_hi: 1.0,
            gamma: 0.0,
            n_bootstrap: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.gamma) {
            return Err(Error::domain(format!(
                "gamma must lie in [0, 0.5), got {}",
                self.gamma
            )));
        }
        for (i, w) in self
            .calib_weights
            .iter()
            .chain(&self.test_weights)
            .enumerate()
        {
            if !w.is_finite() || *w <= 0.0 {
                return Err(Error::domain(format!(
                    "weight at position {i} is {w}, expected strictly positive and finite"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let profile: WeightProfile = serde_json::from_reader(std::io::BufReader::new(file))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Fit a classifier discriminating calibration (Y=0) from test (Y=1) rows.
pub fn fit_probabilistic_classifier(
    calib: &FeatureMatrix,
    test: &FeatureMatrix,
    kind: ClassifierKind,
    seed: u64,
) -> Result<ClassifierModel> {
    if calib.is_empty() || test.is_empty() {
        return Err(Error::config("both pools must be nonempty"));
    }
    let stacked = calib.vstack(test)?;
    let labels: Vec<u8> = std::iter::repeat(0u8)
        .take(calib.rows())
        .chain(std::iter::repeat(1u8).take(test.rows()))
        .collect();
    ClassifierModel::fit(&stacked, &labels, kind, seed)
}

/// Single-model weight: prior_ratio * p / (1 - p) with p the clamped
/// classifier probability. `prior_ratio` must be N_cal/N_test of the data
/// the model was fitted on (1 for balanced replicas).
pub fn estimate_weights_single(
    model: &ClassifierModel,
    z: &[f64],
    prior_ratio: f64,
) -> Result<f64> {
    if !(prior_ratio > 0.0 && prior_ratio.is_finite()) {
        return Err(Error::domain(format!(
            "prior_ratio must be positive and finite, got {prior_ratio}"
        )));
    }
    let p = model.predict_proba(z);
    Ok(prior_ratio * p / (1.0 - p))
}

/// Geometric mean across replicas, per instance: exp(mean of log w).
/// All replica vectors must share one length and be strictly positive.
pub fn geometric_mean_weights(replicas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let b = replicas.len();
    if b == 0 {
        return Err(Error::config("need at least one replica"));
    }
    let n = replicas[0].len();
    if replicas.iter().any(|r| r.len() != n) {
        return Err(Error::config("replica length mismatch"));
    }
    let mut log_sum = vec![0.0; n];
    for r in replicas {
        for (acc, &w) in log_sum.iter_mut().zip(r) {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::domain(format!(
                    "replica weight {w} is not strictly positive and finite"
                )));
            }
            *acc += w.ln();
        }
    }
    Ok(log_sum.iter().map(|s| (s / b as f64).exp()).collect())
}

/// Empirical quantile with linear interpolation between order statistics
/// (the same convention as numpy's default). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::domain("quantile of an empty sequence"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!("quantile level {q} outside [0,1]")));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    }
}

/// Clip `values` to their own empirical [gamma, 1-gamma] quantiles.
/// Returns the clipped values and the bounds. Idempotent: clipping a second
/// time with the same gamma moves nothing.
pub fn winsorize(values: &[f64], gamma: f64) -> Result<(Vec<f64>, f64, f64)> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::config(format!(
            "gamma must lie in [0, 0.5), got {gamma}"
        )));
    }
    if values.is_empty() {
        return Err(Error::domain("cannot winsorize an empty sequence"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let lo = quantile_sorted(&sorted, gamma)?;
    let hi = quantile_sorted(&sorted, 1.0 - gamma)?;
    let clipped = values.iter().map(|v| v.clamp(lo, hi)).collect();
    Ok((clipped, lo, hi))
}

/// Kish effective sample size, (sum w)^2 / sum w^2.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::domain(format!(
                "weight at position {i} is {w}, expected nonnegative and finite"
            )));
        }
        sum += w;
        sum_sq += w * w;
    }
    if sum_sq == 0.0 {
        return Err(Error::domain(
            "effective sample size needs at least one strictly positive weight",
        ));
    }
    Ok(sum * sum / sum_sq)
}

/// Balanced bootstrap bagging with geometric aggregation and winsorization.
///
/// For each of `B` replicas, draw S = min(|calib|,|test|) rows with
/// replacement from each pool, fit `kind` on the balanced stack, and score
/// the odds of every instance in the full pool. Aggregate geometrically,
/// then winsorize over the pool, then split back into per-pool weights.
pub fn bagged_weights(
    calib: &FeatureMatrix,
    test: &FeatureMatrix,
    b: usize,
    gamma: f64,
    kind: ClassifierKind,
    seed: u64,
) -> Result<WeightProfile> {
    if b == 0 {
        return Err(Error::config("need at least one bootstrap replica"));
    }
    if calib.is_empty() || test.is_empty() {
        return Err(Error::config("both pools must be nonempty"));
    }
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::config(format!(
            "gamma must lie in [0, 0.5), got {gamma}"
        )));
    }
    if calib.cols() != test.cols() {
        return Err(Error::config(format!(
            "column mismatch: calib has {}, test has {}",
            calib.cols(),
            test.cols()
        )));
    }

    let s = calib.rows().min(test.rows());
    let pool = calib.vstack(test)?;
    let mut replicas: Vec<Vec<f64>> = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1, rep as u64));
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * s);
        for _ in 0..s {
            rows.push(calib.row(rng.gen_range(0..calib.rows())).to_vec());
        }
        for _ in 0..s {
            rows.push(test.row(rng.gen_range(0..test.rows())).to_vec());
        }
        let balanced = FeatureMatrix::from_rows(&rows)?;
        let labels: Vec<u8> = std::iter::repeat(0u8)
            .take(s)
            .chain(std::iter::repeat(1u8).take(s))
            .collect();
        let model = ClassifierModel::fit(&balanced, &labels, kind, derive_seed(seed, 2, rep as u64))?;
        // Replicas are balanced by construction (s rows per pool), so the
        // N_cal/N_test prior correction is exactly 1 here.
        let prior_ratio = 1.0;
        let weights: Vec<f64> = pool
            .iter_rows()
            .map(|z| estimate_weights_single(&model, z, prior_ratio))
            .collect::<Result<_>>()?;
        replicas.push(weights);
    }

    let aggregated = geometric_mean_weights(&replicas)?;
    let (clipped, clip_lo, clip_hi) = winsorize(&aggregated, gamma)?;
    let (calib_weights, test_weights) = {
        let (c, t) = clipped.split_at(calib.rows());
        (c.to_vec(), t.to_vec())
    };

    let profile = WeightProfile {
        calib_weights,
        test_weights,
        clip_lo,
        clip_hi,
        gamma,
        n_bootstrap: b,
        seed,
    };
    profile.validate()?;
    Ok(profile)
}
