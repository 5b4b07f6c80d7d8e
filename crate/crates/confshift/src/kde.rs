//! Continuous surrogate p-values from a weighted kernel density estimate.
//!
//! The discrete estimator's floor comes from the point mass it puts on the
//! test score itself. Smoothing the weighted calibration scores removes it:
//!
//! ```text
//!     f_hat(s) = (1 / (h Σw)) Σ_i w_i K((s - s_i)/h)       Gaussian K
//!     p_hat(s_j) = 1 - Σ_i (w_i/Σw) Φ((s_j - s_i)/h)       Gaussian CDF Φ
//! ```
//!
//! The Gaussian kernel has full support, so p_hat is strictly decreasing and
//! can fall below any threshold: no floor, and no injected randomness. The
//! price is approximation error that only vanishes as the calibration set
//! grows, which is exactly the resolution-versus-variance trade the rest of
//! the crate quantifies.
//!
//! Bandwidth is chosen by maximizing the weighted leave-one-out
//! log-likelihood over a grid; held-out weights are renormalized so each
//! f_hat_{-i} stays a density. Ties break toward the smaller bandwidth,
//! favoring resolution. Degenerate inputs (fewer than two distinct scores)
//! fall back to h_min = max(1e-6, 1e-4 * score range) and are flagged.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::{PValueMethod, PValueVector};
use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.3989422804014327;

/// Smoothing kernel. Only the Gaussian is implemented; its full support is
/// what guarantees the no-floor property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
}

/// A fitted weighted KDE over calibration scores. Immutable after fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedKde {
    pub support_scores: Vec<f64>,
    /// w_i / Σw, sums to 1 within 1e-12.
    pub norm_weights: Vec<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
    #[serde(rename = "degenerate_flag")]
    pub degenerate: bool,
}

/// Outcome of the LOO bandwidth search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub chosen: f64,
    pub grid: Vec<f64>,
    /// Weighted LOO log-likelihood per grid candidate; empty when the
    /// degenerate fallback fired and no search ran.
    pub loo_loglik: Vec<f64>,
    pub degenerate: bool,
}

/// Relative bandwidth floor: max(1e-6, 1e-4 * score range).
pub fn h_min(scores: &[f64]) -> f64 {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo { hi - lo } else { 0.0 };
    (1e-4 * range).max(1e-6)
}

fn validate_scores_weights(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::domain("KDE needs at least one score"));
    }
    if scores.len() != weights.len() {
        return Err(Error::domain(format!(
            "{} scores but {} weights",
            scores.len(),
            weights.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::domain(format!("score {i} is not finite")));
    }
    let mut total = 0.0;
    for (i, w) in weights.iter().enumerate() {
        if !(w.is_finite() && *w > 0.0) {
            return Err(Error::domain(format!(
                "weight {i} must be positive and finite"
            )));
        }
        total += w;
    }
    Ok(total)
}

/// Fit a weighted KDE with an explicit bandwidth.
pub fn fit_weighted_kde(scores: &[f64], weights: &[f64], bandwidth: f64) -> Result<WeightedKde> {
    let total = validate_scores_weights(scores, weights)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::domain(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    Ok(WeightedKde {
        support_scores: scores.to_vec(),
        norm_weights: weights.iter().map(|w| w / total).collect(),
        bandwidth,
        kernel: Kernel::Gaussian,
        degenerate: false,
    })
}

/// Default search grid: 25 log-spaced candidates spanning [0.1, 10] times
/// the Silverman reference 1.06 * sigma_w * N^(-1/5), floored at h_min.
pub fn default_bandwidth_grid(scores: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let total = validate_scores_weights(scores, weights)?;
    let mean: f64 = scores
        .iter()
        .zip(weights)
        .map(|(s, w)| s * w / total)
        .sum();
    let var: f64 = scores
        .iter()
        .zip(weights)
        .map(|(s, w)| (s - mean) * (s - mean) * w / total)
        .sum();
    let silverman = 1.06 * var.sqrt() * (scores.len() as f64).powf(-0.2);
    let floor = h_min(scores);
    let base = if silverman > 0.0 { silverman } else { floor };
    let (lo, hi) = ((0.1 * base).ln(), (10.0 * base).ln());
    Ok((0..25)
        .map(|i| (lo + (hi - lo) * i as f64 / 24.0).exp().max(floor))
        .collect())
}

/// Choose the bandwidth maximizing the weighted LOO log-likelihood
///
/// ```text
///     L(h) = Σ_i (w_i/Σw) log f_hat_{-i}(s_i)
/// ```
///
/// where f_hat_{-i} omits point i and renormalizes the remaining weights.
/// Ties break toward the smaller candidate. Fewer than two distinct scores
/// force the h_min fallback with `degenerate` set.
pub fn select_bandwidth_loo(
    scores: &[f64],
    weights: &[f64],
    grid: &[f64],
) -> Result<BandwidthSelection> {
    let total = validate_scores_weights(scores, weights)?;
    if scores.len() < 2 {
        return Err(Error::domain("LOO selection needs at least 2 scores"));
    }
    if grid.is_empty() {
        return Err(Error::config("empty bandwidth grid"));
    }
    let floor = h_min(scores);
    if let Some(h) = grid.iter().find(|h| !(**h >= floor) || !h.is_finite()) {
        return Err(Error::config(format!(
            "grid candidate {h} below h_min = {floor}"
        )));
    }

    let distinct = {
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        sorted.len()
    };
    if distinct < 2 {
        return Ok(BandwidthSelection {
            chosen: floor,
            grid: grid.to_vec(),
            loo_loglik: Vec::new(),
            degenerate: true,
        });
    }

    let n = scores.len();
    let loo_loglik: Vec<f64> = grid
        .iter()
        .map(|&h| {
            // Σ_{k≠i} w_k K((s_i-s_k)/h), built from symmetric pairs.
            let mut acc = vec![0.0f64; n];
            for i in 0..n {
                for k in i + 1..n {
                    let t = (scores[i] - scores[k]) / h;
                    let e = (-0.5 * t * t).exp();
                    acc[i] += weights[k] * e;
                    acc[k] += weights[i] * e;
                }
            }
            let mut ll = 0.0;
            for i in 0..n {
                let dens = acc[i] * FRAC_1_SQRT_2PI / ((total - weights[i]) * h);
                ll += weights[i] / total * dens.ln();
            }
            ll
        })
        .collect();

    // Argmax with ties toward the smaller h; the grid need not be sorted, so
    // order candidates explicitly. NaN (from 0 * -inf underflow corners)
    // loses to every finite value.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[a].total_cmp(&grid[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        let (cur, cand) = (loo_loglik[best], loo_loglik[i]);
        if cand > cur || (cur.is_nan() && !cand.is_nan()) {
            best = i;
        }
    }
    let chosen = if loo_loglik[best].is_finite() {
        grid[best]
    } else {
        // Every candidate underflowed; the widest bandwidth is the only
        // defensible answer.
        grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(BandwidthSelection {
        chosen,
        grid: grid.to_vec(),
        loo_loglik,
        degenerate: false,
    })
}

/// Fit with LOO-selected bandwidth over `grid`, or over the default grid
/// when `grid` is None. Single-score inputs skip selection and take h_min.
pub fn fit_weighted_kde_auto(
    scores: &[f64],
    weights: &[f64],
    grid: Option<&[f64]>,
) -> Result<(WeightedKde, BandwidthSelection)> {
    validate_scores_weights(scores, weights)?;
    let selection = if scores.len() < 2 {
        BandwidthSelection {
            chosen: h_min(scores),
            grid: Vec::new(),
            loo_loglik: Vec::new(),
            degenerate: true,
        }
    } else {
        let default_grid;
        let grid = match grid {
            Some(g) => g,
            None => {
                default_grid = default_bandwidth_grid(scores, weights)?;
                &default_grid
            }
        };
        select_bandwidth_loo(scores, weights, grid)?
    };
    let mut kde = fit_weighted_kde(scores, weights, selection.chosen)?;
    kde.degenerate = selection.degenerate;
    Ok((kde, selection))
}

impl WeightedKde {
    /// Density f_hat(s).
    pub fn density(&self, s: f64) -> f64 {
        let h = self.bandwidth;
        let mut acc = 0.0;
        for (si, nw) in self.support_scores.iter().zip(&self.norm_weights) {
            let t = (s - si) / h;
            acc += nw * (-0.5 * t * t).exp();
        }
        acc * FRAC_1_SQRT_2PI / h
    }

    pub fn validate(&self) -> Result<()> {
        if self.support_scores.len() != self.norm_weights.len() {
            return Err(Error::domain("support/weight length mismatch"));
        }
        if self.support_scores.is_empty() {
            return Err(Error::domain("empty KDE support"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::domain("bandwidth must be positive"));
        }
        let sum: f64 = self.norm_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "normalized weights sum to {sum}, expected 1 within 1e-12"
            )));
        }
        if self.norm_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::domain("normalized weights must be positive"));
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
        let kde: WeightedKde = serde_json::from_reader(std::io::BufReader::new(file))?;
        kde.validate()?;
        Ok(kde)
    }
}

/// Right-tail surrogate p-value 1 - Σ_i (w_i/Σw) Φ((s_j - s_i)/h), clamped
/// to [0,1] against rounding.
pub fn kde_pvalue(kde: &WeightedKde, s_j: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let h = kde.bandwidth;
    let mut cdf = 0.0;
    for (si, nw) in kde.support_scores.iter().zip(&kde.norm_weights) {
        cdf += nw * normal.cdf((s_j - si) / h);
    }
    (1.0 - cdf).clamp(0.0, 1.0)
}

/// Elementwise `kde_pvalue` over a test batch; deterministic, no seed.
pub fn kde_pvalue_batch(kde: &WeightedKde, test_scores: &[f64]) -> PValueVector {
    PValueVector {
        values: test_scores.iter().map(|&s| kde_pvalue(kde, s)).collect(),
        method: PValueMethod::Kde,
        seed: None,
    }
}
