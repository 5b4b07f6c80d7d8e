//! Anomaly scores from feature vectors, plus ingestion of external scores.
//!
//! Downstream inference treats scores as opaque: larger means more
//! anomalous, nothing else is assumed. This module provides three simple
//! built-in detectors (kNN distance, per-feature histogram log-density,
//! Mahalanobis distance) and a CSV path for scores computed elsewhere.
//!
//! Standardization parameters are always fitted on the training split and
//! then applied unchanged to every other split.

use std::path::Path;

use crate::error::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Build from a flat row-major buffer.
    pub fn from_flat(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::config("feature matrix needs at least one column"));
        }
        if values.len() != rows * cols {
            return Err(Error::config(format!(
                "flat buffer has {} values, expected {} ({} rows x {} cols)",
                values.len(),
                rows * cols,
                rows,
                cols
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite feature value at flat index {bad}"
            )));
        }
        Ok(FeatureMatrix { rows, cols, values })
    }

    /// Build from per-instance rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::config("ragged feature rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(rows.len(), cols, flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Stack two matrices with identical column counts, self first.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.cols != other.cols {
            return Err(Error::config(format!(
                "column mismatch: {} vs {}",
                self.cols, other.cols
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        FeatureMatrix::from_flat(self.rows + other.rows, self.cols, values)
    }
}

/// Per-feature z-score parameters, fitted on the training split only.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &FeatureMatrix) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::config("cannot standardize on an empty split"));
        }
        let (rows, cols) = (train.rows() as f64, train.cols());
        let mut mean = vec![0.0; cols];
        for row in train.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows;
        }
        let mut var = vec![0.0; cols];
        for row in train.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        // Population variance; constant features keep unit scale so they pass
        // through unchanged instead of dividing by zero.
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / rows).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.cols() != self.mean.len() {
            return Err(Error::config(format!(
                "column mismatch: standardizer has {}, matrix has {}",
                self.mean.len(),
                m.cols()
            )));
        }
        let mut values = Vec::with_capacity(m.rows() * m.cols());
        for row in m.iter_rows() {
            for ((v, mu), sd) in row.iter().zip(&self.mean).zip(&self.scale) {
                values.push((v - mu) / sd);
            }
        }
        FeatureMatrix::from_flat(m.rows(), m.cols(), values)
    }
}

/// Class label for a test instance. Calibration instances are inliers by
/// assumption and carry no label.
pub type Label = u8;

/// Scores split into the calibration pool and the test pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub calib_scores: Vec<f64>,
    pub test_scores: Vec<f64>,
    pub test_labels: Option<Vec<Label>>,
}

impl ScoreBatch {
    /// Total number of scores across both pools.
    pub fn len(&self) -> usize {
        self.calib_scores.len() + self.test_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self
            .calib_scores
            .iter()
            .chain(&self.test_scores)
            .position(|s| !s.is_finite())
        {
            return Err(Error::domain(format!(
                "non-finite score at position {bad}"
            )));
        }
        if let Some(labels) = &self.test_labels {
            if labels.len() != self.test_scores.len() {
                return Err(Error::parse(format!(
                    "label/score length mismatch: {} labels for {} test scores",
                    labels.len(),
                    self.test_scores.len()
                )));
            }
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean Euclidean distance to the k nearest training rows.
#[derive(Debug, Clone)]
pub struct KnnScorer {
    train: FeatureMatrix,
    k: usize,
}

/// Per-feature equal-width histograms; score is the summed negative
/// log-density. Out-of-range queries clamp to the nearest edge bin.
#[derive(Debug, Clone)]
pub struct HistogramScorer {
    features: Vec<HistogramFeature>,
}

#[derive(Debug, Clone)]
struct HistogramFeature {
    lo: f64,
    width: f64,
    /// Density per bin; empty marks a constant feature, which contributes 0.
    densities: Vec<f64>,
}

/// Distance to the training mean in the metric of (covariance + ridge I).
#[derive(Debug, Clone)]
pub struct MahalanobisScorer {
    mean: Vec<f64>,
    /// Lower Cholesky factor of the ridged covariance.
    chol: Vec<Vec<f64>>,
}

/// A fitted anomaly scorer. Immutable after fit, so concurrent read-only
/// scoring is safe.
#[derive(Debug, Clone)]
pub enum Scorer {
    Knn(KnnScorer),
    Histogram(HistogramScorer),
    Mahalanobis(MahalanobisScorer),
}

/// Numerical guard added to histogram densities before taking logs.
pub const DENSITY_EPSILON: f64 = 1e-12;

pub fn fit_knn_scorer(train: &FeatureMatrix, k: usize) -> Result<Scorer> {
    if k == 0 {
        return Err(Error::config("k must be positive"));
    }
    if k > train.rows() {
        return Err(Error::config(format!(
            "k={} exceeds the number of training rows ({})",
            k,
            train.rows()
        )));
    }
    Ok(Scorer::Knn(KnnScorer {
        train: train.clone(),
        k,
    }))
}

pub fn fit_histogram_scorer(train: &FeatureMatrix, bins: usize) -> Result<Scorer> {
    if bins < 2 {
        return Err(Error::config("need at least 2 histogram bins"));
    }
    if train.is_empty() {
        return Err(Error::config("cannot fit a histogram on an empty split"));
    }
    let n = train.rows() as f64;
    let mut features = Vec::with_capacity(train.cols());
    for c in 0..train.cols() {
        let col = || train.iter_rows().map(move |r| r[c]);
        let lo = col().fold(f64::INFINITY, f64::min);
        let hi = col().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            features.push(HistogramFeature {
                lo,
                width: 0.0,
                densities: Vec::new(),
            });
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in col() {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        let densities = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        features.push(HistogramFeature {
            lo,
            width,
            densities,
        });
    }
    Ok(Scorer::Histogram(HistogramScorer { features }))
}

pub fn fit_mahalanobis_scorer(train: &FeatureMatrix, ridge: f64) -> Result<Scorer> {
    if !(ridge >= 0.0) {
        return Err(Error::config("ridge must be nonnegative"));
    }
    if train.rows() <= train.cols() && ridge == 0.0 {
        return Err(Error::config(format!(
            "{} rows cannot identify a {}x{} covariance without ridge",
            train.rows(),
            train.cols(),
            train.cols()
        )));
    }
    if train.is_empty() {
        return Err(Error::config("cannot fit on an empty split"));
    }
    let d = train.cols();
    let n = train.rows() as f64;
    let mut mean = vec![0.0; d];
    for row in train.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    // Sample covariance (n-1 denominator) plus ridge on the diagonal.
    let denom = if train.rows() > 1 { n - 1.0 } else { 1.0 };
    let mut cov = vec![vec![0.0; d]; d];
    for row in train.iter_rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= denom;
        }
        cov[i][i] += ridge;
    }
    let chol = cholesky_lower(&cov).ok_or_else(|| {
        Error::numerical("covariance is singular; refit with a positive ridge")
    })?;
    Ok(Scorer::Mahalanobis(MahalanobisScorer { mean, chol }))
}

/// Lower-triangular Cholesky factor, or None if the matrix is not positive
/// definite. Only the lower triangle of `a` is read.
fn cholesky_lower(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Knn(_) => "knn",
            Scorer::Histogram(_) => "histogram",
            Scorer::Mahalanobis(_) => "mahalanobis",
        }
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        match self {
            Scorer::Knn(s) => s.score(z),
            Scorer::Histogram(s) => s.score(z),
            Scorer::Mahalanobis(s) => s.score(z),
        }
    }

    pub fn score_matrix(&self, m: &FeatureMatrix) -> Vec<f64> {
        m.iter_rows().map(|r| self.score(r)).collect()
    }
}

impl KnnScorer {
    fn score(&self, z: &[f64]) -> f64 {
        let mut dists: Vec<f64> = self.train.iter_rows().map(|r| euclidean(r, z)).collect();
        let k = self.k;
        dists.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
        dists[..k].iter().sum::<f64>() / k as f64
    }
}

impl HistogramScorer {
    fn score(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for (f, &v) in self.features.iter().zip(z) {
            if f.densities.is_empty() {
                continue; // constant feature
            }
            let bins = f.densities.len();
            let raw = (v - f.lo) / f.width;
            let idx = if raw < 0.0 {
                0
            } else {
                (raw as usize).min(bins - 1)
            };
            total += -(f.densities[idx] + DENSITY_EPSILON).ln();
        }
        total
    }
}

impl MahalanobisScorer {
    fn score(&self, z: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut diff: Vec<f64> = z.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        // Forward substitution: solve L y = diff, then |y| is the distance.
        for i in 0..d {
            for k in 0..i {
                diff[i] -= self.chol[i][k] * diff[k];
            }
            diff[i] /= self.chol[i][i];
        }
        diff.iter().map(|y| y * y).sum::<f64>().sqrt()
    }
}

/// Read a score CSV. The header is mandatory: required column `score`,
/// optional `label` ∈ {0,1} (1 = anomaly), optional `split` ∈ {calib,test}.
/// Rows without a split column land in the test pool. Labels attach to test
/// rows; the calibration pool is inliers by assumption.
pub fn ingest_scores(path: &Path) -> Result<ScoreBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let score_col = col("score")
        .ok_or_else(|| Error::parse("score CSV must have a `score` column"))?;
    let label_col = col("label");
    let split_col = col("split");

    let mut calib_scores = Vec::new();
    let mut test_scores = Vec::new();
    let mut test_labels = label_col.map(|_| Vec::new());

    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw = record
            .get(score_col)
            .ok_or_else(|| Error::parse_at(row, "missing score field"))?;
        let score: f64 = raw
            .parse()
            .map_err(|_| Error::parse_at(row, format!("bad score {raw:?}")))?;
        if !score.is_finite() {
            return Err(Error::parse_at(row, format!("non-finite score {raw:?}")));
        }
        let is_test = match split_col.map(|c| record.get(c).unwrap_or("")) {
            None | Some("test") => true,
            Some("calib") => false,
            Some(other) => {
                return Err(Error::parse_at(
                    row,
                    format!("split must be `calib` or `test`, got {other:?}"),
                ))
            }
        };
        if is_test {
            test_scores.push(score);
            if let (Some(c), Some(labels)) = (label_col, test_labels.as_mut()) {
                let raw = record.get(c).unwrap_or("");
                let label = match raw {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(Error::parse_at(
                            row,
                            format!("label must be 0 or 1, got {raw:?}"),
                        ))
                    }
                };
                labels.push(label);
            }
        } else {
            calib_scores.push(score);
        }
    }

    let batch = ScoreBatch {
        calib_scores,
        test_scores,
        test_labels,
    };
    batch.validate()?;
    Ok(batch)
}

/// Read a feature CSV: a header row of feature names over an all-numeric body.
pub fn read_features_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let cols = reader.headers()?.len();
    if cols == 0 {
        return Err(Error::parse("feature CSV has an empty header"));
    }
    let mut values = Vec::new();
    let mut rows = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != cols {
            return Err(Error::parse_at(
                row,
                format!("expected {} fields, got {}", cols, record.len()),
            ));
        }
        for raw in record.iter() {
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::parse_at(row, format!("bad feature value {raw:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse_at(
                    row,
                    format!("non-finite feature value {raw:?}"),
                ));
            }
            values.push(v);
        }
        rows += 1;
    }
    FeatureMatrix::from_flat(rows, cols, values)
}
