//! Weighted conformal p-values and their failure-mode diagnostics.
//!
//! Given calibration scores s_1..s_N with importance weights w_1..w_N and a
//! test score s_j with weight w_j, write W_total = Σ_i w_i + w_j. The two
//! estimators are
//!
//! ```text
//!     p_disc = (Σ_i w_i 1[s_i >= s_j] + w_j) / W_total            (discrete)
//!
//!     p_rand = Σ_i w_i 1[s_i > s_j] / W_total
//!            + U * (w_j + Σ_i w_i 1[s_i = s_j]) / W_total         (randomized)
//! ```
//!
//! The discrete estimator can never fall below its floor w_j / W_total, so a
//! single heavily weighted test point may be undetectable at any target
//! level. The randomized estimator removes the floor at the price of
//! injected variance: conditional on the scores, p_rand is uniform on an
//! interval of width (w_j + tie mass)/W_total, hence variance width²/12.
//! `tail_diagnostics` reports floor, width, that variance, and the
//! detectability ratio δ_j(r) = (w_j/W_total) / ((r/m)·α) for putative
//! rejection counts r.
//!
//! Tie comparisons use exact floating-point equality, deliberately: the
//! randomized split is stated on exact ties, and a tolerance would silently
//! change the interval width. Callers who quantize scores should do so
//! before calling in.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which estimator produced a p-value vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    Discrete,
    Randomized,
    Kde,
}

impl std::fmt::Display for PValueMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PValueMethod::Discrete => write!(f, "discrete"),
            PValueMethod::Randomized => write!(f, "randomized"),
            PValueMethod::Kde => write!(f, "kde"),
        }
    }
}

impl std::str::FromStr for PValueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(PValueMethod::Discrete),
            "randomized" => Ok(PValueMethod::Randomized),
            "kde" => Ok(PValueMethod::Kde),
            other => Err(Error::config(format!(
                "unknown p-value method {other:?}, expected discrete|randomized|kde"
            ))),
        }
    }
}

/// P-values for one test batch, tagged with the producing method and, for
/// the randomized estimator, the seed that drew its uniforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub values: Vec<f64>,
    pub method: PValueMethod,
    pub seed: Option<u64>,
}

impl PValueVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::domain(format!(
                    "p-value at index {i} is {p}, outside [0,1]"
                )));
            }
        }
        if self.method == PValueMethod::Randomized && self.seed.is_none() {
            return Err(Error::domain(
                "randomized p-values must record their seed",
            ));
        }
        Ok(())
    }

    /// Write as CSV with header `index,p_value,method,seed`.
    pub fn to_csv_file(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "p_value", "method", "seed"])?;
        let seed = self.seed.map(|s| s.to_string()).unwrap_or_default();
        for (i, p) in self.values.iter().enumerate() {
            w.write_record([i.to_string(), format!("{p}"), self.method.to_string(), seed.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read back a CSV produced by `to_csv_file`. Rows must be sorted by
    /// index starting at 0 and share one method/seed.
    pub fn from_csv_file(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(format!("p-value CSV needs a `{name}` column")))
        };
        let (ci, cp, cm, cs) = (col("index")?, col("p_value")?, col("method")?, col("seed")?);
        let mut values = Vec::new();
        let mut method: Option<PValueMethod> = None;
        let mut seed: Option<u64> = None;
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let idx: usize = record
                .get(ci)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse_at(row, "bad index"))?;
            if idx != row {
                return Err(Error::parse_at(row, format!("index {idx} out of order")));
            }
            let p: f64 = record
                .get(cp)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse_at(row, "bad p_value"))?;
            values.push(p);
            let m: PValueMethod = record.get(cm).unwrap_or("").parse()?;
            if *method.get_or_insert(m) != m {
                return Err(Error::parse_at(row, "mixed methods in one vector"));
            }
            let s = record.get(cs).unwrap_or("");
            if !s.is_empty() {
                let s: u64 = s.parse().map_err(|_| Error::parse_at(row, "bad seed"))?;
                if *seed.get_or_insert(s) != s {
                    return Err(Error::parse_at(row, "mixed seeds in one vector"));
                }
            }
        }
        let v = PValueVector {
            values,
            method: method.ok_or_else(|| Error::parse("empty p-value CSV"))?,
            seed,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn to_json_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let v: PValueVector = serde_json::from_reader(std::io::BufReader::new(file))?;
        v.validate()?;
        Ok(v)
    }
}

/// Floor, randomization interval, and detectability diagnostics for one
/// test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    /// Smallest attainable discrete p-value, w_j / W_total.
    pub floor: f64,
    /// Randomization interval width, (w_j + tie mass at s_j) / W_total.
    pub width: f64,
    /// Conditional variance of the randomized p-value, width² / 12.
    pub cond_variance: f64,
    /// Detectability ratio δ_j(r) per putative rejection count r; a value
    /// above 1 means the floor alone blocks rejection at that count.
    pub detectability: BTreeMap<usize, f64>,
}

fn validate_inputs(
    calib_scores: &[f64],
    calib_weights: &[f64],
    s_j: f64,
    w_j: f64,
) -> Result<()> {
    if calib_scores.is_empty() {
        return Err(Error::domain("empty calibration set"));
    }
    if calib_scores.len() != calib_weights.len() {
        return Err(Error::domain(format!(
            "{} calibration scores but {} weights",
            calib_scores.len(),
            calib_weights.len()
        )));
    }
    if let Some(i) = calib_scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::domain(format!("calibration score {i} is not finite")));
    }
    if let Some(i) = calib_weights
        .iter()
        .position(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(Error::domain(format!(
            "calibration weight {i} must be positive and finite"
        )));
    }
    if !s_j.is_finite() {
        return Err(Error::domain("test score must be finite"));
    }
    if !(w_j.is_finite() && w_j > 0.0) {
        return Err(Error::domain("test weight must be positive and finite"));
    }
    Ok(())
}

/// Σ_i w_i + w_j, in one fixed summation order shared by every formula in
/// this module so that the floor identity holds to the last bit.
fn total_weight(calib_weights: &[f64], w_j: f64) -> f64 {
    calib_weights.iter().sum::<f64>() + w_j
}

/// Smallest discrete p-value this test point can attain, w_j / W_total.
pub fn pvalue_floor(calib_weights: &[f64], w_j: f64) -> Result<f64> {
    if calib_weights.is_empty() {
        return Err(Error::domain("empty calibration set"));
    }
    if let Some(i) = calib_weights
        .iter()
        .position(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(Error::domain(format!(
            "calibration weight {i} must be positive and finite"
        )));
    }
    if !(w_j.is_finite() && w_j > 0.0) {
        return Err(Error::domain("test weight must be positive and finite"));
    }
    Ok(w_j / total_weight(calib_weights, w_j))
}

/// Deterministic weighted conformal p-value (ties counted with >=).
pub fn discrete_pvalue(
    calib_scores: &[f64],
    calib_weights: &[f64],
    s_j: f64,
    w_j: f64,
) -> Result<f64> {
    validate_inputs(calib_scores, calib_weights, s_j, w_j)?;
    let mut exceed = 0.0;
    for (s, w) in calib_scores.iter().zip(calib_weights) {
        if *s >= s_j {
            exceed += w;
        }
    }
    Ok((exceed + w_j) / total_weight(calib_weights, w_j))
}

/// Randomized weighted conformal p-value with caller-supplied u ∈ [0,1].
///
/// u is explicit so the conditional-variance contract can be exercised;
/// `randomized_pvalue_seeded` draws it from a seeded generator instead.
pub fn randomized_pvalue(
    calib_scores: &[f64],
    calib_weights: &[f64],
    s_j: f64,
    w_j: f64,
    u: f64,
) -> Result<f64> {
    validate_inputs(calib_scores, calib_weights, s_j, w_j)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(format!("u must lie in [0,1], got {u}")));
    }
    let mut strict = 0.0;
    let mut ties = 0.0;
    for (s, w) in calib_scores.iter().zip(calib_weights) {
        if *s > s_j {
            strict += w;
        } else if *s == s_j {
            ties += w;
        }
    }
    let total = total_weight(calib_weights, w_j);
    Ok(strict / total + u * ((w_j + ties) / total))
}

/// Randomized p-value with u drawn from a ChaCha8 generator.
pub fn randomized_pvalue_seeded(
    calib_scores: &[f64],
    calib_weights: &[f64],
    s_j: f64,
    w_j: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let u: f64 = rng.gen();
    randomized_pvalue(calib_scores, calib_weights, s_j, w_j, u)
}

/// Discrete p-values for a whole test batch, each with its own weight.
pub fn discrete_pvalues(
    calib_scores: &[f64],
    calib_weights: &[f64],
    test_scores: &[f64],
    test_weights: &[f64],
) -> Result<PValueVector> {
    if test_scores.len() != test_weights.len() {
        return Err(Error::domain(format!(
            "{} test scores but {} weights",
            test_scores.len(),
            test_weights.len()
        )));
    }
    let values = test_scores
        .iter()
        .zip(test_weights)
        .map(|(&s, &w)| discrete_pvalue(calib_scores, calib_weights, s, w))
        .collect::<Result<_>>()?;
    let v = PValueVector {
        values,
        method: PValueMethod::Discrete,
        seed: None,
    };
    v.validate()?;
    Ok(v)
}

/// Randomized p-values for a whole batch; one u per test point, drawn in
/// index order from a ChaCha8 generator seeded with `seed`.
pub fn randomized_pvalues(
    calib_scores: &[f64],
    calib_weights: &[f64],
    test_scores: &[f64],
    test_weights: &[f64],
    seed: u64,
) -> Result<PValueVector> {
    if test_scores.len() != test_weights.len() {
        return Err(Error::domain(format!(
            "{} test scores but {} weights",
            test_scores.len(),
            test_weights.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = test_scores
        .iter()
        .zip(test_weights)
        .map(|(&s, &w)| randomized_pvalue_seeded(calib_scores, calib_weights, s, w, &mut rng))
        .collect::<Result<_>>()?;
    let v = PValueVector {
        values,
        method: PValueMethod::Randomized,
        seed: Some(seed),
    };
    v.validate()?;
    Ok(v)
}

/// Floor, interval width, conditional variance, and detectability ratios
/// for one test point against m simultaneous tests at level alpha.
pub fn tail_diagnostics(
    calib_scores: &[f64],
    calib_weights: &[f64],
    s_j: f64,
    w_j: f64,
    m: usize,
    alpha: f64,
    r_set: &[usize],
) -> Result<TailDiagnostics> {
    validate_inputs(calib_scores, calib_weights, s_j, w_j)?;
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if m == 0 {
        return Err(Error::domain("m must be positive"));
    }
    let total = total_weight(calib_weights, w_j);
    let floor = w_j / total;
    let tie_mass: f64 = calib_scores
        .iter()
        .zip(calib_weights)
        .filter(|(s, _)| **s == s_j)
        .map(|(_, w)| w)
        .sum();
    let width = (w_j + tie_mass) / total;
    let cond_variance = width * width / 12.0;
    let mut detectability = BTreeMap::new();
    for &r in r_set {
        if r == 0 || r > m {
            return Err(Error::domain(format!(
                "putative count r={r} outside 1..={m}"
            )));
        }
        detectability.insert(r, floor / ((r as f64 / m as f64) * alpha));
    }
    Ok(TailDiagnostics {
        floor,
        width,
        cond_variance,
        detectability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // ===== discrete estimator =====

    #[test]
    fn discrete_hand_evaluation() {
        let p = discrete_pvalue(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 2.5, 1.0).unwrap();
        assert_eq!(p, 0.6);
    }

    #[test]
    fn discrete_floor_case() {
        let p = discrete_pvalue(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 9.0, 1.0).unwrap();
        assert_eq!(p, 0.2);
    }

    #[test]
    fn discrete_below_minimum_is_one() {
        let p = discrete_pvalue(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0.5, 1.0).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn discrete_rejects_bad_inputs() {
        assert!(matches!(
            discrete_pvalue(&[], &[], 1.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(discrete_pvalue(&[1.0], &[1.0, 2.0], 1.0, 1.0).is_err());
        assert!(discrete_pvalue(&[1.0], &[0.0], 1.0, 1.0).is_err());
        assert!(discrete_pvalue(&[1.0], &[1.0], 1.0, -1.0).is_err());
        assert!(discrete_pvalue(&[f64::NAN], &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn discrete_is_nonincreasing_in_test_score() {
        let scores = [0.3, -1.2, 2.5, 0.3, 1.9, -0.4];
        let weights = [0.5, 1.5, 2.0, 0.7, 1.1, 0.9];
        let mut last = f64::INFINITY;
        for q in (-30..=30).map(|i| i as f64 * 0.1) {
            let p = discrete_pvalue(&scores, &weights, q, 0.8).unwrap();
            assert!(p <= last, "p must not increase with the score");
            last = p;
        }
    }

    #[test]
    fn floor_is_exact_to_the_last_bit() {
        let scores = [0.1, 0.7, 0.3, 0.9];
        let weights = [0.123, 4.567, 0.891, 2.345];
        let w_j = 0.777;
        let p = discrete_pvalue(&scores, &weights, 1.5, w_j).unwrap();
        let total = weights.iter().sum::<f64>() + w_j;
        assert_eq!(p, w_j / total, "floor must be bit-exact");
    }

    #[test]
    fn unweighted_reduction_to_classic_conformal() {
        let scores: Vec<f64> = (0..25).map(|i| ((i * 7) % 25) as f64 * 0.4).collect();
        let weights = vec![1.0; scores.len()];
        for q in [-1.0, 0.35, 4.0, 9.6, 100.0] {
            let p = discrete_pvalue(&scores, &weights, q, 1.0).unwrap();
            let rank = scores.iter().filter(|s| **s >= q).count();
            let classic = (rank as f64 + 1.0) / (scores.len() as f64 + 1.0);
            assert_eq!(p, classic, "unit weights must reduce to (rank+1)/(N+1)");
        }
    }

    #[test]
    fn scale_invariance_of_both_estimators() {
        let scores = [0.3, -1.2, 2.5, 0.3, 1.9];
        let weights = [0.5, 1.5, 2.0, 0.7, 1.1];
        for c in [1e-6, 0.3, 7.0, 1e8] {
            let scaled: Vec<f64> = weights.iter().map(|w| w * c).collect();
            for q in [-2.0, 0.3, 1.0, 3.0] {
                let a = discrete_pvalue(&scores, &weights, q, 0.8).unwrap();
                let b = discrete_pvalue(&scores, &scaled, q, 0.8 * c).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.max(b), "discrete at c={c}");
                let ar = randomized_pvalue(&scores, &weights, q, 0.8, 0.37).unwrap();
                let br = randomized_pvalue(&scores, &scaled, q, 0.8 * c, 0.37).unwrap();
                assert!(
                    (ar - br).abs() <= 1e-12 * ar.max(br).max(1e-300),
                    "randomized at c={c}"
                );
            }
        }
    }

    // ===== randomized estimator =====

    #[test]
    fn randomized_hand_evaluation_at_floor() {
        let p = randomized_pvalue(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 9.0, 1.0, 0.5).unwrap();
        assert_eq!(p, 0.1);
    }

    #[test]
    fn randomized_at_u_one_equals_discrete() {
        let scores = [0.3, -1.2, 2.5, 0.3, 1.9, 0.3];
        let weights = [0.5, 1.5, 2.0, 0.7, 1.1, 0.4];
        for q in [-2.0, 0.3, 0.7, 2.5, 9.0] {
            let r = randomized_pvalue(&scores, &weights, q, 0.8, 1.0).unwrap();
            let d = discrete_pvalue(&scores, &weights, q, 0.8).unwrap();
            assert!(
                (r - d).abs() <= 1e-14 * d,
                "u=1 must recover the discrete value: {r} vs {d}"
            );
        }
    }

    #[test]
    fn randomized_at_u_zero_is_strict_mass() {
        let scores = [1.0, 2.0, 3.0, 4.0];
        let weights = [0.5, 1.5, 2.0, 0.7];
        let q = 2.5;
        let p = randomized_pvalue(&scores, &weights, q, 0.8, 0.0).unwrap();
        let total = weights.iter().sum::<f64>() + 0.8;
        let strict: f64 = scores
            .iter()
            .zip(&weights)
            .filter(|(s, _)| **s > q)
            .map(|(_, w)| w)
            .sum();
        assert_eq!(p, strict / total);
    }

    #[test]
    fn randomized_rejects_u_outside_unit_interval() {
        for u in [-0.1, 1.1, f64::NAN] {
            assert!(matches!(
                randomized_pvalue(&[1.0], &[1.0], 0.5, 1.0, u),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn randomized_sweeps_exactly_its_interval() {
        // With ties at s_j, the sweep is [strict, strict + width].
        let scores = [1.0, 2.0, 2.0, 3.0];
        let weights = [0.4, 1.2, 0.6, 0.9];
        let (s_j, w_j) = (2.0, 0.5);
        let total = weights.iter().sum::<f64>() + w_j;
        let strict = 0.9 / total;
        let width = (w_j + 1.2 + 0.6) / total;
        let lo = randomized_pvalue(&scores, &weights, s_j, w_j, 0.0).unwrap();
        let hi = randomized_pvalue(&scores, &weights, s_j, w_j, 1.0).unwrap();
        assert!((lo - strict).abs() < 1e-15);
        assert!((hi - (strict + width)).abs() < 1e-15);
        let d = tail_diagnostics(&scores, &weights, s_j, w_j, 10, 0.1, &[1]).unwrap();
        assert!((d.width - width).abs() < 1e-15);
    }

    #[test]
    fn randomized_variance_matches_width_squared_over_twelve() {
        let scores = [0.2, 1.4, 0.8, 2.2, 1.4];
        let weights = [0.9, 1.3, 0.5, 2.0, 0.8];
        let (s_j, w_j) = (1.4, 0.6);
        let d = tail_diagnostics(&scores, &weights, s_j, w_j, 5, 0.1, &[1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let p = randomized_pvalue_seeded(&scores, &weights, s_j, w_j, &mut rng).unwrap();
            sum += p;
            sum_sq += p * p;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(
            (var - d.cond_variance).abs() < 0.02 * d.cond_variance,
            "empirical {var} vs width^2/12 = {}",
            d.cond_variance
        );
    }

    #[test]
    fn randomized_with_unit_weights_is_uniform() {
        // Fresh calibration per draw makes the p-values iid Unif[0,1];
        // check the KS statistic in 5 meta-repetitions at level 0.01.
        let mut passes = 0;
        for rep in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let trials = 10_000;
            let mut ps: Vec<f64> = (0..trials)
                .map(|_| {
                    let calib: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
                    let weights = vec![1.0; 20];
                    let s: f64 = rng.gen();
                    randomized_pvalue_seeded(&calib, &weights, s, 1.0, &mut rng).unwrap()
                })
                .collect();
            ps.sort_by(|a, b| a.total_cmp(b));
            let n = ps.len() as f64;
            let ks = ps
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let hi = (i as f64 + 1.0) / n - p;
                    let lo = p - i as f64 / n;
                    hi.max(lo)
                })
                .fold(0.0f64, f64::max);
            if ks < 1.62762 / n.sqrt() {
                passes += 1;
            }
        }
        assert!(passes >= 4, "uniformity KS should pass almost always, got {passes}/5");
    }

    #[test]
    fn discrete_super_uniformity_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 4000;
        let ps: Vec<f64> = (0..trials)
            .map(|_| {
                let calib: Vec<f64> = (0..19).map(|_| rng.gen::<f64>()).collect();
                let s: f64 = rng.gen();
                discrete_pvalue(&calib, &vec![1.0; 19], s, 1.0).unwrap()
            })
            .collect();
        for grid_i in 1..100 {
            let u = grid_i as f64 / 100.0;
            let frac = ps.iter().filter(|p| **p <= u).count() as f64 / trials as f64;
            let se = (u * (1.0 - u) / trials as f64).sqrt();
            assert!(
                frac <= u + 3.0 * se,
                "P(p <= {u}) = {frac} violates super-uniformity"
            );
        }
    }

    // ===== diagnostics =====

    #[test]
    fn detectability_ratio_by_hand() {
        // Unit weights, N=4, w_j=1: floor = 0.2. r=1, m=10, alpha=0.1.
        let d = tail_diagnostics(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 9.0, 1.0, 10, 0.1, &[1])
            .unwrap();
        assert!((d.floor - 0.2).abs() < 1e-15);
        assert!((d.detectability[&1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn no_ties_width_equals_floor() {
        let scores = [0.1, 0.9, 1.7];
        let weights = [1.0, 2.0, 0.5];
        let d = tail_diagnostics(&scores, &weights, 0.5, 0.8, 5, 0.2, &[1, 3, 5]).unwrap();
        assert_eq!(d.width, d.floor);
        assert_eq!(d.cond_variance, d.width * d.width / 12.0);
        assert!(d.floor > 0.0 && d.width <= 1.0);
    }

    #[test]
    fn detectability_above_one_blocks_rejection() {
        // Whenever δ_j(r) > 1 and s_j clears every calibration score, the
        // discrete p-value must exceed the BH-style cutoff (r/m)·alpha.
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 3.0 + 1e-3).collect();
            let w_j = rng.gen::<f64>() * 3.0 + 1e-3;
            let s_j = 2.0; // above every calibration score
            let m = rng.gen_range(1..40);
            let r = rng.gen_range(1..=m);
            let alpha = rng.gen_range(0.01..0.5);
            let d = tail_diagnostics(&scores, &weights, s_j, w_j, m, alpha, &[r]).unwrap();
            let p = discrete_pvalue(&scores, &weights, s_j, w_j).unwrap();
            if d.detectability[&r] > 1.0 {
                assert!(
                    p > (r as f64 / m as f64) * alpha,
                    "floor must block rejection when δ > 1"
                );
            }
        }
    }

    #[test]
    fn diagnostics_reject_bad_r_and_alpha() {
        let scores = [1.0, 2.0];
        let w = [1.0, 1.0];
        assert!(tail_diagnostics(&scores, &w, 0.5, 1.0, 5, 0.1, &[0]).is_err());
        assert!(tail_diagnostics(&scores, &w, 0.5, 1.0, 5, 0.1, &[6]).is_err());
        assert!(tail_diagnostics(&scores, &w, 0.5, 1.0, 5, 1.0, &[1]).is_err());
    }

    // ===== batches and serialization =====

    #[test]
    fn batch_matches_scalar_calls() {
        let calib = [0.5, 1.5, 2.5, 0.9];
        let cw = [1.0, 0.8, 1.2, 0.5];
        let test = [0.7, 3.0, 1.5];
        let tw = [0.9, 2.0, 0.4];
        let batch = discrete_pvalues(&calib, &cw, &test, &tw).unwrap();
        for (i, (&s, &w)) in test.iter().zip(&tw).enumerate() {
            assert_eq!(batch.values[i], discrete_pvalue(&calib, &cw, s, w).unwrap());
        }
        assert_eq!(batch.method, PValueMethod::Discrete);
        assert_eq!(batch.seed, None);
    }

    #[test]
    fn randomized_batch_records_seed_and_is_reproducible() {
        let calib = [0.5, 1.5, 2.5, 0.9];
        let cw = [1.0, 0.8, 1.2, 0.5];
        let test = [0.7, 3.0, 1.5];
        let tw = [0.9, 2.0, 0.4];
        let a = randomized_pvalues(&calib, &cw, &test, &tw, 99).unwrap();
        let b = randomized_pvalues(&calib, &cw, &test, &tw, 99).unwrap();
        let c = randomized_pvalues(&calib, &cw, &test, &tw, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert_eq!(a.seed, Some(99));
    }

    #[test]
    fn pvalue_csv_roundtrip() {
        let v = randomized_pvalues(&[1.0, 2.0], &[1.0, 1.0], &[0.5, 1.5, 2.5], &[1.0; 3], 7)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pvalues.csv");
        v.to_csv_file(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("index,p_value,method,seed"));
        let back = PValueVector::from_csv_file(&path).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn pvalue_json_roundtrip() {
        let v = discrete_pvalues(&[1.0, 2.0], &[1.0, 1.0], &[0.5], &[1.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pvalues.json");
        v.to_json_file(&path).unwrap();
        assert_eq!(v, PValueVector::from_json_file(&path).unwrap());
    }
}
