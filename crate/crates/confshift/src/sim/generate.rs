//! Problem generator: a 2-D Gaussian-mixture population with a controllable
//! test-time covariate shift and closed-form likelihood-ratio weights.
//!
//! Inliers come from an equal mixture of N((0, +1.5), I) and N((0, -1.5), I).
//! Anomalies come from N(anomaly_mean, anomaly_scale^2 I). Covariate shift
//! rigidly translates the test inlier distribution, so the true density
//! ratio q/p is a ratio of two mixture densities; for a shift along the
//! first coordinate the second coordinate cancels and the ratio collapses
//! to exp(delta z1 - delta^2/2).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ExperimentSpec, ShiftSpec};
use crate::error::Result;
use crate::scoring::FeatureMatrix;
use crate::seeding::derive_seed;
use crate::weights::WeightProfile;

/// Feature dimension of the generator.
pub const DIM: usize = 2;

/// Vertical offset of the two inlier mixture components.
const COMPONENT_OFFSET: f64 = 1.5;

/// Sub-seed stream for data generation (weight fitting, p-value
/// randomization and pruning use disjoint streams; see the runner).
pub(super) const STREAM_DATA: u64 = 0;

/// All splits for one trial. Train and calibration hold clean inliers from
/// the base distribution; validation is labeled base-distribution data for
/// scorer selection; test mixes shifted inliers with anomalies.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProblem {
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
    pub val_labels: Vec<u8>,
    pub calib: FeatureMatrix,
    pub test: FeatureMatrix,
    pub test_labels: Vec<u8>,
}

fn sample_inlier(rng: &mut ChaCha8Rng) -> [f64; DIM] {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let e1: f64 = StandardNormal.sample(rng);
    let e2: f64 = StandardNormal.sample(rng);
    [e1, sign * COMPONENT_OFFSET + e2]
}

fn sample_anomaly(rng: &mut ChaCha8Rng, mean: &[f64], scale: f64) -> [f64; DIM] {
    let e1: f64 = StandardNormal.sample(rng);
    let e2: f64 = StandardNormal.sample(rng);
    [mean[0] + scale * e1, mean[1] + scale * e2]
}

/// Translation applied to test inliers.
pub fn shift_vector(shift: &ShiftSpec) -> [f64; DIM] {
    match shift {
        ShiftSpec::None => [0.0, 0.0],
        ShiftSpec::MeanShift { delta } => [delta[0], delta[1]],
        ShiftSpec::Localization { strength } => [*strength, 0.0],
    }
}

/// Log density of the base inlier mixture at z.
fn log_mixture_density(z: &[f64]) -> f64 {
    let log_half = 0.5f64.ln();
    let comp = |mu2: f64| {
        let d1 = z[0];
        let d2 = z[1] - mu2;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * (d1 * d1 + d2 * d2)
    };
    let a = log_half + comp(COMPONENT_OFFSET);
    let b = log_half + comp(-COMPONENT_OFFSET);
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Exact importance weight dQ/dP(z) of the inlier covariate shift: the
/// shifted mixture density over the base one.
pub fn true_weight(shift: &ShiftSpec, z: &[f64]) -> f64 {
    let v = shift_vector(shift);
    if v == [0.0, 0.0] {
        return 1.0;
    }
    let moved = [z[0] - v[0], z[1] - v[1]];
    (log_mixture_density(&moved) - log_mixture_density(z)).exp()
}

/// WeightProfile carrying the closed-form weights, for oracle experiments
/// that factor out estimation error. No clipping is applied.
pub fn true_weight_profile(spec: &ExperimentSpec, problem: &GeneratedProblem) -> Result<WeightProfile> {
    let calib_weights: Vec<f64> = problem
        .calib
        .iter_rows()
        .map(|z| true_weight(&spec.shift, z))
        .collect();
    let test_weights: Vec<f64> = problem
        .test
        .iter_rows()
        .map(|z| true_weight(&spec.shift, z))
        .collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in calib_weights.iter().chain(&test_weights) {
        lo = lo.min(*w);
        hi = hi.max(*w);
    }
    let profile = WeightProfile {
        calib_weights,
        test_weights,
        clip_lo: lo,
        clip_hi: hi,
        gamma: 0.0,
        n_bootstrap: 0,
        seed: 0,
    };
    profile.validate()?;
    Ok(profile)
}

/// Draw every split for trial `seed_index`. Pure in (spec, seed_index).
pub fn generate_problem(spec: &ExperimentSpec, seed_index: u64) -> Result<GeneratedProblem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        spec.master_seed,
        STREAM_DATA,
        seed_index,
    ));
    let v = shift_vector(&spec.shift);
    let mean = &spec.generator.anomaly_mean;
    let scale = spec.generator.anomaly_scale;

    let mut train = Vec::with_capacity(spec.n_train);
    for _ in 0..spec.n_train {
        train.push(sample_inlier(&mut rng).to_vec());
    }

    let n_val = (spec.validation_fraction * spec.n_train as f64).round() as usize;
    let mut val = Vec::with_capacity(n_val);
    let mut val_labels = Vec::with_capacity(n_val);
    for _ in 0..n_val {
        if rng.gen_bool(spec.anomaly_rate) {
            val.push(sample_anomaly(&mut rng, mean, scale).to_vec());
            val_labels.push(1);
        } else {
            val.push(sample_inlier(&mut rng).to_vec());
            val_labels.push(0);
        }
    }

    let mut calib = Vec::with_capacity(spec.n_cal);
    for _ in 0..spec.n_cal {
        calib.push(sample_inlier(&mut rng).to_vec());
    }

    let mut test = Vec::with_capacity(spec.n_test);
    let mut test_labels = Vec::with_capacity(spec.n_test);
    for _ in 0..spec.n_test {
        if rng.gen_bool(spec.anomaly_rate) {
            test.push(sample_anomaly(&mut rng, mean, scale).to_vec());
            test_labels.push(1);
        } else {
            let z = sample_inlier(&mut rng);
            test.push(vec![z[0] + v[0], z[1] + v[1]]);
            test_labels.push(0);
        }
    }

    Ok(GeneratedProblem {
        train: FeatureMatrix::from_rows(&train)?,
        val: if val.is_empty() {
            FeatureMatrix::from_flat(0, DIM, Vec::new())?
        } else {
            FeatureMatrix::from_rows(&val)?
        },
        val_labels,
        calib: FeatureMatrix::from_rows(&calib)?,
        test: FeatureMatrix::from_rows(&test)?,
        test_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ks_two_sample_pvalue;
    use crate::sim::{GeneratorConfig, Method, WeightConfig};
    use crate::multiple_testing::PruneStrategy;

    fn spec_with(shift: ShiftSpec, n_cal: usize, n_test: usize) -> ExperimentSpec {
        ExperimentSpec {
            name: "gen".into(),
            n_train: 10,
            n_cal,
            n_test,
            anomaly_rate: 0.05,
            shift,
            methods: vec![Method::Edf],
            pruning: PruneStrategy::Deterministic,
            alpha: 0.1,
            n_seeds: 1,
            master_seed: 99,
            validation_fraction: 0.3,
            weights: WeightConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }

    #[test]
    fn problem_is_deterministic_in_seed_index() {
        let spec = spec_with(ShiftSpec::Localization { strength: 0.7 }, 50, 40);
        let a = generate_problem(&spec, 3).unwrap();
        let b = generate_problem(&spec, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_problem(&spec, 4).unwrap();
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn split_sizes_match_spec() {
        let spec = spec_with(ShiftSpec::None, 25, 17);
        let p = generate_problem(&spec, 0).unwrap();
        assert_eq!(p.train.rows(), 10);
        assert_eq!(p.val.rows(), 3); // round(0.3 * 10)
        assert_eq!(p.val_labels.len(), 3);
        assert_eq!(p.calib.rows(), 25);
        assert_eq!(p.test.rows(), 17);
        assert_eq!(p.test_labels.len(), 17);
    }

    #[test]
    fn no_shift_inlier_marginals_agree_by_ks() {
        // First-coordinate marginal of calibration vs. test inliers under
        // shift=none: the KS p-value should clear 0.01 in >= 95/100 seeds.
        let spec = spec_with(ShiftSpec::None, 1000, 1000);
        let mut passes = 0;
        for seed in 0..100 {
            let p = generate_problem(&spec, seed).unwrap();
            let calib_x1: Vec<f64> = p.calib.iter_rows().map(|r| r[0]).collect();
            let test_x1: Vec<f64> = p
                .test
                .iter_rows()
                .zip(&p.test_labels)
                .filter(|(_, l)| **l == 0)
                .map(|(r, _)| r[0])
                .collect();
            if ks_two_sample_pvalue(&calib_x1, &test_x1).unwrap() > 0.01 {
                passes += 1;
            }
        }
        assert!(passes >= 95, "only {passes}/100 seeds passed the KS check");
    }

    #[test]
    fn anomaly_counts_follow_binomial_moments() {
        // n_test = 400, pi = 0.05: mean 20, sd sqrt(400 * 0.05 * 0.95) = 4.36.
        let spec = spec_with(ShiftSpec::None, 5, 400);
        let counts: Vec<f64> = (0..300)
            .map(|seed| {
                let p = generate_problem(&spec, seed).unwrap();
                p.test_labels.iter().filter(|l| **l == 1).count() as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
            / (counts.len() - 1) as f64;
        assert!((mean - 20.0).abs() < 1.0, "mean anomaly count {mean}");
        assert!((var.sqrt() - 4.36).abs() < 0.8, "sd {}", var.sqrt());
    }

    #[test]
    fn zero_localization_is_byte_identical_to_no_shift() {
        let a = generate_problem(&spec_with(ShiftSpec::Localization { strength: 0.0 }, 30, 30), 1)
            .unwrap();
        let b = generate_problem(&spec_with(ShiftSpec::None, 30, 30), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn true_weight_closed_form_on_first_axis() {
        // Shift along e1 cancels the mixture structure on e2:
        // w(z) = exp(delta z1 - delta^2/2) exactly.
        let shift = ShiftSpec::Localization { strength: 1.3 };
        for z in [[0.0f64, 0.5], [2.0, -1.7], [-1.2, 3.0], [0.4, 0.0]] {
            let expect = (1.3f64 * z[0] - 1.3 * 1.3 / 2.0).exp();
            let got = true_weight(&shift, &z);
            assert!(
                (got - expect).abs() <= 1e-12 * expect,
                "z={z:?}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn true_weight_without_shift_is_one() {
        assert_eq!(true_weight(&ShiftSpec::None, &[0.3, -2.0]), 1.0);
        assert_eq!(
            true_weight(&ShiftSpec::Localization { strength: 0.0 }, &[5.0, 5.0]),
            1.0
        );
    }

    #[test]
    fn true_weight_integrates_to_one_under_base_measure() {
        // E_P[w] = 1; Monte Carlo with 200k draws has SE ~ e^{delta^2/2}/450.
        let shift = ShiftSpec::Localization { strength: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200_000;
        let mean = (0..n)
            .map(|_| {
                let z = sample_inlier(&mut rng);
                true_weight(&shift, &z)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "E[w] = {mean}");
    }

    #[test]
    fn true_weight_profile_validates_and_brackets() {
        let spec = spec_with(ShiftSpec::MeanShift { delta: vec![0.8, -0.4] }, 60, 40);
        let p = generate_problem(&spec, 5).unwrap();
        let profile = true_weight_profile(&spec, &p).unwrap();
        assert_eq!(profile.calib_weights.len(), 60);
        assert_eq!(profile.test_weights.len(), 40);
        for w in profile.calib_weights.iter().chain(&profile.test_weights) {
            assert!(*w >= profile.clip_lo && *w <= profile.clip_hi);
        }
    }

    #[test]
    fn shifted_test_inliers_move_by_delta_in_mean() {
        let strength = 2.0;
        let spec = spec_with(ShiftSpec::Localization { strength }, 2000, 2000);
        let p = generate_problem(&spec, 11).unwrap();
        let inlier_x1: Vec<f64> = p
            .test
            .iter_rows()
            .zip(&p.test_labels)
            .filter(|(_, l)| **l == 0)
            .map(|(r, _)| r[0])
            .collect();
        let mean = inlier_x1.iter().sum::<f64>() / inlier_x1.len() as f64;
        // SE ~ 1/sqrt(1900) ~ 0.023.
        assert!((mean - strength).abs() < 0.1, "shifted mean {mean}");
    }
}
