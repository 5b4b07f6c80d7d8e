//! The resolution-variance dilemma on one dataset: under a strong shift
//! the weighted discrete p-value cannot get below its own floor, so the
//! selection rule returns nothing, while the continuous estimator keeps
//! the same weights and still finds the anomalies.
//!
//!     cargo run --example dilemma

use confshift::classify::ClassifierKind;
use confshift::conformal::{discrete_pvalues, tail_diagnostics};
use confshift::evaluation::trial_metrics;
use confshift::kde::{fit_weighted_kde_auto, kde_pvalue_batch};
use confshift::multiple_testing::{wcs_decide, PruneStrategy};
use confshift::sim::{generate_problem, run_phase1, ExperimentSpec, Method, ShiftSpec};
use confshift::weights::{bagged_weights, effective_sample_size};

fn main() -> confshift::Result<()> {
    let spec = ExperimentSpec {
        name: "dilemma_demo".into(),
        n_train: 300,
        n_cal: 100,
        n_test: 80,
        anomaly_rate: 0.15,
        shift: ShiftSpec::MeanShift {
            delta: vec![2.0, 0.0],
        },
        methods: vec![Method::Wedf, Method::Wkde],
        pruning: PruneStrategy::Deterministic,
        alpha: 0.1,
        n_seeds: 1,
        master_seed: 23,
        validation_fraction: 0.3,
        weights: Default::default(),
        generator: Default::default(),
    };
    spec.validate()?;

    let problem = generate_problem(&spec, 0)?;
    let sel = run_phase1(&spec, 0)?;
    println!("phase 1 picked the {} scorer", sel.name);

    let calib_z = sel.standardizer.transform(&problem.calib)?;
    let test_z = sel.standardizer.transform(&problem.test)?;
    let calib_scores = sel.scorer.score_matrix(&calib_z);
    let test_scores = sel.scorer.score_matrix(&test_z);

    let w = bagged_weights(&calib_z, &test_z, 8, 0.05, ClassifierKind::Logistic, 1)?;
    let n_eff = effective_sample_size(&w.calib_weights)?;
    println!(
        "shift collapsed {} calibration points to n_eff = {:.1}",
        spec.n_cal, n_eff
    );

    // Discrete weighted p-values: the floor blocks every rejection.
    let p_det = discrete_pvalues(&calib_scores, &w.calib_weights, &test_scores, &w.test_weights)?;
    let det = wcs_decide(&p_det, spec.alpha, PruneStrategy::Deterministic, None)?;

    // Diagnostics for the most suspicious test point explain why: its
    // detectability ratio sits above 1 even if half the batch rejected.
    let top = (0..test_scores.len())
        .max_by(|a, b| test_scores[*a].total_cmp(&test_scores[*b]))
        .unwrap();
    let diag = tail_diagnostics(
        &calib_scores,
        &w.calib_weights,
        test_scores[top],
        w.test_weights[top],
        test_scores.len(),
        spec.alpha,
        &[1, 10, 40],
    )?;
    println!("top test point: floor {:.4}, width {:.4}", diag.floor, diag.width);
    for (r, ratio) in &diag.detectability {
        println!("  assuming {r} rejections the floor/threshold ratio is {ratio:.2}");
    }

    // Same weights, continuous estimator.
    let (kde, _) = fit_weighted_kde_auto(&calib_scores, &w.calib_weights, None)?;
    let p_kde = kde_pvalue_batch(&kde, &test_scores);
    let kde_dec = wcs_decide(&p_kde, spec.alpha, PruneStrategy::Deterministic, None)?;

    let m_det = trial_metrics(&det.rejected, &problem.test_labels)?;
    let m_kde = trial_metrics(&kde_dec.rejected, &problem.test_labels)?;
    println!(
        "discrete: {} rejections, power {:?}",
        det.rejected.len(),
        m_det.power
    );
    println!(
        "kde:      {} rejections, power {:?}, fdp {:.3}",
        kde_dec.rejected.len(),
        m_kde.power,
        m_kde.fdp
    );
    Ok(())
}
