//! Two-phase protocol runner: per-trial scorer selection, per-method
//! p-values and FDR selection, aggregation over seeds, artifact emission.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::generate::{generate_problem, GeneratedProblem};
use super::{ExperimentSpec, Method, TrialResult, METHOD_ORDER};
use crate::conformal::{discrete_pvalues, pvalue_floor, randomized_pvalues};
use crate::error::{Error, Result};
use crate::evaluation::{
    classification_metrics, lexicographic_select, trial_metrics, validity, write_summary_csv,
    CandidateMetrics, SummaryRow,
};
use crate::kde::{fit_weighted_kde_auto, kde_pvalue_batch};
use crate::multiple_testing::{benjamini_hochberg, wcs_decide};
use crate::scoring::{
    fit_histogram_scorer, fit_knn_scorer, fit_mahalanobis_scorer, FeatureMatrix, Scorer,
    Standardizer,
};
use crate::seeding::derive_seed;
use crate::weights::{bagged_weights, effective_sample_size, WeightProfile};

// Sub-seed streams; data generation occupies stream 0.
const STREAM_WEIGHTS: u64 = 1;
const STREAM_PVALUES: u64 = 2; // + method id, occupies 2..8
const STREAM_PRUNE: u64 = 16; // + method id

/// Phase-1 winner: a fitted scorer plus the standardizer that feeds it.
#[derive(Debug, Clone)]
pub struct SelectedScorer {
    pub name: String,
    pub scorer: Scorer,
    pub standardizer: Standardizer,
    /// True when validation lacked both classes and selection fell back to
    /// the first candidate.
    pub fell_back: bool,
}

fn fit_candidates(train_std: &FeatureMatrix) -> Result<Vec<(&'static str, Scorer)>> {
    let k = 10.min(train_std.rows());
    Ok(vec![
        ("knn", fit_knn_scorer(train_std, k)?),
        ("histogram", fit_histogram_scorer(train_std, 10)?),
        ("mahalanobis", fit_mahalanobis_scorer(train_std, 1e-6)?),
    ])
}

fn phase1_on(problem: &GeneratedProblem) -> Result<SelectedScorer> {
    let standardizer = Standardizer::fit(&problem.train)?;
    let train_std = standardizer.transform(&problem.train)?;
    let candidates = fit_candidates(&train_std)?;

    let has_anomaly = problem.val_labels.iter().any(|l| *l == 1);
    let has_inlier = problem.val_labels.iter().any(|l| *l == 0);
    if !(has_anomaly && has_inlier) {
        let (name, scorer) = candidates.into_iter().next().unwrap();
        eprintln!(
            "warning: validation split lacks both classes; falling back to the {name} scorer"
        );
        return Ok(SelectedScorer {
            name: name.to_string(),
            scorer,
            standardizer,
            fell_back: true,
        });
    }

    let val_std = standardizer.transform(&problem.val)?;
    let mut table = Vec::with_capacity(candidates.len());
    for (name, scorer) in &candidates {
        let scores = scorer.score_matrix(&val_std);
        let m = classification_metrics(&scores, &problem.val_labels)?;
        table.push(CandidateMetrics {
            name: name.to_string(),
            pr_auc: m.pr_auc,
            roc_auc: m.roc_auc,
            brier: m.brier,
        });
    }
    let winner = lexicographic_select(&table)?;
    let (name, scorer) = candidates
        .into_iter()
        .find(|(n, _)| *n == winner)
        .expect("winner comes from the candidate table");
    Ok(SelectedScorer {
        name: name.to_string(),
        scorer,
        standardizer,
        fell_back: false,
    })
}

/// Phase 1: fit the built-in scorers on train, pick one on the labeled
/// validation split, which is not consulted again afterwards.
pub fn run_phase1(spec: &ExperimentSpec, seed_index: u64) -> Result<SelectedScorer> {
    let problem = generate_problem(spec, seed_index)?;
    phase1_on(&problem)
}

fn phase2_on(
    spec: &ExperimentSpec,
    seed_index: u64,
    problem: &GeneratedProblem,
    sel: &SelectedScorer,
) -> Result<Vec<TrialResult>> {
    let calib_std = sel.standardizer.transform(&problem.calib)?;
    let test_std = sel.standardizer.transform(&problem.test)?;
    let s_cal = sel.scorer.score_matrix(&calib_std);
    let s_test = sel.scorer.score_matrix(&test_std);

    let methods = spec.ordered_methods();
    let unit = WeightProfile::unit(spec.n_cal, spec.n_test);
    // One estimated profile shared by every weighted method in the trial.
    let estimated = if methods.iter().any(|m| m.is_weighted()) {
        Some(bagged_weights(
            &calib_std,
            &test_std,
            spec.weights.bootstrap,
            spec.weights.gamma,
            spec.weights.classifier,
            derive_seed(spec.master_seed, STREAM_WEIGHTS, seed_index),
        )?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let profile = if method.is_weighted() {
            estimated.as_ref().unwrap()
        } else {
            &unit
        };
        let pv = match method {
            Method::Edf | Method::Wedf => discrete_pvalues(
                &s_cal,
                &profile.calib_weights,
                &s_test,
                &profile.test_weights,
            )?,
            Method::EdfRand | Method::WedfRand => randomized_pvalues(
                &s_cal,
                &profile.calib_weights,
                &s_test,
                &profile.test_weights,
                derive_seed(spec.master_seed, STREAM_PVALUES + method.id(), seed_index),
            )?,
            Method::Kde | Method::Wkde => {
                let (kde, _) = fit_weighted_kde_auto(&s_cal, &profile.calib_weights, None)?;
                kde_pvalue_batch(&kde, &s_test)
            }
        };
        let report = if method.is_weighted() {
            wcs_decide(
                &pv,
                spec.alpha,
                spec.pruning,
                Some(derive_seed(spec.master_seed, STREAM_PRUNE + method.id(), seed_index)),
            )?
        } else {
            benjamini_hochberg(&pv, spec.alpha)?
        };
        let tm = trial_metrics(&report.rejected, &problem.test_labels)?;
        let floor_max = match method {
            Method::Edf | Method::Wedf => {
                let mut worst = 0.0f64;
                for w_j in &profile.test_weights {
                    worst = worst.max(pvalue_floor(&profile.calib_weights, *w_j)?);
                }
                worst
            }
            _ => 0.0,
        };
        rows.push(TrialResult {
            seed: seed_index,
            method: method.label().to_string(),
            pruning: if method.is_weighted() {
                spec.pruning.to_string()
            } else {
                "none".to_string()
            },
            fdp: tm.fdp,
            power: tm.power,
            n_rejected: tm.n_rejected,
            n_eff: effective_sample_size(&profile.calib_weights)?,
            floor_max,
        });
    }
    Ok(rows)
}

/// Phase 2: score calibration/test with the phase-1 scorer, build every
/// requested p-value vector, select at spec.alpha, one row per method.
pub fn run_phase2(
    spec: &ExperimentSpec,
    seed_index: u64,
    sel: &SelectedScorer,
) -> Result<Vec<TrialResult>> {
    let problem = generate_problem(spec, seed_index)?;
    phase2_on(spec, seed_index, &problem, sel)
}

/// Both phases on one generated problem.
pub fn run_trial(spec: &ExperimentSpec, seed_index: u64) -> Result<Vec<TrialResult>> {
    let problem = generate_problem(spec, seed_index)?;
    let sel = phase1_on(&problem)?;
    phase2_on(spec, seed_index, &problem, &sel)
}

/// Everything run_experiment produces, before any files are written.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub results: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn method_rank(label: &str) -> usize {
    METHOD_ORDER
        .iter()
        .position(|m| m.label() == label)
        .unwrap_or(METHOD_ORDER.len())
}

/// Collapse trial rows into one Table-style row per (method, pruning).
pub fn summarize(
    results: &[TrialResult],
    alpha: f64,
    dataset: &str,
    n_train: usize,
    n_test: usize,
) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::domain("no trial rows to summarize"));
    }
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in results {
        let key = (r.method.clone(), r.pruning.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.sort_by(|a, b| {
        method_rank(&a.0)
            .cmp(&method_rank(&b.0))
            .then_with(|| a.cmp(b))
    });

    let mut rows = Vec::with_capacity(keys.len());
    for (method, pruning) in keys {
        let group: Vec<&TrialResult> = results
            .iter()
            .filter(|r| r.method == method && r.pruning == pruning)
            .collect();
        let fdps: Vec<f64> = group.iter().map(|r| r.fdp).collect();
        let (fdr_mean, fdr_sd) = mean_sd(&fdps);
        let powers: Vec<f64> = group.iter().filter_map(|r| r.power).collect();
        let (power_mean, power_sd) = if powers.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_sd(&powers);
            (Some(m), Some(s))
        };
        let valid = if fdps.len() >= 2 {
            validity(&fdps, alpha)?.valid
        } else {
            fdps[0] <= alpha
        };
        rows.push(SummaryRow {
            dataset: dataset.to_string(),
            method,
            pruning,
            fdr_mean,
            fdr_sd,
            power_mean,
            power_sd,
            n_train,
            n_test,
            valid,
        });
    }
    Ok(rows)
}

/// Run every trial, optionally capping rayon's parallelism. Output is
/// byte-identical for any thread count: rows are assembled in seed order.
pub fn run_experiment_with_threads(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> Result<ExperimentOutput> {
    spec.validate()?;
    let run_all = || -> Result<Vec<Vec<TrialResult>>> {
        (0..spec.n_seeds as u64)
            .into_par_iter()
            .map(|seed_index| run_trial(spec, seed_index))
            .collect()
    };
    let per_seed = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    }?;
    let results: Vec<TrialResult> = per_seed.into_iter().flatten().collect();
    let summary = summarize(&results, spec.alpha, &spec.name, spec.n_train, spec.n_test)?;
    Ok(ExperimentOutput { results, summary })
}

fn env_threads() -> Result<Option<usize>> {
    match std::env::var("CONFSHIFT_THREADS") {
        Err(_) => Ok(None),
        Ok(raw) => {
            let n: usize = raw.trim().parse().map_err(|_| {
                Error::config(format!("CONFSHIFT_THREADS must be an integer, got {raw:?}"))
            })?;
            Ok(if n == 0 { None } else { Some(n) })
        }
    }
}

/// Run the experiment honoring the CONFSHIFT_THREADS cap (0 or unset: auto).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment_with_threads(spec, env_threads()?)
}

pub fn write_results_csv(path: &Path, rows: &[TrialResult]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<TrialResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    dataset: &'a str,
    alpha: f64,
    n_seeds: usize,
    rows: &'a [SummaryRow],
}

pub fn write_summary_json(
    path: &Path,
    dataset: &str,
    alpha: f64,
    n_seeds: usize,
    rows: &[SummaryRow],
) -> Result<()> {
    let doc = SummaryDocument {
        dataset,
        alpha,
        n_seeds,
        rows,
    };
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &doc)?;
    Ok(())
}

/// Write results.csv, summary.csv and summary.json under out_dir.
pub fn emit_artifacts(
    out_dir: &Path,
    spec: &ExperimentSpec,
    output: &ExperimentOutput,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_results_csv(&out_dir.join("results.csv"), &output.results)?;
    write_summary_csv(&out_dir.join("summary.csv"), &output.summary)?;
    write_summary_json(
        &out_dir.join("summary.json"),
        &spec.name,
        spec.alpha,
        spec.n_seeds,
        &output.summary,
    )
}
