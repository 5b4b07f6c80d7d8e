//! Thin command-line front end over the library. Exit codes: 0 success,
//! 1 validation/configuration problems, 2 I/O failures.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use confshift::conformal::{discrete_pvalues, randomized_pvalues, PValueMethod, PValueVector};
use confshift::error::{Error, Result};
use confshift::evaluation::write_summary_csv;
use confshift::kde::{fit_weighted_kde_auto, kde_pvalue_batch};
use confshift::multiple_testing::{benjamini_hochberg, wcs_decide, PruneStrategy};
use confshift::scoring::{ingest_scores, read_features_csv};
use confshift::sim::{emit_artifacts, read_results_csv, run_experiment, summarize, ExperimentSpec};
use confshift::weights::{bagged_weights, effective_sample_size, WeightProfile};

#[derive(Parser)]
#[command(
    name = "confshift",
    version,
    about = "Conformal anomaly detection under covariate shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate importance weights from calibration and test feature CSVs.
    Weights {
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 8)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0.05)]
        gamma: f64,
        /// logistic | forest
        #[arg(long, default_value = "logistic")]
        classifier: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a score CSV into conformal p-values.
    Pvalues {
        /// Score CSV; a `split` column of calib/test separates the pools
        /// (rows default to test when the column is absent).
        #[arg(long)]
        scores: PathBuf,
        /// WeightProfile JSON; omitted means unit weights.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// discrete | randomized | kde
        #[arg(long, default_value = "discrete")]
        method: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select discoveries from a p-value CSV at a target FDR.
    Select {
        #[arg(long)]
        pvalues: PathBuf,
        #[arg(long)]
        alpha: f64,
        /// bh | wcs
        #[arg(long, default_value = "bh")]
        procedure: String,
        /// det | hom | het (wcs only)
        #[arg(long, default_value = "det")]
        pruning: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full synthetic experiment from a TOML spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Aggregate a results.csv into a summary.csv.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "results")]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        n_train: usize,
        #[arg(long, default_value_t = 0)]
        n_test: usize,
    },
}

fn parse_pruning(raw: &str) -> Result<PruneStrategy> {
    match raw {
        "det" | "deterministic" => Ok(PruneStrategy::Deterministic),
        "hom" | "homogeneous" => Ok(PruneStrategy::Homogeneous),
        "het" | "heterogeneous" => Ok(PruneStrategy::Heterogeneous),
        other => Err(Error::config(format!(
            "unknown pruning {other:?}; expected det, hom or het"
        ))),
    }
}

fn cmd_weights(
    calib: &Path,
    test: &Path,
    bootstrap: usize,
    gamma: f64,
    classifier: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let kind = classifier.parse()?;
    let calib_m = read_features_csv(calib)?;
    let test_m = read_features_csv(test)?;
    let profile = bagged_weights(&calib_m, &test_m, bootstrap, gamma, kind, seed)?;
    profile.to_json_file(out)?;
    let n_eff = effective_sample_size(&profile.calib_weights)?;
    println!("n_eff = {n_eff}");
    Ok(())
}

fn cmd_pvalues(
    scores: &Path,
    weights: Option<&Path>,
    method: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let method: PValueMethod = method.parse()?;
    let batch = ingest_scores(scores)?;
    if batch.calib_scores.is_empty() {
        return Err(Error::config(
            "score file has no calibration rows; mark them with a split=calib column",
        ));
    }
    if batch.test_scores.is_empty() {
        return Err(Error::config("score file has no test rows"));
    }
    let (calib_w, test_w) = match weights {
        Some(path) => {
            let profile = WeightProfile::from_json_file(path)?;
            if profile.calib_weights.len() != batch.calib_scores.len()
                || profile.test_weights.len() != batch.test_scores.len()
            {
                return Err(Error::config(format!(
                    "weight profile covers {}+{} instances but the score file has {}+{}",
                    profile.calib_weights.len(),
                    profile.test_weights.len(),
                    batch.calib_scores.len(),
                    batch.test_scores.len()
                )));
            }
            (profile.calib_weights, profile.test_weights)
        }
        None => (
            vec![1.0; batch.calib_scores.len()],
            vec![1.0; batch.test_scores.len()],
        ),
    };
    let pv = match method {
        PValueMethod::Discrete => {
            discrete_pvalues(&batch.calib_scores, &calib_w, &batch.test_scores, &test_w)?
        }
        PValueMethod::Randomized => {
            let seed = seed.ok_or_else(|| Error::config("method=randomized requires --seed"))?;
            randomized_pvalues(
                &batch.calib_scores,
                &calib_w,
                &batch.test_scores,
                &test_w,
                seed,
            )?
        }
        PValueMethod::Kde => {
            let (kde, _) = fit_weighted_kde_auto(&batch.calib_scores, &calib_w, None)?;
            let mut model_path = out.to_path_buf();
            model_path.set_extension("model.json");
            kde.to_json_file(&model_path)?;
            if kde.degenerate {
                println!("degenerate bandwidth: fewer than two distinct calibration scores");
            }
            kde_pvalue_batch(&kde, &batch.test_scores)
        }
    };
    pv.to_csv_file(out)?;
    println!("wrote {} p-values", pv.len());
    Ok(())
}

fn cmd_select(
    pvalues: &Path,
    alpha: f64,
    procedure: &str,
    pruning: &str,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let pv = PValueVector::from_csv_file(pvalues)?;
    let report = match procedure {
        "bh" => benjamini_hochberg(&pv, alpha)?,
        "wcs" => wcs_decide(&pv, alpha, parse_pruning(pruning)?, seed)?,
        other => {
            return Err(Error::config(format!(
                "unknown procedure {other:?}; expected bh or wcs"
            )))
        }
    };
    report.to_json_file(out)?;
    println!("rejected {} of {}", report.rejected.len(), pv.len());
    Ok(())
}

fn cmd_simulate(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let spec = ExperimentSpec::from_toml_file(spec_path)?;
    let output = run_experiment(&spec)?;
    emit_artifacts(out_dir, &spec, &output)?;
    println!(
        "wrote {} trial rows and {} summary rows to {}",
        output.results.len(),
        output.summary.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_report(
    input: &Path,
    out: &Path,
    alpha: f64,
    dataset: &str,
    n_train: usize,
    n_test: usize,
) -> Result<()> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let rows = read_results_csv(input)?;
    let summary = summarize(&rows, alpha, dataset, n_train, n_test)?;
    write_summary_csv(out, &summary)?;
    println!("summarized {} trial rows into {} rows", rows.len(), summary.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Weights {
            calib,
            test,
            bootstrap,
            gamma,
            classifier,
            seed,
            out,
        } => cmd_weights(&calib, &test, bootstrap, gamma, &classifier, seed, &out),
        Command::Pvalues {
            scores,
            weights,
            method,
            seed,
            out,
        } => cmd_pvalues(&scores, weights.as_deref(), &method, seed, &out),
        Command::Select {
            pvalues,
            alpha,
            procedure,
            pruning,
            seed,
            out,
        } => cmd_select(&pvalues, alpha, &procedure, &pruning, seed, &out),
        Command::Simulate { spec, out_dir } => cmd_simulate(&spec, &out_dir),
        Command::Report {
            input,
            out,
            alpha,
            dataset,
            n_train,
            n_test,
        } => cmd_report(&input, &out, alpha, &dataset, n_train, n_test),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(if err.is_io() { 2 } else { 1 });
    }
}
