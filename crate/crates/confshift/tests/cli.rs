//! End-to-end exercises of the confshift binary: exit codes, file outputs,
//! and the contract examples for each subcommand.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_confshift"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn confshift")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small 1-D feature file with a header row.
fn feature_csv(dir: &Path, name: &str, values: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("x\n");
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    write(&path, &text);
    path
}

#[test]
fn help_exits_zero_and_lists_subcommands() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in ["weights", "pvalues", "select", "simulate", "report"] {
        assert!(text.contains(sub), "help must mention {sub}");
    }
}

#[test]
fn missing_required_flag_exits_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let f = feature_csv(dir.path(), "a.csv", &[0.0, 1.0]);
    let out = bin()
        .args(["weights", "--calib"])
        .arg(&f)
        .args(["--test"])
        .arg(&f)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "missing --out");
    assert!(stderr(&out).to_lowercase().contains("usage"));
}

#[test]
fn unreadable_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["weights", "--calib", "no_such_file.csv", "--test", "also_missing.csv", "--out"])
        .arg(dir.path().join("w.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn weights_on_identical_pools_reports_full_effective_size() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..40).map(|i| (i % 7) as f64 * 0.3).collect();
    let f = feature_csv(dir.path(), "pool.csv", &values);
    let out_path = dir.path().join("w.json");
    let out = bin()
        .args(["weights", "--calib"])
        .arg(&f)
        .arg("--test")
        .arg(&f)
        .args(["--bootstrap", "4", "--seed", "9", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let n_eff: f64 = text
        .trim()
        .strip_prefix("n_eff = ")
        .expect("n_eff line")
        .parse()
        .unwrap();
    assert!(n_eff > 0.9 * 40.0, "identical pools should keep n_eff high, got {n_eff}");
    let json = std::fs::read_to_string(&out_path).unwrap();
    assert!(json.contains("calib_weights"));
}

#[test]
fn weights_single_bootstrap_zero_gamma_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let a = feature_csv(dir.path(), "a.csv", &[0.0, 0.2, 0.4, 0.9, 1.4, 2.0]);
    let b = feature_csv(dir.path(), "b.csv", &[0.1, 0.3, 0.5, 1.0, 1.6, 2.2]);
    let out_path = dir.path().join("w.json");
    let out = bin()
        .args(["weights", "--calib"])
        .arg(&a)
        .arg("--test")
        .arg(&b)
        .args(["--bootstrap", "1", "--gamma", "0", "--seed", "3", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let profile: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(profile["gamma"], 0.0);
    assert_eq!(profile["n_bootstrap"], 1);
}

fn score_csv(dir: &Path, name: &str, calib: &[f64], test: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("score,split\n");
    for s in calib {
        text.push_str(&format!("{s},calib\n"));
    }
    for s in test {
        text.push_str(&format!("{s},test\n"));
    }
    write(&path, &text);
    path
}

#[test]
fn discrete_pvalues_without_weights_match_classic_rank_formula() {
    let dir = tempfile::tempdir().unwrap();
    let scores = score_csv(dir.path(), "s.csv", &[1.0, 2.0, 3.0, 4.0], &[2.5, 9.0]);
    let out_path = dir.path().join("pv.csv");
    let out = bin()
        .args(["pvalues", "--scores"])
        .arg(&scores)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "index,p_value,method,seed");
    // (#{s_i >= s_j} + 1) / (N + 1): 3/5 for 2.5, 1/5 for 9.0.
    assert!(lines.next().unwrap().starts_with("0,0.6,discrete"));
    assert!(lines.next().unwrap().starts_with("1,0.2,discrete"));
}

#[test]
fn randomized_pvalues_require_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scores = score_csv(dir.path(), "s.csv", &[1.0, 2.0], &[1.5]);
    let out = bin()
        .args(["pvalues", "--method", "randomized", "--scores"])
        .arg(&scores)
        .arg("--out")
        .arg(dir.path().join("pv.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--seed"));
}

#[test]
fn kde_on_single_calibration_point_surfaces_degenerate_flag() {
    let dir = tempfile::tempdir().unwrap();
    let scores = score_csv(dir.path(), "s.csv", &[1.0], &[0.5, 1.5]);
    let out_path = dir.path().join("pv.csv");
    let out = bin()
        .args(["pvalues", "--method", "kde", "--scores"])
        .arg(&scores)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("degenerate"));
    let model = std::fs::read_to_string(dir.path().join("pv.model.json")).unwrap();
    assert!(model.contains("\"degenerate_flag\": true"));
}

#[test]
fn kde_pvalues_are_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let scores = score_csv(
        dir.path(),
        "s.csv",
        &[0.1, 0.7, 0.4, 1.3, 0.9, 2.0, 0.2, 1.1],
        &[0.5, 2.5, 1.0],
    );
    let run_once = |name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["pvalues", "--method", "kde", "--scores"])
            .arg(&scores)
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(&out_path).unwrap()
    };
    assert_eq!(run_once("a.csv"), run_once("b.csv"));
}

fn pvalue_csv(dir: &Path, name: &str, values: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("index,p_value,method,seed\n");
    for (i, p) in values.iter().enumerate() {
        text.push_str(&format!("{i},{p},discrete,\n"));
    }
    write(&path, &text);
    path
}

#[test]
fn select_bh_rejects_two_of_three() {
    let dir = tempfile::tempdir().unwrap();
    let pv = pvalue_csv(dir.path(), "pv.csv", &[0.01, 0.02, 0.5]);
    let out_path = dir.path().join("report.json");
    let out = bin()
        .args(["select", "--alpha", "0.1", "--pvalues"])
        .arg(&pv)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("rejected 2 of 3"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report["rejected"], serde_json::json!([0, 1]));
    assert_eq!(report["procedure"], "bh");
}

#[test]
fn select_rejects_alpha_zero() {
    let dir = tempfile::tempdir().unwrap();
    let pv = pvalue_csv(dir.path(), "pv.csv", &[0.01]);
    let out = bin()
        .args(["select", "--alpha", "0", "--pvalues"])
        .arg(&pv)
        .arg("--out")
        .arg(dir.path().join("r.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn select_wcs_deterministic_needs_no_seed_but_randomized_does() {
    let dir = tempfile::tempdir().unwrap();
    let pv = pvalue_csv(dir.path(), "pv.csv", &[0.01, 0.02, 0.5]);
    let det = bin()
        .args(["select", "--procedure", "wcs", "--pruning", "det", "--alpha", "0.1"])
        .arg("--pvalues")
        .arg(&pv)
        .arg("--out")
        .arg(dir.path().join("det.json"))
        .output()
        .unwrap();
    assert!(det.status.success(), "{}", stderr(&det));

    let hom = bin()
        .args(["select", "--procedure", "wcs", "--pruning", "hom", "--alpha", "0.1"])
        .arg("--pvalues")
        .arg(&pv)
        .arg("--out")
        .arg(dir.path().join("hom.json"))
        .output()
        .unwrap();
    assert_eq!(hom.status.code(), Some(1), "hom pruning without seed");
}

fn small_spec_toml() -> &'static str {
    r#"
name = "cli_demo"
n_train = 40
n_cal = 40
n_test = 30
anomaly_rate = 0.15
methods = ["edf", "wkde"]
alpha = 0.1
n_seeds = 2
master_seed = 5

[shift]
kind = "localization"
strength = 0.8

[weights]
bootstrap = 3
"#
}

#[test]
fn simulate_emits_all_artifacts_and_report_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    write(&spec_path, small_spec_toml());
    let out_dir = dir.path().join("run");
    let out = bin()
        .args(["simulate", "--spec"])
        .arg(&spec_path)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    for file in ["results.csv", "summary.csv", "summary.json"] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }

    // report over the emitted results.csv with matching metadata flags
    // reproduces summary.csv byte for byte; a second run is idempotent.
    let rerun = |name: &str| {
        let out_path = dir.path().join(name);
        let out = bin()
            .args(["report", "--alpha", "0.1", "--dataset", "cli_demo"])
            .args(["--n-train", "40", "--n-test", "30", "--in"])
            .arg(out_dir.join("results.csv"))
            .arg("--out")
            .arg(&out_path)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(&out_path).unwrap()
    };
    let first = rerun("summary_a.csv");
    let second = rerun("summary_b.csv");
    assert_eq!(first, second, "report must be idempotent");
    assert_eq!(
        first,
        std::fs::read(out_dir.join("summary.csv")).unwrap(),
        "report output must match the simulate-time summary"
    );
}

#[test]
fn simulate_rejects_unknown_spec_key_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    write(
        &spec_path,
        &format!("{}\nmystery_field = 4\n", small_spec_toml()),
    );
    let out = bin()
        .args(["simulate", "--spec"])
        .arg(&spec_path)
        .arg("--out-dir")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mystery_field"));
}

#[test]
fn report_on_empty_results_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    write(
        &results,
        "seed,method,pruning,fdp,power,n_rejected,n_eff,floor_max\n",
    );
    let out = bin()
        .args(["report", "--alpha", "0.1", "--in"])
        .arg(&results)
        .arg("--out")
        .arg(dir.path().join("summary.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_simulation_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    write(&spec_path, small_spec_toml());
    let run_with = |threads: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = bin()
            .env("CONFSHIFT_THREADS", threads)
            .args(["simulate", "--spec"])
            .arg(&spec_path)
            .arg("--out-dir")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("results.csv")).unwrap()
    };
    assert_eq!(run_with("1", "one"), run_with("4", "four"));
}
