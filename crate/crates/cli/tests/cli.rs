//! End-to-end runs of the `micclust` binary against bundled fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn micclust(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_micclust"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: impl AsRef<Path>) -> Value {
    let text = std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()));
    serde_json::from_str(&text).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_on_three_component_fixture_finds_three_converged_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("three_component");
    let (mic, grid, snps, truth) = (fx.join("mic.csv"), fx.join("grid.csv"), fx.join("snps.csv"), fx.join("truth.csv"));
    let out = micclust(
        dir.path(),
        &[
            "pipeline",
            "--data",
            s(&mic),
            "--grid",
            s(&grid),
            "--snps",
            s(&snps),
            "--truth",
            s(&truth),
            "--iters",
            "20000",
            "--burnin",
            "4000",
            "--thin",
            "10",
            "--chains",
            "2",
            "--gwas-iters",
            "600",
            "--seed",
            "1",
            "--out",
            "pipe",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("pipe");

    let assignments = std::fs::read_to_string(run.join("RIF/post/assignments.csv")).unwrap();
    let mut clusters: Vec<&str> = assignments.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    clusters.sort_unstable();
    clusters.dedup();
    assert_eq!(clusters, ["1", "2", "3"]);

    let summary = read_json(run.join("RIF/post/summary.json"));
    assert_eq!(summary["clusters"].as_array().unwrap().len(), 3);
    let rhat = summary["max_rhat"].as_f64().unwrap();
    assert!(rhat < 1.05, "max PSR {rhat}");
    for (c, m) in summary["clusters"].as_array().unwrap().iter().zip([-3.0, 0.0, 3.0]) {
        assert!((c["mean"].as_f64().unwrap() - m).abs() < 0.5, "{c}");
    }

    for f in ["RIF/fit/fit.json", "RIF/post/diagnostics.json", "RIF/gwas/results.csv", "eval/tpr.csv", "labels.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let tpr = std::fs::read_to_string(run.join("eval/tpr.csv")).unwrap();
    assert!(tpr.starts_with("drug,cgmm,ecoff_0.99\n"), "{tpr}");
}

#[test]
fn ecoff_reports_three_quantiles_on_lognormal_counts() {
    let dir = tempfile::tempdir().unwrap();
    let counts = fixture("lognormal_counts.csv");
    let grid = fixture("lognormal_grid.csv");
    let out = micclust(dir.path(), &["ecoff", "--counts", s(&counts), "--grid", s(&grid), "--out", "ec"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(dir.path().join("ec/ecoff.json"));
    assert_eq!(json["quantiles"], serde_json::json!([0.95, 0.99, 0.999]));
    let fit = &json["fits"][0];
    assert!((fit["mu"].as_f64().unwrap() + 2.0).abs() < 0.1);
    assert!((fit["sigma"].as_f64().unwrap() - 1.0).abs() < 0.1);
    let cutoffs: Vec<f64> =
        fit["cutoffs"].as_array().unwrap().iter().map(|c| c["cutoff_mg_l"].as_f64().unwrap()).collect();
    assert_eq!(cutoffs, [1.0, 2.0, 4.0]);
}

#[test]
fn fit_then_postprocess_and_eval_from_staged_files() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("three_component");
    let (mic, grid, truth) = (fx.join("mic.csv"), fx.join("grid.csv"), fx.join("truth.csv"));
    let fit = micclust(
        dir.path(),
        &[
            "fit",
            "--data",
            s(&mic),
            "--grid",
            s(&grid),
            "--method",
            "gm",
            "--iters",
            "1000",
            "--burnin",
            "200",
            "--chains",
            "2",
            "--seed",
            "4",
            "--out",
            "fit",
        ],
    );
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    let manifest = read_json(dir.path().join("fit/fit.json"));
    assert_eq!(manifest["method"], "gm");
    assert_eq!(manifest["chains"].as_array().unwrap().len(), 2);

    let post =
        micclust(dir.path(), &["postprocess", "--run", "fit", "--data", s(&mic), "--grid", s(&grid), "--out", "post"]);
    assert_eq!(code(&post), 0, "{}", String::from_utf8_lossy(&post.stderr));
    for f in ["assignments.csv", "k_posterior.csv", "clusters.csv", "summary.json", "diagnostics.json", "histogram.svg"]
    {
        assert!(dir.path().join("post").join(f).is_file(), "missing {f}");
    }

    let eval = micclust(
        dir.path(),
        &["eval", "--labels", "post/assignments.csv", "--method", "gm", "--truth", s(&truth), "--out", "eval"],
    );
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let tnr = std::fs::read_to_string(dir.path().join("eval/tnr.csv")).unwrap();
    let mut lines = tnr.lines();
    assert_eq!(lines.next(), Some("drug,gm"));
    let rate: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.0..=100.0).contains(&rate));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture("three_component");
    let (mic, grid) = (fx.join("mic.csv"), fx.join("grid.csv"));
    std::fs::write(dir.path().join("run.toml"), "seed = 99\n\n[fit]\niterations = 400\nburnin = 100\nthin = 4\n")
        .unwrap();
    let out = micclust(
        dir.path(),
        &[
            "fit",
            "--config",
            "run.toml",
            "--data",
            s(&mic),
            "--grid",
            s(&grid),
            "--method",
            "gm",
            "--iters",
            "300",
            "--out",
            "fit",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = read_json(dir.path().join("fit/run_config.json"));
    assert_eq!(cfg["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(cfg["command"], "fit");
    assert_eq!(cfg["seed"], 99);
    assert_eq!(cfg["fit"]["iterations"], 300);
    assert_eq!(cfg["fit"]["burnin"], 100);
    assert_eq!(cfg["fit"]["thin"], 4);
    // untouched by flag and file
    assert_eq!(cfg["fit"]["chains"], micclust_core::FitConfig::default().chains);
}

#[test]
fn missing_input_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let grid = fixture("three_component/grid.csv");
    let out = micclust(dir.path(), &["fit", "--data", "nowhere.csv", "--grid", s(&grid), "--out", "fit"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
    assert!(!dir.path().join("fit").exists());
}

#[test]
fn usage_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&micclust(dir.path(), &["fit", "--bogus"])), 2);
    std::fs::write(dir.path().join("bad.toml"), "[fit]\niterations = 10\nburnin = 20\n").unwrap();
    let grid = fixture("three_component/grid.csv");
    let mic = fixture("three_component/mic.csv");
    let out =
        micclust(dir.path(), &["fit", "--config", "bad.toml", "--data", s(&mic), "--grid", s(&grid), "--out", "fit"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_data_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("mic.csv"), "strain_id,drug,dilution_index\nS1,RIF,notanumber\n").unwrap();
    let grid = fixture("three_component/grid.csv");
    let out = micclust(dir.path(), &["ecoff", "--data", "mic.csv", "--grid", s(&grid), "--out", "ec"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unwritable_output_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("taken"), "a file, not a directory").unwrap();
    let counts = fixture("lognormal_counts.csv");
    let grid = fixture("lognormal_grid.csv");
    let out = micclust(dir.path(), &["ecoff", "--counts", s(&counts), "--grid", s(&grid), "--out", "taken/sub"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_reproducible_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = micclust(dir.path(), &["simulate", "--preset", "censored", "--n", "200", "--seed", "8", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["mic.csv", "grid.csv", "snps.csv", "truth.csv", "components.csv", "causal_variants.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let mic = std::fs::read_to_string(dir.path().join("a/mic.csv")).unwrap();
    assert_eq!(mic.lines().count(), 201);
}
