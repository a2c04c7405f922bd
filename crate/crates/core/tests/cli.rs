use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hydrosurrogate::harness::ExperimentConfig;

const TINY: &str = r#"
families = ["linear", "gbt", "mlp"]
scenario.n_years = 2
split.train = [2013, 2013]
split.test = [2014, 2014]
gbt.n_stages = 5
mlp.epochs = 2
task2.max_train_samples.mlp = 300
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hydrosurrogate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, TINY).unwrap();
    p
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn bundled_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/garonne_like.cfg");
    assert_eq!(ExperimentConfig::load(path).unwrap(), ExperimentConfig::default());
    let flood = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/flood_extrapolation.cfg");
    assert_eq!(ExperimentConfig::load(flood).unwrap().scenario.final_year_flood, 5000.0);
}

#[test]
fn all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("res");
    let o = run(&["all", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "77"]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Task 1"));
    for f in [
        "config_used.toml",
        "data/q_upstream.csv",
        "data/target_task2.csv",
        "models/task1_gbt.json",
        "models/task2_mlp.json",
        "metrics.csv",
        "predictions_task1.csv",
        "predictions_task2.csv",
        "report.txt",
        "figures/fer_rmse_task1.svg",
        "figures/max_error.svg",
        "figures/errors_task2.svg",
        "figures/error_pdf_task2.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 2 * 3);
    let used = ExperimentConfig::load(out.join("config_used.toml")).unwrap();
    assert_eq!(used.seed, 77);
    assert_eq!(used.scenario.n_years, 2);
    let header = std::fs::read_to_string(out.join("predictions_task1.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "timestamp,target,linear,gbt,mlp");
}

#[test]
fn step_by_step_reproduces_all() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let c = cfg.to_str().unwrap();
    let full = dir.path().join("full");
    let steps = dir.path().join("steps");
    let s = steps.to_str().unwrap();
    ok(&run(&["all", "--config", c, "--out", full.to_str().unwrap(), "--task", "1"]));
    for cmd in ["generate", "train", "evaluate", "report"] {
        ok(&run(&[cmd, "--config", c, "--out", s, "--task", "1"]));
    }
    let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(&full), read(&steps));
    assert!(!steps.join("predictions_task2.csv").exists());
    // evaluate again from the saved models: bit-identical
    ok(&run(&["evaluate", "--config", c, "--out", s, "--task", "1"]));
    assert_eq!(read(&full), read(&steps));
}

#[test]
fn failures_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "families = [\"gbt\"]\n").unwrap();
    let o = run(&["all", "--config", bad.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[config]"));
    assert!(!dir.path().join("x").exists());

    let o = run(&["evaluate", "--out", dir.path().join("empty").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("[load data]"));

    let o = run(&["all", "--task", "3"]);
    assert!(!o.status.success());
}
