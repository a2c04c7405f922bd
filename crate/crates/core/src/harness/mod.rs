//! Experiment runner behind the `hydrosurrogate` command line.
//!
//! Output directory layout:
//!
//! ```text
//! config_used.toml          every setting, defaults included
//! data/*.csv                gauge records and both targets
//! models/task{1,2}_<family>.json
//! metrics.csv               one row per task and model
//! predictions_task{1,2}.csv
//! report.txt
//! figures/*.svg
//! ```
//!
//! Every command writes into a hidden sibling directory first and moves the
//! files into place only when it succeeds.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;

use std::path::{Path, PathBuf};

pub use config::{derive_seed, ExperimentConfig, GprSearch, Task, TaskConfig};
pub use pipeline::{
    audit_against_saved, audit_test_isolation, evaluate_task, generate, load_models, prepare_task, save_models, train_family,
    train_task, AuditOutcome, ModelSet, ObservedData, TaskData, TaskOutcome,
};
pub use report::{emit_figures, emit_reports, load_predictions};

use crate::error::{Error, Result};
use crate::metrics::EvalReport;

pub const CONFIG_FILE: &str = "config_used.toml";

fn staging_dir(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    parent.join(format!(".{name}.partial"))
}

fn merge_into(from: &Path, to: &Path) -> Result<()> {
    std::fs::create_dir_all(to).map_err(|e| Error::io(to, e))?;
    for entry in std::fs::read_dir(from).map_err(|e| Error::io(from, e))? {
        let src = entry.map_err(|e| Error::io(from, e))?.path();
        let dst = to.join(src.file_name().expect("directory entry has a name"));
        if src.is_dir() && dst.is_dir() {
            merge_into(&src, &dst)?;
            continue;
        }
        if dst.is_dir() {
            std::fs::remove_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
        } else if dst.exists() {
            std::fs::remove_file(&dst).map_err(|e| Error::io(&dst, e))?;
        }
        std::fs::rename(&src, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    Ok(())
}

/// Runs `f` against a fresh staging directory and merges its contents into
/// `out` on success. On failure the staging directory is removed and `out`
/// is left as it was.
fn with_staging<T>(out: &Path, f: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let staging = staging_dir(out);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e).in_stage("output"))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e).in_stage("output"))?;
    match f(&staging) {
        Ok(v) => {
            let moved = merge_into(&staging, out).map_err(|e| e.in_stage("output"));
            let _ = std::fs::remove_dir_all(&staging);
            moved.map(|_| v)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    let text = cfg.to_toml()?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Data under `out/data`, generated from the scenario if absent.
fn observed_data(cfg: &ExperimentConfig, out: &Path, staging: &Path) -> Result<ObservedData> {
    let existing = out.join(pipeline::DATA_DIR);
    if ObservedData::exists(&existing) {
        return stage("load data", ObservedData::load(&existing));
    }
    let data = stage("generate", generate(cfg))?;
    stage("generate", data.write(staging.join(pipeline::DATA_DIR)))?;
    Ok(data)
}

/// `generate`: scenario → CSV files.
pub fn generate_command(cfg: &ExperimentConfig, out: &Path) -> Result<ObservedData> {
    stage("config", cfg.validate())?;
    with_staging(out, |s| {
        stage("output", write_config(cfg, s))?;
        let data = stage("generate", generate(cfg))?;
        stage("generate", data.write(s.join(pipeline::DATA_DIR)))?;
        Ok(data)
    })
}

/// `train`: data → serialized models.
pub fn train_command(cfg: &ExperimentConfig, out: &Path, tasks: &[Task]) -> Result<()> {
    stage("config", cfg.validate())?;
    with_staging(out, |s| {
        stage("output", write_config(cfg, s))?;
        let data = observed_data(cfg, out, s)?;
        for &task in tasks {
            let prepared = stage("prepare", prepare_task(&data, cfg, task))?;
            let models = train_task(&prepared, cfg)?;
            stage("output", save_models(s, task, &models))?;
        }
        Ok(())
    })
}

/// `evaluate`: saved models and data → metrics and prediction tables.
pub fn evaluate_command(cfg: &ExperimentConfig, out: &Path, tasks: &[Task]) -> Result<Vec<TaskOutcome>> {
    stage("config", cfg.validate())?;
    let data = stage("load data", ObservedData::load(out.join(pipeline::DATA_DIR)))?;
    let mut outcomes = Vec::new();
    for &task in tasks {
        let prepared = stage("prepare", prepare_task(&data, cfg, task))?;
        let models = stage("load models", load_models(out, task, &cfg.families))?;
        outcomes.push(stage("evaluate", evaluate_task(task, &prepared.test, &models))?);
    }
    with_staging(out, |s| {
        stage("output", write_config(cfg, s))?;
        stage("report", emit_reports(&outcomes, s))
    })?;
    Ok(outcomes)
}

/// `report`: prediction tables → figures and text summary.
pub fn report_command(out: &Path, tasks: &[Task]) -> Result<Vec<TaskOutcome>> {
    let outcomes = tasks
        .iter()
        .map(|&t| stage("load predictions", load_predictions(out, t)))
        .collect::<Result<Vec<_>>>()?;
    with_staging(out, |s| stage("report", emit_figures(&outcomes, s)))?;
    Ok(outcomes)
}

/// The full pipeline on the given tasks: generate, prepare, train, evaluate
/// and write every artifact into `cfg.output_dir`.
pub fn run_tasks(cfg: &ExperimentConfig, tasks: &[Task]) -> Result<Vec<EvalReport>> {
    stage("config", cfg.validate())?;
    let out = cfg.output_dir.clone();
    with_staging(&out, |s| {
        stage("output", write_config(cfg, s))?;
        let data = stage("generate", generate(cfg))?;
        stage("generate", data.write(s.join(pipeline::DATA_DIR)))?;
        let mut outcomes = Vec::new();
        for &task in tasks {
            let prepared = stage("prepare", prepare_task(&data, cfg, task))?;
            let models = train_task(&prepared, cfg)?;
            stage("output", save_models(s, task, &models))?;
            outcomes.push(stage("evaluate", evaluate_task(task, &prepared.test, &models))?);
        }
        stage("report", emit_reports(&outcomes, s))?;
        Ok(outcomes.into_iter().flat_map(|o| o.reports).collect())
    })
}

/// Both tasks; one report per task and model.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    run_tasks(cfg, &Task::BOTH)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Family;
    use crate::timeseries::SplitSpec;

    fn tiny(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.n_years = 2;
        cfg.split = SplitSpec {
            train: [2013, 2013],
            test: [2014, 2014],
        };
        cfg.families = vec![Family::Linear, Family::Gbt];
        cfg.gbt.n_stages = 3;
        cfg.output_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn commands_compose_and_match_the_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full");
        let steps = dir.path().join("steps");
        let cfg = tiny(&full);
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 4);

        generate_command(&cfg, &steps).unwrap();
        train_command(&cfg, &steps, &Task::BOTH).unwrap();
        evaluate_command(&cfg, &steps, &Task::BOTH).unwrap();
        report_command(&steps, &Task::BOTH).unwrap();
        let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
        assert_eq!(read(&full), read(&steps));
        assert!(steps.join("figures/fer_rmse_task2.svg").is_file());
        assert!(!staging_dir(&steps).exists());
    }

    #[test]
    fn failed_run_leaves_no_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("res");
        let mut cfg = tiny(&out);
        cfg.task1.window_hours = 5000;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("[train linear]"), "{err}");
        assert!(!out.exists());
        assert!(!staging_dir(&out).exists());
    }
}
