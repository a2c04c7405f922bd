use std::path::Path;

use super::config::{ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::gbt::fit_gbt;
use crate::gpr::{fit_gpr, GprConfig, GprModel};
use crate::metrics::{evaluate, mse, EvalReport};
use crate::model::{fit_linear_regression, Family, Regressor, TrainedModel};
use crate::neuralnet::{fit_cnn, fit_mlp};
use crate::pca::PcaSelector;
use crate::synthdata::{generate_boundaries, observe_boundaries, route_to_target, TargetMode};
use crate::timeseries::{
    clean_spikes, load_csv, resample_hourly, split_by_period, write_csv, SplitSpec, TimeSeries,
};
use crate::windows::{build_dataset, Dataset};

const HOUR: i64 = 3600;

/// Gauge records as the models see them before any preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    /// Upstream discharge (m³/s), with gaps.
    pub q: TimeSeries,
    /// Downstream-boundary stage (m), with gaps and any boundary spikes.
    pub h: TimeSeries,
    /// Daily stage from the deterministic routing of the interpolated boundaries.
    pub target_task1: TimeSeries,
    /// Hourly gauged stage at the target station.
    pub target_task2: TimeSeries,
}

pub const DATA_DIR: &str = "data";
const DATA_FILES: [&str; 4] = ["q_upstream.csv", "h_downstream.csv", "target_task1.csv", "target_task2.csv"];

impl ObservedData {
    pub fn target(&self, task: Task) -> &TimeSeries {
        match task {
            Task::One => &self.target_task1,
            Task::Two => &self.target_task2,
        }
    }

    fn series(&self) -> [&TimeSeries; 4] {
        [&self.q, &self.h, &self.target_task1, &self.target_task2]
    }

    /// Writes the four series as CSV files under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, ts) in DATA_FILES.iter().zip(self.series()) {
            write_csv(ts, dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<ObservedData> {
        let dir = dir.as_ref();
        let [q, h, t1, t2] = DATA_FILES.map(|n| load_csv(dir.join(n)));
        Ok(ObservedData {
            q: q?,
            h: h?,
            target_task1: t1?,
            target_task2: t2?,
        })
    }

    pub fn exists(dir: impl AsRef<Path>) -> bool {
        DATA_FILES.iter().all(|n| dir.as_ref().join(n).is_file())
    }

    /// Every value at a timestamp accepted by `pick` is replaced by `f(value)`.
    pub fn perturbed(&self, pick: impl Fn(i64) -> bool, f: impl Fn(f64) -> f64) -> Result<ObservedData> {
        let p = |ts: &TimeSeries| ts.map_values(|t, v| if pick(t) { f(v) } else { v });
        Ok(ObservedData {
            q: p(&self.q)?,
            h: p(&self.h)?,
            target_task1: p(&self.target_task1)?,
            target_task2: p(&self.target_task2)?,
        })
    }
}

/// Splits an hourly series into maximal runs of consecutive hours.
fn hourly_runs(ts: &TimeSeries) -> Vec<std::ops::Range<usize>> {
    let t = ts.timestamps();
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=t.len() {
        if i == t.len() || t[i] - t[i - 1] != HOUR {
            if i > start {
                runs.push(start..i);
            }
            start = i;
        }
    }
    runs
}

/// Physical-mode target computed run by run on the timestamps both
/// interpolated boundaries cover.
fn physical_target(q: &TimeSeries, h: &TimeSeries, cfg: &ExperimentConfig) -> Result<TimeSeries> {
    let qi = resample_hourly(q, cfg.max_gap_hours)?;
    let hi = resample_hourly(h, cfg.max_gap_hours)?;
    let common = qi.filter(|t, _| hi.value_at(t).is_some());
    let h_common = hi.filter(|t, _| qi.value_at(t).is_some());
    let (mut ts, mut vs) = (Vec::new(), Vec::new());
    for run in hourly_runs(&common) {
        let slice = |s: &TimeSeries| {
            TimeSeries::new(
                s.station(),
                s.quantity(),
                s.timestamps()[run.clone()].to_vec(),
                s.values()[run.clone()].to_vec(),
            )
        };
        let part = route_to_target(&slice(&common)?, &slice(&h_common)?, &cfg.scenario, TargetMode::Physical)?;
        ts.extend_from_slice(part.timestamps());
        vs.extend_from_slice(part.values());
    }
    TimeSeries::new("mar", crate::timeseries::Quantity::Stage, ts, vs)
}

/// Synthesizes the scenario and the gauge records.
pub fn generate(cfg: &ExperimentConfig) -> Result<ObservedData> {
    let (q_clean, h_clean) = generate_boundaries(&cfg.scenario)?;
    let (q, h) = observe_boundaries(&q_clean, &h_clean, &cfg.scenario)?;
    let target_task1 = physical_target(&q, &h, cfg)?;
    let target_task2 = route_to_target(&q_clean, &h_clean, &cfg.scenario, TargetMode::Observed)?;
    Ok(ObservedData {
        q,
        h,
        target_task1,
        target_task2,
    })
}

/// Train and test datasets for one task. The test set carries the training
/// normalization.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task: Task,
    pub train: Dataset,
    pub test: Dataset,
    /// Test points removed by spike cleaning (stage input, target).
    pub cleaned: (usize, usize),
}

fn interp(ts: &TimeSeries, cfg: &ExperimentConfig) -> Result<TimeSeries> {
    resample_hourly(ts, cfg.max_gap_hours)
}

fn split(ts: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries)> {
    split_by_period(ts, spec)
}

/// Inputs are always interpolated, each split on its own. The Task-2 test
/// stage input and target are spike-cleaned first; nothing else is cleaned.
/// The daily Task-1 target is used as given.
pub fn prepare_task(data: &ObservedData, cfg: &ExperimentConfig, task: Task) -> Result<TaskData> {
    let (q_tr, q_te) = split(&data.q, &cfg.split)?;
    let (h_tr, h_te) = split(&data.h, &cfg.split)?;
    let (y_tr, y_te) = split(data.target(task), &cfg.split)?;
    let window = cfg.task(task).window();
    let mut cleaned = (0, 0);

    let (y_tr, h_te, y_te) = match task {
        Task::One => (y_tr, h_te, y_te),
        Task::Two => {
            let (h_c, nh) = clean_spikes(&h_te, &cfg.spike_filter)?;
            let (y_c, ny) = clean_spikes(&y_te, &cfg.spike_filter)?;
            cleaned = (nh, ny);
            (interp(&y_tr, cfg)?, h_c, interp(&y_c, cfg)?)
        }
    };
    let train = build_dataset(&interp(&q_tr, cfg)?, &interp(&h_tr, cfg)?, &y_tr, &window)
        .map_err(|e| e.in_stage("prepare train"))?;
    let mut test = build_dataset(&interp(&q_te, cfg)?, &interp(&h_te, cfg)?, &y_te, &window)
        .map_err(|e| e.in_stage("prepare test"))?;
    test.norm_stats = train.norm_stats.clone();
    Ok(TaskData {
        task,
        train,
        test,
        cleaned,
    })
}

/// Picks the PCA size per block by validation error on the chronologically
/// last rows of the training set, then refits on all of it.
pub fn fit_gpr_searched(train: &Dataset, cfg: &ExperimentConfig, task: Task) -> Result<GprModel> {
    let base = cfg.gpr_config(task);
    let grid: Vec<usize> = cfg
        .gpr_search
        .pca_grid
        .iter()
        .copied()
        .filter(|&k| k <= train.window_hours)
        .collect();
    let n = train.len();
    let n_val = (n as f64 * cfg.gpr_search.validation_fraction).round() as usize;
    if grid.is_empty() || n_val == 0 || n < n_val + 3 {
        return fit_gpr(train, &base);
    }
    let fit_part = train.subset(&(0..n - n_val).collect::<Vec<_>>());
    let val = train.subset(&(n - n_val..n).collect::<Vec<_>>());
    let mut best: Option<(f64, usize)> = None;
    for k in grid {
        let c = GprConfig {
            pca: PcaSelector::Fixed(k),
            ..base.clone()
        };
        let model = fit_gpr(&fit_part, &c)?;
        let err = mse(&val.y, &model.predict(&val.x)?)?;
        if best.is_none_or(|(b, _)| err < b) {
            best = Some((err, k));
        }
    }
    let k = best.map(|b| b.1).expect("grid is non-empty");
    fit_gpr(
        train,
        &GprConfig {
            pca: PcaSelector::Fixed(k),
            ..base
        },
    )
}

pub fn train_family(family: Family, train: &Dataset, cfg: &ExperimentConfig, task: Task) -> Result<TrainedModel> {
    Ok(match family {
        Family::Linear => TrainedModel::Linear(fit_linear_regression(train)?),
        Family::Gpr => TrainedModel::Gpr(fit_gpr_searched(train, cfg, task)?),
        Family::Gbt => TrainedModel::Gbt(fit_gbt(train, &cfg.gbt_config(task))?),
        Family::Mlp => TrainedModel::Mlp(fit_mlp(train, &cfg.train_config(family, task))?),
        Family::Cnn => TrainedModel::Cnn(fit_cnn(train, &cfg.train_config(family, task))?),
    })
}

pub type ModelSet = Vec<(Family, TrainedModel)>;

pub fn stage_name(family: Family) -> &'static str {
    match family {
        Family::Linear => "train linear",
        Family::Gpr => "train gpr",
        Family::Gbt => "train gbt",
        Family::Mlp => "train mlp",
        Family::Cnn => "train cnn",
    }
}

/// Trains every configured family on one task, in configuration order.
pub fn train_task(data: &TaskData, cfg: &ExperimentConfig) -> Result<ModelSet> {
    cfg.families
        .iter()
        .map(|&f| {
            train_family(f, &data.train, cfg, data.task)
                .map(|m| (f, m))
                .map_err(|e| e.in_stage(stage_name(f)))
        })
        .collect()
}

/// Test-set predictions of every model on one task, with their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task: Task,
    pub timestamps: Vec<i64>,
    pub target: Vec<f64>,
    pub predictions: Vec<(Family, Vec<f64>)>,
    pub reports: Vec<EvalReport>,
}

/// Scores predictions against the linear baseline's MSE.
pub fn score(task: Task, timestamps: Vec<i64>, target: Vec<f64>, predictions: Vec<(Family, Vec<f64>)>) -> Result<TaskOutcome> {
    let baseline = predictions
        .iter()
        .find(|(f, _)| *f == Family::Linear)
        .ok_or_else(|| Error::InvalidConfig("the linear baseline is required to compute FER".into()))?;
    let mse_reg = mse(&target, &baseline.1)?;
    let reports = predictions
        .iter()
        .map(|(f, p)| evaluate(task.number(), f.name(), &timestamps, &target, p, mse_reg))
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskOutcome {
        task,
        timestamps,
        target,
        predictions,
        reports,
    })
}

pub fn evaluate_task(task: Task, test: &Dataset, models: &ModelSet) -> Result<TaskOutcome> {
    let predictions = models
        .iter()
        .map(|(f, m)| Ok((*f, m.predict(&test.x)?)))
        .collect::<Result<Vec<_>>>()?;
    score(task, test.timestamps.clone(), test.y.clone(), predictions)
}

pub const MODELS_DIR: &str = "models";

pub fn model_path(dir: &Path, task: Task, family: Family) -> std::path::PathBuf {
    dir.join(MODELS_DIR).join(format!("task{}_{}.json", task.number(), family.name()))
}

pub fn save_models(dir: &Path, task: Task, models: &ModelSet) -> Result<()> {
    let md = dir.join(MODELS_DIR);
    std::fs::create_dir_all(&md).map_err(|e| Error::io(&md, e))?;
    for (f, m) in models {
        m.save(model_path(dir, task, *f))?;
    }
    Ok(())
}

pub fn load_models(dir: &Path, task: Task, families: &[Family]) -> Result<ModelSet> {
    families
        .iter()
        .map(|&f| {
            let m = TrainedModel::load(model_path(dir, task, f))?;
            if m.family() != f {
                return Err(Error::Serialization(format!(
                    "model file for {f} holds a {} model",
                    m.family()
                )));
            }
            Ok((f, m))
        })
        .collect()
}

/// Result of retraining after perturbing every test-period value.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub task: Task,
    pub family: Family,
    pub train_data_identical: bool,
    pub parameters_identical: bool,
}

/// Shifts and scales all test-period values, rebuilds the training sets and
/// retrains each family, then compares with an unperturbed training run.
pub fn audit_test_isolation(data: &ObservedData, cfg: &ExperimentConfig, tasks: &[Task]) -> Result<Vec<AuditOutcome>> {
    audit_with(data, cfg, tasks, |task, family, train| train_family(family, train, cfg, task))
}

/// As [`audit_test_isolation`], comparing against the models a run on the
/// unperturbed data saved under `dir`.
pub fn audit_against_saved(
    data: &ObservedData,
    cfg: &ExperimentConfig,
    tasks: &[Task],
    dir: &Path,
) -> Result<Vec<AuditOutcome>> {
    audit_with(data, cfg, tasks, |task, family, _| {
        Ok(load_models(dir, task, &[family])?.remove(0).1)
    })
}

fn audit_with(
    data: &ObservedData,
    cfg: &ExperimentConfig,
    tasks: &[Task],
    reference: impl Fn(Task, Family, &Dataset) -> Result<TrainedModel>,
) -> Result<Vec<AuditOutcome>> {
    let spec = cfg.split;
    let perturbed = data.perturbed(|t| spec.in_test(t), |v| 1.7 * v + 3.0)?;
    let mut out = Vec::new();
    for &task in tasks {
        let a = prepare_task(data, cfg, task)?;
        let b = prepare_task(&perturbed, cfg, task)?;
        let same_data = a.train.timestamps == b.train.timestamps
            && a.train.x == b.train.x
            && a.train.y == b.train.y
            && a.train.norm_stats == b.train.norm_stats;
        for &family in &cfg.families {
            let ma = reference(task, family, &a.train)?;
            let mb = train_family(family, &b.train, cfg, task)?;
            out.push(AuditOutcome {
                task,
                family,
                train_data_identical: same_data,
                parameters_identical: ma.to_json()? == mb.to_json()?,
            });
        }
    }
    Ok(out)
}
