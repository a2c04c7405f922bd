use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::GbtConfig;
use crate::gpr::GprConfig;
use crate::model::Family;
use crate::neuralnet::TrainConfig;
use crate::synthdata::CatchmentScenario;
use crate::timeseries::{SpikeFilter, SplitSpec};
use crate::windows::WindowSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Daily physical-model target.
    One,
    /// Hourly observed target, cleaned on the test side.
    Two,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::One, Task::Two];

    pub fn number(self) -> u8 {
        match self {
            Task::One => 1,
            Task::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Task> {
        match n {
            1 => Ok(Task::One),
            2 => Ok(Task::Two),
            _ => Err(Error::InvalidArgument(format!("unknown task {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub window_hours: usize,
    pub target_stride_hours: usize,
    /// Per-family cap on training rows (family name → rows).
    pub max_train_samples: BTreeMap<String, usize>,
    /// Per-family epoch override for the networks.
    pub epochs: BTreeMap<String, usize>,
}

impl TaskConfig {
    fn new(stride: usize) -> Self {
        TaskConfig {
            window_hours: 24,
            target_stride_hours: stride,
            max_train_samples: BTreeMap::new(),
            epochs: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            window_hours: self.window_hours,
            target_stride_hours: self.target_stride_hours,
        }
    }

    pub fn cap(&self, family: Family) -> Option<usize> {
        self.max_train_samples.get(family.name()).copied()
    }
}

/// Grid search over the number of PCA modes kept per block, scored on the
/// chronologically last part of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprSearch {
    /// Empty disables the search and uses `gpr.pca` as is.
    pub pca_grid: Vec<usize>,
    pub validation_fraction: f64,
}

impl Default for GprSearch {
    fn default() -> Self {
        GprSearch {
            pca_grid: vec![3, 5],
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for model training; per-model seeds derive from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub families: Vec<Family>,
    /// Interpolation never bridges gaps longer than this.
    pub max_gap_hours: u32,
    pub scenario: CatchmentScenario,
    pub split: SplitSpec,
    pub spike_filter: SpikeFilter,
    pub task1: TaskConfig,
    pub task2: TaskConfig,
    pub gpr: GprConfig,
    pub gpr_search: GprSearch,
    pub gbt: GbtConfig,
    pub mlp: TrainConfig,
    pub cnn: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut task1 = TaskConfig::new(24);
        task1.max_train_samples.insert("gpr".into(), 300);
        let mut task2 = TaskConfig::new(1);
        task2.max_train_samples.insert("gpr".into(), 300);
        task2.max_train_samples.insert("mlp".into(), 2000);
        task2.max_train_samples.insert("cnn".into(), 2000);
        ExperimentConfig {
            seed: 20200917,
            output_dir: PathBuf::from("results"),
            families: Family::ALL.to_vec(),
            max_gap_hours: 24,
            scenario: CatchmentScenario::default(),
            split: SplitSpec {
                train: [2013, 2016],
                test: [2017, 2017],
            },
            spike_filter: SpikeFilter::default(),
            task1,
            task2,
            gpr: GprConfig {
                n_hops: 3,
                ..Default::default()
            },
            gpr_search: GprSearch::default(),
            gbt: GbtConfig::default(),
            mlp: TrainConfig::default(),
            cnn: TrainConfig {
                epochs: 40,
                ..Default::default()
            },
        }
    }
}

/// Overlays `user` on `base`. Tables that encode a different enum variant
/// replace the default rather than merge with it.
fn merge_tables(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !other_variant(b, &u) => {
                merge_tables(b, u)
            }
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn other_variant(base: &toml::Table, user: &toml::Table) -> bool {
    if let Some(kind) = user.get("kind") {
        return base.get("kind") != Some(kind);
    }
    base.len() == 1 && base.keys().all(|k| !user.contains_key(k))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one model, from the master seed, the family and the task.
pub fn derive_seed(master: u64, family: Family, task: Task) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in family.name().bytes().chain([task.number()]) {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ h)
}

impl ExperimentConfig {
    pub fn task(&self, task: Task) -> &TaskConfig {
        match task {
            Task::One => &self.task1,
            Task::Two => &self.task2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        self.scenario.validate()?;
        self.split.validate()?;
        if !self.families.contains(&Family::Linear) {
            return fail("the linear baseline must be among the families".into());
        }
        let mut seen = self.families.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.families.len() {
            return fail("families listed twice".into());
        }
        let first = self.scenario.start_year;
        let last = first + self.scenario.n_years as i32 - 1;
        if self.split.train[0] < first || self.split.test[1] > last {
            return fail(format!(
                "split {:?} falls outside the generated years {first}-{last}",
                self.split
            ));
        }
        for t in Task::BOTH {
            let tc = self.task(t);
            if tc.window_hours == 0 || tc.target_stride_hours == 0 {
                return fail(format!("task{}: window and stride must be positive", t.number()));
            }
            for name in tc.max_train_samples.keys().chain(tc.epochs.keys()) {
                Family::parse(name)?;
            }
        }
        if self.max_gap_hours == 0 {
            return fail("max_gap_hours must be positive".into());
        }
        if self.gpr_search.pca_grid.contains(&0)
            || !(self.gpr_search.validation_fraction > 0.0 && self.gpr_search.validation_fraction < 1.0)
        {
            return fail("gpr_search: grid entries must be positive and the validation fraction in (0, 1)".into());
        }
        self.gbt.validate()?;
        self.mlp.validate()?;
        self.cnn.validate()?;
        Ok(())
    }

    /// Parses a config file. Keys absent from the file keep their default
    /// values, at any depth.
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let bad = |e: &dyn std::fmt::Display| Error::InvalidConfig(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut merged =
            toml::Table::try_from(ExperimentConfig::default()).map_err(|e| bad(&e))?;
        merge_tables(&mut merged, user);
        let cfg: ExperimentConfig =
            toml::Value::Table(merged).try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text)
    }

    /// Every setting, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Settings for one network family on one task.
    pub fn train_config(&self, family: Family, task: Task) -> TrainConfig {
        let base = if family == Family::Cnn { &self.cnn } else { &self.mlp };
        let tc = self.task(task);
        TrainConfig {
            seed: derive_seed(self.seed, family, task),
            max_train_samples: tc.cap(family).or(base.max_train_samples),
            epochs: tc.epochs.get(family.name()).copied().unwrap_or(base.epochs),
            ..base.clone()
        }
    }

    pub fn gpr_config(&self, task: Task) -> GprConfig {
        GprConfig {
            seed: derive_seed(self.seed, Family::Gpr, task),
            max_train_samples: self.task(task).cap(Family::Gpr).or(self.gpr.max_train_samples),
            ..self.gpr.clone()
        }
    }

    pub fn gbt_config(&self, task: Task) -> GbtConfig {
        GbtConfig {
            max_train_samples: self.task(task).cap(Family::Gbt).or(self.gbt.max_train_samples),
            ..self.gbt.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn dotted_keys_and_unknown_fields() {
        let cfg = ExperimentConfig::from_toml("seed = 5\nscenario.storm_rate = 3.0\ntask2.epochs.cnn = 4\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.scenario.storm_rate, 3.0);
        assert_eq!(cfg.train_config(Family::Cnn, Task::Two).epochs, 4);
        assert!(ExperimentConfig::from_toml("sed = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("families = [\"gbt\"]\n").is_err());
        assert!(ExperimentConfig::from_toml("task1.epochs.xgb = 3\n").is_err());
        // partial sections keep the remaining defaults
        let d = ExperimentConfig::default();
        assert_eq!(cfg.task2.target_stride_hours, 1);
        assert_eq!(cfg.task2.max_train_samples, d.task2.max_train_samples);
        assert_eq!(cfg.cnn.epochs, d.cnn.epochs);
        let sgd = ExperimentConfig::from_toml("mlp.optimizer.kind = \"sgd\"\ngpr.pca.fixed = 4\n").unwrap();
        assert_eq!(sgd.mlp.optimizer, crate::neuralnet::Optimizer::Sgd);
        assert_eq!(sgd.gpr.pca, crate::pca::PcaSelector::Fixed(4));
    }

    #[test]
    fn seeds_differ_by_family_and_task() {
        let a = derive_seed(1, Family::Mlp, Task::One);
        assert_eq!(a, derive_seed(1, Family::Mlp, Task::One));
        assert_ne!(a, derive_seed(1, Family::Cnn, Task::One));
        assert_ne!(a, derive_seed(1, Family::Mlp, Task::Two));
        assert_ne!(a, derive_seed(2, Family::Mlp, Task::One));
    }
}
