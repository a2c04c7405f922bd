//! The model contract shared by every family, the linear baseline, and
//! versioned model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbt::GbtModel;
use crate::gpr::GprModel;
use crate::neuralnet::NetworkModel;
use crate::numerics::{dot, least_squares, Matrix};
use crate::windows::{Dataset, NormStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Gpr,
    Gbt,
    Mlp,
    Cnn,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Linear,
        Family::Gpr,
        Family::Gbt,
        Family::Mlp,
        Family::Cnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Gpr => "gpr",
            Family::Gbt => "gbt",
            Family::Mlp => "mlp",
            Family::Cnn => "cnn",
        }
    }

    /// Short label used in tables and figures.
    pub fn label(self) -> &'static str {
        match self {
            Family::Linear => "LR",
            Family::Gpr => "GPR",
            Family::Gbt => "GBT",
            Family::Mlp => "MLP",
            Family::Cnn => "CNN",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model family '{s}'")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A trained water-level predictor.
///
/// Implementations take raw (un-normalized) windows and return levels in
/// meters; normalization with the training statistics happens inside.
/// `predict` is a pure function of the trained state and its input.
pub trait Regressor {
    fn family(&self) -> Family;

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>>;

    fn hyperparams(&self) -> Vec<(String, String)>;

    fn name(&self) -> &'static str {
        self.family().name()
    }
}

/// Ordinary least squares over all window features plus an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub norm: NormStats,
    pub intercept: f64,
    /// One per normalized feature.
    pub coefficients: Vec<f64>,
}

pub fn fit_linear_regression(train: &Dataset) -> Result<LinearModel> {
    let p = train.width();
    if train.len() <= p + 1 {
        return Err(Error::InvalidArgument(format!(
            "linear baseline needs more than {} samples, got {}",
            p + 1,
            train.len()
        )));
    }
    let xn = train.norm_stats.transform_x(&train.x)?;
    let mut design = Vec::with_capacity(train.len() * (p + 1));
    for row in xn.row_iter() {
        design.push(1.0);
        design.extend_from_slice(row);
    }
    let a = Matrix::new(train.len(), p + 1, design)?;
    let c = least_squares(&a, &train.y)?;
    Ok(LinearModel {
        norm: train.norm_stats.clone(),
        intercept: c[0],
        coefficients: c[1..].to_vec(),
    })
}

impl Regressor for LinearModel {
    fn family(&self) -> Family {
        Family::Linear
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let xn = self.norm.transform_x(x)?;
        Ok(xn
            .row_iter()
            .map(|r| self.intercept + dot(r, &self.coefficients))
            .collect())
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        vec![("features".into(), self.coefficients.len().to_string())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "state", rename_all = "lowercase")]
pub enum TrainedModel {
    Linear(LinearModel),
    Gpr(GprModel),
    Gbt(GbtModel),
    Mlp(NetworkModel),
    Cnn(NetworkModel),
}

impl TrainedModel {
    fn inner(&self) -> &dyn Regressor {
        match self {
            TrainedModel::Linear(m) => m,
            TrainedModel::Gpr(m) => m,
            TrainedModel::Gbt(m) => m,
            TrainedModel::Mlp(m) | TrainedModel::Cnn(m) => m,
        }
    }
}

impl Regressor for TrainedModel {
    fn family(&self) -> Family {
        match self {
            TrainedModel::Linear(_) => Family::Linear,
            TrainedModel::Gpr(_) => Family::Gpr,
            TrainedModel::Gbt(_) => Family::Gbt,
            TrainedModel::Mlp(_) => Family::Mlp,
            TrainedModel::Cnn(_) => Family::Cnn,
        }
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.inner().predict(x)
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        self.inner().hyperparams()
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    hyperparams: Vec<(String, String)>,
    model: TrainedModel,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            hyperparams: self.hyperparams(),
            model: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&text)
    }
}
