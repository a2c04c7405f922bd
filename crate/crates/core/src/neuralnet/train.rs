use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_cnn, build_mlp, Network};
use crate::error::{Error, Result};
use crate::model::{Family, Regressor};
use crate::numerics::Matrix;
use crate::windows::{Dataset, NormStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
    /// Training rows kept (evenly strided); `None` keeps all.
    pub max_train_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            seed: 0,
            shuffle: true,
            max_train_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must lie in [0, 1), got {}",
                self.learning_rate
            )));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(Error::InvalidConfig("invalid Adam parameters".into()));
            }
        }
        Ok(())
    }
}

/// Mini-batch training on squared error. `x` rows and `y` are expected to be
/// normalized already. Returns the mean squared error of each epoch, measured
/// on the forward passes made during that epoch.
pub fn train(net: &mut Network, x: &Matrix, y: &[f64], config: &TrainConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    if x.rows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.rows() });
    }
    if x.cols() != net.input_size() {
        return Err(Error::DimensionMismatch {
            expected: net.input_size(),
            got: x.cols(),
        });
    }
    let d = x.cols();
    let p = net.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut grad = vec![0.0; p];
    let mut sq_err = vec![0.0; n];
    let mut xb = Vec::with_capacity(config.batch_size * d);
    let mut yb = Vec::with_capacity(config.batch_size);
    let mut t = 0i32;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(config.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(x.row(i));
                yb.push(y[i]);
            }
            grad.fill(0.0);
            let pred = net.accumulate_gradient(&xb, &yb, 1.0 / batch.len() as f64, &mut grad)?;
            for ((&i, pr), yt) in batch.iter().zip(&pred).zip(&yb) {
                sq_err[i] = (pr - yt) * (pr - yt);
            }
            if !pred.iter().all(|v| v.is_finite()) || !grad.iter().all(|g| g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            t += 1;
            let lr = config.learning_rate;
            match config.optimizer {
                Optimizer::Sgd => {
                    for (w, g) in net.params.iter_mut().zip(&grad) {
                        *w -= lr * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for i in 0..p {
                        let g = grad[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        net.params[i] -= lr * mh / (vh.sqrt() + epsilon);
                    }
                }
            }
        }
        let loss = sq_err.iter().sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(loss);
    }
    Ok(history)
}

/// A trained network with the normalization it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub family: Family,
    pub norm: NormStats,
    pub network: Network,
    pub loss_history: Vec<f64>,
    pub epochs: usize,
    pub n_train: usize,
}

const PREDICT_CHUNK: usize = 256;

impl Regressor for NetworkModel {
    fn family(&self) -> Family {
        self.family
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let xn = self.norm.transform_x(x)?;
        let mut out = Vec::with_capacity(x.rows());
        for chunk in xn.as_slice().chunks(PREDICT_CHUNK * xn.cols().max(1)) {
            out.extend(self.network.forward_batch(chunk)?);
        }
        Ok(self.norm.denormalize_y(&out))
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        vec![
            ("parameters".into(), self.network.n_params().to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("n_train".into(), self.n_train.to_string()),
            (
                "final_train_mse".into(),
                format!("{:.6e}", self.loss_history.last().copied().unwrap_or(f64::NAN)),
            ),
        ]
    }
}

fn fit_network(family: Family, mut net: Network, train_set: &Dataset, config: &TrainConfig) -> Result<NetworkModel> {
    let data = train_set.thin(config.max_train_samples);
    let x = train_set.norm_stats.transform_x(&data.x)?;
    let y = train_set.norm_stats.transform_y(&data.y);
    net.initialize(config.seed);
    let loss_history = train(&mut net, &x, &y, config)?;
    Ok(NetworkModel {
        family,
        norm: train_set.norm_stats.clone(),
        network: net,
        loss_history,
        epochs: config.epochs,
        n_train: data.len(),
    })
}

pub fn fit_mlp(train_set: &Dataset, config: &TrainConfig) -> Result<NetworkModel> {
    fit_network(Family::Mlp, build_mlp(train_set.window_hours)?, train_set, config)
}

pub fn fit_cnn(train_set: &Dataset, config: &TrainConfig) -> Result<NetworkModel> {
    fit_network(Family::Cnn, build_cnn(train_set.window_hours)?, train_set, config)
}
