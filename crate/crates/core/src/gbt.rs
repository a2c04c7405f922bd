//! Gradient-boosted CART regression trees with squared loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, Regressor};
use crate::numerics::Matrix;
use crate::windows::{Dataset, NormStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Node 0 is the root. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub max_depth: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value } => Some(*value),
                _ => None,
            })
            .collect()
    }
}

/// Row indices sorted by each feature; ties keep row order.
fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .map(|j| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| x[(a as usize, j)].total_cmp(&x[(b as usize, j)]));
            idx
        })
        .collect()
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n: usize,
    sum: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

const NONE: u32 = u32::MAX;

/// Level-wise greedy CART over presorted feature orders.
fn grow_tree(
    x: &Matrix,
    sorted: &[Vec<u32>],
    r: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> RegressionTree {
    let n = r.len();
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    // node id each row currently sits in
    let mut node_of = vec![0u32; n];
    let mut frontier: Vec<usize> = vec![0];

    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        // slot of each frontier node, NONE for finished nodes
        let mut slot = vec![NONE; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot[id] = s as u32;
        }
        let m = frontier.len();
        let mut total = vec![Acc::default(); m];
        let mut sumsq = vec![0.0; m];
        for (row, &id) in node_of.iter().enumerate() {
            let s = slot[id as usize];
            if s != NONE {
                let a = &mut total[s as usize];
                a.n += 1;
                a.sum += r[row];
                sumsq[s as usize] += r[row] * r[row];
            }
        }
        let base: Vec<f64> = total
            .iter()
            .map(|a| if a.n > 0 { a.sum * a.sum / a.n as f64 } else { 0.0 })
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; m];

        let mut left = vec![Acc::default(); m];
        let mut last = vec![f64::NAN; m];
        for (f, order) in sorted.iter().enumerate() {
            left.iter_mut().for_each(|a| *a = Acc::default());
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &row in order {
                let row = row as usize;
                let s = slot[node_of[row] as usize];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                let v = x[(row, f)];
                let l = left[s];
                if l.n > 0 && v > last[s] {
                    let t = total[s];
                    let nr = t.n - l.n;
                    if l.n >= min_leaf && nr >= min_leaf {
                        let sr = t.sum - l.sum;
                        let gain = l.sum * l.sum / l.n as f64 + sr * sr / nr as f64 - base[s];
                        if gain > 1e-12 * sumsq[s] && best[s].is_none_or(|b| gain > b.gain) {
                            let mid = 0.5 * (last[s] + v);
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: if mid < v { mid } else { last[s] },
                            });
                        }
                    }
                }
                left[s].n += 1;
                left[s].sum += r[row];
                last[s] = v;
            }
        }

        let mut next = Vec::new();
        for (s, &id) in frontier.iter().enumerate() {
            if let Some(c) = best[s] {
                let (l, rr) = (nodes.len(), nodes.len() + 1);
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: l,
                    right: rr,
                };
                next.push(l);
                next.push(rr);
            }
        }
        for (row, id) in node_of.iter_mut().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[*id as usize]
            {
                *id = if x[(row, feature)] <= threshold { left } else { right } as u32;
            }
        }
        frontier = next;
    }

    let mut acc = vec![Acc::default(); nodes.len()];
    for (row, &id) in node_of.iter().enumerate() {
        acc[id as usize].n += 1;
        acc[id as usize].sum += r[row];
    }
    for (node, a) in nodes.iter_mut().zip(&acc) {
        if let Node::Leaf { value } = node {
            *value = if a.n > 0 { a.sum / a.n as f64 } else { 0.0 };
        }
    }
    RegressionTree { nodes, max_depth }
}

/// Fits one regression tree to `residuals`.
pub fn fit_tree(x: &Matrix, residuals: &[f64], max_depth: usize, min_leaf: usize) -> Result<RegressionTree> {
    check_tree_args(x, residuals, min_leaf)?;
    Ok(grow_tree(x, &presort(x), residuals, max_depth, min_leaf))
}

fn check_tree_args(x: &Matrix, r: &[f64], min_leaf: usize) -> Result<()> {
    if r.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: r.len(),
        });
    }
    if min_leaf == 0 {
        return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
    }
    if r.len() < 2 * min_leaf {
        return Err(Error::InvalidArgument(format!(
            "tree needs at least {} rows, got {}",
            2 * min_leaf,
            r.len()
        )));
    }
    if let Some(i) = r.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { row: i, col: 0 });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub max_train_samples: Option<usize>,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
            max_train_samples: None,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gbt learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("gbt min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub norm: NormStats,
    pub init_value: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub n_stages: usize,
    /// Training MSE after stage 0 (the constant) and after each tree.
    pub train_mse: Vec<f64>,
}

fn mse(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

pub fn fit_gbt(train: &Dataset, config: &GbtConfig) -> Result<GbtModel> {
    config.validate()?;
    let data = train.thin(config.max_train_samples);
    let x = train.norm_stats.transform_x(&data.x)?;
    check_tree_args(&x, &data.y, config.min_leaf)?;
    let init_value = data.y.iter().sum::<f64>() / data.len() as f64;
    let mut residual: Vec<f64> = data.y.iter().map(|y| y - init_value).collect();
    let sorted = presort(&x);
    let mut trees = Vec::with_capacity(config.n_stages);
    let mut train_mse = vec![mse(&residual)];
    for _ in 0..config.n_stages {
        let tree = grow_tree(&x, &sorted, &residual, config.max_depth, config.min_leaf);
        for (i, r) in residual.iter_mut().enumerate() {
            *r -= config.learning_rate * tree.predict_row(x.row(i));
        }
        train_mse.push(mse(&residual));
        trees.push(tree);
    }
    Ok(GbtModel {
        norm: train.norm_stats.clone(),
        init_value,
        trees,
        learning_rate: config.learning_rate,
        n_stages: config.n_stages,
        train_mse,
    })
}

/// Predicts from already-normalized rows.
fn predict_normalized(model: &GbtModel, x: &Matrix) -> Vec<f64> {
    x.row_iter()
        .map(|row| {
            let s: f64 = model.trees.iter().map(|t| t.predict_row(row)).sum();
            model.init_value + model.learning_rate * s
        })
        .collect()
}

pub fn predict_gbt(model: &GbtModel, x: &Matrix) -> Result<Vec<f64>> {
    Ok(predict_normalized(model, &model.norm.transform_x(x)?))
}

impl Regressor for GbtModel {
    fn family(&self) -> Family {
        Family::Gbt
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        predict_gbt(self, x)
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        vec![
            ("n_stages".into(), self.n_stages.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            (
                "max_depth".into(),
                self.trees.first().map_or(0, |t| t.max_depth).to_string(),
            ),
            (
                "final_train_mse".into(),
                format!("{:.6e}", self.train_mse.last().copied().unwrap_or(0.0)),
            ),
        ]
    }
}
