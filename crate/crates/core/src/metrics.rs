//! Error metrics and error distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PDF_BINS: usize = 40;

fn check_pair(y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one sample".into()));
    }
    Ok(())
}

/// Mean squared error (m²).
pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (p - t) * (p - t))
        .sum::<f64>()
        / y_true.len() as f64)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    Ok(mse(y_true, y_pred)?.sqrt())
}

/// Fraction of explained residual: `1 − mse_model / mse_reg`.
pub fn fer(mse_model: f64, mse_reg: f64) -> Result<f64> {
    if mse_reg == 0.0 {
        return Err(Error::UndefinedFer);
    }
    if !(mse_reg > 0.0) || !(mse_model >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "FER needs non-negative errors, got {mse_model} and {mse_reg}"
        )));
    }
    Ok(1.0 - mse_model / mse_reg)
}

/// Largest absolute error and the index of its first occurrence.
pub fn max_error(y_true: &[f64], y_pred: &[f64]) -> Result<(f64, usize)> {
    check_pair(y_true, y_pred)?;
    let mut best = (0.0, 0);
    for (i, (t, p)) in y_true.iter().zip(y_pred).enumerate() {
        let e = (p - t).abs();
        if e > best.0 {
            best = (e, i);
        }
    }
    Ok(best)
}

/// Prediction minus target.
pub fn errors(y_true: &[f64], y_pred: &[f64]) -> Result<Vec<f64>> {
    check_pair(y_true, y_pred)?;
    Ok(y_pred.iter().zip(y_true).map(|(p, t)| p - t).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPdf {
    /// `n_bins + 1` edges
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Empirical density per bin.
    pub density: Vec<f64>,
    pub bias: f64,
    /// Unbiased sample standard deviation.
    pub std: f64,
    /// Fitted normal density at each bin center.
    pub gaussian: Vec<f64>,
}

impl ErrorPdf {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn error_pdf(errors: &[f64], n_bins: usize) -> Result<ErrorPdf> {
    let n = errors.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "error distribution needs at least 2 samples, got {n}"
        )));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if let Some(i) = errors.iter().position(|e| !e.is_finite()) {
        return Err(Error::NonFiniteInput { row: i, col: 0 });
    }
    let bias = errors.iter().sum::<f64>() / n as f64;
    let std = (errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / (n - 1) as f64).sqrt();
    let lo = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let (edges, counts) = if hi > lo {
        let width = (hi - lo) / n_bins as f64;
        let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; n_bins];
        for e in errors {
            let b = (((e - lo) / width) as usize).min(n_bins - 1);
            counts[b] += 1;
        }
        (edges, counts)
    } else {
        (vec![lo, hi], vec![n])
    };
    let density: Vec<f64> = edges
        .windows(2)
        .zip(&counts)
        .map(|(w, &c)| {
            let width = w[1] - w[0];
            if width > 0.0 {
                c as f64 / (n as f64 * width)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let gaussian = edges
        .windows(2)
        .map(|w| {
            let x = 0.5 * (w[0] + w[1]);
            if std > 0.0 {
                let z = (x - bias) / std;
                (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(ErrorPdf {
        edges,
        counts,
        density,
        bias,
        std,
        gaussian,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: u8,
    pub model_name: String,
    pub n_samples: usize,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the baseline error is zero.
    pub fer: Option<f64>,
    pub max_error: f64,
    pub max_error_timestamp: i64,
    pub bias: f64,
    pub error_std: f64,
    pub histogram: ErrorPdf,
}

/// Scores one model's predictions against a baseline MSE.
pub fn evaluate(
    task: u8,
    model_name: &str,
    timestamps: &[i64],
    y_true: &[f64],
    y_pred: &[f64],
    mse_reg: f64,
) -> Result<EvalReport> {
    check_pair(y_true, y_pred)?;
    if timestamps.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: timestamps.len(),
        });
    }
    let m = mse(y_true, y_pred)?;
    let (max_err, at) = max_error(y_true, y_pred)?;
    let e = errors(y_true, y_pred)?;
    let histogram = if e.len() >= 2 {
        error_pdf(&e, DEFAULT_PDF_BINS)?
    } else {
        ErrorPdf {
            edges: vec![e[0], e[0]],
            counts: vec![1],
            density: vec![f64::INFINITY],
            bias: e[0],
            std: 0.0,
            gaussian: vec![f64::INFINITY],
        }
    };
    let fer = match fer(m, mse_reg) {
        Ok(v) => Some(v),
        Err(Error::UndefinedFer) => None,
        Err(err) => return Err(err),
    };
    Ok(EvalReport {
        task,
        model_name: model_name.to_string(),
        n_samples: y_true.len(),
        mse: m,
        rmse: m.sqrt(),
        fer,
        max_error: max_err,
        max_error_timestamp: timestamps[at],
        bias: histogram.bias,
        error_std: histogram.std,
        histogram,
    })
}
