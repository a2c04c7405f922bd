//! Gaussian process regression with an ARD Matérn-3/2 kernel on
//! PCA-reduced windows.
//!
//! Hyperparameters (per-dimension length scales, signal std, nugget std) are
//! searched in log space by basin hopping on the negative log marginal
//! likelihood. Each input block (discharge, stage) gets its own PCA basis and
//! the reduced coordinates are concatenated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, Regressor};
use crate::numerics::{basin_hopping, dot, BasinHoppingOptions, Cholesky, Matrix, NelderMeadOptions};
use crate::pca::{fit_pca, PcaBasis, PcaSelector};
use crate::windows::{Dataset, NormStats};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparams {
    pub log_length_scales: Vec<f64>,
    pub log_signal_std: f64,
    pub log_nugget_std: f64,
}

impl GprHyperparams {
    pub fn new(length_scales: &[f64], signal_std: f64, nugget_std: f64) -> Self {
        GprHyperparams {
            log_length_scales: length_scales.iter().map(|l| l.ln()).collect(),
            log_signal_std: signal_std.ln(),
            log_nugget_std: nugget_std.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_length_scales.len()
    }

    pub fn signal_var(&self) -> f64 {
        (2.0 * self.log_signal_std).exp()
    }

    pub fn nugget_var(&self) -> f64 {
        (2.0 * self.log_nugget_std).exp()
    }

    fn inverse_length_scales(&self) -> Vec<f64> {
        self.log_length_scales.iter().map(|l| (-l).exp()).collect()
    }

    /// `[log l_1, …, log l_d, log σ_x, log σ_n]`
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_length_scales.clone();
        v.push(self.log_signal_std);
        v.push(self.log_nugget_std);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        GprHyperparams {
            log_length_scales: v[..d].to_vec(),
            log_signal_std: v[d],
            log_nugget_std: v[d + 1],
        }
    }
}

/// Box constraints on the log hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperBounds {
    pub log_length: (f64, f64),
    pub log_signal: (f64, f64),
    pub log_nugget: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            log_length: (-4.0, 4.0),
            log_signal: (-4.0, 4.0),
            log_nugget: (-8.0, 1.0),
        }
    }
}

impl HyperBounds {
    fn as_box(&self, dim: usize) -> Vec<(f64, f64)> {
        let mut b = vec![self.log_length; dim];
        b.push(self.log_signal);
        b.push(self.log_nugget);
        b
    }
}

fn scaled_distance(a: &[f64], b: &[f64], inv_ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv_ls)
        .map(|((x, y), il)| {
            let d = (x - y) * il;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn matern_of_r(r: f64, signal_var: f64) -> f64 {
    let s = SQRT3 * r;
    signal_var * (1.0 + s) * (-s).exp()
}

/// `σ_x² (1 + √3 r) exp(−√3 r)` with `r` the length-scaled Euclidean distance.
pub fn matern32(z: &[f64], z2: &[f64], hyper: &GprHyperparams) -> f64 {
    debug_assert_eq!(z.len(), hyper.dim());
    let r = scaled_distance(z, z2, &hyper.inverse_length_scales());
    matern_of_r(r, hyper.signal_var())
}

/// `K + σ_n² I` over the rows of `z`.
pub fn kernel_matrix(z: &Matrix, hyper: &GprHyperparams) -> Matrix {
    let n = z.rows();
    let inv_ls = hyper.inverse_length_scales();
    let sv = hyper.signal_var();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = matern_of_r(scaled_distance(z.row(i), z.row(j), &inv_ls), sv);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] = sv + hyper.nugget_var();
    }
    k
}

/// Log marginal likelihood of centered targets; `-inf` when the kernel matrix
/// is not positive definite.
pub fn log_marginal_likelihood(hyper: &GprHyperparams, z: &Matrix, y_centered: &[f64]) -> f64 {
    let n = z.rows();
    if n == 0 || y_centered.len() != n || z.cols() != hyper.dim() {
        return f64::NEG_INFINITY;
    }
    let Ok(chol) = Cholesky::factor(&kernel_matrix(z, hyper)) else {
        return f64::NEG_INFINITY;
    };
    let v = chol.solve_lower(y_centered);
    let lml = -0.5 * dot(&v, &v)
        - 0.5 * chol.log_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if lml.is_finite() {
        lml
    } else {
        f64::NEG_INFINITY
    }
}

/// A GP conditioned on reduced inputs with fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpCore {
    pub z: Matrix,
    pub alpha: Vec<f64>,
    pub chol: Cholesky,
    pub hyper: GprHyperparams,
    pub y_mean: f64,
}

impl GpCore {
    /// Conditions on `(z, y)`; `y` is centered on its own mean.
    pub fn fit(z: &Matrix, y: &[f64], hyper: &GprHyperparams) -> Result<Self> {
        if y.len() != z.rows() {
            return Err(Error::DimensionMismatch {
                expected: z.rows(),
                got: y.len(),
            });
        }
        if z.cols() != hyper.dim() {
            return Err(Error::DimensionMismatch {
                expected: hyper.dim(),
                got: z.cols(),
            });
        }
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let chol = Cholesky::factor(&kernel_matrix(z, hyper))?;
        let alpha = chol.solve_vec(&yc)?;
        Ok(GpCore {
            z: z.clone(),
            alpha,
            chol,
            hyper: hyper.clone(),
            y_mean,
        })
    }

    /// Predictive mean and variance at a reduced input.
    pub fn predict(&self, zs: &[f64]) -> Result<(f64, f64)> {
        if zs.len() != self.z.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.z.cols(),
                got: zs.len(),
            });
        }
        let inv_ls = self.hyper.inverse_length_scales();
        let sv = self.hyper.signal_var();
        let kstar: Vec<f64> = self
            .z
            .row_iter()
            .map(|zi| matern_of_r(scaled_distance(zi, zs, &inv_ls), sv))
            .collect();
        let mean = self.y_mean + dot(&kstar, &self.alpha);
        let v = self.chol.solve_lower(&kstar);
        let var = (sv - dot(&v, &v)).max(0.0);
        Ok((mean, var))
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let l = self.chol.factor_matrix();
        // centered targets recovered as L Lᵀ α
        let n = self.alpha.len();
        let lt_alpha: Vec<f64> = (0..n)
            .map(|i| (i..n).map(|k| l[(k, i)] * self.alpha[k]).sum())
            .collect();
        let yc: Vec<f64> = (0..n)
            .map(|i| dot(&l.row(i)[..=i], &lt_alpha[..=i]))
            .collect();
        -0.5 * dot(&yc, &self.alpha)
            - 0.5 * self.chol.log_det()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GprConfig {
    pub pca: PcaSelector,
    pub bounds: HyperBounds,
    pub n_hops: usize,
    pub step_scale: f64,
    pub temperature: f64,
    /// Nelder–Mead iteration cap per local search.
    pub local_max_iter: usize,
    pub seed: u64,
    /// Training rows kept (evenly strided); `None` keeps all.
    pub max_train_samples: Option<usize>,
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig {
            pca: PcaSelector::default(),
            bounds: HyperBounds::default(),
            n_hops: 30,
            step_scale: 0.5,
            temperature: 1.0,
            local_max_iter: 400,
            seed: 0,
            max_train_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSearch {
    pub hyper: GprHyperparams,
    pub lml_initial: f64,
    pub lml_final: f64,
    /// Best log marginal likelihood after each local search.
    pub lml_history: Vec<f64>,
    pub n_evals: usize,
}

fn std_of(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Heuristic starting point: length scales at the coordinate spreads, signal
/// std at the target spread, nugget at a tenth of it; clamped into bounds.
pub fn initial_hyperparams(z: &Matrix, y: &[f64], bounds: &HyperBounds) -> GprHyperparams {
    let clamp = |v: f64, (lo, hi): (f64, f64)| if v.is_finite() { v.clamp(lo, hi) } else { 0.0f64.clamp(lo, hi) };
    let ys = std_of(y).max(1e-6);
    GprHyperparams {
        log_length_scales: (0..z.cols())
            .map(|j| clamp(std_of(&z.column(j)).ln(), bounds.log_length))
            .collect(),
        log_signal_std: clamp(ys.ln(), bounds.log_signal),
        log_nugget_std: clamp((0.1 * ys).ln(), bounds.log_nugget),
    }
}

/// Maximizes the log marginal likelihood of `y` (centered on its mean) over
/// the bounded log hyperparameters.
pub fn optimize_hyperparams(z: &Matrix, y: &[f64], config: &GprConfig) -> Result<HyperSearch> {
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch {
            expected: z.rows(),
            got: y.len(),
        });
    }
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut start = initial_hyperparams(z, y, &config.bounds);
    let mut lml_initial = log_marginal_likelihood(&start, z, &yc);
    if !lml_initial.is_finite() {
        start.log_nugget_std = config.bounds.log_nugget.1;
        lml_initial = log_marginal_likelihood(&start, z, &yc);
        if !lml_initial.is_finite() {
            return Err(Error::NoFeasibleHyperparameters);
        }
    }
    let mut objective = |v: &[f64]| -> f64 {
        let lml = log_marginal_likelihood(&GprHyperparams::from_vec(v), z, &yc);
        if lml.is_finite() {
            -lml
        } else {
            f64::INFINITY
        }
    };
    let opts = BasinHoppingOptions {
        n_hops: config.n_hops,
        step_scale: config.step_scale,
        temperature: config.temperature,
        seed: config.seed,
        bounds: Some(config.bounds.as_box(z.cols())),
        local: NelderMeadOptions {
            max_iter: config.local_max_iter,
            x_tol: 1e-4,
            f_tol: 1e-7,
            initial_step: 0.5,
            bounds: None,
        },
    };
    let res = basin_hopping(&mut objective, &start.to_vec(), &opts)?;
    if !res.f_best.is_finite() {
        return Err(Error::NoFeasibleHyperparameters);
    }
    Ok(HyperSearch {
        hyper: GprHyperparams::from_vec(&res.x_best),
        lml_initial,
        lml_final: -res.f_best,
        lml_history: res.history.iter().map(|f| -f).collect(),
        n_evals: res.n_evals,
    })
}

/// The GP itself works on z-scored inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub norm: NormStats,
    pub window_hours: usize,
    pub q_basis: PcaBasis,
    pub h_basis: PcaBasis,
    pub core: GpCore,
    pub lml_initial: f64,
    pub lml_final: f64,
}

impl GprModel {
    fn reduce(&self, x_norm: &[f64]) -> Result<Vec<f64>> {
        let w = self.window_hours;
        let mut z = self.q_basis.transform(&x_norm[..w])?;
        z.extend(self.h_basis.transform(&x_norm[w..])?);
        Ok(z)
    }

    pub fn hyper(&self) -> &GprHyperparams {
        &self.core.hyper
    }

    /// Mean (m) and variance (m²) per row of raw windows.
    pub fn predict_with_variance(&self, x: &Matrix) -> Result<Vec<(f64, f64)>> {
        let xn = self.norm.transform_x(x)?;
        let s = self.norm.y_std;
        xn.row_iter()
            .map(|r| {
                let (m, v) = self.core.predict(&self.reduce(r)?)?;
                Ok((m * s + self.norm.y_mean, v * s * s))
            })
            .collect()
    }
}

/// Reduces each block of `x_norm` with its basis and concatenates.
fn reduce_blocks(x_norm: &Matrix, w: usize, q: &PcaBasis, h: &PcaBasis) -> Result<Matrix> {
    let zq = q.transform_matrix(&x_norm.column_block(0, w))?;
    let zh = h.transform_matrix(&x_norm.column_block(w, 2 * w))?;
    zq.hstack(&zh)
}

pub fn fit_gpr(train: &Dataset, config: &GprConfig) -> Result<GprModel> {
    let data = train.thin(config.max_train_samples);
    if data.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "GP regression needs at least 3 samples, got {}",
            data.len()
        )));
    }
    let w = data.window_hours;
    let xn = train.norm_stats.transform_x(&data.x)?;
    let q_basis = fit_pca(&xn.column_block(0, w), config.pca)?;
    let h_basis = fit_pca(&xn.column_block(w, 2 * w), config.pca)?;
    let z = reduce_blocks(&xn, w, &q_basis, &h_basis)?;
    let yn = train.norm_stats.transform_y(&data.y);
    let search = optimize_hyperparams(&z, &yn, config)?;
    let core = GpCore::fit(&z, &yn, &search.hyper)?;
    Ok(GprModel {
        norm: train.norm_stats.clone(),
        window_hours: w,
        q_basis,
        h_basis,
        core,
        lml_initial: search.lml_initial,
        lml_final: search.lml_final,
    })
}

/// Predictive mean (m) and variance (m²) for one raw window of width 2W.
pub fn predict_gpr(model: &GprModel, x: &[f64]) -> Result<(f64, f64)> {
    let row = Matrix::new(1, x.len(), x.to_vec())?;
    Ok(model.predict_with_variance(&row)?[0])
}

impl Regressor for GprModel {
    fn family(&self) -> Family {
        Family::Gpr
    }

    fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .predict_with_variance(x)?
            .into_iter()
            .map(|(m, _)| m)
            .collect())
    }

    fn hyperparams(&self) -> Vec<(String, String)> {
        let h = &self.core.hyper;
        let ls: Vec<String> = h
            .log_length_scales
            .iter()
            .map(|l| format!("{:.4}", l.exp()))
            .collect();
        vec![
            ("n_train".into(), self.core.z.rows().to_string()),
            ("modes_q".into(), self.q_basis.k().to_string()),
            ("modes_h".into(), self.h_basis.k().to_string()),
            ("length_scales".into(), ls.join(" ")),
            ("signal_std".into(), format!("{:.6}", h.log_signal_std.exp())),
            ("nugget_std".into(), format!("{:.6}", h.log_nugget_std.exp())),
            ("log_likelihood".into(), format!("{:.4}", self.lml_final)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let h = GprHyperparams::new(&[1.0], 1.0, 1e-3);
        assert_eq!(matern32(&[0.4], &[0.4], &h), 1.0);
        let v = matern32(&[0.0], &[1.0], &h);
        assert!((v - (1.0 + SQRT3) * (-SQRT3).exp()).abs() < 1e-15);
        assert!((v - 0.48335).abs() < 1e-5);
        let mut prev = 1.0;
        for i in 1..200 {
            let k = matern32(&[0.0], &[i as f64 * 0.1], &h);
            assert!(k < prev && k > 0.0);
            prev = k;
        }
        assert!(matern32(&[0.0], &[100.0], &h) < 1e-60);
    }

    #[test]
    fn single_point_likelihood() {
        let z = Matrix::from_rows(&[vec![0.0]]).unwrap();
        // σ_n → 0: nugget at the floor of f64 resolution
        let h = GprHyperparams {
            log_length_scales: vec![0.0],
            log_signal_std: 0.0,
            log_nugget_std: -40.0,
        };
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_marginal_likelihood(&h, &z, &[0.0]) + half_log_2pi).abs() < 1e-12);
        assert!((log_marginal_likelihood(&h, &z, &[2.0]) - (-2.0 - half_log_2pi)).abs() < 1e-12);
        assert!((half_log_2pi - 0.91894).abs() < 1e-5);
    }

    #[test]
    fn likelihood_on_indefinite_is_neg_inf() {
        let z = Matrix::from_rows(&[vec![0.0], vec![0.0]]).unwrap();
        let h = GprHyperparams {
            log_length_scales: vec![0.0],
            log_signal_std: 0.0,
            log_nugget_std: f64::NEG_INFINITY,
        };
        assert_eq!(log_marginal_likelihood(&h, &z, &[1.0, -1.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn core_reproduces_stored_likelihood() {
        let z = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.5, -0.2], vec![2.0, 0.3]]).unwrap();
        let y = [1.0, 2.5, -0.5];
        let h = GprHyperparams::new(&[0.8, 1.5], 1.3, 0.1);
        let core = GpCore::fit(&z, &y, &h).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| v - core.y_mean).collect();
        assert!((core.log_marginal_likelihood() - log_marginal_likelihood(&h, &z, &yc)).abs() < 1e-10);
    }

    #[test]
    fn far_point_reverts_to_prior() {
        let z = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let h = GprHyperparams::new(&[0.5], 2.0, 0.01);
        let core = GpCore::fit(&z, &[1.0, 3.0, 2.0], &h).unwrap();
        let (m, v) = core.predict(&[500.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let (_, v_train) = core.predict(&[1.0]).unwrap();
        assert!(v_train <= v);
    }

    #[test]
    fn duplicate_rows_fit_with_nugget() {
        let z = Matrix::from_rows(&[vec![0.0], vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [1.0, 1.0, 2.0, 0.5];
        let cfg = GprConfig {
            n_hops: 3,
            ..Default::default()
        };
        let s = optimize_hyperparams(&z, &y, &cfg).unwrap();
        assert!(s.lml_final >= s.lml_initial);
        assert!(GpCore::fit(&z, &y, &s.hyper).is_ok());
    }

    fn inv3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                let (c, d) = ((i + 1) % 3, (i + 2) % 3);
                r[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
            }
        }
        r
    }

    #[test]
    fn likelihood_matches_explicit_inverse() {
        let z = Matrix::from_rows(&[vec![0.0, 0.3], vec![0.7, -0.4], vec![1.5, 1.1]]).unwrap();
        let y = [0.4, -1.1, 0.7];
        let h = GprHyperparams::new(&[0.9, 1.7], 1.2, 0.3);
        let k = kernel_matrix(&z, &h);
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = k[(i, j)];
            }
        }
        let inv = inv3(m);
        for i in 0..3 {
            for j in 0..3 {
                let e: f64 = (0..3).map(|t| m[i][t] * inv[t][j]).sum();
                assert!((e - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let quad: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| y[i] * inv[i][j] * y[j])
            .sum();
        let expected = -0.5 * quad - 0.5 * det.ln() - 1.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_marginal_likelihood(&h, &z, &y) - expected).abs() < 1e-10);
    }

    #[test]
    fn two_point_prediction_matches_hand_computation() {
        let z = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let y = [1.0, 3.0];
        let h = GprHyperparams::new(&[0.8], 1.5, 0.2);
        let core = GpCore::fit(&z, &y, &h).unwrap();
        let zs = 0.4;
        let sv = 2.25;
        let kf = |a: f64, b: f64| {
            let r = (a - b).abs() / 0.8;
            sv * (1.0 + SQRT3 * r) * (-SQRT3 * r).exp()
        };
        let (a, b, d) = (sv + 0.04, kf(0.0, 1.0), sv + 0.04);
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let ks = [kf(0.0, zs), kf(1.0, zs)];
        let yc = [-1.0, 1.0];
        let mean = 2.0
            + (0..2)
                .map(|i| ks[i] * (0..2).map(|j| inv[i][j] * yc[j]).sum::<f64>())
                .sum::<f64>();
        let var = sv
            - (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| ks[i] * inv[i][j] * ks[j])
                .sum::<f64>();
        let (m, v) = core.predict(&[zs]).unwrap();
        assert!((m - mean).abs() < 1e-10);
        assert!((v - var).abs() < 1e-10);
    }

    #[test]
    fn interpolates_training_points_without_nugget() {
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 2.0], vec![2.0, 2.0]]).unwrap();
        let y = [0.1, 0.9, -0.3, 1.4];
        let h = GprHyperparams::new(&[1.0, 1.0], 1.0, 1e-7);
        let core = GpCore::fit(&z, &y, &h).unwrap();
        for (i, target) in y.iter().enumerate() {
            let (m, v) = core.predict(z.row(i)).unwrap();
            assert!((m - target).abs() < 1e-6);
            assert!(v <= 1e-8);
        }
        let lhs = kernel_matrix(&z, &h).matvec(&core.alpha).unwrap();
        for (a, yi) in lhs.iter().zip(&y) {
            assert!((a - (yi - core.y_mean)).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_is_linear_in_targets() {
        let z = Matrix::from_rows(&[vec![0.0], vec![0.6], vec![1.3], vec![2.1]]).unwrap();
        let h = GprHyperparams::new(&[0.7], 1.0, 0.05);
        let y1 = [0.3, -0.2, 1.0, 0.4];
        let y2 = [1.1, 0.5, -0.7, 0.2];
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let p = |y: &[f64]| GpCore::fit(&z, y, &h).unwrap().predict(&[0.9]).unwrap().0;
        assert!((p(&sum) - (p(&y1) + p(&y2))).abs() < 1e-12);
    }

    fn sample_gp(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = Matrix::new(n, 1, (0..n).map(|i| i as f64 * 10.0 / n as f64).collect()).unwrap();
        let truth = GprHyperparams::new(&[1.0], 1.0, 0.1);
        let chol = Cholesky::factor(&kernel_matrix(&z, &truth)).unwrap();
        let e: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let l = chol.factor_matrix();
        let y = (0..n).map(|i| dot(&l.row(i)[..=i], &e[..=i])).collect();
        (z, y)
    }

    #[test]
    fn recovers_generating_hyperparameters() {
        let (z, y) = sample_gp(200, 17);
        let cfg = GprConfig {
            n_hops: 5,
            ..Default::default()
        };
        let s = optimize_hyperparams(&z, &y, &cfg).unwrap();
        let h = s.hyper;
        let within2 = |v: f64, t: f64| v / t <= 2.0 && t / v <= 2.0;
        assert!(within2(h.log_length_scales[0].exp(), 1.0), "{h:?}");
        assert!(within2(h.log_signal_std.exp(), 1.0), "{h:?}");
        assert!(within2(h.log_nugget_std.exp(), 0.1), "{h:?}");
        assert!(s.lml_final >= s.lml_initial);
        assert!(s.lml_history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn end_to_end_on_windows() {
        let w = 4;
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 * 0.3;
                (0..2 * w).map(|j| (t + j as f64 * 0.1).sin() + j as f64).collect()
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[w - 1] * 2.0 + 5.0).collect();
        let ds = Dataset {
            timestamps: (0..60).collect(),
            norm_stats: NormStats::fit(&x, &y),
            x: x.clone(),
            y: y.clone(),
            window_hours: w,
            excluded: 0,
        };
        let cfg = GprConfig {
            n_hops: 2,
            ..Default::default()
        };
        let m = fit_gpr(&ds, &cfg).unwrap();
        let pred = m.predict(&x).unwrap();
        let rmse = (pred.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 60.0).sqrt();
        assert!(rmse < 0.05, "{rmse}");
        let (mean, var) = predict_gpr(&m, x.row(3)).unwrap();
        assert_eq!(mean, pred[3]);
        assert!(var >= 0.0);
        assert!(predict_gpr(&m, &[0.0; 3]).is_err());
    }
}
