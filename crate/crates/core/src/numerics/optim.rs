//! Derivative-free minimization: Nelder–Mead and basin hopping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Best objective value after each local minimization (basin hopping only;
    /// a single entry for plain Nelder–Mead).
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
    /// Per-coordinate box; trial points are clamped into it.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: 2000,
            x_tol: 1e-8,
            f_tol: 1e-12,
            initial_step: 0.1,
            bounds: None,
        }
    }
}

fn clamp_into(x: &mut [f64], bounds: Option<&[(f64, f64)]>) {
    if let Some(b) = bounds {
        for (xi, (lo, hi)) in x.iter_mut().zip(b) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

fn validate_bounds(bounds: Option<&[(f64, f64)]>, dim: usize) -> Result<()> {
    if let Some(b) = bounds {
        if b.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        if let Some((lo, hi)) = b.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument(format!("invalid bounds [{lo}, {hi}]")));
        }
    }
    Ok(())
}

struct Counted<'a, F> {
    f: &'a mut F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    /// `+inf` marks a rejected point; NaN and `-inf` abort.
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::NonFiniteObjective {
                value: v,
                evaluation: self.evals,
            });
        }
        Ok(v)
    }
}

/// Nelder–Mead simplex minimization.
///
/// The objective may return `+inf` to reject a point; NaN or `-inf` abort.
/// Converges when the simplex diameter drops below `x_tol`, or when the
/// vertex values and the value at the simplex centroid all lie within `f_tol`.
pub fn nelder_mead<F>(f: &mut F, x0: &[f64], opts: &NelderMeadOptions) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let bounds = opts.bounds.as_deref();
    validate_bounds(bounds, n)?;
    let mut obj = Counted { f, evals: 0 };

    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    let f0 = obj.eval(&start)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective {
            value: f0,
            evaluation: 1,
        });
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let mut x = start.clone();
        x[i] += opts.initial_step;
        if let Some(b) = bounds {
            if x[i] > b[i].1 {
                x[i] = start[i] - opts.initial_step;
            }
        }
        clamp_into(&mut x, bounds);
        let fx = obj.eval(&x)?;
        simplex.push((x, fx));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    let mut iter = 0;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if worst.is_finite() { worst - best } else { f64::INFINITY };
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < opts.x_tol {
            converged = true;
            break;
        }
        if spread <= opts.f_tol {
            // equal vertex values can also come from a symmetric simplex
            // around a minimum; require the centroid to agree as well
            let mut xc = vec![0.0; n];
            for (x, _) in &simplex {
                for (c, xi) in xc.iter_mut().zip(x) {
                    *c += xi / (n + 1) as f64;
                }
            }
            let fc = obj.eval(&xc)?;
            if (fc - best).abs() <= opts.f_tol {
                converged = true;
                break;
            }
            if fc < worst && iter < opts.max_iter {
                iter += 1;
                simplex[n] = (xc, fc);
                continue;
            }
        }
        if iter >= opts.max_iter {
            break;
        }
        iter += 1;

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_into(&mut p, bounds);
            p
        };

        let xr = along(alpha);
        let fr = obj.eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = along(gamma);
            let fe = obj.eval(&xe)?;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(rho * alpha);
            let fc = obj.eval(&xc)?;
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = obj.eval(&xc)?;
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = x_best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            clamp_into(&mut x, bounds);
            let fx = obj.eval(&x)?;
            *vertex = (x, fx);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x_best, f_best) = simplex.swap_remove(0);
    Ok(OptResult {
        x_best,
        f_best,
        n_evals: obj.evals,
        converged,
        history: vec![f_best],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinHoppingOptions {
    pub n_hops: usize,
    pub step_scale: f64,
    pub temperature: f64,
    pub seed: u64,
    pub bounds: Option<Vec<(f64, f64)>>,
    pub local: NelderMeadOptions,
}

impl Default for BasinHoppingOptions {
    fn default() -> Self {
        BasinHoppingOptions {
            n_hops: 30,
            step_scale: 0.5,
            temperature: 1.0,
            seed: 0,
            bounds: None,
            local: NelderMeadOptions::default(),
        }
    }
}

/// Basin hopping: random perturbation, local Nelder–Mead, Metropolis acceptance.
///
/// Returns the best local minimum seen. Steps are uniform within
/// `step_scale × (high − low)` per coordinate, or `step_scale` when unbounded.
pub fn basin_hopping<F>(f: &mut F, x0: &[f64], opts: &BasinHoppingOptions) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let bounds = opts.bounds.as_deref();
    validate_bounds(bounds, x0.len())?;
    if !(opts.temperature > 0.0) {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let local_opts = NelderMeadOptions {
        bounds: opts.bounds.clone(),
        ..opts.local.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let first = nelder_mead(f, x0, &local_opts)?;
    let mut n_evals = first.n_evals;
    let mut current = (first.x_best.clone(), first.f_best);
    let mut best = first;
    let mut history = vec![best.f_best];

    for _ in 0..opts.n_hops {
        let mut trial = current.0.clone();
        for (i, xi) in trial.iter_mut().enumerate() {
            let width = bounds.map_or(1.0, |b| b[i].1 - b[i].0);
            *xi += rng.random_range(-1.0..=1.0) * opts.step_scale * width;
        }
        clamp_into(&mut trial, bounds);
        let local = match nelder_mead(f, &trial, &local_opts) {
            Ok(r) => r,
            // a hop landing on a rejected point is skipped
            Err(Error::NonFiniteObjective { value, .. }) if value == f64::INFINITY => {
                history.push(best.f_best);
                continue;
            }
            Err(e) => return Err(e),
        };
        n_evals += local.n_evals;
        let delta = local.f_best - current.1;
        let u: f64 = rng.random();
        if delta < 0.0 || u < (-delta / opts.temperature).exp() {
            current = (local.x_best.clone(), local.f_best);
        }
        if local.f_best < best.f_best {
            best = local;
        }
        history.push(best.f_best);
    }
    Ok(OptResult {
        x_best: best.x_best,
        f_best: best.f_best,
        n_evals,
        converged: best.converged,
        history,
    })
}

/// Central finite differences.
pub fn finite_diff_gradient<F>(f: &mut F, x: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let fp = f(&probe);
        probe[i] = x[i] - eps;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: if fp.is_finite() { fm } else { fp },
                evaluation: 2 * i + 1,
            });
        }
        grad.push((fp - fm) / (2.0 * eps));
    }
    Ok(grad)
}
