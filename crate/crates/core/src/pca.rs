//! Principal component reduction of one input block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaSelector {
    Fixed(usize),
    MinEnergy(f64),
}

impl Default for PcaSelector {
    fn default() -> Self {
        PcaSelector::MinEnergy(0.99)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// k × d, orthonormal rows
    pub components: Matrix,
    pub singular_values: Vec<f64>,
    pub energy_fraction: f64,
}

/// Fits a basis on the rows of `x` (n × d).
///
/// Components are oriented so that their largest-magnitude entry is positive.
pub fn fit_pca(x: &Matrix, selector: PcaSelector) -> Result<PcaBasis> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 || d < 1 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 rows and 1 column, got {n}x{d}"
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| x.row_iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut centered = x.clone();
    for i in 0..n {
        for (v, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let dec = svd(&centered)?;
    let r = n.min(d);
    let energy: Vec<f64> = dec.s.iter().map(|s| s * s).collect();
    let total: f64 = energy.iter().sum();

    let k = match selector {
        PcaSelector::Fixed(k) => {
            if k == 0 || k > r {
                return Err(Error::InvalidArgument(format!(
                    "cannot keep {k} components of a {n}x{d} matrix"
                )));
            }
            k
        }
        PcaSelector::MinEnergy(e) => {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "energy fraction must lie in (0, 1], got {e}"
                )));
            }
            if total == 0.0 {
                1
            } else {
                let goal = e * total * (1.0 - 1e-12);
                let mut acc = 0.0;
                energy
                    .iter()
                    .position(|v| {
                        acc += v;
                        acc >= goal
                    })
                    .map_or(r, |i| i + 1)
            }
        }
    };

    let mut comp = Matrix::zeros(k, d);
    for c in 0..k {
        let mut v = dec.v.column(c);
        let pivot = v
            .iter()
            .cloned()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        comp.row_mut(c).copy_from_slice(&v);
    }
    let kept: f64 = energy[..k].iter().sum();
    Ok(PcaBasis {
        mean,
        components: comp,
        singular_values: dec.s[..k].to_vec(),
        energy_fraction: if total == 0.0 { 1.0 } else { kept / total },
    })
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.row_iter().map(|c| dot(c, &centered)).collect())
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: z.len(),
            });
        }
        let mut x = self.mean.clone();
        for (c, zc) in self.components.row_iter().zip(z) {
            for (xi, ci) in x.iter_mut().zip(c) {
                *xi += zc * ci;
            }
        }
        Ok(x)
    }

    pub fn transform_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let mut data = Vec::with_capacity(x.rows() * self.k());
        for row in x.row_iter() {
            data.extend(self.transform(row)?);
        }
        Matrix::new(x.rows(), self.k(), data)
    }
}
