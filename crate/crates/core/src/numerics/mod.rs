//! Dense linear algebra and derivative-free optimization shared by the models.

mod linalg;
mod optim;

pub use linalg::{cholesky_solve, dot, least_squares, svd, Cholesky, Matrix, Svd, LSTSQ_JITTER};
pub use optim::{
    basin_hopping, finite_diff_gradient, nelder_mead, BasinHoppingOptions, NelderMeadOptions,
    OptResult,
};
