//! Surrogate models for a downstream river stage, trained on windowed
//! upstream-discharge and downstream-stage series.
//!
//! Five model families share one contract ([`model::Regressor`]): a linear
//! baseline, Gaussian process regression on PCA-reduced windows, gradient
//! boosted trees, a multilayer perceptron and a 1-D convolutional network.
//! The [`harness`] module runs the two-task benchmark end to end on
//! synthetic catchment data.

pub mod error;
pub mod gbt;
pub mod gpr;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod neuralnet;
pub mod numerics;
pub mod pca;
pub mod synthdata;
pub mod timeseries;
pub mod windows;

pub use error::{Error, Result};
