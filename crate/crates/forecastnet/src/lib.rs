//! ForecastNet: time-variant deep feed-forward networks for
//! multi-step-ahead forecasting of seasonal time series.
//!
//! The crate bundles a small double-precision reverse-mode
//! differentiation core, the dense and convolutional hidden-cell
//! variants with mixture-density or linear output heads, a seeded
//! ADAM training loop with learning-rate search and early stopping,
//! a windowed data pipeline, synthetic dataset generators, MASE /
//! SMAPE / Borda evaluation, and scripted experiment runners.

pub mod baselines;
pub mod cells;
pub mod chain;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Activation, Graph, Param, ParamId, ParamStore};
pub use model::{Model, ModelSpec, Variant};
pub use tensor::Tensor;
