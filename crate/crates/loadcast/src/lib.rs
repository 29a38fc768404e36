//! Short-term electric load forecasting with time-varying feature-weighting
//! attention, a bidirectional recurrent encoder-decoder with hierarchical
//! similar-day temporal attention, and a transfer-learning error-correction
//! stage, plus the data pipeline, two-stage trainer, grid search, metrics
//! and CLI around them.
//!
//! The numeric core (tensors, tape, cells, model, optimizer) is generic over
//! the scalar type via `num-traits`; the aliases below pin `f64`, which the
//! pipeline and all tolerances assume.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod correction;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;

/// Dense tensor at the working precision.
pub type Tensor = tensor::Tensor<f64>;
/// Forecasting model at the working precision.
pub type ForecastModel = model::ForecastModel<f64>;
/// Error-correction model at the working precision.
pub type CorrectionModel = correction::CorrectionModel<f64>;
/// Adam optimizer at the working precision.
pub type Adam = optim::Adam<f64>;
/// Reverse-mode tape at the working precision.
pub type Tape = tape::Tape<f64>;
