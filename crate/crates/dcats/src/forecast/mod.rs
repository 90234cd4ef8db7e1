//! Lightweight forecasting models, training, and evaluation.
//!
//! All models are channel independent: one shared model maps any location's
//! normalized input window to its normalized forecast; location identity
//! enters only through which windows appear in the training data.

mod metrics;
mod model;
mod train;

pub use metrics::{evaluate, EvalMetrics, StepMetrics, MAPE_MIN_ABS};
pub use model::{init_model, Model, ModelConfig, ModelKind};
pub use train::{fine_tune, train, LossKind, OptimizerKind, TrainConfig, TrainReport};
