//! DCATS: a data-centric agent loop for time series forecasting.
//!
//! An agent (an LLM endpoint or a scripted stand-in) selects auxiliary time
//! series for a target location by reasoning over metadata and three
//! retrieval criteria (road network, pattern similarity, geodetic distance).
//! Each proposed sub-dataset is pruned of its most anomalous days, used to
//! fine-tune a pretrained lightweight forecaster, and scored on validation
//! error; the agent refines its proposals until no round improves on the
//! best-so-far result.
//!
//! Start with the runnable examples in `examples/` — one per major
//! capability — or the `dcats` binary for the file-based pipeline.

pub mod agent;
pub mod anomaly;
pub mod error;
pub mod forecast;
pub mod metadata;
pub mod neighbors;
pub mod orchestrator;
pub mod templates;
pub mod tsdata;

pub use error::{Error, Result};
