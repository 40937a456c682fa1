//! Deterministic cluster fault simulator with an adaptive fault-tolerance
//! controller, four baseline strategies and an experiment harness.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod events;
pub mod harness;
pub mod metrics;
pub mod mitigator;
pub mod predictor;
pub mod scheduler;
pub mod sim;
pub mod strategies;
pub mod telemetry;

pub use error::{Error, Result};
