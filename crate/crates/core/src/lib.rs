//! Agent-based market ecology of heterogeneous mutual funds trading one asset.

pub mod accounting;
pub mod calibration;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod market;
pub mod optimize;
pub mod stats;
pub mod stochastic;
pub mod strategies;

pub use config::SimConfig;
pub use engine::{run, run_ensemble, RunRecord, Simulation};
pub use error::{Error, Result};
