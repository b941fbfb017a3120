//! Experiment harness for the DDST link: configuration, the receiver
//! registry, dataset and training workflows, the online pipeline and BER
//! sweeps. The `ddst` binary is a thin command-line layer over this crate.

pub mod config;
pub mod error;
pub mod registry;
pub mod sweep;
pub mod workflow;

pub use config::{ExperimentConfig, Net, NetSettings, StoppingRule};
pub use error::{LabError, Result};
pub use registry::{Models, Needs, Registry};
pub use sweep::{run_sweep, wilson_interval, SweepResult, SweepRow};
