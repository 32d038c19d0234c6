//! Configuration-driven sweeps and the verification gate matrix behind the
//! `csfg` command line.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{Experiment, GridSpec, PumpSpec, RRange, SweepConfig};
pub use run::{export_pumps, run, RunOptions, RunSummary};
pub use verify::{run_gates, GateResult, VerifyOptions};
