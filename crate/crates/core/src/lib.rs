//! Simulation of a frequency-bin gate built on cavity-assisted sum-frequency
//! generation.
//!
//! The crate computes the Green's-function kernels of the signal and idler
//! cavities, the transfer matrices they induce on a discrete frequency grid,
//! and figures of merit for single-mode (1×N) and multi-mode (M×N) gates.

pub mod error;
pub mod experiment;
pub mod export;
pub mod grid;
pub mod kernel1n;
pub mod kernelmn;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod pumps;

pub use error::{Error, Result};
pub use grid::{matched_eta, FrequencyGrid, GateParams};
pub use pumps::{
    hermite_gauss_pump, identity_multipump, pump_from_unitary, random_isometry, single_bin_pump, MultiPump,
    PumpEnvelope,
};
