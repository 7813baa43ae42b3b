//! Joint resource allocation for a full-duplex ambient-backscatter OFDM network.
//!
//! An access point serves one legacy OFDM user on the downlink while a set of
//! backscatter devices piggyback uplink data on the same carriers in TDMA
//! fashion, harvesting energy from whatever they do not reflect. This crate
//! provides the pieces needed to study that system end to end:
//!
//! * [`channel`] — seeded Rayleigh multipath channel draws and per-subcarrier
//!   frequency responses for the four link families (forward, backward,
//!   direct, interference),
//! * [`metrics`] — closed-form throughput / harvested-energy expressions and a
//!   feasibility checker for candidate allocations,
//! * [`solvers`] — exact solvers for the three per-block subproblems (time
//!   shares, reflection coefficients, subcarrier powers),
//! * [`bcd`] — the outer block-coordinate ascent loop with a monotone
//!   objective contract,
//! * [`bench`] — the equal-allocation baseline and seeded Monte Carlo sweep
//!   harness.

pub mod bcd;
pub mod bench;
pub mod channel;
pub mod config;
pub mod metrics;
pub mod solvers;
pub mod stateio;

pub use bcd::{default_init, optimize, SolveTrace, TerminationReason};
pub use bench::{run_sweep, solve_benchmark, ExperimentRecord, SweepSpec};
pub use channel::{frequency_response, noise_power_from_snr, sample_taps, ChannelTapSet, FrequencyGrid};
pub use config::ScenarioConfig;
pub use metrics::{check_feasibility, min_bd_throughput, AllocationState, ConstraintReport};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
