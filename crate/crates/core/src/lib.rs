//! Rate analysis and Monte Carlo simulation of measurement-device-independent
//! QKD in which the middle node pairs only photons heralded by QND
//! measurements (an adaptive Bell measurement).
//!
//! - [`stats`]: pairing statistics for finite multiplexing.
//! - [`device`]: hardware/channel parameters and derived probabilities.
//! - [`keyrate`]: secret-key rates, the original-protocol baseline, crossover.
//! - [`montecarlo`]: seeded, parallelism-invariant round simulation.
//! - [`cli`]: configuration and the `mdiqkd` subcommands.

pub mod cli;
pub mod device;
pub mod error;
pub mod keyrate;
pub mod montecarlo;
pub mod stats;

pub use device::{ChannelParams, DerivedProbs, DeviceParams};
pub use error::{Error, Result};
pub use keyrate::RateReport;
pub use montecarlo::{SimEstimate, SimSettings};
pub use stats::PairingStatistics;
