//! Uplink MU-MIMO scheduling with peak-age-of-information weighted
//! proportional fairness.
//!
//! The crate is split along the simulation pipeline:
//!
//! - [`channel`]: correlated Rayleigh block fading, SVD precoding, linear
//!   MMSE per-stream SINR and the Shannon-style achievable throughput.
//! - [`traffic`]: replenish-on-completion XR packets, BSR reporting,
//!   transport-block transmission and PDB expiry.
//! - [`aoi`]: per-UE age counters, PAoI accounting and the PAoI weight.
//! - [`scheduler`]: PF averaging, the greedy PAoI-weighted PF selection,
//!   the classical PF baseline and an exhaustive oracle.
//! - [`engine`]: the per-TTI loop and multi-drop execution.
//! - [`metrics`]: run summaries and evaluation statistics.

pub mod aoi;
pub mod channel;
pub mod engine;
mod error;
pub mod metrics;
pub mod scheduler;
pub mod traffic;

pub use error::{Error, Invalid, Result};
