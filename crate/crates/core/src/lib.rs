//! Desk-scale 5G NR uplink cell simulator with dynamic port and waveform
//! switching (DPWS) between CP-OFDM and DFT-S-OFDM.
//!
//! The crate is organised bottom-up:
//!
//! - [`waveform`]: symbol-level transmit chains, the Rapp PA and PAPR.
//! - [`link`]: per-slot link abstraction (path loss, power control, fading,
//!   SNR, precoder choice, AMC).
//! - [`dpws`]: the per-UE counter/timer switching machine.
//! - [`kpi`]: SNR/TA histograms, their descriptors and throughput percentiles.
//! - [`agent`]: the deep Q-learning controller for the switching threshold
//!   and hysteresis.
//! - [`sim`]: episode orchestration, training, evaluation and baselines.
//! - [`config`]: the declarative run configuration.

pub mod agent;
pub mod config;
pub mod dpws;
pub mod error;
pub mod kpi;
pub mod link;
pub mod rng;
pub mod sim;
pub mod waveform;

pub use error::{Error, Result};
