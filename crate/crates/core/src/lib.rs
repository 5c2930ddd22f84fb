//! Line-current differential relay (LCDR) simulation toolkit.
//!
//! The crate synthesizes two-terminal line currents for AC and DC lines,
//! runs the dual-slope / threshold differential relay logic over them,
//! crafts false-data-injection attacks on the remote measurement stream,
//! and trains a from-scratch recurrent classifier that decides whether a
//! relay pickup was caused by a genuine internal fault or by an attack.
//!
//! Module map:
//! - [`signal`]: surrogate plant waveform synthesis, limiter, noise.
//! - [`relay`]: magnitude estimation, differential/restraining currents, trip scan.
//! - [`attack`]: remote-stream manipulations and minimal tripping attacks.
//! - [`dataset`]: scenario grids, labeled windows, splits, binary file format.
//! - [`nn`]: stacked RNN, BPTT, Adam, training loop, checkpoints.
//! - [`mivs`]: trip validation, metrics, latency benchmark.

pub mod attack;
pub mod dataset;
mod error;
pub mod mivs;
pub mod nn;
pub mod relay;
pub mod signal;
mod wire;

pub use error::{Error, Result};
