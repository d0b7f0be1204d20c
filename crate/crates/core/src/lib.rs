//! Simulation and verification toolkit for device-independent key
//! distribution secured only by the no-signaling principle.
//!
//! * [`boxcore`]: single- and multi-pair no-signaling boxes, the
//!   Braunstein–Caves functional and its dual vectors.
//! * [`quantum`]: the honest noisy-EPR correlation source.
//! * [`stats`]: method-of-types machinery and concentration bounds.
//! * [`protocol`]: Alice/Bob protocol simulation with error correction and
//!   Toeplitz privacy amplification.
//! * [`security`]: key-rate formulas and composable-security bounds.
//! * [`lpverify`]: a dense simplex solver and the no-signaling adversary LP.
//! * [`verify`]: self-contained check suites used by the command line.

pub mod boxcore;
pub mod error;
pub mod lpverify;
pub mod protocol;
pub mod quantum;
pub mod security;
pub mod stats;
pub mod verify;

pub use error::{Abort, Error, Result};
