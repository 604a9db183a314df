//! Continuous-variable QKD link simulator and analysis engine.
//!
//! The crate covers the full chain from QPSK/pilot synthesis through fibre
//! impairments, intradyne or heterodyne detection, pilot-aided DSP, excess
//! noise estimation, Gaussian-modulation key rates and link planning.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dsp;
pub mod error;
pub mod estimation;
pub mod filters;
pub mod frontend;
pub mod keyrate;
pub mod planner;
pub mod rng;
pub mod runner;
pub mod signal;
pub mod transmitter;

pub use error::{Error, Result};
