//! Surrogate models for musculoskeletal simulation outputs.
//!
//! The pipeline maps multichannel motion time series to joint and muscle
//! output time series with linear, feed-forward and recurrent models, and
//! evaluates them under subject-exposed and subject-naive splits.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod optim;
pub mod parallel;
pub mod protocol;
pub mod synth;

pub use error::{Error, Result};
