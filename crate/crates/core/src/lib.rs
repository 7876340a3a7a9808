//! Over-the-air federated learning over cell-free massive MIMO with
//! low-resolution converters: channel model, quantization, rates, power
//! control, privacy accounting, convergence bounds and a training simulator.

pub mod config;
pub mod convergence;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod link;
pub mod power;
pub mod privacy;
pub mod quantization;
pub mod rng;
pub mod schedule;
pub mod topology;

pub use error::{Error, Result};
