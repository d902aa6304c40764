//! Simulation of conductance-based neural networks and online estimation of
//! their maximal conductances with full and distributed adaptive observers.

pub mod analysis;
pub mod config;
mod error;
pub mod kinetics;
pub mod network;
pub mod observer;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
