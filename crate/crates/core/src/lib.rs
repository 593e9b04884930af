//! Simulation and streaming analysis of photoacoustic signals during laser
//! tattoo removal.

pub mod acoustic;
pub mod analysis;
pub mod dsp;
pub mod error;
pub mod exec;
pub mod monitor;
pub mod rng;
pub mod scenario;
pub mod session;
pub mod tissue;

pub use error::{Error, Result};
pub use exec::Exec;
