//! Simulation and control of a measurement-based time-multiplexed optical loop.

pub mod breeding;
pub mod cli;
pub mod env;
pub mod error;
pub mod fock;
pub mod onestep;
pub mod optim;
pub mod plot;
pub mod ppo;

pub use error::{Error, Result};
