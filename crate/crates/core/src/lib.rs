//! Quantum linear-quadratic-Gaussian filtering and control for a single open
//! oscillator mode: the complex Kalman filter on Glauber posteriors, backward
//! Riccati control, a closed-loop Monte-Carlo engine, and independent
//! phase-grid and Fock-space oracles.

pub mod cli;
pub mod control;
pub mod error;
pub mod exec;
pub mod filtering;
pub mod io;
pub mod model;
pub mod oracle;
pub mod ode;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
pub use exec::Execution;
