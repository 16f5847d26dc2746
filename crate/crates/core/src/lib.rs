//! Steady-state simulator for lasing with N two-level atoms in a lossy cavity,
//! across the crossover between superradiance and ordinary lasing.
//!
//! All rates and frequencies are angular (rad/s) inside the library; the
//! configuration and file boundaries use Hz.

pub mod analytic;
pub mod cumulant;
pub mod dicke;
pub mod error;
pub mod model;
pub mod newton;
pub mod ode;
pub mod oracle;
pub mod spectrum;
pub mod sweep;

pub use error::{Error, Result};
pub use model::{preset, SystemParams};
