//! Alpha Stirling engine model and its numerical bifurcation analysis.
//!
//! Layers, bottom up: [`engine`] closed-form quantities, [`dynamics`] the
//! flywheel ODE with event detection, [`equilibria`] roots of the torque and
//! the locus where their number changes, [`global`] homoclinic/heteroclinic
//! detection by shooting, [`cycle`] the rotational limit cycle and power.

pub mod cycle;
pub mod dynamics;
pub mod engine;
pub mod equilibria;
pub mod error;
pub mod global;
pub mod io;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod roots;

pub use error::{Error, Result};
pub use params::EngineParams;
