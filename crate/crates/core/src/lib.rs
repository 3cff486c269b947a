//! Simulation of transmon qubits coupled to a semi-infinite waveguide and
//! protected by a Josephson quantum filter.
//!
//! The library covers the cascaded master equation in a rotating frame, its
//! RK4 propagation, the delay-differential model used to quantify the
//! Markov approximation, and gradient-based optimal control of a π-pulse.

pub mod dde;
pub mod error;
pub mod io;
pub mod liouvillian;
pub mod model;
pub mod optimize;
pub mod propagate;
pub mod pulse;
pub mod quadrature;
pub mod sparse;
pub mod units;

pub mod cli;

pub use error::{Error, Result};
pub use model::{Model, Subsystem, SubsystemKind, SystemConfig};
