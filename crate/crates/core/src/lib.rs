//! Selective population trapping of a trapped ion's motional state.
//!
//! Repeated sideband pulses followed by spontaneous decay act on the Fock
//! populations as a classical Markov map with absorbing levels. This crate
//! provides that map, the Fisher-information analysis of the resulting Fock
//! mixtures as displacement sensors, and a Lindblad simulation that checks
//! the ideal map against the full spin-motion dynamics.

pub mod cli;
pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod linalg;
pub mod metrology;
pub mod protocol;

pub use error::{Result, SptError};
pub use hilbert::{ModeSpace, PopulationVector, ThermalSpec};
pub use protocol::{ProtocolConfig, Sideband};
