//! Exact and mean-field analysis of a coherently driven ensemble of N
//! spin-1/2 particles with squeezed collective decay: Liouvillian steady
//! states, quantum Fisher information for steady-state and perturbed-state
//! estimation, spin squeezing, and finite-size scaling.

pub mod error;
pub mod harness;
pub mod liouvillian;
pub mod meanfield;
pub mod metrology;
pub mod params;
pub mod sparse;
pub mod spin;

pub use error::{Error, Result};
pub use params::{ModelParams, Parameter};
