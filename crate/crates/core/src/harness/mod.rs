//! Sweeps, scaling fits, structured output and the command-line front end.

pub mod cli;
pub mod config;
pub mod fit;
pub mod output;
pub mod selftest;
pub mod sweep;

pub use fit::{fit_power_law, ScalingFit};
pub use selftest::{run_selftest, CheckOutcome};
pub use sweep::{run_sweep, Axis, SweepSpec, SweepTable, Task};
