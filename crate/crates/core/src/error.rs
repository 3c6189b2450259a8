use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid physical or numerical parameters supplied by the caller.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Hilbert-space dimension {dim} exceeds the configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix trace {trace} deviates from 1")]
    BadTrace { trace: f64 },

    #[error("direction vector is not normalized (norm {norm})")]
    NotUnitVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("steady state is not unique (trace distance {distance:.3e} between independent solves)")]
    DegenerateSteadyState { distance: f64 },

    #[error("singular pivot encountered in banded factorization at column {column}")]
    SingularMatrix { column: usize },

    #[error("steady state has a negative eigenvalue {value:.3e}")]
    NotPositive { value: f64 },

    #[error("time step underflow at t = {time} (dt = {dt:.3e})")]
    StepUnderflow { time: f64, dt: f64 },

    #[error("trace drifted by {drift:.3e} during time evolution")]
    TraceDrift { drift: f64 },

    #[error("finite-difference step too large: QFI changed by {relative_change:.3e} under step halving")]
    StepTooLarge { relative_change: f64 },

    #[error("derivative has weight {leakage:.3e} outside the retained eigenspace")]
    SupportMismatch { leakage: f64 },

    #[error("mean spin vanishes (|<S>| = {norm:.3e})")]
    VanishingMeanSpin { norm: f64 },

    /// Mean-field expansion requested outside the ferromagnetic phase.
    #[error("mean-field valid in ferromagnetic phase only; thermal phase has M = 0 (omega = {omega}, omega_c = {omega_c})")]
    OutsideFerromagneticPhase { omega: f64, omega_c: f64 },

    #[error("closed form diverges: {0}")]
    Divergence(String),

    #[error("all {rows} sweep rows failed; first error: {first}")]
    SweepFailed { rows: usize, first: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    /// Whether the error originates in a numerical solve rather than input validation.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::DegenerateSteadyState { .. }
                | Error::SingularMatrix { .. }
                | Error::NotPositive { .. }
                | Error::StepUnderflow { .. }
                | Error::TraceDrift { .. }
                | Error::StepTooLarge { .. }
                | Error::SupportMismatch { .. }
                | Error::VanishingMeanSpin { .. }
                | Error::Divergence(_)
                | Error::SweepFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
