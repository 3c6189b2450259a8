use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical knobs of the driven ensemble.
///
/// `omega` and `gamma` share the same frequency unit. The critical coupling
/// and spin length are always recomputed from the stored fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_spins: usize,
    pub omega: f64,
    pub gamma: f64,
    pub theta: f64,
}

impl ModelParams {
    pub fn new(n_spins: usize, omega: f64, gamma: f64, theta: f64) -> Result<Self> {
        let p = Self {
            n_spins,
            omega,
            gamma,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 1 {
            return Err(Error::InvalidParameter("n_spins must be >= 1".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !self.omega.is_finite() || !self.theta.is_finite() {
            return Err(Error::InvalidParameter(
                "omega and theta must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Collective spin length S = N/2.
    pub fn s(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    /// Critical coupling Γ·cos(2θ).
    pub fn omega_c(&self) -> f64 {
        self.gamma * (2.0 * self.theta).cos()
    }

    pub fn dim(&self) -> usize {
        self.n_spins + 1
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self { omega, ..*self }
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..*self }
    }

    pub fn with_n(&self, n_spins: usize) -> Self {
        Self { n_spins, ..*self }
    }

    /// Same physics expressed in units of Γ (Γ = 1).
    pub fn normalized(&self) -> Self {
        Self {
            omega: self.omega / self.gamma,
            gamma: 1.0,
            ..*self
        }
    }

    pub fn get(&self, which: Parameter) -> f64 {
        match which {
            Parameter::Omega => self.omega,
            Parameter::Theta => self.theta,
        }
    }

    pub fn with(&self, which: Parameter, value: f64) -> Self {
        match which {
            Parameter::Omega => self.with_omega(value),
            Parameter::Theta => self.with_theta(value),
        }
    }
}

/// Parameter being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Omega,
    Theta,
}

impl Parameter {
    pub fn name(&self) -> &'static str {
        match self {
            Parameter::Omega => "omega",
            Parameter::Theta => "theta",
        }
    }
}

impl std::str::FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "omega" => Ok(Parameter::Omega),
            "theta" => Ok(Parameter::Theta),
            other => Err(Error::InvalidParameter(format!(
                "unknown parameter '{other}' (expected omega|theta)"
            ))),
        }
    }
}
