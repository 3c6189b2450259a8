//! Closed-form large-N results: Holstein-Primakoff expansion around the
//! mean-field spin, the Gaussian steady state of the fluctuation mode, and
//! the resulting signals, estimation bounds and Fisher information.
//!
//! Everything here is valid only in the ferromagnetic phase 0 ≤ Ω < Ω_c.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Below this magnetization the expansion is treated as divergent.
const DIVERGENCE_M: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HPCoefficients {
    pub beta: Complex64,
    pub m: f64,
    pub k: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    pub gamma_minus: f64,
    pub gamma_plus: f64,
    pub eta: f64,
    pub big_gamma_minus: f64,
    pub big_gamma_plus: f64,
    /// Γ·sin(2θ)/2, the mixed decay coefficient.
    pub cross: f64,
    pub omega: f64,
    pub omega_c: f64,
}

impl HPCoefficients {
    /// (√Γ_− + √Γ_+)².
    pub fn rate_sum_sq(&self) -> f64 {
        let c = self.big_gamma_minus.sqrt() + self.big_gamma_plus.sqrt();
        c * c
    }
}

/// Mean-field magnetization M = √(1 − (Ω/Ω_c)²), or 0 outside the
/// ferromagnetic phase.
pub fn magnetization(params: &ModelParams) -> f64 {
    let oc = params.omega_c();
    if oc > 0.0 && params.omega.abs() < oc {
        let x = params.omega / oc;
        (1.0 - x * x).sqrt()
    } else {
        0.0
    }
}

fn check_domain(params: &ModelParams) -> Result<()> {
    params.validate()?;
    let oc = params.omega_c();
    if oc.abs() <= 1e-12 * params.gamma {
        return Err(Error::InvalidParameter(
            "theta = pi/4 gives omega_c = 0; the mean-field expansion does not apply".into(),
        ));
    }
    if params.omega < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mean-field results need omega >= 0, got {}",
            params.omega
        )));
    }
    if !(params.omega < oc) {
        return Err(Error::OutsideFerromagneticPhase {
            omega: params.omega,
            omega_c: oc,
        });
    }
    Ok(())
}

pub fn hp_coefficients(params: &ModelParams) -> Result<HPCoefficients> {
    check_domain(params)?;
    let omega_c = params.omega_c();
    let m = magnetization(params);
    let beta = Complex64::new(0.0, -(1.0 - m).sqrt());
    let b2 = beta.norm_sqr();
    let k = 2.0 - b2;
    let sk = k.sqrt();
    let a_coef = (2.0 * k - b2) / (2.0 * sk);
    let b_coef = (-(beta * beta) / (2.0 * sk)).re;
    let (s, c) = params.theta.sin_cos();
    let g = params.gamma;
    let big_gamma_minus = g * c * c;
    let big_gamma_plus = g * s * s;
    let cross = g * (2.0 * params.theta).sin() / 2.0;
    let (a, b) = (a_coef, b_coef);
    let gamma_minus = big_gamma_minus * a * a + big_gamma_plus * b * b + 2.0 * cross * a * b;
    let gamma_plus = big_gamma_plus * a * a + big_gamma_minus * b * b + 2.0 * cross * a * b;
    let eta = a * b * (big_gamma_minus + big_gamma_plus) + cross * (a * a + b * b);
    Ok(HPCoefficients {
        beta,
        m,
        k,
        a_coef,
        b_coef,
        gamma_minus,
        gamma_plus,
        eta,
        big_gamma_minus,
        big_gamma_plus,
        cross,
        omega: params.omega,
        omega_c,
    })
}

/// Zero-mean Gaussian state of the fluctuation mode, quadratures
/// q = b + b†, p = −i(b − b†) (vacuum Σ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSteadyState {
    pub sigma11: f64,
    pub sigma22: f64,
    pub sigma12: f64,
    pub r: f64,
    /// Squeezing angle φ + δ.
    pub angle: f64,
    pub alpha: f64,
    pub n_th: f64,
    pub purity: f64,
}

impl GaussianSteadyState {
    pub fn det(&self) -> f64 {
        self.sigma11 * self.sigma22 - self.sigma12 * self.sigma12
    }
}

pub fn gaussian_steady_state(coeffs: &HPCoefficients) -> Result<GaussianSteadyState> {
    let gap = coeffs.gamma_minus - coeffs.gamma_plus;
    if !(gap > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "unstable fluctuation mode: gamma_minus - gamma_plus = {gap}"
        )));
    }
    if coeffs.m < DIVERGENCE_M {
        return Err(Error::Divergence(format!(
            "squeezing parameter diverges at the critical point (M = {:e})",
            coeffs.m
        )));
    }
    let total = coeffs.gamma_minus + coeffs.gamma_plus;
    let sigma11 = (total - 2.0 * coeffs.eta) / gap;
    let sigma22 = (total + 2.0 * coeffs.eta) / gap;
    let sigma12 = 0.0;
    // the antisqueezed quadrature fixes the reflection ambiguity of (r, angle)
    let (r, angle) = if sigma22 >= sigma11 {
        (0.5 * sigma22.ln(), std::f64::consts::FRAC_PI_2)
    } else {
        (0.5 * sigma11.ln(), 0.0)
    };
    let det = sigma11 * sigma22 - sigma12 * sigma12;
    let purity = det.powf(-0.5);
    let n_th = (1.0 / purity - 1.0).max(0.0) / 2.0;
    Ok(GaussianSteadyState {
        sigma11,
        sigma22,
        sigma12,
        r,
        angle,
        alpha: 0.0,
        n_th,
        purity,
    })
}

/// Squeezing parameter from its direct closed form.
pub fn squeezing_parameter(coeffs: &HPCoefficients) -> Result<f64> {
    if coeffs.m < DIVERGENCE_M {
        return Err(Error::Divergence("squeezing parameter diverges as M -> 0".into()));
    }
    let m = coeffs.m;
    Ok(0.5 * ((1.0 + m) / (2.0 * coeffs.omega_c * m) * coeffs.rate_sum_sq()).ln())
}

/// Normalized spin moments s = S/S to leading order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub var_sy: f64,
    pub var_sz: f64,
}

pub fn predict_signals(coeffs: &HPCoefficients, n_spins: usize) -> Result<Signals> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter("n_spins must be >= 1".into()));
    }
    if coeffs.m < DIVERGENCE_M {
        return Err(Error::Divergence("variances diverge as M -> 0".into()));
    }
    let eps2 = 2.0 / n_spins as f64;
    let m = coeffs.m;
    let c2 = coeffs.rate_sum_sq();
    Ok(Signals {
        sx: 0.0,
        sy: coeffs.omega / coeffs.omega_c,
        sz: -m,
        var_sz: eps2 * (1.0 - m * m) / (2.0 * coeffs.omega_c * m) * c2,
        var_sy: eps2 * m / (2.0 * coeffs.omega_c) * c2,
    })
}

/// δΩ from measuring s_z.
pub fn bound_omega(params: &ModelParams) -> Result<f64> {
    let coeffs = hp_coefficients(params)?;
    let oc = coeffs.omega_c;
    let n = params.n_spins as f64;
    Ok((oc * oc - params.omega * params.omega).powf(0.25)
        * (coeffs.big_gamma_minus.sqrt() + coeffs.big_gamma_plus.sqrt())
        / n.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBound {
    pub bound: f64,
    /// Angle at which the drive sits exactly at the critical point.
    pub theta_c: Option<f64>,
}

/// Optimal angle ½·acos(Ω/Γ); defined for |Ω| ≤ Γ.
pub fn critical_theta(omega: f64, gamma: f64) -> Option<f64> {
    let x = omega / gamma;
    (x.abs() <= 1.0).then(|| 0.5 * x.acos())
}

/// δθ from measuring s_z.
pub fn bound_theta(params: &ModelParams) -> Result<ThetaBound> {
    let coeffs = hp_coefficients(params)?;
    if params.omega == 0.0 {
        return Err(Error::InvalidParameter(
            "theta bound needs omega != 0 (the signal does not depend on theta)".into(),
        ));
    }
    let t = (2.0 * params.theta).tan();
    if t.abs() < 1e-15 {
        return Err(Error::InvalidParameter(
            "theta bound needs tan(2 theta) != 0".into(),
        ));
    }
    let oc = coeffs.omega_c;
    let n = params.n_spins as f64;
    let bound = (oc * oc - params.omega * params.omega).powf(0.25)
        * (coeffs.big_gamma_minus.sqrt() + coeffs.big_gamma_plus.sqrt())
        / (2.0 * n.sqrt() * params.omega * t);
    Ok(ThetaBound {
        bound,
        theta_c: critical_theta(params.omega, params.gamma),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticQfi {
    pub qfi: f64,
    pub chi_squared: f64,
}

/// Pure-Gaussian QFI for the optimal generator and χ² = N/F_Q.
pub fn analytic_qfi_chi(params: &ModelParams) -> Result<AnalyticQfi> {
    let coeffs = hp_coefficients(params)?;
    if coeffs.m < DIVERGENCE_M {
        return Err(Error::Divergence("QFI diverges as M -> 0".into()));
    }
    let denom = coeffs.omega_c * coeffs.m;
    let c2 = coeffs.rate_sum_sq();
    Ok(AnalyticQfi {
        qfi: params.n_spins as f64 * c2 / denom,
        chi_squared: denom / c2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExponents {
    /// Product of the correlation-length exponent and dimension.
    pub d_nu: f64,
    /// Exponent of |Ω_c − Ω| in the off-critical bound.
    pub off_critical_bound: f64,
    /// Exponent of N in F_Q at Ω = Ω_c.
    pub critical_qfi: f64,
    /// Exponent of N in χ² at Ω = Ω_c.
    pub critical_chi_squared: f64,
}

pub fn scaling_exponents() -> ScalingExponents {
    let d_nu = 1.5;
    ScalingExponents {
        d_nu,
        off_critical_bound: 1.0 - d_nu / 2.0,
        critical_qfi: 2.0 / d_nu,
        critical_chi_squared: 1.0 - 2.0 / d_nu,
    }
}
