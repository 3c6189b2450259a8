//! Estimation-theoretic quantities: error propagation, quantum Fisher
//! information for steady-state encoding and for a unitary perturbation of
//! the steady state, the symmetric logarithmic derivative, and the χ² / ξ²
//! entanglement witnesses.

use nalgebra::{Matrix2, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::{
    build_generator, liouvillian_spectrum, solve_steady_state, SolverConfig, SpectralState,
    SpectrumConfig, SteadyState,
};
use crate::params::{ModelParams, Parameter};
use crate::spin::{build_operators, check_hermitian, covariance, trace_product, CMatrix, SpinOperatorSet};

/// Default pair filter: terms with p_n + p_m at or below this are dropped.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

/// Relative change allowed between step h and h/2.
pub const RICHARDSON_TOL: f64 = 0.01;

/// A one-parameter family of states ρ(λ).
pub trait StateFamily: Sync {
    fn state_at(&self, lambda: f64) -> Result<SpectralState>;
}

impl<F> StateFamily for F
where
    F: Fn(f64) -> Result<SpectralState> + Sync,
{
    fn state_at(&self, lambda: f64) -> Result<SpectralState> {
        self(lambda)
    }
}

/// Steady states of the master equation as a function of Ω or θ.
#[derive(Debug, Clone, Copy)]
pub struct SteadyFamily {
    pub base: ModelParams,
    pub which: Parameter,
    pub solver: SolverConfig,
}

impl SteadyFamily {
    pub fn new(base: ModelParams, which: Parameter, solver: SolverConfig) -> Self {
        Self {
            base,
            which,
            solver,
        }
    }

    pub fn steady_at(&self, lambda: f64) -> Result<SteadyState> {
        let p = self.base.with(self.which, lambda);
        let gen = build_generator(&p)?;
        solve_steady_state(&gen, &self.solver)
    }
}

impl StateFamily for SteadyFamily {
    fn state_at(&self, lambda: f64) -> Result<SpectralState> {
        self.steady_at(lambda).map(|s| s.spectral)
    }
}

/// Finite-difference step for ∂_λ of steady-state quantities.
///
/// Base value 1e-4·max(|λ|, Ω_c/Γ) (for θ the critical coupling enters in
/// units of Γ). On the ferromagnetic side the step is capped at 5% of the
/// distance to the critical point so the stencil never straddles it.
pub fn default_step(params: &ModelParams, which: Parameter) -> f64 {
    let lambda = params.get(which);
    let omega_c = params.omega_c();
    let (scale, distance) = match which {
        Parameter::Omega => (lambda.abs().max(omega_c.abs()), omega_c - params.omega),
        Parameter::Theta => {
            let ratio = params.omega / params.gamma;
            let distance = if ratio.abs() <= 1.0 {
                0.5 * ratio.abs().acos() - params.theta
            } else {
                f64::INFINITY
            };
            (lambda.abs().max(omega_c.abs() / params.gamma), distance)
        }
    };
    let mut h = 1e-4 * scale;
    if h == 0.0 {
        h = 1e-6;
    }
    if distance > 0.0 && distance.is_finite() {
        h = h.min(0.05 * distance);
    }
    h
}

/// Error-propagation bound √Var(A) / |∂_λ⟨A⟩|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatedError {
    pub bound: f64,
    pub mean: f64,
    pub variance: f64,
    pub derivative: f64,
    /// Set when |∂_λ⟨A⟩| < 1e-12; `bound` is then +∞.
    pub flat_signal: bool,
}

const FLAT_SIGNAL: f64 = 1e-12;

fn mean_of(op: &CMatrix, s: &SpectralState) -> f64 {
    trace_product(op, &s.rho).re
}

fn variance_of(op: &CMatrix, s: &SpectralState) -> f64 {
    let m = mean_of(op, s);
    let op2 = op * op;
    (trace_product(&op2, &s.rho).re - m * m).max(0.0)
}

/// Bound from already-computed states at λ − h, λ, λ + h.
pub fn error_propagation_from_states(
    op: &CMatrix,
    minus: &SpectralState,
    center: &SpectralState,
    plus: &SpectralState,
    step: f64,
) -> Result<PropagatedError> {
    check_hermitian(op, 1e-10)?;
    let derivative = (mean_of(op, plus) - mean_of(op, minus)) / (2.0 * step);
    let variance = variance_of(op, center);
    let mean = mean_of(op, center);
    let flat_signal = derivative.abs() < FLAT_SIGNAL;
    let bound = if flat_signal {
        f64::INFINITY
    } else {
        variance.sqrt() / derivative.abs()
    };
    Ok(PropagatedError {
        bound,
        mean,
        variance,
        derivative,
        flat_signal,
    })
}

pub fn error_propagation<F: StateFamily + ?Sized>(
    op: &CMatrix,
    family: &F,
    lambda: f64,
    step: f64,
) -> Result<PropagatedError> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("derivative step must be > 0".into()));
    }
    let [minus, center, plus] = solve_stencil(family, lambda, step)?;
    error_propagation_from_states(op, &minus, &center, &plus, step)
}

fn solve_stencil<F: StateFamily + ?Sized>(
    family: &F,
    lambda: f64,
    step: f64,
) -> Result<[SpectralState; 3]> {
    let points = [lambda - step, lambda, lambda + step];
    let mut states: Vec<SpectralState> = points
        .par_iter()
        .map(|&x| family.state_at(x))
        .collect::<Result<Vec<_>>>()?;
    let plus = states.pop().unwrap();
    let center = states.pop().unwrap();
    let minus = states.pop().unwrap();
    Ok([minus, center, plus])
}

/// ⟨ψ_n| A |ψ_m⟩ for all n, m.
fn in_eigenbasis(state: &SpectralState, a: &CMatrix) -> CMatrix {
    state.vectors.adjoint() * a * &state.vectors
}

/// QFI of ρ(λ) from its spectral decomposition and ∂_λρ, together with
/// the relative weight of ∂_λρ on discarded pairs.
pub fn qfi_from_derivative(state: &SpectralState, drho: &CMatrix, eig_floor: f64) -> (f64, f64) {
    let d = in_eigenbasis(state, drho);
    let p = &state.probabilities;
    let n = p.len();
    let mut qfi = 0.0;
    let mut dropped = 0.0;
    let mut total = 0.0;
    for a in 0..n {
        for b in 0..n {
            let w = d[(a, b)].norm_sqr();
            total += w;
            let s = p[a] + p[b];
            if s > eig_floor {
                qfi += w / s;
            } else {
                dropped += w;
            }
        }
    }
    let leakage = if total > 0.0 { (dropped / total).sqrt() } else { 0.0 };
    (2.0 * qfi, leakage)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiEstimate {
    pub qfi: f64,
    pub step: f64,
    /// Relative change |F(h) − F(h/2)| / F(h/2), when checked.
    pub richardson_change: Option<f64>,
    pub leakage: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QfiOptions {
    pub eig_floor: f64,
    pub richardson: bool,
}

impl Default for QfiOptions {
    fn default() -> Self {
        Self {
            eig_floor: DEFAULT_EIG_FLOOR,
            richardson: true,
        }
    }
}

/// QFI for information encoded in the steady state itself, with ∂_λρ from a
/// central difference.
pub fn qfi_steady<F: StateFamily + ?Sized>(
    family: &F,
    lambda: f64,
    step: f64,
    options: &QfiOptions,
) -> Result<QfiEstimate> {
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("derivative step must be > 0".into()));
    }
    if !(options.eig_floor >= 0.0) {
        return Err(Error::InvalidParameter("eig_floor must be >= 0".into()));
    }
    let [minus, center, plus] = solve_stencil(family, lambda, step)?;
    let (qfi, leakage) = qfi_from_stencil(&minus, &center, &plus, step, options.eig_floor);
    let mut estimate = QfiEstimate {
        qfi,
        step,
        richardson_change: None,
        leakage,
    };
    if options.richardson {
        let half = 0.5 * step;
        let (m2, p2) = rayon::join(
            || family.state_at(lambda - half),
            || family.state_at(lambda + half),
        );
        let (fine, _) = qfi_from_stencil(&m2?, &center, &p2?, half, options.eig_floor);
        let change = (qfi - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
        estimate.richardson_change = Some(change);
        if change > RICHARDSON_TOL {
            return Err(Error::StepTooLarge {
                relative_change: change,
            });
        }
    }
    Ok(estimate)
}

pub fn central_difference(minus: &SpectralState, plus: &SpectralState, step: f64) -> CMatrix {
    (&plus.rho - &minus.rho) / Complex64::new(2.0 * step, 0.0)
}

fn qfi_from_stencil(
    minus: &SpectralState,
    center: &SpectralState,
    plus: &SpectralState,
    step: f64,
    eig_floor: f64,
) -> (f64, f64) {
    let drho = central_difference(minus, plus, step);
    qfi_from_derivative(center, &drho, eig_floor)
}

/// Symmetric logarithmic derivative L with 2∂ρ = Lρ + ρL on the retained support.
#[derive(Debug, Clone)]
pub struct Sld {
    pub operator: CMatrix,
    pub leakage: f64,
}

const SLD_SUPPORT_TOL: f64 = 1e-8;

pub fn sld(state: &SpectralState, drho: &CMatrix, eig_floor: f64) -> Result<Sld> {
    let d = in_eigenbasis(state, drho);
    let p = &state.probabilities;
    let n = p.len();
    let mut l = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let s = p[a] + p[b];
            if s > eig_floor {
                l[(a, b)] = d[(a, b)] * (2.0 / s);
            }
        }
    }
    let (_, leakage) = qfi_from_derivative(state, drho, eig_floor);
    if leakage > SLD_SUPPORT_TOL {
        return Err(Error::SupportMismatch { leakage });
    }
    let op = &state.vectors * l * state.vectors.adjoint();
    let operator = (&op + op.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(Sld { operator, leakage })
}

/// QFI of e^{−iλG} ρ e^{iλG}; independent of λ.
pub fn qfi_perturbed(state: &SpectralState, generator: &CMatrix, eig_floor: f64) -> Result<f64> {
    check_hermitian(generator, 1e-10)?;
    let g = in_eigenbasis(state, generator);
    let p = &state.probabilities;
    let n = p.len();
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            let s = p[a] + p[b];
            if s > eig_floor {
                let diff = p[a] - p[b];
                acc += diff * diff / s * g[(a, b)].norm_sqr();
            }
        }
    }
    Ok(2.0 * acc)
}

pub fn chi_squared(qfi: f64, n_spins: usize) -> Result<f64> {
    if !(qfi > 0.0) || !qfi.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "chi^2 needs a positive finite QFI, got {qfi}"
        )));
    }
    Ok(n_spins as f64 / qfi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSqueezing {
    pub xi_squared: f64,
    /// Unit vector along ⟨S⟩.
    pub mean_direction: [f64; 3],
    /// Perpendicular direction minimizing the variance.
    pub squeezed_direction: [f64; 3],
    pub mean_spin: f64,
    pub min_variance: f64,
}

const VANISHING_SPIN: f64 = 1e-12;

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Wineland squeezing ξ² = N·min Var(S_⊥) / |⟨S⟩|², minimized exactly over
/// the plane perpendicular to the mean spin.
pub fn xi_squared(state: &SpectralState, ops: &SpinOperatorSet, n_spins: usize) -> Result<SpinSqueezing> {
    let rho = &state.rho;
    let mean = [
        trace_product(&ops.sx, rho).re,
        trace_product(&ops.sy, rho).re,
        trace_product(&ops.sz, rho).re,
    ];
    let norm = dot(mean, mean).sqrt();
    if norm < VANISHING_SPIN {
        return Err(Error::VanishingMeanSpin { norm });
    }
    let n_mean = normalize(mean);
    // any vector not parallel to n_mean seeds the perpendicular basis
    let seed = if n_mean[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = normalize(cross(n_mean, seed));
    let e2 = cross(n_mean, e1);
    let s1 = ops.along(e1)?;
    let s2 = ops.along(e2)?;
    let c11 = covariance(&s1, &s1, rho);
    let c22 = covariance(&s2, &s2, rho);
    let c12 = covariance(&s1, &s2, rho);
    let eig = SymmetricEigen::new(Matrix2::new(c11, c12, c12, c22));
    let k = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let min_variance = eig.eigenvalues[k].max(0.0);
    let v = eig.eigenvectors.column(k);
    let squeezed_direction = normalize([
        v[0] * e1[0] + v[1] * e2[0],
        v[0] * e1[1] + v[1] * e2[1],
        v[0] * e1[2] + v[1] * e2[2],
    ]);
    Ok(SpinSqueezing {
        xi_squared: n_spins as f64 * min_variance / (norm * norm),
        mean_direction: n_mean,
        squeezed_direction,
        mean_spin: norm,
        min_variance,
    })
}

/// Generator for the perturbed-state scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GeneratorSpec {
    Sz,
    /// M·S_y + √(1−M²)·S_z with the mean-field magnetization (M = 0 in the
    /// thermal phase).
    Optimal,
    Sx,
    Custom([f64; 3]),
}

impl GeneratorSpec {
    pub fn direction(&self, params: &ModelParams) -> [f64; 3] {
        match *self {
            GeneratorSpec::Sz => [0.0, 0.0, 1.0],
            GeneratorSpec::Sx => [1.0, 0.0, 0.0],
            GeneratorSpec::Optimal => {
                let m = crate::meanfield::magnetization(params);
                [0.0, m, (1.0 - m * m).max(0.0).sqrt()]
            }
            GeneratorSpec::Custom(n) => n,
        }
    }

    pub fn describe(&self, params: &ModelParams) -> String {
        let n = self.direction(params);
        let name = match self {
            GeneratorSpec::Sz => "sz",
            GeneratorSpec::Sx => "x",
            GeneratorSpec::Optimal => "optimal",
            GeneratorSpec::Custom(_) => "custom",
        };
        format!("{name}({:.6},{:.6},{:.6})", n[0], n[1], n[2])
    }
}

impl std::str::FromStr for GeneratorSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sz" | "z" => Ok(Self::Sz),
            "x" | "sx" => Ok(Self::Sx),
            "optimal" => Ok(Self::Optimal),
            other => {
                let body = other.strip_prefix("custom").unwrap_or(other).trim();
                let parts: Vec<f64> = body
                    .trim_matches(|c| c == ':' || c == '=' || c == '(' || c == ')')
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::InvalidParameter(format!(
                            "unknown generator '{other}' (expected sz|optimal|x|custom nx,ny,nz)"
                        ))
                    })?;
                if parts.len() != 3 {
                    return Err(Error::InvalidParameter(format!(
                        "custom generator needs three components, got '{other}'"
                    )));
                }
                let n = (parts[0] * parts[0] + parts[1] * parts[1] + parts[2] * parts[2]).sqrt();
                if !(n > 0.0) {
                    return Err(Error::InvalidParameter("zero generator direction".into()));
                }
                Ok(Self::Custom([parts[0] / n, parts[1] / n, parts[2] / n]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstimationOptions {
    pub which: Parameter,
    /// Overrides the default finite-difference step.
    pub step: Option<f64>,
    pub eig_floor: f64,
    pub richardson: bool,
    pub generator: GeneratorSpec,
    pub solver: SolverConfig,
    pub with_gap: bool,
    pub with_qfi_steady: bool,
    pub with_bounds: bool,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            which: Parameter::Omega,
            step: None,
            eig_floor: DEFAULT_EIG_FLOOR,
            richardson: true,
            generator: GeneratorSpec::Optimal,
            solver: SolverConfig::default(),
            with_gap: true,
            with_qfi_steady: true,
            with_bounds: true,
        }
    }
}

/// One parameter point. Spin moments are normalized by S.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub lambda_name: Parameter,
    pub lambda_value: f64,
    pub sx_mean: f64,
    pub sy_mean: f64,
    pub sz_mean: f64,
    pub sy_var: f64,
    pub sz_var: f64,
    pub bound_sy: Option<PropagatedError>,
    pub bound_sz: Option<PropagatedError>,
    pub qfi_steady: Option<QfiEstimate>,
    pub qfi_perturbed: f64,
    pub generator: String,
    pub chi_squared: Option<f64>,
    pub xi_squared: Option<SpinSqueezing>,
    pub gap: Option<f64>,
    pub residual: f64,
    pub purity: f64,
    pub method: String,
}

/// Full report for one parameter point.
pub fn estimation_report(params: &ModelParams, options: &EstimationOptions) -> Result<EstimationReport> {
    params.validate()?;
    let which = options.which;
    let lambda = params.get(which);
    let family = SteadyFamily::new(*params, which, options.solver);
    let gen = build_generator(params)?;
    let center = solve_steady_state(&gen, &options.solver)?;
    let ops = build_operators(params)?;
    let s = params.s();
    let state = &center.spectral;
    let sx_mean = mean_of(&ops.sx, state) / s;
    let sy_mean = mean_of(&ops.sy, state) / s;
    let sz_mean = mean_of(&ops.sz, state) / s;
    let sy_var = variance_of(&ops.sy, state) / (s * s);
    let sz_var = variance_of(&ops.sz, state) / (s * s);

    let step = options.step.unwrap_or_else(|| default_step(params, which));
    let (mut bound_sy, mut bound_sz, mut qfi_steady_est) = (None, None, None);
    if options.with_bounds || options.with_qfi_steady {
        let (minus, plus) = rayon::join(
            || family.state_at(lambda - step),
            || family.state_at(lambda + step),
        );
        let (minus, plus) = (minus?, plus?);
        if options.with_bounds {
            bound_sy = Some(error_propagation_from_states(&ops.sy, &minus, state, &plus, step)?);
            bound_sz = Some(error_propagation_from_states(&ops.sz, &minus, state, &plus, step)?);
        }
        if options.with_qfi_steady {
            let (qfi, leakage) = qfi_from_stencil(&minus, state, &plus, step, options.eig_floor);
            let mut est = QfiEstimate {
                qfi,
                step,
                richardson_change: None,
                leakage,
            };
            if options.richardson {
                let half = 0.5 * step;
                let (m2, p2) = rayon::join(
                    || family.state_at(lambda - half),
                    || family.state_at(lambda + half),
                );
                let (fine, _) = qfi_from_stencil(&m2?, state, &p2?, half, options.eig_floor);
                let change = (qfi - fine).abs() / fine.abs().max(f64::MIN_POSITIVE);
                est.richardson_change = Some(change);
                if change > RICHARDSON_TOL {
                    return Err(Error::StepTooLarge {
                        relative_change: change,
                    });
                }
            }
            qfi_steady_est = Some(est);
        }
    }

    let direction = options.generator.direction(params);
    let g = ops.along(direction)?;
    let qfi_pert = qfi_perturbed(state, &g, options.eig_floor)?;
    let chi = chi_squared(qfi_pert, params.n_spins).ok();
    let xi = xi_squared(state, &ops, params.n_spins).ok();
    let gap = if options.with_gap {
        Some(liouvillian_spectrum(&gen, 2, &SpectrumConfig::default())?.gap)
    } else {
        None
    };
    Ok(EstimationReport {
        lambda_name: which,
        lambda_value: lambda,
        sx_mean,
        sy_mean,
        sz_mean,
        sy_var,
        sz_var,
        bound_sy,
        bound_sz,
        qfi_steady: qfi_steady_est,
        qfi_perturbed: qfi_pert,
        generator: options.generator.describe(params),
        chi_squared: chi,
        xi_squared: xi,
        gap,
        residual: center.residual,
        purity: center.purity,
        method: center.method.tag().to_string(),
    })
}
