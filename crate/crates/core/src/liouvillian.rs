//! Lindblad generator for the driven ensemble with squeezed collective decay,
//!
//!   dρ/dt = −iΩ[S_x, ρ] + (Γ/N)(2 S_θ ρ S_θ† − {S_θ†S_θ, ρ}),
//!
//! together with steady-state solvers, the low-lying Liouvillian spectrum and
//! adaptive time evolution.
//!
//! Density matrices are vectorized by column stacking: `vec(ρ)[i + j·d] = ρ[i, j]`,
//! which is the native storage order of `nalgebra::DMatrix`.

use nalgebra::{DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::sparse::{BandedLu, CsrMatrix};
use crate::spin::{build_operators, CMatrix, SpinOperatorSet};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub params: ModelParams,
    pub ops: SpinOperatorSet,
    /// Γ/N prefactor of the dissipator.
    pub collapse_rate: f64,
    superop: CsrMatrix,
}

fn nonzeros(m: &CMatrix) -> Vec<(usize, usize, Complex64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != ZERO {
                out.push((i, j, v));
            }
        }
    }
    out
}

pub fn build_generator(params: &ModelParams) -> Result<LindbladGenerator> {
    let ops = build_operators(params)?;
    let d = ops.dimension;
    let rate = params.gamma / params.n_spins as f64;
    let minus_i_omega = Complex64::new(0.0, -params.omega);
    let jump = &ops.s_theta;
    let k_op = jump.adjoint() * jump;
    let h_nz = nonzeros(&ops.sx);
    let j_nz = nonzeros(jump);
    let k_nz = nonzeros(&k_op);
    let vec_idx = |i: usize, j: usize| i + j * d;

    let mut t = Vec::with_capacity(d * d * 16);
    for b in 0..d {
        // −iΩ H ρ and −κ K ρ act on the row index only
        for &(a, c, h) in &h_nz {
            t.push((vec_idx(a, b), vec_idx(c, b), minus_i_omega * h));
        }
        for &(a, c, kv) in &k_nz {
            t.push((vec_idx(a, b), vec_idx(c, b), -rate * kv));
        }
    }
    for a in 0..d {
        // +iΩ ρ H and −κ ρ K act on the column index only
        for &(c, b, h) in &h_nz {
            t.push((vec_idx(a, b), vec_idx(a, c), -minus_i_omega * h));
        }
        for &(c, b, kv) in &k_nz {
            t.push((vec_idx(a, b), vec_idx(a, c), -rate * kv));
        }
    }
    // 2κ J ρ J†: (a,b) <- J[a,c] ρ[c,e] conj(J[b,e])
    for &(a, c, ja) in &j_nz {
        for &(b, e, jb) in &j_nz {
            t.push((vec_idx(a, b), vec_idx(c, e), 2.0 * rate * ja * jb.conj()));
        }
    }
    let superop = CsrMatrix::from_triplets(d * d, t);
    Ok(LindbladGenerator {
        params: *params,
        ops,
        collapse_rate: rate,
        superop,
    })
}

impl LindbladGenerator {
    pub fn dim(&self) -> usize {
        self.ops.dimension
    }

    pub fn superoperator(&self) -> &CsrMatrix {
        &self.superop
    }

    /// L(ρ) via the vectorized superoperator.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim();
        let out = self.superop.apply(rho.as_slice());
        CMatrix::from_vec(d, d, out)
    }

    /// L(ρ) from dense matrix products; reference path for tests.
    pub fn apply_dense(&self, rho: &CMatrix) -> CMatrix {
        let h = &self.ops.sx;
        let j = &self.ops.s_theta;
        let jd = j.adjoint();
        let k = &jd * j;
        let coherent = (h * rho - rho * h) * Complex64::new(0.0, -self.params.omega);
        let dissip = (j * rho * &jd) * Complex64::new(2.0, 0.0) - &k * rho - rho * &k;
        coherent + dissip * Complex64::new(self.collapse_rate, 0.0)
    }

    pub fn residual(&self, rho: &CMatrix) -> f64 {
        self.apply(rho).norm()
    }
}

/// Eigendecomposition of a density matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SpectralState {
    pub rho: CMatrix,
    pub probabilities: Vec<f64>,
    /// Column `n` is the eigenvector for `probabilities[n]`.
    pub vectors: CMatrix,
}

impl SpectralState {
    /// Hermitize, trace-normalize and diagonalize `rho`. Eigenvalues in
    /// `[-clamp_tol, 0)` are set to zero; anything more negative is an error.
    pub fn from_density(rho: &CMatrix, clamp_tol: f64) -> Result<Self> {
        let d = rho.nrows();
        if rho.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: rho.ncols(),
            });
        }
        let mut herm = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        let trace = herm.trace().re;
        if !(trace.abs() > 0.0) || !trace.is_finite() {
            return Err(Error::BadTrace { trace });
        }
        herm /= Complex64::new(trace, 0.0);
        let eig = SymmetricEigen::new(herm);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -clamp_tol {
            return Err(Error::NotPositive { value: min });
        }
        let mut probabilities: Vec<f64> = order
            .iter()
            .map(|&i| eig.eigenvalues[i].max(0.0))
            .collect();
        let total: f64 = probabilities.iter().sum();
        for p in &mut probabilities {
            *p /= total;
        }
        let mut vectors = CMatrix::zeros(d, d);
        for (col, &i) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(i));
        }
        let rho = recompose(&probabilities, &vectors);
        Ok(Self {
            rho,
            probabilities,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn purity(&self) -> f64 {
        self.probabilities.iter().map(|p| p * p).sum()
    }
}

fn recompose(p: &[f64], vectors: &CMatrix) -> CMatrix {
    let d = vectors.nrows();
    let mut scaled = vectors.clone();
    for (n, &pn) in p.iter().enumerate() {
        scaled.column_mut(n).scale_mut(pn);
    }
    let rho = &scaled * vectors.adjoint();
    debug_assert_eq!(rho.nrows(), d);
    (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    NullSpace,
    InverseIteration,
    TimeEvolution,
}

impl SolveMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            SolveMethod::NullSpace => "null-space",
            SolveMethod::InverseIteration => "inverse-iteration",
            SolveMethod::TimeEvolution => "time-evolution",
        }
    }
}

/// Solver selection; `Auto` tries inverse iteration, then the dense null
/// space when small enough, then time evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Auto,
    Null,
    Power,
    Evolve,
}

impl std::str::FromStr for SolverChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "null" => Ok(Self::Null),
            "power" => Ok(Self::Power),
            "evolve" => Ok(Self::Evolve),
            other => Err(Error::InvalidParameter(format!(
                "unknown solver '{other}' (expected auto|null|power|evolve)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub choice: SolverChoice,
    /// Shift σ = shift_factor·Γ for the shift-and-invert iteration.
    pub shift_factor: f64,
    /// Required ‖L(ρ)‖_F in units of Γ.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Largest (N+1)² handled by the dense null-space path.
    pub dense_cap: usize,
    /// Trace distance above which two independent solves signal a degenerate kernel.
    pub degeneracy_tol: f64,
    pub check_uniqueness: bool,
    /// Eigenvalues of ρ in [-clamp_tol, 0) are clamped to zero.
    pub clamp_tol: f64,
    pub evolve: EvolveConfig,
    /// Residual target (units of Γ) for the time-evolution path.
    pub evolve_residual_tol: f64,
    pub evolve_t_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            choice: SolverChoice::Auto,
            shift_factor: 1e-8,
            residual_tol: 1e-9,
            max_iterations: 30,
            dense_cap: 4096,
            degeneracy_tol: 1e-6,
            check_uniqueness: true,
            clamp_tol: 1e-9,
            evolve: EvolveConfig::default(),
            evolve_residual_tol: 5e-11,
            evolve_t_max: 1e5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub spectral: SpectralState,
    /// ‖L(ρ)‖_F of the final, clamped state.
    pub residual: f64,
    pub purity: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

impl SteadyState {
    pub fn rho(&self) -> &CMatrix {
        &self.spectral.rho
    }
}

pub fn solve_steady_state(gen: &LindbladGenerator, config: &SolverConfig) -> Result<SteadyState> {
    let d2 = gen.dim() * gen.dim();
    match config.choice {
        SolverChoice::Power => solve_inverse_iteration(gen, config),
        SolverChoice::Null => {
            if d2 > config.dense_cap {
                return Err(Error::InvalidParameter(format!(
                    "dense null space limited to (N+1)^2 <= {}, got {d2}",
                    config.dense_cap
                )));
            }
            solve_dense_null_space(gen, config)
        }
        SolverChoice::Evolve => solve_by_evolution(gen, config),
        SolverChoice::Auto => match solve_inverse_iteration(gen, config) {
            Ok(s) => Ok(s),
            Err(e @ Error::DegenerateSteadyState { .. }) => Err(e),
            Err(first) => {
                let fallback = if d2 <= config.dense_cap {
                    solve_dense_null_space(gen, config)
                } else {
                    Err(first)
                };
                match fallback {
                    Ok(s) => Ok(s),
                    Err(e @ Error::DegenerateSteadyState { .. }) => Err(e),
                    Err(_) => solve_by_evolution(gen, config),
                }
            }
        },
    }
}

fn finalize(
    gen: &LindbladGenerator,
    raw: CMatrix,
    method: SolveMethod,
    iterations: usize,
    config: &SolverConfig,
) -> Result<SteadyState> {
    let spectral = SpectralState::from_density(&raw, config.clamp_tol)?;
    let residual = gen.residual(&spectral.rho);
    if residual > config.residual_tol * gen.params.gamma {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }
    let purity = spectral.purity();
    Ok(SteadyState {
        spectral,
        residual,
        purity,
        method,
        iterations,
    })
}

fn vec_trace(v: &[Complex64], d: usize) -> Complex64 {
    (0..d).map(|i| v[i + i * d]).sum()
}

fn trace_normalized(v: &[Complex64], d: usize) -> CMatrix {
    let tr = vec_trace(v, d);
    CMatrix::from_iterator(d, d, v.iter().map(|z| z / tr))
}

/// Random full-rank density matrix ρ = AA†/Tr(AA†), reproducible from `seed`.
pub fn random_density(d: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

/// Trace distance ½‖a − b‖₁ between Hermitian matrices.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = a - b;
    let herm = (&diff + diff.adjoint()) * Complex64::new(0.5, 0.0);
    0.5 * SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

fn inverse_iterate(
    gen: &LindbladGenerator,
    lu: &BandedLu,
    start: &CMatrix,
    config: &SolverConfig,
) -> Result<(CMatrix, usize)> {
    let d = gen.dim();
    let mut x: Vec<Complex64> = start.as_slice().to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=config.max_iterations {
        lu.solve_in_place(&mut x);
        let tr = vec_trace(&x, d);
        if !(tr.norm() > 0.0) || !tr.norm().is_finite() {
            return Err(Error::NotConverged {
                iterations: it,
                residual,
            });
        }
        for z in x.iter_mut() {
            *z /= tr;
        }
        let rho = trace_normalized(&x, d);
        let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        residual = gen.residual(&herm);
        if it >= 2 && residual <= 0.1 * config.residual_tol * gen.params.gamma {
            return Ok((herm, it));
        }
    }
    let rho = trace_normalized(&x, gen.dim());
    let herm = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    if gen.residual(&herm) <= config.residual_tol * gen.params.gamma {
        return Ok((herm, config.max_iterations));
    }
    Err(Error::NotConverged {
        iterations: config.max_iterations,
        residual,
    })
}

fn solve_inverse_iteration(gen: &LindbladGenerator, config: &SolverConfig) -> Result<SteadyState> {
    let d = gen.dim();
    let shift = Complex64::new(config.shift_factor * gen.params.gamma, 0.0);
    let lu = BandedLu::factor(gen.superoperator(), shift)?;
    let mixed = CMatrix::identity(d, d) / Complex64::new(d as f64, 0.0);
    let (rho, iterations) = inverse_iterate(gen, &lu, &mixed, config)?;
    if config.check_uniqueness && d > 1 {
        let other_start = random_density(d, 0x5eed);
        let (other, _) = inverse_iterate(gen, &lu, &other_start, config)?;
        let distance = trace_distance(&rho, &other);
        if distance > config.degeneracy_tol {
            return Err(Error::DegenerateSteadyState { distance });
        }
    }
    finalize(gen, rho, SolveMethod::InverseIteration, iterations, config)
}

fn solve_dense_null_space(gen: &LindbladGenerator, config: &SolverConfig) -> Result<SteadyState> {
    let d = gen.dim();
    let dense = gen.superoperator().to_dense();
    let scale = dense.norm().max(gen.params.gamma);
    let svd = SVD::new(dense, false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    if order.len() > 1 {
        let second = svd.singular_values[order[1]];
        if second <= 1e-10 * scale {
            return Err(Error::DegenerateSteadyState { distance: f64::NAN });
        }
    }
    let row = v_t.row(order[0]);
    let v: Vec<Complex64> = row.iter().map(|z| z.conj()).collect();
    let rho = trace_normalized(&v, d);
    finalize(gen, rho, SolveMethod::NullSpace, 1, config)
}

fn solve_by_evolution(gen: &LindbladGenerator, config: &SolverConfig) -> Result<SteadyState> {
    let d = gen.dim();
    let start = CMatrix::identity(d, d) / Complex64::new(d as f64, 0.0);
    let (rho, steps) = evolve_to_steady(
        gen,
        &start,
        &config.evolve,
        config.evolve_residual_tol * gen.params.gamma,
        config.evolve_t_max,
    )?;
    finalize(gen, rho, SolveMethod::TimeEvolution, steps, config)
}

/// Leading Liouvillian eigenvalues, sorted by real part (descending).
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    /// −Re λ₂.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumConfig {
    pub dense_cap: usize,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub tol: f64,
    /// Shift (units of Γ) for the shift-and-invert Arnoldi path.
    pub shift_factor: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            dense_cap: 4096,
            krylov_dim: 40,
            max_restarts: 50,
            tol: 1e-10,
            shift_factor: 1e-3,
        }
    }
}

pub fn liouvillian_spectrum(
    gen: &LindbladGenerator,
    k: usize,
    config: &SpectrumConfig,
) -> Result<SpectrumReport> {
    if k < 2 {
        return Err(Error::InvalidParameter("spectrum needs k >= 2".into()));
    }
    let n = gen.dim() * gen.dim();
    let k = k.min(n);
    let mut eigenvalues = if n <= config.dense_cap {
        dense_eigenvalues(&gen.superoperator().to_dense())?
    } else {
        arnoldi_shift_invert(gen, k, config)?
    };
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re));
    eigenvalues.truncate(k);
    if eigenvalues.len() < 2 {
        return Err(Error::NotConverged {
            iterations: config.max_restarts,
            residual: f64::NAN,
        });
    }
    let gap = -eigenvalues[1].re;
    Ok(SpectrumReport { eigenvalues, gap })
}

fn dense_eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), 1e-15, 1000 * n.max(1)).ok_or(Error::NotConverged {
        iterations: 1000 * n,
        residual: f64::NAN,
    })?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().cloned().collect())
}

/// Arnoldi on (L − σ)⁻¹ with explicit restarts. Returns Ritz values mapped
/// back to L; these are the eigenvalues closest to σ.
fn arnoldi_shift_invert(
    gen: &LindbladGenerator,
    k: usize,
    config: &SpectrumConfig,
) -> Result<Vec<Complex64>> {
    let n = gen.dim() * gen.dim();
    let sigma = Complex64::new(config.shift_factor * gen.params.gamma, 0.0);
    let lu = BandedLu::factor(gen.superoperator(), sigma)?;
    let m = config.krylov_dim.max(2 * k + 2).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut start = DVector::<Complex64>::from_fn(n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut last = Vec::new();
    for _restart in 0..config.max_restarts {
        start /= Complex64::new(start.norm(), 0.0);
        let mut basis: Vec<DVector<Complex64>> = vec![start.clone()];
        let mut h = CMatrix::zeros(m + 1, m);
        let mut steps = m;
        for j in 0..m {
            let mut w = basis[j].clone();
            lu.solve_in_place(w.as_mut_slice());
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = q.dotc(&w);
                    h[(i, j)] += c;
                    w.axpy(-c, q, Complex64::new(1.0, 0.0));
                }
            }
            let beta = w.norm();
            h[(j + 1, j)] = Complex64::new(beta, 0.0);
            if beta < 1e-14 {
                steps = j + 1;
                break;
            }
            basis.push(w / Complex64::new(beta, 0.0));
        }
        let hm = h.view((0, 0), (steps, steps)).into_owned();
        let schur = Schur::try_new(hm.clone(), 1e-15, 10_000).ok_or(Error::NotConverged {
            iterations: 0,
            residual: f64::NAN,
        })?;
        let (q, t) = schur.unpack();
        let mu: Vec<Complex64> = t.diagonal().iter().cloned().collect();
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&a, &b| mu[b].norm().total_cmp(&mu[a].norm()));
        let wanted: Vec<usize> = order.iter().take(k).cloned().collect();
        let beta_last = h[(steps, steps - 1)].norm();
        let mut converged = true;
        let mut next = DVector::<Complex64>::zeros(n);
        for &idx in &wanted {
            let y = ritz_vector(&hm, mu[idx], &q, &t, idx);
            let res = beta_last * y[steps - 1].norm();
            if res > config.tol * mu[idx].norm() {
                converged = false;
            }
            for (i, b) in basis.iter().take(steps).enumerate() {
                next.axpy(y[i], b, Complex64::new(1.0, 0.0));
            }
        }
        last = wanted
            .iter()
            .map(|&i| sigma + Complex64::new(1.0, 0.0) / mu[i])
            .collect();
        if converged || steps < m {
            return Ok(last);
        }
        start = next;
    }
    if last.is_empty() {
        return Err(Error::NotConverged {
            iterations: config.max_restarts,
            residual: f64::NAN,
        });
    }
    Err(Error::NotConverged {
        iterations: config.max_restarts,
        residual: f64::NAN,
    })
}

/// Unit eigenvector of the Hessenberg matrix for Ritz value `mu`, obtained by
/// back substitution on the Schur form.
fn ritz_vector(
    _h: &CMatrix,
    mu: Complex64,
    q: &CMatrix,
    t: &CMatrix,
    idx: usize,
) -> DVector<Complex64> {
    let n = t.nrows();
    let mut z = DVector::<Complex64>::zeros(n);
    z[idx] = Complex64::new(1.0, 0.0);
    for i in (0..idx).rev() {
        let mut s = ZERO;
        for j in (i + 1)..=idx {
            s += t[(i, j)] * z[j];
        }
        let mut denom = t[(i, i)] - mu;
        if denom.norm() < 1e-14 {
            denom = Complex64::new(1e-14, 0.0);
        }
        z[i] = -s / denom;
    }
    let y = q * z;
    let norm = y.norm();
    y / Complex64::new(norm, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub rtol: f64,
    pub atol: f64,
    pub dt_initial: f64,
    pub dt_min: f64,
    pub max_steps: usize,
    pub trace_drift_tol: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            dt_initial: 1e-3,
            dt_min: 1e-14,
            max_steps: 5_000_000,
            trace_drift_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &CMatrix {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

// Dormand–Prince 5(4) tableau; the generator is autonomous so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Integrator<'a> {
    gen: &'a LindbladGenerator,
    cfg: EvolveConfig,
    y: Vec<Complex64>,
    t: f64,
    dt: f64,
    k: Vec<Vec<Complex64>>,
    stage: Vec<Complex64>,
    trace0: Complex64,
    steps: usize,
    dt_stable: f64,
}

impl<'a> Integrator<'a> {
    fn new(gen: &'a LindbladGenerator, rho: &CMatrix, cfg: EvolveConfig) -> Self {
        let n = rho.len();
        let y = rho.as_slice().to_vec();
        let trace0 = vec_trace(&y, gen.dim());
        let mut s = Self {
            gen,
            cfg,
            y,
            t: 0.0,
            dt: cfg.dt_initial,
            k: vec![vec![ZERO; n]; 7],
            stage: vec![ZERO; n],
            trace0,
            steps: 0,
            dt_stable: 2.0 / gen.superop.gershgorin_radius().max(f64::MIN_POSITIVE),
        };
        s.gen.superop.matvec(&s.y, &mut s.k[0]);
        s
    }

    /// Advance by one accepted step no longer than `max_dt`.
    fn step(&mut self, max_dt: f64) -> Result<()> {
        let n = self.y.len();
        loop {
            // steps near the stability boundary chatter and leave a residual floor
            let dt = self.dt.min(max_dt).min(self.dt_stable);
            if dt < self.cfg.dt_min {
                return Err(Error::StepUnderflow { time: self.t, dt });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = self.y[i];
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[j][i] * (dt * a);
                        }
                    }
                    self.stage[i] = acc;
                }
                self.gen.superop.matvec(&self.stage, &mut self.k[s]);
            }
            // stage 6 input equals the 5th-order solution (FSAL)
            let mut err_norm: f64 = 0.0;
            for i in 0..n {
                let mut e = ZERO;
                for j in 0..7 {
                    e += self.k[j][i] * (dt * (B5[j] - B4[j]));
                }
                let scale = self.cfg.atol + self.cfg.rtol * self.y[i].norm().max(self.stage[i].norm());
                err_norm = err_norm.max(e.norm() / scale);
            }
            if err_norm <= 1.0 {
                self.y.copy_from_slice(&self.stage);
                self.t += dt;
                self.steps += 1;
                let (first, rest) = self.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                let drift = (vec_trace(&self.y, self.gen.dim()) - self.trace0).norm();
                if drift > self.cfg.trace_drift_tol {
                    return Err(Error::TraceDrift { drift });
                }
                let factor = if err_norm == 0.0 {
                    5.0
                } else {
                    (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposed = dt * factor;
                // a step clipped by `max_dt` should not shrink the controller's step
                self.dt = if dt < self.dt { self.dt.max(proposed) } else { proposed };
                if self.steps > self.cfg.max_steps {
                    return Err(Error::NotConverged {
                        iterations: self.steps,
                        residual: f64::NAN,
                    });
                }
                return Ok(());
            }
            self.dt = dt * (0.9 * err_norm.powf(-0.25)).clamp(0.1, 0.9);
            if self.steps > self.cfg.max_steps {
                return Err(Error::NotConverged {
                    iterations: self.steps,
                    residual: f64::NAN,
                });
            }
        }
    }

    fn state(&self) -> CMatrix {
        let d = self.gen.dim();
        let tr = vec_trace(&self.y, d);
        CMatrix::from_iterator(d, d, self.y.iter().map(|z| z / tr))
    }
}

/// Integrate dρ/dt = L(ρ) up to `t_final`, recording the state every
/// `sample_every` (or only the endpoints when `None`).
pub fn evolve(
    gen: &LindbladGenerator,
    rho_in: &CMatrix,
    t_final: f64,
    sample_every: Option<f64>,
    cfg: &EvolveConfig,
) -> Result<Trajectory> {
    let d = gen.dim();
    if rho_in.nrows() != d || rho_in.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: rho_in.nrows(),
        });
    }
    let trace = rho_in.trace().re;
    if (trace - 1.0).abs() > 1e-8 {
        return Err(Error::BadTrace { trace });
    }
    if !(t_final >= 0.0) {
        return Err(Error::InvalidParameter("t_final must be >= 0".into()));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![rho_in.clone()],
    };
    if t_final == 0.0 {
        return Ok(traj);
    }
    let mut targets = Vec::new();
    if let Some(every) = sample_every.filter(|s| *s > 0.0) {
        let count = (t_final / every).ceil() as usize;
        for k in 1..count {
            targets.push(k as f64 * every);
        }
    }
    targets.push(t_final);
    let mut integ = Integrator::new(gen, rho_in, *cfg);
    for target in targets {
        while integ.t < target - 1e-13 * target.max(1.0) {
            integ.step(target - integ.t)?;
        }
        traj.times.push(integ.t);
        traj.states.push(integ.state());
    }
    Ok(traj)
}

/// Integrate until ‖L(ρ)‖_F ≤ `residual_tol`. Returns the state and the
/// number of accepted steps.
pub fn evolve_to_steady(
    gen: &LindbladGenerator,
    rho_in: &CMatrix,
    cfg: &EvolveConfig,
    residual_tol: f64,
    t_max: f64,
) -> Result<(CMatrix, usize)> {
    let mut integ = Integrator::new(gen, rho_in, *cfg);
    let mut residual = f64::INFINITY;
    while integ.t < t_max {
        integ.step(t_max - integ.t)?;
        if integ.steps % 10 == 0 {
            let rho = integ.state();
            residual = gen.residual(&rho);
            if residual <= residual_tol {
                return Ok((rho, integ.steps));
            }
        }
    }
    Err(Error::NotConverged {
        iterations: integ.steps,
        residual,
    })
}
