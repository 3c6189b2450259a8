//! Collective spin operators on the permutation-symmetric (Dicke) sector.
//!
//! Basis ordering: index `k` corresponds to `m = -S + k`, so index 0 is the
//! fully polarized state `|S, -S>`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub type CMatrix = DMatrix<Complex64>;

/// Default guard on N for operator construction.
pub const DEFAULT_MAX_SPINS: usize = 2000;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpinOperatorSet {
    pub dimension: usize,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
    pub s_plus: CMatrix,
    pub s_minus: CMatrix,
    /// Jump operator cos(θ)·S₋ + sin(θ)·S₊.
    pub s_theta: CMatrix,
}

pub fn build_operators(params: &ModelParams) -> Result<SpinOperatorSet> {
    build_operators_with_max(params, DEFAULT_MAX_SPINS)
}

pub fn build_operators_with_max(params: &ModelParams, max_spins: usize) -> Result<SpinOperatorSet> {
    params.validate()?;
    if params.n_spins > max_spins {
        return Err(Error::DimensionOverflow {
            dim: params.dim(),
            max: max_spins + 1,
        });
    }
    let d = params.dim();
    let s = params.s();
    let mut s_plus = CMatrix::zeros(d, d);
    let mut sz = CMatrix::zeros(d, d);
    for k in 0..d {
        let m = -s + k as f64;
        sz[(k, k)] = Complex64::new(m, 0.0);
        if k + 1 < d {
            let amp = (s * (s + 1.0) - m * (m + 1.0)).max(0.0).sqrt();
            s_plus[(k + 1, k)] = Complex64::new(amp, 0.0);
        }
    }
    let s_minus = s_plus.adjoint();
    let half = Complex64::new(0.5, 0.0);
    let sx = (&s_plus + &s_minus) * half;
    let sy = (&s_plus - &s_minus) * Complex64::new(0.0, -0.5);
    let (sin_t, cos_t) = params.theta.sin_cos();
    let s_theta = &s_minus * Complex64::new(cos_t, 0.0) + &s_plus * Complex64::new(sin_t, 0.0);
    Ok(SpinOperatorSet {
        dimension: d,
        sx,
        sy,
        sz,
        s_plus,
        s_minus,
        s_theta,
    })
}

impl SpinOperatorSet {
    /// Spin projection n·S for a unit vector `n`.
    pub fn along(&self, direction: [f64; 3]) -> Result<CMatrix> {
        check_unit(direction)?;
        Ok(self.combine(direction))
    }

    fn combine(&self, n: [f64; 3]) -> CMatrix {
        &self.sx * Complex64::new(n[0], 0.0)
            + &self.sy * Complex64::new(n[1], 0.0)
            + &self.sz * Complex64::new(n[2], 0.0)
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.dimension, self.dimension)
    }
}

/// n_x·S_x + n_y·S_y + n_z·S_z for the ensemble described by `params`.
pub fn spin_direction_operator(params: &ModelParams, direction: [f64; 3]) -> Result<CMatrix> {
    check_unit(direction)?;
    let ops = build_operators(params)?;
    Ok(ops.combine(direction))
}

fn check_unit(n: [f64; 3]) -> Result<()> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (norm - 1.0).abs() > 1e-12 || !norm.is_finite() {
        return Err(Error::NotUnitVector { norm });
    }
    Ok(())
}

/// Largest entrywise deviation |A_ij - conj(A_ji)|.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn check_hermitian(op: &CMatrix, tol: f64) -> Result<()> {
    if op.nrows() != op.ncols() {
        return Err(Error::DimensionMismatch {
            expected: op.nrows(),
            got: op.ncols(),
        });
    }
    let deviation = hermitian_deviation(op);
    if deviation > tol * max_abs(op).max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Trace of a product without forming it.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

fn check_density(rho: &CMatrix, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rho.nrows(),
        });
    }
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::BadTrace { trace });
    }
    Ok(())
}

/// Tr(op·ρ) for Hermitian `op`; the imaginary residue is discarded.
pub fn expectation(op: &CMatrix, rho: &CMatrix) -> Result<f64> {
    check_hermitian(op, HERMITIAN_TOL)?;
    check_density(rho, op.nrows())?;
    Ok(trace_product(op, rho).re)
}

/// Tr(op²ρ) − Tr(opρ)², clamped at zero against round-off.
pub fn variance(op: &CMatrix, rho: &CMatrix) -> Result<f64> {
    check_hermitian(op, HERMITIAN_TOL)?;
    check_density(rho, op.nrows())?;
    let mean = trace_product(op, rho).re;
    let op2 = op * op;
    let second = trace_product(&op2, rho).re;
    let var = second - mean * mean;
    let scale = second.abs().max(1.0);
    if var < 0.0 && var > -1e-12 * scale {
        return Ok(0.0);
    }
    Ok(var.max(0.0))
}

/// Symmetrized covariance ½⟨{A,B}⟩ − ⟨A⟩⟨B⟩.
pub fn covariance(a: &CMatrix, b: &CMatrix, rho: &CMatrix) -> f64 {
    let ab = a * b;
    let ba = b * a;
    let sym = 0.5 * (trace_product(&ab, rho).re + trace_product(&ba, rho).re);
    sym - trace_product(a, rho).re * trace_product(b, rho).re
}

/// |ψ⟩⟨ψ| for a basis vector.
pub fn basis_projector(dim: usize, index: usize) -> CMatrix {
    let mut rho = CMatrix::zeros(dim, dim);
    rho[(index, index)] = Complex64::new(1.0, 0.0);
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn params(n: usize, theta: f64) -> ModelParams {
        ModelParams::new(n, 0.3, 1.0, theta).unwrap()
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn single_spin_lowering_is_pauli_minus() {
        let ops = build_operators(&params(1, 0.0)).unwrap();
        let mut expected = CMatrix::zeros(2, 2);
        expected[(0, 1)] = Complex64::new(1.0, 0.0);
        assert_eq!(ops.s_minus, expected);
    }

    #[test]
    fn two_spins_theta_zero_jump_is_lowering() {
        let ops = build_operators(&params(2, 0.0)).unwrap();
        assert_eq!(ops.s_theta, ops.s_minus);
        // m = 0 -> -1 and m = 1 -> 0 both carry sqrt(2) for S = 1
        let r2 = 2f64.sqrt();
        assert!((ops.s_minus[(0, 1)].re - r2).abs() < 1e-15);
        assert!((ops.s_minus[(1, 2)].re - r2).abs() < 1e-15);
        let nonzero = ops.s_minus.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn quarter_pi_jump_is_scaled_sx() {
        for n in [1, 4, 7] {
            let ops = build_operators(&params(n, PI / 4.0)).unwrap();
            let expected = &ops.sx * Complex64::new(2f64.sqrt(), 0.0);
            assert!(max_diff(&ops.s_theta, &expected) < 1e-12);
            let alt = (&ops.s_minus + &ops.s_plus) * Complex64::new(FRAC_1_SQRT_2, 0.0);
            assert!(max_diff(&ops.s_theta, &alt) < 1e-12);
        }
    }

    #[test]
    fn su2_algebra_and_casimir() {
        let i = Complex64::new(0.0, 1.0);
        for n in 1..=30 {
            let p = params(n, 0.2);
            let ops = build_operators(&p).unwrap();
            let scale = p.s() * (p.s() + 1.0);
            let tol = 1e-10 * scale.max(1.0);
            assert!(max_diff(&commutator(&ops.sx, &ops.sy), &(&ops.sz * i)) < tol);
            assert!(max_diff(&commutator(&ops.sy, &ops.sz), &(&ops.sx * i)) < tol);
            assert!(max_diff(&commutator(&ops.sz, &ops.sx), &(&ops.sy * i)) < tol);
            let casimir = &ops.sx * &ops.sx + &ops.sy * &ops.sy + &ops.sz * &ops.sz;
            let target = ops.identity() * Complex64::new(scale, 0.0);
            assert!(max_diff(&casimir, &target) < tol);
            assert!(max_diff(&ops.s_plus, &ops.s_minus.adjoint()) == 0.0);
            assert!(hermitian_deviation(&ops.sx) < 1e-15);
            assert!(hermitian_deviation(&ops.sy) < 1e-15);
            assert!(hermitian_deviation(&ops.sz) == 0.0);
            assert!(hermitian_deviation(&ops.s_theta) > 1e-3);
        }
    }

    #[test]
    fn dimension_guard() {
        let p = ModelParams::new(50, 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            build_operators_with_max(&p, 10),
            Err(Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn expectation_examples() {
        let p = params(6, 0.1);
        let ops = build_operators(&p).unwrap();
        let d = ops.dimension;
        let down = basis_projector(d, 0);
        assert!((expectation(&ops.identity(), &down).unwrap() - 1.0).abs() < 1e-15);
        assert!((expectation(&ops.sz, &down).unwrap() + p.s()).abs() < 1e-15);
        let mixed = ops.identity() / Complex64::new(d as f64, 0.0);
        assert!(expectation(&ops.sx, &mixed).unwrap().abs() < 1e-15);
        assert!(variance(&ops.sz, &down).unwrap().abs() < 1e-15);
        assert!(variance(&ops.identity(), &mixed).unwrap().abs() < 1e-15);
    }

    #[test]
    fn coherent_state_along_x_has_binomial_variance() {
        let p = params(2, 0.0);
        let ops = build_operators(&p).unwrap();
        // +x eigenvector of the spin-1 S_x in the |-1>,|0>,|+1> basis
        let psi = nalgebra::DVector::from_vec(vec![
            Complex64::new(0.5, 0.0),
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.5, 0.0),
        ]);
        let rho = &psi * psi.adjoint();
        assert!((expectation(&ops.sx, &rho).unwrap() - 1.0).abs() < 1e-14);
        assert!((variance(&ops.sz, &rho).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn expectation_rejects_bad_inputs() {
        let ops = build_operators(&params(3, 0.2)).unwrap();
        let rho = basis_projector(4, 1);
        assert!(matches!(
            expectation(&ops.s_theta, &rho),
            Err(Error::NotHermitian { .. })
        ));
        let unnormalized = &rho * Complex64::new(1.1, 0.0);
        assert!(matches!(
            expectation(&ops.sz, &unnormalized),
            Err(Error::BadTrace { .. })
        ));
    }

    #[test]
    fn direction_operator() {
        let p = params(5, 0.0);
        let ops = build_operators(&p).unwrap();
        assert_eq!(spin_direction_operator(&p, [0.0, 0.0, 1.0]).unwrap(), ops.sz);
        assert_eq!(spin_direction_operator(&p, [1.0, 0.0, 0.0]).unwrap(), ops.sx);
        let m: f64 = 0.6;
        let n = [0.0, m, (1.0 - m * m).sqrt()];
        let g = spin_direction_operator(&p, n).unwrap();
        let expected = &ops.sy * Complex64::new(m, 0.0) + &ops.sz * Complex64::new(0.8, 0.0);
        assert!(max_diff(&g, &expected) < 1e-15);
        assert!(matches!(
            spin_direction_operator(&p, [1.0, 1.0, 0.0]),
            Err(Error::NotUnitVector { .. })
        ));
    }
}
