#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use spinmetro::liouvillian::{build_generator, solve_steady_state, SolverChoice, SolverConfig};
use spinmetro::spin::CMatrix;
use spinmetro::{ModelParams, Parameter};

pub fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Steady state from the dense SVD null space, kept separate from the
/// default inverse-iteration path used by the code under test.
pub fn dense_steady(params: &ModelParams) -> CMatrix {
    let gen = build_generator(params).unwrap();
    let cfg = SolverConfig {
        choice: SolverChoice::Null,
        ..SolverConfig::default()
    };
    solve_steady_state(&gen, &cfg).unwrap().rho().clone()
}

fn hermitian_sqrt(a: &CMatrix) -> CMatrix {
    let h = (a + a.adjoint()) * c(0.5);
    let e = SymmetricEigen::new(h);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|x| c(x.max(0.0).sqrt())));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

/// Uhlmann fidelity (Tr √(√ρ σ √ρ))².
pub fn fidelity(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    let s = hermitian_sqrt(rho);
    let inner = &s * sigma * &s;
    let inner = (&inner + inner.adjoint()) * c(0.5);
    let t: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    t * t
}

/// F_Q ≈ 8(1 − √F(ρ(λ−h), ρ(λ+h)))/(2h)².
pub fn fidelity_qfi(base: &ModelParams, which: Parameter, h: f64) -> f64 {
    let lambda = base.get(which);
    let a = dense_steady(&base.with(which, lambda - h));
    let b = dense_steady(&base.with(which, lambda + h));
    8.0 * (1.0 - fidelity(&a, &b).sqrt()) / (4.0 * h * h)
}

/// SLD from the Sylvester equation ρL + Lρ = 2∂ρ solved densely:
/// (I⊗ρ + ρᵀ⊗I) vec(L) = 2 vec(∂ρ) with column stacking.
pub fn sylvester_sld(rho: &CMatrix, drho: &CMatrix) -> CMatrix {
    let d = rho.nrows();
    let id = CMatrix::identity(d, d);
    let a = id.kronecker(rho) + rho.transpose().kronecker(&id);
    let rhs = nalgebra::DVector::from_iterator(d * d, drho.iter().map(|z| z * c(2.0)));
    let x = a.lu().solve(&rhs).expect("Sylvester system is singular");
    CMatrix::from_iterator(d, d, x.iter().copied())
}
