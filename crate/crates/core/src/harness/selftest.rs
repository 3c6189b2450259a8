//! Structural invariants checked at run time on randomized parameter points.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::liouvillian::{
    build_generator, random_density, solve_steady_state, trace_distance, SolverChoice,
    SolverConfig,
};
use crate::params::ModelParams;
use crate::spin::{build_operators, CMatrix};

use super::output::write_csv;
use super::sweep::{linspace, run_sweep, Axis, SweepSpec, Task};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, worst: f64, tol: f64, what: &str) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: worst <= tol,
        detail: format!("max {what} {worst:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, detail: String) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: false,
        detail,
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

fn random_params(rng: &mut ChaCha8Rng, n_max: usize) -> ModelParams {
    let n = rng.random_range(1..=n_max);
    let omega = rng.random_range(0.0..1.5);
    let theta = rng.random_range(-0.7..0.7);
    ModelParams::new(n, omega, 1.0, theta).expect("sampled parameters are valid")
}

fn su2_algebra() -> CheckOutcome {
    let i = Complex64::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for n in 1..=30 {
        let p = ModelParams::new(n, 0.0, 1.0, 0.0).unwrap();
        let o = build_operators(&p).unwrap();
        let s = p.s();
        let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
        let casimir = &o.sx * &o.sx + &o.sy * &o.sy + &o.sz * &o.sz
            - o.identity() * Complex64::new(s * (s + 1.0), 0.0);
        for err in [
            comm(&o.sx, &o.sy) - &o.sz * i,
            comm(&o.sy, &o.sz) - &o.sx * i,
            comm(&o.sz, &o.sx) - &o.sy * i,
            casimir,
        ] {
            worst = worst.max(max_abs(&err) / (s * s + 1.0));
        }
    }
    outcome("su2_algebra", worst, 1e-12, "relative commutator/Casimir error")
}

fn trace_preservation(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst = 0.0f64;
    for k in 0..12 {
        let p = random_params(rng, 30);
        let gen = build_generator(&p).unwrap();
        let rho = random_density(p.dim(), rng.random::<u64>() ^ k);
        let l = gen.apply(&rho);
        let scale = max_abs(&l).max(1.0);
        worst = worst
            .max(l.trace().norm() / scale)
            .max(max_abs(&(&l - l.adjoint())) / scale);
    }
    outcome("trace_preservation", worst, 1e-12, "|Tr L(rho)| or anti-Hermitian part")
}

fn steady_states(rng: &mut ChaCha8Rng) -> (CheckOutcome, CheckOutcome) {
    let mut residual = 0.0f64;
    let mut negativity = 0.0f64;
    for _ in 0..8 {
        let p = random_params(rng, 30);
        let gen = build_generator(&p).unwrap();
        match solve_steady_state(&gen, &SolverConfig::default()) {
            Ok(ss) => {
                residual = residual.max(ss.residual / p.gamma);
                let min = SymmetricEigen::new(ss.rho().clone())
                    .eigenvalues
                    .iter()
                    .fold(f64::INFINITY, |a, &x| a.min(x));
                negativity = negativity.max(-min);
            }
            Err(e) => {
                let msg = format!("solve failed at {p:?}: {e}");
                return (failed("steady_residual", msg.clone()), failed("positivity", msg));
            }
        }
    }
    (
        outcome("steady_residual", residual, 1e-9, "||L(rho)||/Gamma"),
        outcome("positivity", negativity, 1e-9, "negative eigenvalue"),
    )
}

fn solver_paths(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let mut worst_null = 0.0f64;
    let mut worst_evolve = 0.0f64;
    let mut cases: Vec<(ModelParams, bool)> = Vec::new();
    for n in [2usize, 9, 20] {
        let mut p = random_params(rng, 1);
        p.n_spins = n;
        cases.push((p, false));
    }
    for n in [3usize, 12, 30] {
        let mut p = random_params(rng, 1);
        p.n_spins = n;
        cases.push((p, true));
    }
    for (p, evolve) in cases {
        let gen = build_generator(&p).unwrap();
        let with = |choice| {
            solve_steady_state(
                &gen,
                &SolverConfig {
                    choice,
                    ..SolverConfig::default()
                },
            )
        };
        let reference = match with(SolverChoice::Power) {
            Ok(s) => s,
            Err(e) => return failed("solver_paths", format!("power failed at {p:?}: {e}")),
        };
        let other = if evolve {
            with(SolverChoice::Evolve)
        } else {
            with(SolverChoice::Null)
        };
        match other {
            Ok(s) => {
                let d = trace_distance(reference.rho(), s.rho());
                if evolve {
                    worst_evolve = worst_evolve.max(d);
                } else {
                    worst_null = worst_null.max(d);
                }
            }
            Err(e) => return failed("solver_paths", format!("alternate path failed at {p:?}: {e}")),
        }
    }
    CheckOutcome {
        name: "solver_paths",
        passed: worst_null <= 1e-8 && worst_evolve <= 1e-6,
        detail: format!(
            "trace distance power/null {worst_null:.3e} (tol 1e-8), power/evolve {worst_evolve:.3e} (tol 1e-6)"
        ),
    }
}

fn sweep_determinism() -> CheckOutcome {
    let base = ModelParams::new(8, 0.3, 1.0, std::f64::consts::PI / 8.0).unwrap();
    let spec = SweepSpec::new(
        base,
        Axis::Omega,
        linspace(0.05, 1.0, 7),
        vec![Task::Signals, Task::QfiPerturbed, Task::Chi2, Task::Meanfield],
    );
    let render = |jobs| -> std::result::Result<Vec<u8>, String> {
        let table = run_sweep(&spec, jobs).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_csv(&table, &mut buf, false).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    match (render(1), render(4)) {
        (Ok(a), Ok(b)) => CheckOutcome {
            name: "sweep_determinism",
            passed: a == b,
            detail: format!("{} bytes, jobs 1 vs 4 identical: {}", a.len(), a == b),
        },
        (Err(e), _) | (_, Err(e)) => failed("sweep_determinism", e),
    }
}

/// Run the invariant suite. `seed` drives the randomized parameter probes.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![su2_algebra(), trace_preservation(&mut rng)];
    let (res, pos) = steady_states(&mut rng);
    out.push(res);
    out.push(pos);
    out.push(solver_paths(&mut rng));
    out.push(sweep_determinism());
    out
}
