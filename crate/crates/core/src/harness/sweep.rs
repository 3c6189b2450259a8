use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::SolverConfig;
use crate::meanfield::{
    analytic_qfi_chi, bound_omega, bound_theta, gaussian_steady_state, hp_coefficients,
    predict_signals,
};
use crate::metrology::{estimation_report, EstimationOptions, GeneratorSpec, DEFAULT_EIG_FLOOR};
use crate::params::{ModelParams, Parameter};

use super::fit::{fit_power_law, ScalingFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Signals,
    Bounds,
    QfiSteady,
    QfiPerturbed,
    Chi2,
    Xi2,
    Gap,
    Meanfield,
}

impl Task {
    pub const ALL: [Task; 8] = [
        Task::Signals,
        Task::Bounds,
        Task::QfiSteady,
        Task::QfiPerturbed,
        Task::Chi2,
        Task::Xi2,
        Task::Gap,
        Task::Meanfield,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Signals => "signals",
            Task::Bounds => "bounds",
            Task::QfiSteady => "qfi_steady",
            Task::QfiPerturbed => "qfi_perturbed",
            Task::Chi2 => "chi2",
            Task::Xi2 => "xi2",
            Task::Gap => "gap",
            Task::Meanfield => "meanfield",
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Task::Signals => &["sx", "sy", "sz", "var_sy", "var_sz", "purity", "residual"],
            Task::Bounds => &["bound_sy", "bound_sz"],
            Task::QfiSteady => &["qfi_steady"],
            Task::QfiPerturbed => &["qfi_perturbed"],
            Task::Chi2 => &["chi2"],
            Task::Xi2 => &["xi2"],
            Task::Gap => &["gap"],
            Task::Meanfield => &[
                "mf_sy", "mf_sz", "mf_var_sy", "mf_var_sz", "mf_bound", "mf_qfi", "mf_chi2", "mf_r",
            ],
        }
    }

    fn is_exact(&self) -> bool {
        !matches!(self, Task::Meanfield)
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown task '{s}' (expected one of signals, bounds, qfi_steady, qfi_perturbed, chi2, xi2, gap, meanfield)"
                ))
            })
    }
}

pub fn parse_tasks(list: &str) -> Result<Vec<Task>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Omega,
    Theta,
    NSpins,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omega" => Ok(Axis::Omega),
            "theta" => Ok(Axis::Theta),
            "n" | "n_spins" | "n-spins" => Ok(Axis::NSpins),
            other => Err(Error::InvalidParameter(format!(
                "unknown axis '{other}' (expected omega|theta|n_spins)"
            ))),
        }
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![start],
        _ => (0..points)
            .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// Fixed parameters; Ω and Γ in any common unit.
    pub base: ModelParams,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub tasks: Vec<Task>,
    pub lambda: Parameter,
    pub generator: GeneratorSpec,
    /// Derivative step in units of Γ (radians for θ).
    pub step: Option<f64>,
    pub eig_floor: f64,
    pub richardson: bool,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn new(base: ModelParams, axis: Axis, values: Vec<f64>, tasks: Vec<Task>) -> Self {
        Self {
            base,
            axis,
            values,
            tasks,
            lambda: Parameter::Omega,
            generator: GeneratorSpec::Optimal,
            step: None,
            eig_floor: DEFAULT_EIG_FLOOR,
            richardson: true,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one task".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("sweep grid is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sweep values must be finite".into()));
        }
        let increasing = self.values.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::InvalidParameter(
                "sweep values must be strictly monotone".into(),
            ));
        }
        if self.axis == Axis::NSpins
            && self.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::InvalidParameter(
                "n_spins sweep values must be positive integers".into(),
            ));
        }
        if let Some(h) = self.step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter("derivative step must be > 0".into()));
            }
        }
        if !(self.eig_floor >= 0.0) {
            return Err(Error::InvalidParameter("eig_floor must be >= 0".into()));
        }
        Ok(())
    }

    /// Canonical, duplicate-free task order; the column set depends on it only.
    pub fn task_set(&self) -> Vec<Task> {
        let mut t = self.tasks.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn columns(&self) -> Vec<String> {
        self.task_set()
            .iter()
            .flat_map(|t| t.columns().iter().map(|c| c.to_string()))
            .collect()
    }

    /// Parameters at grid point `i`, expressed in units of Γ.
    pub fn point(&self, i: usize) -> ModelParams {
        let v = self.values[i];
        let p = match self.axis {
            Axis::Omega => self.base.with_omega(v),
            Axis::Theta => self.base.with_theta(v),
            Axis::NSpins => self.base.with_n(v as usize),
        };
        p.normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: ModelParams,
    pub values: Vec<Option<f64>>,
    pub error: Option<String>,
    /// Failure of the exact solve, if any; mean-field columns may still be set.
    #[serde(skip)]
    pub exact_error: Option<Error>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }
}

struct RowResult {
    values: Vec<Option<f64>>,
    errors: Vec<String>,
    exact_error: Option<Error>,
}

fn compute_row(spec: &SweepSpec, tasks: &[Task], params: &ModelParams) -> RowResult {
    let mut values = Vec::new();
    let mut errors = Vec::new();
    let mut exact_error = None;
    let has = |t: Task| tasks.contains(&t);
    let exact = if tasks.iter().any(Task::is_exact) {
        let options = EstimationOptions {
            which: spec.lambda,
            step: spec.step,
            eig_floor: spec.eig_floor,
            richardson: spec.richardson,
            generator: spec.generator,
            solver: spec.solver,
            with_gap: has(Task::Gap),
            with_qfi_steady: has(Task::QfiSteady),
            with_bounds: has(Task::Bounds),
        };
        match estimation_report(params, &options) {
            Ok(r) => Some(r),
            Err(e) => {
                errors.push(format!("exact: {e}"));
                exact_error = Some(e);
                None
            }
        }
    } else {
        None
    };
    let mf = if has(Task::Meanfield) {
        let c = hp_coefficients(params);
        let r = c.and_then(|c| {
            let sig = predict_signals(&c, params.n_spins)?;
            let bound = match spec.lambda {
                Parameter::Omega => bound_omega(params)?,
                Parameter::Theta => bound_theta(params)?.bound,
            };
            let q = analytic_qfi_chi(params)?;
            let g = gaussian_steady_state(&c)?;
            Ok([
                sig.sy,
                sig.sz,
                sig.var_sy,
                sig.var_sz,
                bound,
                q.qfi,
                q.chi_squared,
                g.r,
            ])
        });
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(format!("meanfield: {e}"));
                None
            }
        }
    } else {
        None
    };
    for t in tasks {
        match t {
            Task::Meanfield => match mf {
                Some(v) => values.extend(v.iter().map(|x| Some(*x))),
                None => values.extend([None; 8]),
            },
            _ => {
                let r = exact.as_ref();
                match t {
                    Task::Signals => values.extend([
                        r.map(|r| r.sx_mean),
                        r.map(|r| r.sy_mean),
                        r.map(|r| r.sz_mean),
                        r.map(|r| r.sy_var),
                        r.map(|r| r.sz_var),
                        r.map(|r| r.purity),
                        r.map(|r| r.residual),
                    ]),
                    Task::Bounds => values.extend([
                        r.and_then(|r| r.bound_sy).map(|b| b.bound),
                        r.and_then(|r| r.bound_sz).map(|b| b.bound),
                    ]),
                    Task::QfiSteady => values.push(r.and_then(|r| r.qfi_steady).map(|q| q.qfi)),
                    Task::QfiPerturbed => values.push(r.map(|r| r.qfi_perturbed)),
                    Task::Chi2 => {
                        let v = r.and_then(|r| r.chi_squared);
                        if r.is_some() && v.is_none() {
                            errors.push("chi2: QFI vanishes".into());
                        }
                        values.push(v);
                    }
                    Task::Xi2 => {
                        let v = r.and_then(|r| r.xi_squared).map(|x| x.xi_squared);
                        if r.is_some() && v.is_none() {
                            errors.push("xi2: mean spin vanishes".into());
                        }
                        values.push(v);
                    }
                    Task::Gap => values.push(r.and_then(|r| r.gap)),
                    Task::Meanfield => unreachable!(),
                }
            }
        }
    }
    RowResult {
        values,
        errors,
        exact_error,
    }
}

/// Evaluate every grid point on a pool of `jobs` workers. Rows come back in
/// grid order; a failing row records its error instead of aborting.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let tasks = spec.task_set();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        (0..spec.values.len())
            .into_par_iter()
            .map(|i| {
                let params = spec.point(i);
                let r = compute_row(spec, &tasks, &params);
                SweepRow {
                    index: i,
                    params,
                    values: r.values,
                    error: (!r.errors.is_empty()).then(|| r.errors.join("; ")),
                    exact_error: r.exact_error,
                }
            })
            .collect()
    });
    if rows.iter().all(|r| r.values.iter().all(Option::is_none)) {
        return Err(Error::SweepFailed {
            rows: rows.len(),
            first: rows[0].error.clone().unwrap_or_default(),
        });
    }
    Ok(SweepTable {
        columns: spec.columns(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub quantity: String,
    pub fit: Option<ScalingFit>,
    pub expected_exponent: Option<f64>,
    pub error: Option<String>,
}

/// Power-law fit of one column against N over the rows where it is defined.
pub fn fit_column(table: &SweepTable, column: &str) -> Result<ScalingFit> {
    let col = table
        .column(column)
        .ok_or_else(|| Error::Fit(format!("no column '{column}' in table")))?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .rows
        .iter()
        .zip(col)
        .filter_map(|(r, v)| v.map(|v| (r.params.n_spins as f64, v)))
        .unzip();
    fit_power_law(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_spec() -> SweepSpec {
        let base = ModelParams::new(6, 0.2, 1.0, PI / 8.0).unwrap();
        SweepSpec::new(
            base,
            Axis::Omega,
            linspace(0.1, 0.9, 5),
            vec![Task::Meanfield, Task::Signals, Task::Chi2],
        )
    }

    #[test]
    fn columns_depend_only_on_task_set() {
        let a = small_spec();
        let mut b = small_spec();
        b.tasks = vec![Task::Chi2, Task::Signals, Task::Meanfield, Task::Chi2];
        assert_eq!(a.columns(), b.columns());
        assert_eq!(a.columns()[0], "sx");
    }

    #[test]
    fn validation() {
        let mut s = small_spec();
        s.tasks.clear();
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.values = vec![0.1, 0.3, 0.2];
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.axis = Axis::NSpins;
        s.values = vec![2.0, 3.5];
        assert!(s.validate().is_err());
        assert!(parse_tasks("signals,bogus").is_err());
    }

    #[test]
    fn thermal_rows_keep_exact_values() {
        let t = run_sweep(&small_spec(), 2).unwrap();
        assert_eq!(t.rows.len(), 5);
        assert!(t.rows.iter().enumerate().all(|(i, r)| r.index == i));
        let last = &t.rows[4];
        assert!(last.error.as_deref().unwrap().contains("meanfield"));
        let sz = t.column("sz").unwrap();
        assert!(sz.iter().all(Option::is_some));
        assert!(t.column("mf_sz").unwrap()[4].is_none());
    }

    #[test]
    fn gamma_is_normalized() {
        let mut s = small_spec();
        s.base = ModelParams::new(6, 0.4, 2.0, PI / 8.0).unwrap();
        s.values = vec![0.2, 0.4];
        s.tasks = vec![Task::Meanfield];
        let t = run_sweep(&s, 1).unwrap();
        assert_eq!(t.rows[1].params.omega, 0.2);
        assert_eq!(t.rows[1].params.gamma, 1.0);
    }
}
