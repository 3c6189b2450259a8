use std::io::Write;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::error::{Error, Result};
use crate::liouvillian::{SolverChoice, SolverConfig};
use crate::meanfield::{
    analytic_qfi_chi, bound_omega, bound_theta, critical_theta, gaussian_steady_state,
    hp_coefficients, predict_signals, scaling_exponents,
};
use crate::metrology::{GeneratorSpec, DEFAULT_EIG_FLOOR};
use crate::params::{ModelParams, Parameter};

use super::config::expand_config_args;
use super::output::{format_float, table_json, write_csv, write_json, Format};
use super::selftest::run_selftest;
use super::sweep::{fit_column, linspace, parse_tasks, run_sweep, Axis, FitReport, SweepSpec, SweepTable, Task};

#[derive(Parser, Debug)]
#[command(
    name = "spinmetro",
    version,
    about = "Steady states, Fisher information and mean-field analytics for a driven spin ensemble with squeezed collective decay",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full report at one parameter point.
    Steady {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep Ω, θ or N and tabulate the requested tasks.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Swept parameter: omega, theta or n_spins.
        #[arg(long, default_value = "omega")]
        axis: Axis,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long, default_value_t = 13)]
        points: usize,
        /// Explicit comma-separated grid (overrides start/stop/points).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Interpret omega grid values in units of Ω_c.
        #[arg(long)]
        relative: bool,
        /// Comma-separated: signals, bounds, qfi_steady, qfi_perturbed, chi2, xi2, gap, meanfield.
        #[arg(long, default_value = "signals,meanfield")]
        tasks: String,
    },
    /// Finite-size scaling over N with power-law fits.
    Scaling {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        numeric: NumericArgs,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100,120")]
        n_list: Vec<usize>,
        /// Set Ω = Ω_c.
        #[arg(long)]
        at_critical: bool,
        /// Quantities to fit: qfi_steady, qfi_perturbed, chi2.
        #[arg(long, default_value = "qfi_steady,chi2")]
        quantities: String,
    },
    /// Closed-form mean-field results only (no solver).
    Meanfield {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run the structural invariant suite.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        format: Option<Format>,
    },
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long = "n", default_value_t = 100)]
    n_spins: usize,
    #[arg(long, default_value_t = 0.5)]
    omega: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_8)]
    theta: f64,
    /// Largest N accepted without complaint.
    #[arg(long, default_value_t = 300)]
    max_n: usize,
    /// Flat key=value file mirroring these flags; explicit flags win.
    #[arg(long)]
    config: Option<String>,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        if self.n_spins > self.max_n {
            return Err(Error::InvalidParameter(format!(
                "n = {} exceeds --max-n {}",
                self.n_spins, self.max_n
            )));
        }
        ModelParams::new(self.n_spins, self.omega, self.gamma, self.theta)
    }
}

#[derive(Args, Debug, Clone)]
struct NumericArgs {
    /// Estimated parameter: omega or theta.
    #[arg(long, default_value = "omega")]
    lambda: Parameter,
    /// sz, optimal, x, or custom:nx,ny,nz.
    #[arg(long, default_value = "optimal")]
    generator: GeneratorSpec,
    /// Finite-difference step (units of Γ, or radians for θ).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EIG_FLOOR)]
    eig_floor: f64,
    #[arg(long, default_value = "auto")]
    solver: SolverChoice,
    /// Skip the step-halving check on steady-state QFI.
    #[arg(long)]
    no_richardson: bool,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<Format>,
    /// Omit the timestamped first line of CSV output.
    #[arg(long)]
    no_meta: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn apply_numeric(spec: &mut SweepSpec, numeric: &NumericArgs) {
    spec.lambda = numeric.lambda;
    spec.generator = numeric.generator;
    spec.step = numeric.step;
    spec.eig_floor = numeric.eig_floor;
    spec.richardson = !numeric.no_richardson;
    spec.solver = SolverConfig {
        choice: numeric.solver,
        ..SolverConfig::default()
    };
}

fn open_out(path: &Option<String>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => std::fs::File::create(p)
            .map(|f| Box::new(std::io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Error::Output(format!("cannot write '{p}': {e}"))),
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Output(e.to_string())
}

fn emit_table(table: &SweepTable, output: &OutputArgs, default: Format) -> Result<()> {
    let mut w = open_out(&output.out)?;
    match output.format.unwrap_or(default) {
        Format::Csv => write_csv(table, &mut w, !output.no_meta)?,
        Format::Json => write_json(&table_json(table), &mut w)?,
        Format::Text => {
            for row in &table.rows {
                writeln!(w, "n = {}", row.params.n_spins).map_err(io)?;
                writeln!(w, "omega/gamma = {}", format_float(row.params.omega)).map_err(io)?;
                writeln!(w, "theta = {}", format_float(row.params.theta)).map_err(io)?;
                for (name, v) in table.columns.iter().zip(&row.values) {
                    let shown = v.map(format_float).unwrap_or_else(|| "-".into());
                    writeln!(w, "{name} = {shown}").map_err(io)?;
                }
                if let Some(e) = &row.error {
                    writeln!(w, "note: {e}").map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}

fn cmd_steady(model: &ModelArgs, numeric: &NumericArgs, output: &OutputArgs) -> Result<()> {
    let params = model.params()?;
    let mut spec = SweepSpec::new(params, Axis::Omega, vec![params.omega], Task::ALL.to_vec());
    apply_numeric(&mut spec, numeric);
    let table = run_sweep(&spec, output.jobs)?;
    if let Some(e) = table.rows[0].exact_error.clone() {
        return Err(e);
    }
    emit_table(&table, output, Format::Text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    model: &ModelArgs,
    numeric: &NumericArgs,
    output: &OutputArgs,
    axis: Axis,
    start: Option<f64>,
    stop: Option<f64>,
    points: usize,
    values: &Option<Vec<f64>>,
    relative: bool,
    tasks: &str,
) -> Result<()> {
    let params = model.params()?;
    let mut grid = match values {
        Some(v) => v.clone(),
        None => {
            let (a, b) = match (start, stop) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidParameter(
                        "sweep needs --values or both --start and --stop".into(),
                    ))
                }
            };
            linspace(a, b, points)
        }
    };
    if relative {
        if axis != Axis::Omega {
            return Err(Error::InvalidParameter("--relative applies to the omega axis".into()));
        }
        let oc = params.omega_c();
        grid.iter_mut().for_each(|v| *v *= oc);
    }
    if axis == Axis::NSpins {
        if let Some(v) = grid.iter().find(|v| **v > model.max_n as f64) {
            return Err(Error::InvalidParameter(format!(
                "n = {v} exceeds --max-n {}",
                model.max_n
            )));
        }
    }
    let mut spec = SweepSpec::new(params, axis, grid, parse_tasks(tasks)?);
    apply_numeric(&mut spec, numeric);
    let table = run_sweep(&spec, output.jobs)?;
    emit_table(&table, output, Format::Csv)
}

fn expected_exponent(quantity: &str, at_critical: bool) -> Option<f64> {
    let e = scaling_exponents();
    match (quantity, at_critical) {
        ("qfi_steady", true) | ("qfi_perturbed", true) => Some(e.critical_qfi),
        ("chi2", true) => Some(e.critical_chi_squared),
        _ => None,
    }
}

fn cmd_scaling(
    model: &ModelArgs,
    numeric: &NumericArgs,
    output: &OutputArgs,
    n_list: &[usize],
    at_critical: bool,
    quantities: &str,
) -> Result<()> {
    let mut params = model.params()?;
    if at_critical {
        params.omega = params.omega_c();
    }
    if let Some(n) = n_list.iter().find(|n| **n > model.max_n) {
        return Err(Error::InvalidParameter(format!("n = {n} exceeds --max-n {}", model.max_n)));
    }
    let quantities: Vec<&str> = quantities.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let mut tasks = Vec::new();
    for q in &quantities {
        match *q {
            "qfi_steady" => tasks.push(Task::QfiSteady),
            "qfi_perturbed" => tasks.push(Task::QfiPerturbed),
            "chi2" => tasks.push(Task::Chi2),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "cannot fit '{other}' (expected qfi_steady, qfi_perturbed or chi2)"
                )))
            }
        }
    }
    let values = n_list.iter().map(|&n| n as f64).collect();
    let mut spec = SweepSpec::new(params, Axis::NSpins, values, tasks);
    apply_numeric(&mut spec, numeric);
    let table = run_sweep(&spec, output.jobs)?;
    let fits: Vec<FitReport> = quantities
        .iter()
        .map(|q| {
            let fit = fit_column(&table, q);
            FitReport {
                quantity: q.to_string(),
                fit: fit.as_ref().ok().copied(),
                expected_exponent: expected_exponent(q, at_critical),
                error: fit.err().map(|e| e.to_string()),
            }
        })
        .collect();
    match output.format.unwrap_or(Format::Text) {
        Format::Json => {
            let mut w = open_out(&output.out)?;
            write_json(&json!({ "rows": table_json(&table), "fits": fits }), &mut w)?;
            w.flush().map_err(io)?;
        }
        Format::Csv => {
            emit_table(&table, output, Format::Csv)?;
            let mut err = std::io::stderr().lock();
            for f in &fits {
                writeln!(err, "{}", fit_line(f)).map_err(io)?;
            }
        }
        Format::Text => {
            let mut w = open_out(&output.out)?;
            let cols = table.columns.join("\t");
            writeln!(w, "n\t{cols}\terror").map_err(io)?;
            for row in &table.rows {
                let cells: Vec<String> = row
                    .values
                    .iter()
                    .map(|v| v.map(format_float).unwrap_or_else(|| "-".into()))
                    .collect();
                writeln!(
                    w,
                    "{}\t{}\t{}",
                    row.params.n_spins,
                    cells.join("\t"),
                    row.error.clone().unwrap_or_default()
                )
                .map_err(io)?;
            }
            for f in &fits {
                writeln!(w, "{}", fit_line(f)).map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
    }
    Ok(())
}

fn fit_line(f: &FitReport) -> String {
    match &f.fit {
        Some(fit) => format!(
            "fit {}: a = {} ± {}, b = {} ± {}, R^2 = {}, N in [{}, {}]{}",
            f.quantity,
            format_float(fit.prefactor),
            format_float(fit.prefactor_err),
            format_float(fit.exponent),
            format_float(fit.exponent_err),
            format_float(fit.r_squared),
            fit.window.0,
            fit.window.1,
            f.expected_exponent
                .map(|b| format!(" (mean-field exponent {})", format_float(b)))
                .unwrap_or_default()
        ),
        None => format!("fit {}: {}", f.quantity, f.error.clone().unwrap_or_default()),
    }
}

fn cmd_meanfield(model: &ModelArgs, format: Option<Format>, out: &Option<String>) -> Result<()> {
    let params = model.params()?.normalized();
    let c = hp_coefficients(&params)?;
    let g = gaussian_steady_state(&c)?;
    let s = predict_signals(&c, params.n_spins)?;
    let d_omega = bound_omega(&params)?;
    let d_theta = bound_theta(&params).ok();
    let q = analytic_qfi_chi(&params)?;
    let theta_c = critical_theta(params.omega, params.gamma);
    let mut w = open_out(out)?;
    match format.unwrap_or(Format::Text) {
        Format::Json => write_json(
            &json!({
                "params": params,
                "coefficients": c,
                "gaussian": g,
                "signals": s,
                "bound_omega": d_omega,
                "bound_theta": d_theta.map(|b| b.bound),
                "theta_c": theta_c,
                "qfi": q.qfi,
                "chi2": q.chi_squared,
            }),
            &mut w,
        )?,
        Format::Csv => {
            let cols = [
                ("m", c.m),
                ("r", g.r),
                ("sigma11", g.sigma11),
                ("sigma22", g.sigma22),
                ("sy", s.sy),
                ("sz", s.sz),
                ("var_sy", s.var_sy),
                ("var_sz", s.var_sz),
                ("bound_omega", d_omega),
                ("qfi", q.qfi),
                ("chi2", q.chi_squared),
            ];
            let header: Vec<&str> = cols.iter().map(|c| c.0).collect();
            let vals: Vec<String> = cols.iter().map(|c| format_float(c.1)).collect();
            writeln!(w, "n,omega_over_gamma,theta,{}", header.join(",")).map_err(io)?;
            writeln!(
                w,
                "{},{},{},{}",
                params.n_spins,
                format_float(params.omega),
                format_float(params.theta),
                vals.join(",")
            )
            .map_err(io)?;
        }
        Format::Text => {
            let lines = [
                ("omega_c", Some(c.omega_c)),
                ("M", Some(c.m)),
                ("beta (imag)", Some(c.beta.im)),
                ("k", Some(c.k)),
                ("A", Some(c.a_coef)),
                ("B", Some(c.b_coef)),
                ("gamma_minus", Some(c.gamma_minus)),
                ("gamma_plus", Some(c.gamma_plus)),
                ("eta", Some(c.eta)),
                ("sigma11", Some(g.sigma11)),
                ("sigma22", Some(g.sigma22)),
                ("r", Some(g.r)),
                ("purity", Some(g.purity)),
                ("<s_y>", Some(s.sy)),
                ("<s_z>", Some(s.sz)),
                ("var s_y", Some(s.var_sy)),
                ("var s_z", Some(s.var_sz)),
                ("delta omega bound", Some(d_omega)),
                ("delta theta bound", d_theta.map(|b| b.bound)),
                ("theta_c", theta_c),
                ("F_Q", Some(q.qfi)),
                ("chi2", Some(q.chi_squared)),
            ];
            for (k, v) in lines {
                let shown = v.map(format_float).unwrap_or_else(|| "-".into());
                writeln!(w, "{k} = {shown}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

fn cmd_selftest(seed: u64, format: Option<Format>) -> Result<bool> {
    let start = std::time::Instant::now();
    let results = run_selftest(seed);
    let all = results.iter().all(|r| r.passed);
    let mut w = std::io::stdout().lock();
    match format.unwrap_or(Format::Text) {
        Format::Json => write_json(&json!({ "seed": seed, "passed": all, "checks": results }), &mut w)?,
        _ => {
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                writeln!(w, "{tag} {}: {}", r.name, r.detail).map_err(io)?;
            }
            writeln!(
                w,
                "{} of {} checks passed in {:.1} s",
                results.iter().filter(|r| r.passed).count(),
                results.len(),
                start.elapsed().as_secs_f64()
            )
            .map_err(io)?;
        }
    }
    Ok(all)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Steady {
            model,
            numeric,
            output,
        } => cmd_steady(model, numeric, output).map(|_| true),
        Command::Sweep {
            model,
            numeric,
            output,
            axis,
            start,
            stop,
            points,
            values,
            relative,
            tasks,
        } => cmd_sweep(
            model, numeric, output, *axis, *start, *stop, *points, values, *relative, tasks,
        )
        .map(|_| true),
        Command::Scaling {
            model,
            numeric,
            output,
            n_list,
            at_critical,
            quantities,
        } => cmd_scaling(model, numeric, output, n_list, *at_critical, quantities).map(|_| true),
        Command::Meanfield { model, format, out } => cmd_meanfield(model, *format, out).map(|_| true),
        Command::Selftest { seed, format } => cmd_selftest(*seed, *format),
    }
}

/// Exit code: 0 success, 1 invalid input, 2 solver failure.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match expand_config_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                2
            } else {
                1
            }
        }
    }
}
