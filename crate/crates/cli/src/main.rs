//! `pathsde`: command-line driver for the experiments in `pathsde-core`.
//!
//! Tables go to stdout as CSV, summaries as JSON. Exit status is 0 on
//! success, 1 on usage errors and 2 when a numerical invariant fails.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pathsde_core::coefficients::{CoefficientSet, ModelParams};
use pathsde_core::exact_solution::moment_integral;
use pathsde_core::gaussian_model::VarianceTable;
use pathsde_core::harness::{
    self, cost_rows, cost_rows_to_csv, fit_log, fit_power, rows_to_csv, run_convergence_with, ExperimentConfig,
    SchemeKind,
};
use pathsde_core::oracles::{self, GapConstruction};
use pathsde_core::schemes::DEFAULT_LEVEL_CAP;
use pathsde_core::{rng, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "pathsde",
    version,
    about = "Strong approximation experiments for a pathological SDE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model parameters; unset flags keep the defaults or the config values.
#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
}

impl ModelArgs {
    fn apply(&self, mut base: ModelParams<f64>) -> Result<ModelParams<f64>> {
        if let Some(v) = self.tau1 {
            base.tau1 = v;
        }
        if let Some(v) = self.tau2 {
            base.tau2 = v;
        }
        if let Some(v) = self.t_final {
            base.t_final = v;
        }
        if let Some(v) = self.p {
            base.p = v;
        }
        base.validate()?;
        Ok(base)
    }

    fn params(&self) -> Result<ModelParams<f64>> {
        self.apply(ModelParams::default())
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coefficient normalization.
    Coeffs {
        #[command(subcommand)]
        action: CoeffsAction,
    },
    /// Variances of the grid functional and its remainder.
    Variances {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Runs one scheme at one n.
    Simulate {
        #[arg(long)]
        scheme: SchemeKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = rng::DEFAULT_MASTER_SEED)]
        seed: u64,
        /// Error order of the summary row.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Print one line per replication instead of the summary.
        #[arg(long)]
        records: bool,
        #[arg(long, default_value_t = DEFAULT_LEVEL_CAP)]
        level_cap: usize,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Error table over a list of n, from a JSON config and/or flags.
    Convergence {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Mean cost per n.
    Cost {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exact error of the best estimator from n equidistant observations.
    Oracle {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Symmetrization lower bound and the explicit constant curve.
    LowerBound {
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    /// Truncated moments E[G(Z)^q].
    Moments {
        #[arg(long, value_delimiter = ',', required = true)]
        q_list: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Truncation point.
        #[arg(long = "R", default_value_t = 20.0)]
        truncation: f64,
    },
}

#[derive(Subcommand, Debug)]
enum CoeffsAction {
    /// Prints the normalization integrals and constants as JSON.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    scheme: Option<SchemeKind>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    level_cap: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
}

impl RunArgs {
    fn config(&self, base: Option<ExperimentConfig>, default_scheme: SchemeKind) -> Result<ExperimentConfig> {
        let mut cfg = match base {
            Some(c) => c,
            None => {
                let n_list = self
                    .n_list
                    .clone()
                    .ok_or_else(|| Error::InvalidParameter("--n-list is required without --config".into()))?;
                let reps = self
                    .reps
                    .ok_or_else(|| Error::InvalidParameter("--reps is required without --config".into()))?;
                let params = self.model.params()?;
                let mut c = ExperimentConfig::new(self.scheme.unwrap_or(default_scheme), params.p, n_list, reps);
                c.params = params;
                c
            }
        };
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        if let Some(l) = &self.n_list {
            cfg.n_list = l.clone();
        }
        if let Some(r) = self.reps {
            cfg.replications = r;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(w) = self.workers {
            cfg.worker_count = w;
        }
        if let Some(c) = self.level_cap {
            cfg.level_cap = c;
        }
        cfg.params = self.model.apply(cfg.params)?;
        Ok(cfg)
    }
}

fn setup(params: ModelParams<f64>) -> Result<(CoefficientSet<f64>, VarianceTable)> {
    let cs = CoefficientSet::normalize(params, 1e-12)?;
    let vt = VarianceTable::new(&cs);
    Ok((cs, vt))
}

fn coeffs_check(model: &ModelArgs, tol: f64) -> Result<String> {
    let cs = CoefficientSet::normalize(model.params()?, tol)?;
    let report = cs.normalization_report()?;
    let dev = report.max_deviation();
    let json = serde_json::json!({
        "params": cs.params,
        "quad_tol": tol,
        "int_f_squared": report.int_f_squared,
        "int_g": report.int_g,
        "int_h": report.int_h,
        "c_f": report.c_f,
        "c_g": report.c_g,
        "c_h": report.c_h,
        "max_deviation": dev,
    });
    if dev > tol.max(1e-8) {
        return Err(Error::Invariant(format!("normalization integrals off by {dev:e}")));
    }
    Ok(serde_json::to_string_pretty(&json)? + "\n")
}

fn variances(n_list: &[usize], model: &ModelArgs) -> Result<String> {
    let (_, vt) = setup(model.params()?)?;
    let mut s = String::from("m,nu_sq,sigma_sq,bound,extrapolated\n");
    for &m in n_list {
        let e = vt.verify(m)?;
        writeln!(
            s,
            "{m},{:e},{:e},{:e},{}",
            e.nu_sq,
            e.sigma_sq,
            vt.bound(m),
            e.extrapolated
        )
        .unwrap();
    }
    Ok(s)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    scheme: SchemeKind,
    n: usize,
    reps: usize,
    seed: u64,
    r: f64,
    records: bool,
    level_cap: usize,
    model: &ModelArgs,
) -> Result<String> {
    let params = model.params()?;
    let mut cfg = ExperimentConfig::new(scheme, r, vec![n], reps);
    cfg.master_seed = seed;
    cfg.params = params;
    cfg.level_cap = level_cap;
    cfg.validate()?;
    let (cs, vt) = setup(params)?;
    if !records {
        return Ok(rows_to_csv(&run_convergence_with(&cfg, &cs, &vt)?));
    }
    let mut s = String::from("rep,approx7,exact7,cost,level,truncated\n");
    for rep in 0..reps {
        let o = harness::run_one(&cfg, &cs, &vt, n, rep as u64)?;
        writeln!(
            s,
            "{rep},{:e},{:e},{},{},{}",
            o.approx.x[6], o.exact.x[6], o.cost, o.level, o.truncated_level
        )
        .unwrap();
    }
    Ok(s)
}

fn convergence(config: Option<&PathBuf>, run: &RunArgs, r: Option<f64>, output: Option<&PathBuf>) -> Result<String> {
    let base = match config {
        Some(path) => Some(ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    let mut cfg = run.config(base, SchemeKind::Adaptive)?;
    if let Some(r) = r {
        cfg.r = r;
    }
    if let Some(o) = output {
        cfg.output = Some(o.clone());
    }
    cfg.validate()?;
    let (cs, vt) = setup(cfg.params)?;
    let rows = run_convergence_with(&cfg, &cs, &vt)?;
    let csv = rows_to_csv(&rows);
    let Some(path) = &cfg.output else {
        return Ok(csv);
    };
    std::fs::write(path, &csv)?;
    let pts = harness::points(&rows, 0);
    let summary = serde_json::json!({
        "scheme": cfg.scheme,
        "r": cfg.r,
        "rows": rows.len(),
        "truncated": rows.iter().map(|r| r.truncated_count).sum::<u64>(),
        "power_fit": fit_power(&pts).ok(),
        "log_fit": fit_log(&pts, cfg.params.p).ok(),
        "output": path,
    });
    Ok(serde_json::to_string_pretty(&summary)? + "\n")
}

fn cost(run: &RunArgs) -> Result<String> {
    let cfg = run.config(None, SchemeKind::Adaptive)?;
    cfg.validate()?;
    let (cs, vt) = setup(cfg.params)?;
    let rows = run_convergence_with(&cfg, &cs, &vt)?;
    Ok(cost_rows_to_csv(&cost_rows(&rows, &vt)?))
}

fn oracle(n_list: &[usize], p: f64) -> Result<String> {
    let (cs, vt) = setup(ModelParams::default().with_p(p)?)?;
    let mut s = String::from("n,sigma_sq,optimal_error\n");
    for &n in n_list {
        let err = if p == 2.0 {
            oracles::conditional_mean_error(&cs, &vt, n)?
        } else if p == 1.0 {
            oracles::conditional_median_error(&cs, &vt, n)?
        } else {
            return Err(Error::InvalidParameter(format!(
                "oracles exist for p = 1 and p = 2, got {p}"
            )));
        };
        writeln!(s, "{n},{:e},{err:e}", vt.sigma_sq(n)?).unwrap();
    }
    Ok(s)
}

fn lower_bound(n_list: &[usize], p: f64) -> Result<String> {
    let cs = CoefficientSet::normalize(ModelParams::default().with_p(p)?, 1e-12)?;
    let mut s = String::from("n,bound,constant_curve,checked\n");
    let mut violation = None;
    for &n in n_list {
        let gap = GapConstruction::new(&cs, n)?;
        let bound = oracles::symmetrization_bound(&cs, n, p)?;
        let curve = oracles::constant_curve(&cs, n, p);
        let checked = n >= gap.n0.max(3);
        if checked && bound < curve && violation.is_none() {
            violation = Some(n);
        }
        writeln!(s, "{n},{bound:e},{curve:e},{checked}").unwrap();
    }
    if let Some(n) = violation {
        print!("{s}");
        return Err(Error::Invariant(format!("bound below the constant curve at n = {n}")));
    }
    Ok(s)
}

fn moments(q_list: &[f64], p: f64, truncation: f64) -> Result<String> {
    let mut s = String::from("q,value,diverging\n");
    for &q in q_list {
        let (v, div) = moment_integral(p, q, truncation)?;
        writeln!(s, "{q},{v:e},{div}").unwrap();
    }
    Ok(s)
}

fn dispatch(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Coeffs {
            action: CoeffsAction::Check { model, tol },
        } => coeffs_check(model, *tol),
        Command::Variances { n_list, model } => variances(n_list, model),
        Command::Simulate {
            scheme,
            n,
            reps,
            seed,
            r,
            records,
            level_cap,
            model,
        } => simulate(*scheme, *n, *reps, *seed, *r, *records, *level_cap, model),
        Command::Convergence { config, run, r, output } => convergence(config.as_ref(), run, *r, output.as_ref()),
        Command::Cost { run } => cost(run),
        Command::Oracle { n_list, p } => oracle(n_list, *p),
        Command::LowerBound { n_list, p } => lower_bound(n_list, *p),
        Command::Moments { q_list, p, truncation } => moments(q_list, *p, *truncation),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::Io(_) | Error::Json(_) => 1,
        Error::Quadrature { .. } | Error::RootFinding(_) | Error::Invariant(_) | Error::TailBound(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
