//! Command implementations behind the `ddpg` binary.
//!
//! Exit codes: 0 success, 1 not converged, 2 validation or step-size failure,
//! 3 I/O or parse failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ddpg_core::problems::{
    build_market, centralized_oracle, load_instance, save_instance, MarketParams, REPORTED_ETA,
    REPORTED_MU, REPORTED_X,
};
use ddpg_core::solver::{solve_from, SolveResult, TraceWriter};
use ddpg_core::{DualState, ProblemError, ProblemInstance, SolverConfig, SolverError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Directory for trace files when `--trace-out` is not given.
pub const TRACE_DIR_ENV: &str = "DDPG_TRACE_DIR";

#[derive(Debug, Parser)]
#[command(name = "ddpg", version, about = "Distributed dual proximal gradient simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file: dimensions, connectivity, convexity, weights, feasibility.
    Validate {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Solve an instance file.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve the built-in electricity market and write its trace.
    MarketDemo {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the market instance file.
        #[arg(long)]
        save_instance: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Dual step size; defaults to 1/(h + γτ).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_consensus: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_primal: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_step: f64,
    /// Trace cadence in rounds (0: first and last row only).
    #[arg(long)]
    pub trace_every: Option<usize>,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Random initial duals drawn from this seed; zero initialization otherwise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the per-agent phases.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Add a wall_time column (traces are then no longer reproducible byte for byte).
    #[arg(long)]
    pub timing: bool,
    /// Add per-agent θ, μ and per-edge ξ columns to the trace.
    #[arg(long)]
    pub states: bool,
}

impl Default for RunArgs {
    fn default() -> Self {
        let d = SolverConfig::default();
        RunArgs {
            c: None,
            gamma: d.gamma,
            max_iter: d.max_iter,
            tol_consensus: d.tol_consensus,
            tol_primal: d.tol_primal,
            tol_step: d.tol_step,
            trace_every: None,
            trace_out: None,
            seed: None,
            threads: None,
            timing: false,
            states: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Solver(#[from] SolverError),
    #[error("instance failed validation")]
    Invalid,
    #[error("writing {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid => 2,
            CliError::Solver(SolverError::InvalidProblem(_))
            | CliError::Solver(SolverError::StepSizeRejected { .. })
            | CliError::Solver(SolverError::Precondition(_)) => 2,
            CliError::Solver(_) => 1,
            CliError::Problem(ProblemError::OracleNotConverged { .. }) => 1,
            CliError::Problem(_) | CliError::Write { .. } | CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 1,
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Validate { instance } => cmd_validate(instance, out),
        Command::Solve { instance, run } => {
            let problem = load_instance(instance)?;
            let trace_path = run.trace_out.clone().or_else(|| default_trace_path("solve"));
            let result = cmd_solve(&problem, run, trace_path.as_deref(), 100, out)?;
            Ok(outcome(&result))
        }
        Command::MarketDemo { run, save_instance } => {
            let demo = market_demo(run, save_instance.as_deref(), out)?;
            Ok(outcome(&demo.result))
        }
    }
}

fn outcome(r: &SolveResult) -> Outcome {
    if r.converged() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    }
}

fn default_trace_path(stem: &str) -> Option<PathBuf> {
    std::env::var_os(TRACE_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{stem}_trace.csv")))
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let problem = load_instance(path)?;
    let report = problem.validate();
    write!(out, "{report}")?;
    if report.is_ok() {
        writeln!(out, "valid")?;
        Ok(Outcome::Success)
    } else {
        writeln!(out, "invalid")?;
        Err(CliError::Invalid)
    }
}

pub fn solver_config(run: &RunArgs, default_trace_every: usize) -> SolverConfig {
    SolverConfig {
        c: run.c,
        gamma: run.gamma,
        max_iter: run.max_iter,
        tol_consensus: run.tol_consensus,
        tol_primal: run.tol_primal,
        tol_step: run.tol_step,
        trace_every: run.trace_every.unwrap_or(default_trace_every),
        threads: run.threads,
        record_states: run.states,
    }
}

/// `λ⁰`, `ξ⁰` uniform in `[−1, 1]` from a ChaCha8 stream, or zero without a seed.
pub fn initial_state(problem: &ProblemInstance, seed: Option<u64>) -> DualState {
    let mut state = DualState::zeros(problem);
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut state.lambda {
            l.theta.iter_mut().chain(l.mu.iter_mut()).for_each(|v| *v = rng.random_range(-1.0..=1.0));
        }
        for e in &mut state.xi {
            e.xi.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
        }
    }
    state
}

pub fn cmd_solve(
    problem: &ProblemInstance,
    run: &RunArgs,
    trace_path: Option<&Path>,
    default_trace_every: usize,
    out: &mut dyn Write,
) -> Result<SolveResult, CliError> {
    let config = solver_config(run, default_trace_every);
    let result = solve_from(problem, &config, initial_state(problem, run.seed))?;
    if let Some(path) = trace_path {
        write_trace(&result, run.timing, path)?;
        writeln!(out, "trace: {}", path.display())?;
    }
    write_report(&result, out)?;
    Ok(result)
}

fn write_trace(result: &SolveResult, timing: bool, path: &Path) -> Result<(), CliError> {
    let wrap = |source| CliError::Write {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(wrap)?;
    }
    let mut file = BufWriter::new(File::create(path).map_err(wrap)?);
    TraceWriter::new(timing).write(&result.trace, &mut file).map_err(wrap)?;
    file.flush().map_err(wrap)
}

pub fn write_report(r: &SolveResult, out: &mut dyn Write) -> io::Result<()> {
    let status = if r.converged() { "converged" } else { "not converged (iteration budget exhausted)" };
    writeln!(out, "status: {status} after {} iterations", r.iterations)?;
    writeln!(out, "steps: c = {:e}, gamma = {}, h = {}, tau = {}", r.steps.c, r.steps.gamma, r.h, r.tau)?;
    writeln!(out, "Phi: {}", r.residuals.dual.total)?;
    writeln!(out, "smooth dual part: {}", r.residuals.dual.smooth)?;
    writeln!(out, "consensus residual: {:e}", r.residuals.consensus)?;
    writeln!(out, "primal residual: {:e}", r.residuals.primal)?;
    writeln!(out, "agent  theta  mu  x")?;
    for (i, (l, x)) in r.state.lambda.iter().zip(&r.x).enumerate() {
        writeln!(out, "{}  {}  {}  {}", i + 1, join(l.theta.iter()), join(l.mu.iter()), join(x.iter()))?;
    }
    Ok(())
}

fn join<'a>(v: impl Iterator<Item = &'a f64>) -> String {
    v.map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

pub struct MarketDemo {
    pub problem: ProblemInstance,
    pub result: SolveResult,
    pub trace_path: PathBuf,
    /// `Φ(λ_out) + F(x_ref)` against the centralized reference solution.
    pub duality_gap: f64,
}

/// Builds the market, solves it with θ/μ/ξ columns in the trace and compares against
/// the centralized reference solution.
pub fn market_demo(
    run: &RunArgs,
    save_to: Option<&Path>,
    out: &mut dyn Write,
) -> Result<MarketDemo, CliError> {
    let problem = build_market(&MarketParams::table_one(), None)?;
    if let Some(path) = save_to {
        save_instance(&problem, path)?;
        writeln!(out, "instance: {}", path.display())?;
    }
    let trace_path = run.trace_out.clone().unwrap_or_else(|| {
        default_trace_path("market_demo").unwrap_or_else(|| PathBuf::from("market_demo_trace.csv"))
    });
    let mut run = run.clone();
    run.states = true;
    let result = cmd_solve(&problem, &run, Some(&trace_path), 10, out)?;

    let reference = centralized_oracle(&problem, 1e-10)?;
    let phi = result.residuals.dual.total.finite().unwrap_or(f64::INFINITY);
    let duality_gap = phi + reference.objective;
    writeln!(out, "centralized optimum F*: {}", reference.objective)?;
    writeln!(out, "Phi + F*: {duality_gap:e}")?;
    writeln!(
        out,
        "published dispatch: x = {:?}, theta = {REPORTED_ETA}, mu = {:?}",
        REPORTED_X, REPORTED_MU
    )?;
    Ok(MarketDemo {
        problem,
        result,
        trace_path,
        duality_gap,
    })
}
