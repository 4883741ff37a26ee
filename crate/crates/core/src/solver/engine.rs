use std::time::Instant;

use rayon::prelude::*;

use super::diagnostics::{consensus_residual, eval_dual_objective, primal_residual, ErgodicAverage, Residuals};
use super::kernel::{lambda_update, lipschitz_h, primal_recovery, xi_update, LocalInputs};
use super::steps::{suggest_step_sizes, StepSizes};
use super::trace::{Trace, TraceRow};
use super::{AgentDual, DualState, EdgeMultiplier, SolverError};
use crate::problems::ProblemInstance;
use crate::topology::spectral_radius_or_bound;
use crate::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Fixed `c`; when `None`, `c = 1/(h + γτ)` is used.
    pub c: Option<f64>,
    pub gamma: f64,
    pub max_iter: usize,
    pub tol_consensus: f64,
    pub tol_primal: f64,
    pub tol_step: f64,
    /// Trace cadence in rounds; 0 keeps only the first and last rows.
    pub trace_every: usize,
    /// Worker threads for the per-agent phases; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Store the full `(λ, ξ)` in every trace row.
    pub record_states: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            c: None,
            gamma: 1.0,
            max_iter: 1_000_000,
            tol_consensus: 1e-6,
            tol_primal: 1e-6,
            tol_step: 1e-8,
            trace_every: 100,
            threads: None,
            record_states: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub state: DualState,
    /// Primal point recovered from the final duals.
    pub x: Vec<Vector>,
    /// Running mean of `λ^1, …, λ^T`.
    pub lambda_ergodic: Vec<AgentDual>,
    /// Primal point recovered from the ergodic mean.
    pub x_ergodic: Vec<Vector>,
    pub residuals: Residuals,
    pub trace: Trace,
    pub status: Status,
    pub iterations: usize,
    pub steps: StepSizes,
    /// `max_i h_i`.
    pub h: f64,
    /// `τ̄(MᵀM)`.
    pub tau: f64,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// A validated problem together with its step sizes.
#[derive(Debug, Clone)]
pub struct Ddpg<'p> {
    problem: &'p ProblemInstance,
    steps: StepSizes,
    h: f64,
    tau: f64,
}

impl<'p> Ddpg<'p> {
    /// Validates the instance, computes `h` and `τ̄(MᵀM)`, and fixes the step sizes:
    /// `c` if given (checked against the step-size rule), else `1/(h + γτ)`.
    pub fn new(
        problem: &'p ProblemInstance,
        gamma: f64,
        c: Option<f64>,
    ) -> Result<Self, SolverError> {
        let report = problem.validate();
        if !report.is_ok() {
            return Err(SolverError::InvalidProblem(report));
        }
        let mut h = 0.0f64;
        for a in &problem.agents {
            h = h.max(lipschitz_h(&a.a_block, a.f.sigma())?);
        }
        let tau = spectral_radius_or_bound(&problem.graph).value;
        let steps = match c {
            Some(c) => {
                let s = StepSizes { c, gamma };
                s.validate(h, tau)?;
                s
            }
            None => suggest_step_sizes(h, tau, gamma)?,
        };
        Ok(Ddpg {
            problem,
            steps,
            h,
            tau,
        })
    }

    pub fn problem(&self) -> &ProblemInstance {
        self.problem
    }

    pub fn steps(&self) -> StepSizes {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// One synchronous round: all λ-updates from time-`t` data, then all ξ-updates
    /// from the new θ. Agents are processed in parallel; the result does not depend
    /// on scheduling.
    pub fn iterate(&self, state: &DualState) -> Result<DualState, SolverError> {
        let p = self.problem;
        let g = &p.graph;
        let lambda = (0..p.agents.len())
            .into_par_iter()
            .map(|i| {
                let nb = g.neighbors(i);
                let neighbors: Vec<&AgentDual> = nb.all.iter().map(|&j| &state.lambda[j]).collect();
                let owned: Vec<&Vector> = nb.owned.iter().map(|&(_, k)| &state.xi[k].xi).collect();
                let incoming: Vec<&Vector> =
                    nb.incoming.iter().map(|&(_, k)| &state.xi[k].xi).collect();
                let inputs = LocalInputs {
                    neighbors: &neighbors,
                    owned_xi: &owned,
                    incoming_xi: &incoming,
                };
                lambda_update(&p.agents[i], &p.b, &state.lambda[i], inputs, &self.steps)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gamma = self.steps.gamma;
        let xi = state
            .xi
            .par_iter()
            .map(|e| EdgeMultiplier {
                owner: e.owner,
                peer: e.peer,
                xi: xi_update(&e.xi, &lambda[e.owner].theta, &lambda[e.peer].theta, gamma),
            })
            .collect();
        Ok(DualState { lambda, xi })
    }

    fn recover(&self, lambda: &[AgentDual]) -> Result<Vec<Vector>, SolverError> {
        Ok(self
            .problem
            .agents
            .par_iter()
            .zip(lambda.par_iter())
            .map(|(a, l)| primal_recovery(a, l))
            .collect::<Result<Vec<_>, _>>()?)
    }
}

/// Runs from `λ⁰ = 0`, `ξ⁰ = 0`.
pub fn solve(problem: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    solve_from(problem, config, DualState::zeros(problem))
}

/// Iterates until consensus residual, primal residual and step norm are all within
/// tolerance, or `max_iter` rounds have run. Exhausting the budget is not an error:
/// the result carries `Status::MaxIterations` and the full trace.
pub fn solve_from(
    problem: &ProblemInstance,
    config: &SolverConfig,
    initial: DualState,
) -> Result<SolveResult, SolverError> {
    let ddpg = Ddpg::new(problem, config.gamma, config.c)?;
    initial.check_shape(problem)?;
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SolverError::ThreadPool(e.to_string()))?;
            pool.install(|| run(&ddpg, config, initial))
        }
        None => run(&ddpg, config, initial),
    }
}

fn run(ddpg: &Ddpg<'_>, config: &SolverConfig, initial: DualState) -> Result<SolveResult, SolverError> {
    let problem = ddpg.problem;
    let dims = problem.dims();
    let started = Instant::now();
    let mut trace = Trace::default();
    let mut state = initial;
    let mut ergodic = ErgodicAverage::new(dims.n, dims.b, dims.m);

    let snapshot = |state: &DualState, iter: usize, step_norm: f64, x: &[Vector]| -> Result<TraceRow, SolverError> {
        let dual = eval_dual_objective(problem, &state.lambda)?;
        Ok(TraceRow {
            iter,
            phi: dual.total,
            smooth_dual: dual.smooth,
            consensus: consensus_residual(problem, &state.lambda),
            primal: primal_residual(problem, x),
            step_norm,
            wall_time: started.elapsed().as_secs_f64(),
            state: config.record_states.then(|| state.clone()),
        })
    };

    let x0 = ddpg.recover(&state.lambda)?;
    trace.rows.push(snapshot(&state, 0, 0.0, &x0)?);

    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    let mut x = x0;
    let mut consensus = consensus_residual(problem, &state.lambda);
    let mut primal = primal_residual(problem, &x);
    let within = |consensus: f64, primal: f64, step: f64| {
        consensus <= config.tol_consensus && primal <= config.tol_primal && step <= config.tol_step
    };
    for t in 0..config.max_iter {
        let next = ddpg.iterate(&state)?;
        let step_norm = next
            .lambda
            .iter()
            .zip(&state.lambda)
            .map(|(a, b)| (&a.theta - &b.theta).norm_squared() + (&a.mu - &b.mu).norm_squared())
            .sum::<f64>()
            .sqrt();
        // A start that already satisfies the rule and is not moved by the iteration
        // counts as converged after zero rounds.
        if t == 0 && within(consensus, primal, step_norm) {
            status = Status::Converged;
            break;
        }
        state = next;
        ergodic.push(&state.lambda);
        iterations = t + 1;

        x = ddpg.recover(&state.lambda)?;
        consensus = consensus_residual(problem, &state.lambda);
        primal = primal_residual(problem, &x);
        let done = within(consensus, primal, step_norm);
        let cadence = config.trace_every > 0 && iterations % config.trace_every == 0;
        if cadence || done || iterations == config.max_iter {
            trace.rows.push(snapshot(&state, iterations, step_norm, &x)?);
        }
        if done {
            status = Status::Converged;
            break;
        }
    }

    let residuals = Residuals {
        consensus,
        primal,
        dual: eval_dual_objective(problem, &state.lambda)?,
    };
    let lambda_ergodic = if ergodic.count() > 0 {
        ergodic.mean().to_vec()
    } else {
        state.lambda.clone()
    };
    let x_ergodic = ddpg.recover(&lambda_ergodic)?;
    Ok(SolveResult {
        state,
        x,
        lambda_ergodic,
        x_ergodic,
        residuals,
        trace,
        status,
        iterations,
        steps: ddpg.steps,
        h: ddpg.h,
        tau: ddpg.tau,
    })
}
