//! The DDPG iteration on the dual problem `min Φ(λ) s.t. Mλ = 0`.
//!
//! One round, for every agent `i` in parallel and from time-`t` data only:
//!
//! ```text
//! θ_i ← θ_i − c (∇_θ p_i(λ_i) + Σ_{j∈S_i} ξ_ij − Σ_{j∈S_i^♯} ξ_ji + γ Σ_{j∈V_i} (θ_i − θ_j))
//! μ_i ← w − c · prox^{1/c}_{g_i + I_{X_i}}(w / c),   w = μ_i − c ∇_μ p_i(λ_i)
//! ```
//!
//! then, for every owned edge, `ξ_ij ← ξ_ij + γ (θ_i − θ_j)` with the new `θ`.

mod diagnostics;
mod engine;
mod kernel;
mod steps;
mod trace;

use thiserror::Error;

use crate::functions::FunctionError;
use crate::problems::{ProblemInstance, ValidationReport};
use crate::topology::TopologyError;
use crate::Vector;

pub use diagnostics::{
    ergodic_gap_bound, eval_dual_objective, kkt_residual, lyapunov, residuals, DualObjective,
    ErgodicAverage, KktResidual, Residuals, SaddlePoint,
};
pub use engine::{solve, solve_from, Ddpg, SolveResult, SolverConfig, Status};
pub use kernel::{
    grad_p, lambda_update, lipschitz_h, p_value, primal_recovery, xi_update, LocalGradient,
    LocalInputs,
};
pub use steps::{suggest_step_sizes, validate_step_sizes, StepSizes};
pub use trace::{Trace, TraceRow, TraceWriter};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("instance failed validation:\n{0}")]
    InvalidProblem(ValidationReport),
    #[error("step sizes rejected: 1/c = {inv_c} < h + γτ = {bound}")]
    StepSizeRejected { inv_c: f64, bound: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("state does not match the problem: {0}")]
    StateMismatch(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Local dual variables `λ_i = (θ_i, μ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDual {
    /// Local estimate of the coupling multiplier, in `ℝ^B`.
    pub theta: Vector,
    /// Multiplier of the split `x_i = z_i`, in `ℝ^M`.
    pub mu: Vector,
}

impl AgentDual {
    pub fn zeros(b: usize, m: usize) -> Self {
        AgentDual {
            theta: Vector::zeros(b),
            mu: Vector::zeros(m),
        }
    }

    pub fn new(theta: Vector, mu: Vector) -> Self {
        AgentDual { theta, mu }
    }

    /// Stacked `[θ; μ]`.
    pub fn stacked(&self) -> Vector {
        Vector::from_iterator(
            self.theta.len() + self.mu.len(),
            self.theta.iter().chain(self.mu.iter()).copied(),
        )
    }

    pub fn from_stacked(v: &Vector, b: usize) -> Self {
        AgentDual {
            theta: v.rows(0, b).into_owned(),
            mu: v.rows(b, v.len() - b).into_owned(),
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.theta.norm_squared() + self.mu.norm_squared()
    }
}

/// Multiplier `ξ_ij` of the agreement `θ_i = θ_j`, stored by the owner `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMultiplier {
    pub owner: usize,
    pub peer: usize,
    pub xi: Vector,
}

/// Full iterate `(λ, ξ)`; `xi` follows the canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<AgentDual>,
    pub xi: Vec<EdgeMultiplier>,
}

impl DualState {
    /// `λ = 0`, `ξ = 0`.
    pub fn zeros(problem: &ProblemInstance) -> Self {
        let d = problem.dims();
        DualState {
            lambda: vec![AgentDual::zeros(d.b, d.m); d.n],
            xi: problem
                .graph
                .edges()
                .iter()
                .map(|e| EdgeMultiplier {
                    owner: e.lo,
                    peer: e.hi,
                    xi: Vector::zeros(d.b),
                })
                .collect(),
        }
    }

    /// Stacked `λ` with blocks `(θ_i, μ_i)` in agent order.
    pub fn stacked_lambda(&self) -> Vec<f64> {
        stack_lambda(&self.lambda)
    }

    /// Stacked `ξ` in canonical edge order.
    pub fn stacked_xi(&self) -> Vec<f64> {
        self.xi.iter().flat_map(|e| e.xi.iter().copied()).collect()
    }

    pub fn check_shape(&self, problem: &ProblemInstance) -> Result<(), SolverError> {
        let d = problem.dims();
        if self.lambda.len() != d.n {
            return Err(SolverError::StateMismatch(format!(
                "{} agent duals for {} agents",
                self.lambda.len(),
                d.n
            )));
        }
        if let Some(i) = self
            .lambda
            .iter()
            .position(|l| l.theta.len() != d.b || l.mu.len() != d.m)
        {
            return Err(SolverError::StateMismatch(format!(
                "agent {} dual has wrong dimensions",
                i + 1
            )));
        }
        let edges = problem.graph.edges();
        if self.xi.len() != edges.len()
            || self
                .xi
                .iter()
                .zip(edges)
                .any(|(x, e)| x.owner != e.lo || x.peer != e.hi || x.xi.len() != d.b)
        {
            return Err(SolverError::StateMismatch(
                "edge multipliers do not follow the canonical edge list".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn stack_lambda(lambda: &[AgentDual]) -> Vec<f64> {
    lambda
        .iter()
        .flat_map(|l| l.theta.iter().chain(l.mu.iter()).copied())
        .collect()
}
