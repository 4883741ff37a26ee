//! Per-agent computations. Everything here reads one agent's data plus the values it
//! receives from neighbors, so the same code serves the monolithic solver and the
//! message-passing engine.

use nalgebra::SymmetricEigen;

use super::{AgentDual, SolverError, StepSizes};
use crate::functions::FunctionError;
use crate::problems::AgentProblem;
use crate::{Matrix, Vector};

/// Lipschitz constant `h_i = ‖H_i‖² / σ_i` of `∇p_i`, with `H_i = [−A_iᵀ, −I_M]`.
///
/// `H_i H_iᵀ = A_iᵀA_i + I_M`, so `‖H_i‖² = ‖A_i‖₂² + 1`.
pub fn lipschitz_h(a_block: &Matrix, sigma: f64) -> Result<f64, SolverError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(SolverError::Precondition(format!(
            "strong convexity modulus must be positive, got {sigma}"
        )));
    }
    let gram = if a_block.nrows() <= a_block.ncols() {
        a_block * a_block.transpose()
    } else {
        a_block.transpose() * a_block
    };
    let a_sq = if gram.is_empty() {
        0.0
    } else {
        SymmetricEigen::new(gram).eigenvalues.max().max(0.0)
    };
    Ok((a_sq + 1.0) / sigma)
}

/// `H_i λ_i = −A_iᵀθ_i − μ_i`.
fn h_apply(agent: &AgentProblem, lambda: &AgentDual) -> Vector {
    -(agent.a_block.transpose() * &lambda.theta) - &lambda.mu
}

/// Gradient of `p_i(λ_i) = f_i^◇(H_iλ_i) + κ_i bᵀθ_i`, split into blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGradient {
    /// `−A_i x̂ + κ_i b`.
    pub theta: Vector,
    /// `−x̂`.
    pub mu: Vector,
    /// `x̂ = ∇f_i^◇(H_iλ_i)`.
    pub x_hat: Vector,
}

pub fn grad_p(
    agent: &AgentProblem,
    b: &Vector,
    lambda: &AgentDual,
) -> Result<LocalGradient, FunctionError> {
    let x_hat = agent.f.conjugate_gradient(&h_apply(agent, lambda))?;
    Ok(LocalGradient {
        theta: b * agent.kappa - &agent.a_block * &x_hat,
        mu: -&x_hat,
        x_hat,
    })
}

/// `p_i(λ_i) = f_i^◇(H_iλ_i) + κ_i bᵀθ_i`.
pub fn p_value(agent: &AgentProblem, b: &Vector, lambda: &AgentDual) -> Result<f64, FunctionError> {
    Ok(agent.f.conjugate_value(&h_apply(agent, lambda))? + agent.kappa * b.dot(&lambda.theta))
}

/// `x_i = argmin f_i(x) − xᵀH_iλ_i`.
pub fn primal_recovery(agent: &AgentProblem, lambda: &AgentDual) -> Result<Vector, FunctionError> {
    agent.f.conjugate_gradient(&h_apply(agent, lambda))
}

/// What agent `i` may read in the λ-phase. Each list is ordered by peer index.
#[derive(Debug, Clone, Copy)]
pub struct LocalInputs<'a> {
    /// `λ_j^t` for `j ∈ V_i`.
    pub neighbors: &'a [&'a AgentDual],
    /// `ξ_ij^t` for `j ∈ S_i`.
    pub owned_xi: &'a [&'a Vector],
    /// `ξ_ji^t` for `j ∈ S_i^♯`.
    pub incoming_xi: &'a [&'a Vector],
}

/// One λ-update for agent `i`.
///
/// Only the μ block goes through a prox (the nonsmooth term depends on `μ_i` alone);
/// the θ block is a plain gradient step.
pub fn lambda_update(
    agent: &AgentProblem,
    b: &Vector,
    own: &AgentDual,
    inputs: LocalInputs<'_>,
    steps: &StepSizes,
) -> Result<AgentDual, FunctionError> {
    let StepSizes { c, gamma } = *steps;
    let grad = grad_p(agent, b, own)?;

    let mut direction = grad.theta;
    for xi in inputs.owned_xi {
        direction += *xi;
    }
    for xi in inputs.incoming_xi {
        direction -= *xi;
    }
    for nb in inputs.neighbors {
        direction += (&own.theta - &nb.theta) * gamma;
    }
    let theta = &own.theta - direction * c;

    let w = &own.mu - grad.mu * c;
    let mu = agent.g.prox_conjugate(c, &w)?;
    Ok(AgentDual { theta, mu })
}

/// `ξ_ij ← ξ_ij + γ (θ_i − θ_j)` for an owned edge `i < j`.
pub fn xi_update(xi: &Vector, theta_owner: &Vector, theta_peer: &Vector, gamma: f64) -> Vector {
    xi + (theta_owner - theta_peer) * gamma
}
