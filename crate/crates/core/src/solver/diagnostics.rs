use super::kernel::{grad_p, p_value, primal_recovery};
use super::steps::StepSizes;
use super::{AgentDual, DualState, EdgeMultiplier, SolverError};
use crate::functions::ExtendedReal;
use crate::problems::{OracleSolution, ProblemInstance};
use crate::topology::{spectral_radius_or_bound, ConsensusOperator};
use crate::Vector;

/// `Φ(λ) = Σ_i p_i(λ_i) + q_i(μ_i)`, with the smooth part `P(λ) = Σ_i p_i(λ_i)` kept
/// separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualObjective {
    pub total: ExtendedReal,
    pub smooth: f64,
}

pub fn eval_dual_objective(
    problem: &ProblemInstance,
    lambda: &[AgentDual],
) -> Result<DualObjective, SolverError> {
    let mut smooth = 0.0;
    let mut support = ExtendedReal::Finite(0.0);
    for (a, l) in problem.agents.iter().zip(lambda) {
        smooth += p_value(a, &problem.b, l)?;
        support = support + a.g.support_value(&l.mu)?;
    }
    Ok(DualObjective {
        total: ExtendedReal::Finite(smooth) + support,
        smooth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `‖Mλ‖`.
    pub consensus: f64,
    /// `‖Σ_i A_i x̂_i − b‖` at the recovered primal point.
    pub primal: f64,
    pub dual: DualObjective,
}

/// `‖Mλ‖`, summed edge by edge.
pub(crate) fn consensus_residual(problem: &ProblemInstance, lambda: &[AgentDual]) -> f64 {
    problem
        .graph
        .edges()
        .iter()
        .map(|e| (&lambda[e.lo].theta - &lambda[e.hi].theta).norm_squared())
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn primal_residual(problem: &ProblemInstance, x: &[Vector]) -> f64 {
    problem.coupling_residual(x).norm()
}

pub fn residuals(problem: &ProblemInstance, state: &DualState) -> Result<Residuals, SolverError> {
    state.check_shape(problem)?;
    let x = problem
        .agents
        .iter()
        .zip(&state.lambda)
        .map(|(a, l)| primal_recovery(a, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Residuals {
        consensus: consensus_residual(problem, &state.lambda),
        primal: primal_residual(problem, &x),
        dual: eval_dual_objective(problem, &state.lambda)?,
    })
}

/// Running mean `λ̄^T = (1/T) Σ_{t=1..T} λ^t`.
#[derive(Debug, Clone)]
pub struct ErgodicAverage {
    count: usize,
    mean: Vec<AgentDual>,
}

impl ErgodicAverage {
    pub fn new(n: usize, b: usize, m: usize) -> Self {
        ErgodicAverage {
            count: 0,
            mean: vec![AgentDual::zeros(b, m); n],
        }
    }

    pub fn push(&mut self, lambda: &[AgentDual]) {
        self.count += 1;
        let w = 1.0 / self.count as f64;
        for (m, l) in self.mean.iter_mut().zip(lambda) {
            m.theta += (&l.theta - &m.theta) * w;
            m.mu += (&l.mu - &m.mu) * w;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[AgentDual] {
        &self.mean
    }
}

/// A saddle point `(λ*, ξ*)` of the Lagrangian `Φ(λ) + ξᵀMλ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub lambda: Vec<AgentDual>,
    pub xi: Vec<EdgeMultiplier>,
}

impl SaddlePoint {
    /// Builds `(λ*, ξ*)` from a primal-dual solution: `θ_i* = η*`, `μ_i*` as given, and
    /// `ξ*` the minimum-norm solution of `(Mᵀξ)_θ = −∇_θ P(λ*)`, i.e.
    /// `(Qξ)_i = A_i x_i* − κ_i b`.
    pub fn from_oracle(
        problem: &ProblemInstance,
        sol: &OracleSolution,
    ) -> Result<Self, SolverError> {
        let d = problem.dims();
        let lambda: Vec<AgentDual> = sol
            .mu
            .iter()
            .map(|mu| AgentDual::new(sol.eta.clone(), mu.clone()))
            .collect();
        let r: Vec<Vector> = problem
            .agents
            .iter()
            .zip(&sol.x)
            .map(|(a, x)| &a.a_block * x - &problem.b * a.kappa)
            .collect();
        let op = ConsensusOperator::new(&problem.graph, d.b, d.m);
        let flows = op.min_norm_edge_flow(&r)?;
        let xi = problem
            .graph
            .edges()
            .iter()
            .zip(flows)
            .map(|(e, xi)| EdgeMultiplier {
                owner: e.lo,
                peer: e.hi,
                xi,
            })
            .collect();
        Ok(SaddlePoint { lambda, xi })
    }

    pub fn as_state(&self) -> DualState {
        DualState {
            lambda: self.lambda.clone(),
            xi: self.xi.clone(),
        }
    }
}

/// `‖d‖²_W` with `W = (1/2c) I − (γ/2) MᵀM`, for `d = λ* − λ`.
fn w_norm_sq(problem: &ProblemInstance, diff: &[AgentDual], steps: &StepSizes) -> f64 {
    let plain: f64 = diff.iter().map(AgentDual::norm_squared).sum();
    plain / (2.0 * steps.c) - 0.5 * steps.gamma * consensus_residual(problem, diff).powi(2)
}

fn lambda_diff(a: &[AgentDual], b: &[AgentDual]) -> Vec<AgentDual> {
    a.iter()
        .zip(b)
        .map(|(x, y)| AgentDual::new(&x.theta - &y.theta, &x.mu - &y.mu))
        .collect()
}

fn xi_dist_sq(a: &[EdgeMultiplier], b: &[EdgeMultiplier]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (&x.xi - &y.xi).norm_squared()).sum()
}

/// `a^t = ‖λ* − λ^t‖²_W + (1/2γ) ‖ξ* − ξ^t‖²`.
pub fn lyapunov(
    problem: &ProblemInstance,
    state: &DualState,
    saddle: &SaddlePoint,
    steps: &StepSizes,
) -> f64 {
    let d = lambda_diff(&saddle.lambda, &state.lambda);
    w_norm_sq(problem, &d, steps) + xi_dist_sq(&saddle.xi, &state.xi) / (2.0 * steps.gamma)
}

/// `Θ/(T+1)` with `Θ = ‖λ* − λ⁰‖²_W + (4/γ)‖ξ*‖² + (1/γ)‖ξ⁰‖²`. Bounds both
/// `|Φ(λ̄^{T+1}) − Φ(λ*)|` and `‖ξ*‖ ‖Mλ̄^{T+1}‖`, where `λ̄^{T+1}` is the mean of
/// `λ^1, …, λ^{T+1}`.
///
/// Fails when `W` is not positive semidefinite (`1/c < γτ`).
pub fn ergodic_gap_bound(
    problem: &ProblemInstance,
    initial: &DualState,
    saddle: &SaddlePoint,
    steps: &StepSizes,
    horizon: usize,
) -> Result<f64, SolverError> {
    let tau = spectral_radius_or_bound(&problem.graph).value;
    if 1.0 / steps.c < steps.gamma * tau {
        return Err(SolverError::StepSizeRejected {
            inv_c: 1.0 / steps.c,
            bound: steps.gamma * tau,
        });
    }
    let d = lambda_diff(&saddle.lambda, &initial.lambda);
    let xi_star: f64 = saddle.xi.iter().map(|e| e.xi.norm_squared()).sum();
    let xi_zero: f64 = initial.xi.iter().map(|e| e.xi.norm_squared()).sum();
    let theta = w_norm_sq(problem, &d, steps)
        + 4.0 * xi_star / steps.gamma
        + xi_zero / steps.gamma;
    Ok(theta / (horizon as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `‖λ − prox_{cQ}(λ − c(∇P(λ) + Mᵀξ))‖`.
    pub stationarity: f64,
    /// `‖Mλ‖`.
    pub consensus: f64,
}

/// Fixed-point residual of the saddle conditions at `(λ, ξ)` with prox step `c`.
pub fn kkt_residual(
    problem: &ProblemInstance,
    state: &DualState,
    c: f64,
) -> Result<KktResidual, SolverError> {
    state.check_shape(problem)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SolverError::Precondition(format!("c must be positive, got {c}")));
    }
    let d = problem.dims();
    let op = ConsensusOperator::new(&problem.graph, d.b, d.m);
    let mt_xi = op.apply_transpose(&state.stacked_xi())?;
    let block = d.b + d.m;
    let mut total = 0.0;
    for (i, (a, l)) in problem.agents.iter().zip(&state.lambda).enumerate() {
        let g = grad_p(a, &problem.b, l)?;
        let coupling = Vector::from_column_slice(&mt_xi[i * block..i * block + d.b]);
        let theta_move = (g.theta + coupling) * c;
        let w = &l.mu - g.mu * c;
        let mu_next = a.g.prox_conjugate(c, &w)?;
        total += theta_move.norm_squared() + (&l.mu - mu_next).norm_squared();
    }
    Ok(KktResidual {
        stationarity: total.sqrt(),
        consensus: consensus_residual(problem, &state.lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_market, centralized_oracle, MarketParams};

    #[test]
    fn ergodic_mean_is_arithmetic_mean() {
        let mut avg = ErgodicAverage::new(1, 1, 1);
        for v in [1.0, 2.0, 6.0] {
            let l = AgentDual::new(Vector::from_element(1, v), Vector::from_element(1, -v));
            avg.push(&[l]);
        }
        assert_eq!(avg.count(), 3);
        assert!((avg.mean()[0].theta[0] - 3.0).abs() < 1e-15);
        assert!((avg.mean()[0].mu[0] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn market_saddle_point_is_stationary() {
        let p = build_market(&MarketParams::table_one(), None).unwrap();
        let sol = centralized_oracle(&p, 1e-12).unwrap();
        let sp = SaddlePoint::from_oracle(&p, &sol).unwrap();
        let k = kkt_residual(&p, &sp.as_state(), 1e-3).unwrap();
        assert!(k.stationarity < 1e-8, "{k:?}");
        assert!(k.consensus < 1e-12);
        let steps = StepSizes { c: 1e-3, gamma: 1.0 };
        assert!(lyapunov(&p, &sp.as_state(), &sp, &steps).abs() < 1e-20);
    }

    #[test]
    fn market_dual_value_matches_primal() {
        let p = build_market(&MarketParams::table_one(), None).unwrap();
        let sol = centralized_oracle(&p, 1e-12).unwrap();
        let sp = SaddlePoint::from_oracle(&p, &sol).unwrap();
        let phi = eval_dual_objective(&p, &sp.lambda).unwrap();
        let total = phi.total.finite().unwrap();
        assert!((total + sol.objective).abs() < 1e-6, "{total} vs {}", sol.objective);
        assert!(phi.smooth < total);
    }

    #[test]
    fn gap_bound_rejects_indefinite_weight() {
        let p = build_market(&MarketParams::table_one(), None).unwrap();
        let zero = DualState::zeros(&p);
        let sp = SaddlePoint {
            lambda: zero.lambda.clone(),
            xi: zero.xi.clone(),
        };
        let bad = StepSizes { c: 1.0, gamma: 1.0 };
        assert!(ergodic_gap_bound(&p, &zero, &sp, &bad, 10).is_err());
        let ok = StepSizes { c: 0.1, gamma: 1.0 };
        assert_eq!(ergodic_gap_bound(&p, &zero, &sp, &ok, 10).unwrap(), 0.0);
    }
}
