//! Electricity-market social welfare benchmark.
//!
//! Utility companies (UCs) pay `δ x² + ς x + β` to generate `x ∈ [0, cap]`; users gain
//! `χ x − π x²` from consuming `x ∈ [0, cap]`. The balance `Σ x_UC = Σ x_user` is the
//! single coupling row `A = [1ᵀ, −1ᵀ]`, `b = 0`.
//!
//! The user utility is flat beyond `χ/(2π)`. Every tabulated cap sits just below that
//! kink, so only the quadratic branch is reachable and user agents get the strongly
//! convex cost `π x² − χ x` with `σ = 2π`.

use super::{AgentProblem, ProblemError, ProblemInstance};
use crate::functions::{NonsmoothFunction, SmoothFunction};
use crate::topology::Graph;
use crate::{Matrix, Vector};

/// Reported optimal dispatch `[UC1, UC2, user1, user2, user3]`, rounded to one decimal.
pub const REPORTED_X: [f64; 5] = [0.0, 150.0, 48.5, 50.2, 51.3];
/// Reported consensus value of every `θ_i`.
pub const REPORTED_ETA: f64 = -8.1;
/// Reported `μ` at the optimum.
pub const REPORTED_MU: [f64; 5] = [-0.61, 2.34, 0.0, 0.0, 0.0];
/// Value the published figure shows for the dual objective. It matches the smooth part
/// `Σ p_i(λ*)` only; the full objective also carries the support terms.
pub const REPORTED_PHI_FIGURE: f64 = 756.53;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityCompany {
    pub delta: f64,
    pub linear: f64,
    pub constant: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyUser {
    pub chi: f64,
    pub pi: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub companies: Vec<UtilityCompany>,
    pub users: Vec<EnergyUser>,
}

impl MarketParams {
    /// Two UCs and three users from the benchmark's parameter table.
    pub fn table_one() -> Self {
        let uc = |delta, linear, capacity| UtilityCompany {
            delta,
            linear,
            constant: 0.0,
            capacity,
        };
        let user = |chi, pi, capacity| EnergyUser { chi, pi, capacity };
        MarketParams {
            companies: vec![uc(0.0031, 8.71, 150.0), uc(0.0074, 3.53, 150.0)],
            users: vec![
                user(17.17, 0.0935, 91.79),
                user(12.28, 0.0417, 147.29),
                user(18.42, 0.1007, 91.41),
            ],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.companies.len() + self.users.len()
    }

    fn check(&self) -> Result<(), ProblemError> {
        let bad = |field: String, message: &str| ProblemError::Invalid {
            field,
            message: message.to_string(),
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        for (i, c) in self.companies.iter().enumerate() {
            if !positive(c.delta) {
                return Err(bad(format!("uc {}.delta", i + 1), "must be positive and finite"));
            }
            if !positive(c.capacity) {
                return Err(bad(format!("uc {}.capacity", i + 1), "must be positive and finite"));
            }
        }
        for (j, u) in self.users.iter().enumerate() {
            if !positive(u.pi) {
                return Err(bad(format!("user {}.pi", j + 1), "must be positive and finite"));
            }
            if !positive(u.capacity) {
                return Err(bad(format!("user {}.capacity", j + 1), "must be positive and finite"));
            }
        }
        if self.companies.is_empty() || self.users.is_empty() {
            return Err(bad("market".into(), "needs at least one UC and one user"));
        }
        Ok(())
    }
}

/// Communication graph of the benchmark: UC1, UC2, user1, user2, user3 as agents 1..5
/// with edges (1,2), (1,3), (2,3), (3,4), (4,5).
pub fn market_topology() -> Graph {
    Graph::from_one_based(5, &[(1, 2), (1, 3), (2, 3), (3, 4), (4, 5)])
        .expect("static market topology is valid")
}

/// Builds the market instance. Agents are ordered UCs first, then users. Without an
/// explicit graph the benchmark topology is used, which requires 2 UCs and 3 users.
pub fn build_market(
    params: &MarketParams,
    graph: Option<Graph>,
) -> Result<ProblemInstance, ProblemError> {
    params.check()?;
    let n = params.n_agents();
    let graph = match graph {
        Some(g) => g,
        None if params.companies.len() == 2 && params.users.len() == 3 => market_topology(),
        None => {
            return Err(ProblemError::Invalid {
                field: "topology".into(),
                message: format!("no default topology for {n} agents"),
            })
        }
    };
    let kappa = 1.0 / n as f64;
    let mut agents = Vec::with_capacity(n);
    for c in &params.companies {
        agents.push(AgentProblem::new(
            SmoothFunction::scalar_quadratic(c.delta, c.linear, c.constant)?,
            NonsmoothFunction::interval(0.0, c.capacity)?,
            Matrix::from_element(1, 1, 1.0),
            kappa,
        ));
    }
    for u in &params.users {
        agents.push(AgentProblem::new(
            SmoothFunction::scalar_quadratic(u.pi, -u.chi, 0.0)?,
            NonsmoothFunction::interval(0.0, u.capacity)?,
            Matrix::from_element(1, 1, -1.0),
            kappa,
        ));
    }
    ProblemInstance::new(agents, Vector::zeros(1), graph)
}
