//! Problem instances `min Σ F_i(x_i) s.t. x_i ∈ X_i, Σ A_i x_i = b` and their checks.

mod io;
mod market;
mod oracle;
mod synthetic;

use std::fmt;

use thiserror::Error;

use crate::functions::{FunctionError, NonsmoothFunction, SmoothFunction};
use crate::topology::{Graph, TopologyError};
use crate::{Matrix, Vector};

pub use io::{load_instance, parse_instance, save_instance, write_instance};
pub use market::{
    build_market, market_topology, MarketParams, UtilityCompany, EnergyUser, REPORTED_ETA,
    REPORTED_MU, REPORTED_PHI_FIGURE, REPORTED_X,
};
pub use oracle::{centralized_oracle, OracleSolution};
pub use synthetic::{random_connected_graph, random_instance, seeded_instance, SyntheticSpec};

/// Tolerance on `Σ κ_i = 1`.
pub const KAPPA_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error("instance has no agents")]
    NoAgents,
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("centralized oracle did not converge after {iterations} iterations (residual {residual:e})")]
    OracleNotConverged { iterations: usize, residual: f64 },
}

/// One agent's data: smooth part, nonsmooth part (with its local set), coupling block
/// `A_i ∈ ℝ^{B×M}` and weight `κ_i` on the `bᵀθ_i` term.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentProblem {
    pub f: SmoothFunction,
    pub g: NonsmoothFunction,
    pub a_block: Matrix,
    pub kappa: f64,
}

impl AgentProblem {
    pub fn new(f: SmoothFunction, g: NonsmoothFunction, a_block: Matrix, kappa: f64) -> Self {
        AgentProblem {
            f,
            g,
            a_block,
            kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub agents: Vec<AgentProblem>,
    pub b: Vector,
    pub graph: Graph,
}

/// Problem dimensions `(N, M, B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub b: usize,
}

impl ProblemInstance {
    /// Assembles an instance; structural checks are left to [`ProblemInstance::validate`].
    pub fn new(agents: Vec<AgentProblem>, b: Vector, graph: Graph) -> Result<Self, ProblemError> {
        if agents.is_empty() {
            return Err(ProblemError::NoAgents);
        }
        Ok(ProblemInstance { agents, b, graph })
    }

    /// Sets every `κ_i = 1/N`.
    pub fn with_uniform_kappa(mut self) -> Self {
        let w = 1.0 / self.agents.len() as f64;
        self.agents.iter_mut().for_each(|a| a.kappa = w);
        self
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.agents.len(),
            m: self.agents[0].f.dim(),
            b: self.b.len(),
        }
    }

    /// Global coupling residual `Σ A_i x_i − b`.
    pub fn coupling_residual(&self, x: &[Vector]) -> Vector {
        self.agents
            .iter()
            .zip(x)
            .fold(-self.b.clone(), |acc, (a, xi)| acc + &a.a_block * xi)
    }

    /// Primal objective `Σ f_i(x_i) + g_i(x_i)`; `None` if some `g_i` has no value oracle.
    pub fn primal_objective(&self, x: &[Vector]) -> Option<crate::ExtendedReal> {
        let mut total = crate::ExtendedReal::Finite(0.0);
        for (a, xi) in self.agents.iter().zip(x) {
            total = total + crate::ExtendedReal::Finite(a.f.value(xi)) + a.g.value(xi)?;
        }
        Some(total)
    }

    /// Checks the standing assumptions and returns one entry per check.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let Dims { n, m, b } = self.dims();

        let mut dim_issues = Vec::new();
        if b == 0 {
            dim_issues.push("coupling dimension B is 0; solve agents independently".to_string());
        }
        if self.graph.n_vertices() != n {
            dim_issues.push(format!(
                "graph has {} vertices but there are {n} agents",
                self.graph.n_vertices()
            ));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if a.f.dim() != m {
                dim_issues.push(format!("agent {}: f has dimension {}, expected {m}", i + 1, a.f.dim()));
            }
            if let Some(d) = a.g.dim_hint() {
                if d != m {
                    dim_issues.push(format!("agent {}: g has dimension {d}, expected {m}", i + 1));
                }
            }
            if a.a_block.shape() != (b, m) {
                dim_issues.push(format!(
                    "agent {}: A_i is {}x{}, expected {b}x{m}",
                    i + 1,
                    a.a_block.nrows(),
                    a.a_block.ncols()
                ));
            }
        }
        report.push("dimensions", issues_to_status(dim_issues));

        let connected = self.graph.n_vertices() == n && self.graph.is_connected();
        report.push(
            "connectivity",
            if connected {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail("agent graph is not connected".into())
            },
        );

        let sigma_issues: Vec<String> = self
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.f.sigma().is_nan() || a.f.sigma() <= 0.0)
            .map(|(i, a)| format!("agent {}: sigma = {}", i + 1, a.f.sigma()))
            .collect();
        report.push("strong convexity", issues_to_status(sigma_issues));

        let mut kappa_issues: Vec<String> = self
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| !(a.kappa >= 0.0 && a.kappa.is_finite()))
            .map(|(i, a)| format!("agent {}: kappa = {}", i + 1, a.kappa))
            .collect();
        let sum: f64 = self.agents.iter().map(|a| a.kappa).sum();
        if (sum - 1.0).abs() > KAPPA_SUM_TOL {
            kappa_issues.push(format!("kappa sums to {sum}, expected 1"));
        }
        report.push("kappa weights", issues_to_status(kappa_issues));

        report.push("slater", self.slater_surrogate());
        report
    }

    /// Interval feasibility of `Σ a_i x_i = b` for scalar agents with interval sets:
    /// some point of the relative interior of the product set satisfies the constraint.
    fn slater_surrogate(&self) -> CheckStatus {
        let Dims { m, b, .. } = self.dims();
        if m != 1 || b != 1 {
            return CheckStatus::NotChecked("only scalar agents with one coupling row".into());
        }
        let (mut lo_sum, mut hi_sum) = (0.0f64, 0.0f64);
        let mut all_degenerate = true;
        for a in &self.agents {
            if a.a_block.shape() != (1, 1) {
                return CheckStatus::NotChecked("dimension mismatch".into());
            }
            let (lo, hi) = match &a.g {
                NonsmoothFunction::BoxIndicator { lo, hi } => (lo[0], hi[0]),
                NonsmoothFunction::Zero => (f64::NEG_INFINITY, f64::INFINITY),
                _ => {
                    return CheckStatus::NotChecked(
                        "requires interval or unconstrained local sets".into(),
                    )
                }
            };
            all_degenerate &= lo == hi;
            let coef = a.a_block[(0, 0)];
            let (l, h) = if coef >= 0.0 {
                (coef * lo, coef * hi)
            } else {
                (coef * hi, coef * lo)
            };
            // 0 · ∞ occurs only for a zero coefficient; such agents do not move the sum.
            lo_sum += if l.is_nan() { 0.0 } else { l };
            hi_sum += if h.is_nan() { 0.0 } else { h };
        }
        let target = self.b[0];
        let ok = if all_degenerate || lo_sum == hi_sum {
            lo_sum <= target && target <= hi_sum
        } else {
            lo_sum < target && target < hi_sum
        };
        if ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail(format!(
                "b = {target} is not inside the reachable interval [{lo_sum}, {hi_sum}]"
            ))
        }
    }
}

fn issues_to_status(issues: Vec<String>) -> CheckStatus {
    if issues.is_empty() {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail(issues.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail(String),
    NotChecked(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, status: CheckStatus) {
        self.checks.push(Check { name, status });
    }

    /// True when no check failed (unchecked items do not count as failures).
    pub fn is_ok(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !matches!(c.status, CheckStatus::Fail(_)))
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks
            .iter()
            .filter(|c| matches!(c.status, CheckStatus::Fail(_)))
    }

    pub fn status(&self, name: &str) -> Option<&CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| &c.status)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            match &c.status {
                CheckStatus::Pass => writeln!(f, "  ok       {}", c.name)?,
                CheckStatus::Fail(why) => writeln!(f, "  FAILED   {}: {why}", c.name)?,
                CheckStatus::NotChecked(why) => writeln!(f, "  skipped  {}: {why}", c.name)?,
            }
        }
        Ok(())
    }
}
