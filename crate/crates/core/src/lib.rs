//! Distributed dual proximal gradient (DDPG) method for convex programs of the form
//!
//! ```text
//!   min  Σ_i f_i(x_i) + g_i(x_i)   s.t.  x_i ∈ X_i,  Σ_i A_i x_i = b
//! ```
//!
//! solved over a connected, undirected agent graph where every agent only talks to
//! its neighbors. Agents iterate on dual variables `λ_i = (θ_i, μ_i)`: `θ_i` is the
//! local copy of the coupling multiplier, `μ_i` prices the split `x_i = z_i`, and
//! per-edge multipliers `ξ_ij` enforce agreement of the `θ_i` across edges.
//!
//! Modules:
//! - [`topology`]: canonical edge order, incidence/consensus operator, Laplacian spectrum.
//! - [`functions`]: smooth and nonsmooth function catalog (conjugates, prox, Moreau).
//! - [`problems`]: instances, validation, the electricity-market benchmark, file IO and
//!   a centralized reference solver.
//! - [`solver`]: the DDPG iteration, step-size rule, diagnostics.
//! - [`netsim`]: neighbor-only synchronous message passing engine hosting the agents.

pub mod functions;
pub mod netsim;
pub mod problems;
pub mod solver;
pub mod topology;

pub use functions::{ExtendedReal, FunctionError, NonsmoothFunction, SmoothFunction};
pub use netsim::{Engine, InMemoryTransport, NetsimError, Transport};
pub use problems::{
    build_market, centralized_oracle, AgentProblem, MarketParams, OracleSolution,
    ProblemError, ProblemInstance, ValidationReport,
};
pub use solver::{
    solve, AgentDual, DualState, SolveResult, SolverConfig, SolverError, StepSizes, Trace,
};
pub use topology::{ConsensusOperator, Edge, Graph, TopologyError};

/// Dense column vector used for all per-agent quantities.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for coupling blocks and quadratic forms.
pub type Matrix = nalgebra::DMatrix<f64>;
