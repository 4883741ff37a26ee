//! Seeded random instances with quadratic costs and box constraints, feasible by
//! construction: `b` is the coupling image of a point strictly inside every box.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AgentProblem, ProblemError, ProblemInstance};
use crate::functions::{NonsmoothFunction, SmoothFunction};
use crate::topology::Graph;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub agents: usize,
    pub m: usize,
    pub b: usize,
    /// Chance of each non-tree edge being added on top of a random spanning tree.
    pub extra_edge_prob: f64,
}

impl SyntheticSpec {
    pub fn scalar(agents: usize) -> Self {
        SyntheticSpec {
            agents,
            m: 1,
            b: 1,
            extra_edge_prob: 0.3,
        }
    }
}

/// Random connected graph: a random spanning tree plus independent extra edges.
pub fn random_connected_graph<R: Rng>(
    rng: &mut R,
    n: usize,
    extra_edge_prob: f64,
) -> Result<Graph, ProblemError> {
    let mut pairs = Vec::new();
    for v in 1..n {
        pairs.push((rng.random_range(0..v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !pairs.contains(&(a, b)) && rng.random_bool(extra_edge_prob) {
                pairs.push((a, b));
            }
        }
    }
    Ok(Graph::new(n, &pairs)?)
}

pub fn random_instance<R: Rng>(rng: &mut R, spec: &SyntheticSpec) -> Result<ProblemInstance, ProblemError> {
    if spec.agents == 0 {
        return Err(ProblemError::NoAgents);
    }
    let graph = random_connected_graph(rng, spec.agents, spec.extra_edge_prob)?;
    let mut agents = Vec::with_capacity(spec.agents);
    let mut b = Vector::zeros(spec.b);
    for _ in 0..spec.agents {
        // Diagonally dominant P keeps the condition number moderate.
        let mut p = Matrix::zeros(spec.m, spec.m);
        for r in 0..spec.m {
            for c in r + 1..spec.m {
                let v = rng.random_range(-0.1..0.1);
                p[(r, c)] = v;
                p[(c, r)] = v;
            }
            p[(r, r)] = rng.random_range(0.5..2.0) + 0.1 * spec.m as f64;
        }
        let q = Vector::from_fn(spec.m, |_, _| rng.random_range(-5.0..5.0));
        let lo = Vector::from_fn(spec.m, |_, _| rng.random_range(-3.0..0.0));
        let hi = Vector::from_fn(spec.m, |r, _| lo[r] + rng.random_range(1.0..4.0));
        let a = Matrix::from_fn(spec.b, spec.m, |_, _| {
            let mag = rng.random_range(0.5..1.5);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        });
        let interior = Vector::from_fn(spec.m, |r, _| {
            let t = rng.random_range(0.2..0.8);
            lo[r] + t * (hi[r] - lo[r])
        });
        b += &a * interior;
        agents.push(AgentProblem::new(
            SmoothFunction::quadratic(p, q, 0.0)?,
            NonsmoothFunction::box_indicator(lo, hi)?,
            a,
            1.0 / spec.agents as f64,
        ));
    }
    ProblemInstance::new(agents, b, graph)
}

/// `random_instance` driven by a ChaCha8 stream seeded with `seed`.
pub fn seeded_instance(seed: u64, spec: &SyntheticSpec) -> Result<ProblemInstance, ProblemError> {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), spec)
}
