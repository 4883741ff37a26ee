//! Agent graph, edge ownership and the consensus operator `M = Qᵀ ⊗ K`.
//!
//! Vertices are 0-based internally; files and reports use 1-based agent labels.
//! Edges are kept in canonical order: by smaller endpoint, then by larger endpoint.
//! The smaller endpoint of an edge owns its multiplier `ξ`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("self-loop at vertex {}", .0 + 1)]
    SelfLoop(usize),
    #[error("duplicate edge ({}, {})", .0 + 1, .1 + 1)]
    DuplicateEdge(usize, usize),
    #[error("edge ({}, {}) references a vertex outside 1..={n}", .a + 1, .b + 1)]
    VertexOutOfRange { a: usize, b: usize, n: usize },
    #[error("dimension mismatch: expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("power iteration did not converge after {iterations} iterations")]
    SpectralNotConverged { iterations: usize },
    #[error("edge-flow solve did not converge after {iterations} iterations")]
    FlowNotConverged { iterations: usize },
}

/// Undirected edge with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub lo: usize,
    pub hi: usize,
}

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        Edge {
            lo: a.min(b),
            hi: a.max(b),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo + 1, self.hi + 1)
    }
}

/// Neighborhood of one agent.
///
/// `owned` lists `(peer, edge index)` for peers with a larger index (the set `S_i`),
/// `incoming` lists `(peer, edge index)` for peers with a smaller index (`S_i^♯`).
/// Both are sorted by peer, and `all` is their sorted union.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborSets {
    pub all: Vec<usize>,
    pub owned: Vec<(usize, usize)>,
    pub incoming: Vec<(usize, usize)>,
}

/// Sorts an edge list by the canonical rule and rejects self-loops and duplicates.
///
/// Pairs may be given in either orientation; `n` is the vertex count.
pub fn canonical_edge_order(
    n: usize,
    pairs: &[(usize, usize)],
) -> Result<Vec<Edge>, TopologyError> {
    let mut seen = BTreeSet::new();
    for &(a, b) in pairs {
        if a >= n || b >= n {
            return Err(TopologyError::VertexOutOfRange { a, b, n });
        }
        if a == b {
            return Err(TopologyError::SelfLoop(a));
        }
        let e = Edge::new(a, b);
        if !seen.insert(e) {
            return Err(TopologyError::DuplicateEdge(e.lo, e.hi));
        }
    }
    // Ord on Edge is lexicographic on (lo, hi), which is exactly the canonical rule.
    Ok(seen.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<NeighborSets>,
}

impl Graph {
    /// Builds a graph from 0-based vertex pairs in any order.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let edges = canonical_edge_order(n, pairs)?;
        let mut neighbors = vec![NeighborSets::default(); n];
        for (k, e) in edges.iter().enumerate() {
            neighbors[e.lo].owned.push((e.hi, k));
            neighbors[e.hi].incoming.push((e.lo, k));
        }
        for nb in &mut neighbors {
            nb.owned.sort_unstable();
            nb.incoming.sort_unstable();
            nb.all = nb
                .incoming
                .iter()
                .chain(nb.owned.iter())
                .map(|&(j, _)| j)
                .collect();
            nb.all.sort_unstable();
        }
        Ok(Graph {
            n,
            edges,
            neighbors,
        })
    }

    /// Builds a graph from 1-based vertex pairs, as written in problem files.
    pub fn from_one_based(n: usize, pairs: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let mut zero = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a == 0 || b == 0 {
                return Err(TopologyError::VertexOutOfRange {
                    a: a.wrapping_sub(1),
                    b: b.wrapping_sub(1),
                    n,
                });
            }
            zero.push((a - 1, b - 1));
        }
        Graph::new(n, &zero)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &NeighborSets {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].all.len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Incidence entry `Q[j, k]`: `+1` at the smaller endpoint of edge `k`, `-1` at the larger.
    pub fn incidence_entry(&self, j: usize, k: usize) -> i8 {
        let e = self.edges[k];
        if j == e.lo {
            1
        } else if j == e.hi {
            -1
        } else {
            0
        }
    }

    /// Dense `N × |E|` incidence matrix, row-major.
    pub fn incidence_matrix(&self) -> Vec<Vec<i8>> {
        let mut q = vec![vec![0i8; self.edges.len()]; self.n];
        for (k, e) in self.edges.iter().enumerate() {
            q[e.lo][k] = 1;
            q[e.hi][k] = -1;
        }
        q
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v].all {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Laplacian-vector product `L y = Q Qᵀ y` for a scalar field on vertices.
    pub fn laplacian_apply(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let nb = &self.neighbors[i].all;
            let mut acc = nb.len() as f64 * y[i];
            for &j in nb {
                acc -= y[j];
            }
            *o = acc;
        }
    }
}

/// Result of the Laplacian spectral radius computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    /// Largest Laplacian eigenvalue, equal to `τ̄(MᵀM)`.
    pub value: f64,
    /// `2 · max degree`, always an upper bound on `value`.
    pub degree_bound: f64,
    pub iterations: usize,
}

pub const SPECTRAL_TOL: f64 = 1e-8;
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Largest eigenvalue of the graph Laplacian by power iteration.
///
/// Stops when the eigen-residual `‖L v − ρ v‖` falls below `SPECTRAL_TOL · ρ`.
/// A start vector that lands in a lower invariant subspace is detected and the
/// iteration restarts from a different deterministic vector.
pub fn laplacian_spectral_radius(graph: &Graph) -> Result<SpectralRadius, TopologyError> {
    spectral_radius_with(graph, SPECTRAL_TOL, SPECTRAL_MAX_ITER)
}

/// Like [`laplacian_spectral_radius`], but falls back to the `2 · max degree` bound
/// when the iteration does not converge. The bound still satisfies the step-size rule.
pub fn spectral_radius_or_bound(graph: &Graph) -> SpectralRadius {
    laplacian_spectral_radius(graph).unwrap_or_else(|_| {
        let bound = 2.0 * graph.max_degree() as f64;
        SpectralRadius {
            value: bound,
            degree_bound: bound,
            iterations: SPECTRAL_MAX_ITER,
        }
    })
}

pub fn spectral_radius_with(
    graph: &Graph,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralRadius, TopologyError> {
    let n = graph.n_vertices();
    let degree_bound = 2.0 * graph.max_degree() as f64;
    if graph.n_edges() == 0 {
        return Ok(SpectralRadius {
            value: 0.0,
            degree_bound,
            iterations: 0,
        });
    }
    let mut total = 0;
    let mut best = 0.0f64;
    for restart in 0..4u64 {
        let mut v = start_vector(n, restart);
        let mut lv = vec![0.0; n];
        let rho = loop {
            if total >= max_iter {
                return Err(TopologyError::SpectralNotConverged { iterations: total });
            }
            total += 1;
            graph.laplacian_apply(&v, &mut lv);
            let rho = dot(&v, &lv);
            let res: f64 = v
                .iter()
                .zip(&lv)
                .map(|(a, b)| (b - rho * a).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = dot(&lv, &lv).sqrt();
            if norm == 0.0 || res <= tol * rho {
                break rho;
            }
            for (a, b) in v.iter_mut().zip(&lv) {
                *a = b / norm;
            }
        };
        // Power iteration only finds the top eigenvalue if the start vector has a
        // component along it; accept once a restart cannot improve the estimate.
        if rho <= best * (1.0 + tol) {
            break;
        }
        best = rho;
        if restart == 0 && rho >= degree_bound * (1.0 - tol) {
            break;
        }
    }
    Ok(SpectralRadius {
        value: best,
        degree_bound,
        iterations: total,
    })
}

fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    // Deterministic, irregular entries with zero mean (the all-ones kernel is useless).
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ seed.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    v.iter_mut().for_each(|a| *a -= mean);
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix-free consensus operator `M = Qᵀ ⊗ K` with `K = [I_B, 0]`.
///
/// Stacked dual vectors hold `N` blocks `(θ_i, μ_i)` of size `B + M`;
/// edge vectors hold `|E|` blocks of size `B`.
#[derive(Debug, Clone)]
pub struct ConsensusOperator<'g> {
    graph: &'g Graph,
    b_dim: usize,
    m_dim: usize,
}

impl<'g> ConsensusOperator<'g> {
    pub fn new(graph: &'g Graph, b_dim: usize, m_dim: usize) -> Self {
        ConsensusOperator {
            graph,
            b_dim,
            m_dim,
        }
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn block(&self) -> usize {
        self.b_dim + self.m_dim
    }

    pub fn dual_len(&self) -> usize {
        self.graph.n_vertices() * self.block()
    }

    pub fn edge_len(&self) -> usize {
        self.graph.n_edges() * self.b_dim
    }

    /// `M λ`: for edge `(i, j)`, `i < j`, the block `θ_i − θ_j`.
    pub fn apply(&self, lambda: &[f64]) -> Result<Vec<f64>, TopologyError> {
        check_len(self.dual_len(), lambda.len())?;
        let (bd, blk) = (self.b_dim, self.block());
        let mut out = Vec::with_capacity(self.edge_len());
        for e in self.graph.edges() {
            let (ti, tj) = (&lambda[e.lo * blk..][..bd], &lambda[e.hi * blk..][..bd]);
            out.extend(ti.iter().zip(tj).map(|(a, b)| a - b));
        }
        Ok(out)
    }

    /// `Mᵀ ξ`: scatters `+ξ_k` onto the θ block of the smaller endpoint and `−ξ_k`
    /// onto the larger one; μ blocks stay zero.
    pub fn apply_transpose(&self, xi: &[f64]) -> Result<Vec<f64>, TopologyError> {
        check_len(self.edge_len(), xi.len())?;
        let (bd, blk) = (self.b_dim, self.block());
        let mut out = vec![0.0; self.dual_len()];
        for (k, e) in self.graph.edges().iter().enumerate() {
            let x = &xi[k * bd..][..bd];
            for (r, v) in x.iter().enumerate() {
                out[e.lo * blk + r] += v;
                out[e.hi * blk + r] -= v;
            }
        }
        Ok(out)
    }

    /// Minimum-norm edge vector `ξ` with `(Q ⊗ I_B) ξ = r`, where `r` stacks one
    /// `B`-block per vertex and each component sums to zero over vertices.
    ///
    /// Solves `L y = r` by conjugate gradients (consistent on the range of `L`), then
    /// returns `ξ = (Qᵀ ⊗ I_B) y`.
    pub fn min_norm_edge_flow(&self, r: &[Vector]) -> Result<Vec<Vector>, TopologyError> {
        let n = self.graph.n_vertices();
        check_len(n, r.len())?;
        let bd = self.b_dim;
        let mut flows = vec![Vector::zeros(bd); self.graph.n_edges()];
        let max_iter = 50 * n + 100;
        for comp in 0..bd {
            let rhs: Vec<f64> = r.iter().map(|v| v[comp]).collect();
            let y = conjugate_gradient_laplacian(self.graph, &rhs, max_iter)?;
            for (k, e) in self.graph.edges().iter().enumerate() {
                flows[k][comp] = y[e.lo] - y[e.hi];
            }
        }
        Ok(flows)
    }
}

fn conjugate_gradient_laplacian(
    graph: &Graph,
    rhs: &[f64],
    max_iter: usize,
) -> Result<Vec<f64>, TopologyError> {
    let n = rhs.len();
    // Project out the kernel component so the system is consistent.
    let mean = rhs.iter().sum::<f64>() / n as f64;
    let b: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
    let scale = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if scale == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= 1e-15 * scale {
            return Ok(x);
        }
        graph.laplacian_apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= 1e-12 * scale {
        Ok(x)
    } else {
        Err(TopologyError::FlowNotConverged {
            iterations: max_iter,
        })
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), TopologyError> {
    if expected == actual {
        Ok(())
    } else {
        Err(TopologyError::DimensionMismatch { expected, actual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> Graph {
        Graph::new(5, &[(3, 4), (0, 1), (1, 2), (0, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn canonical_order_sorts_by_min_then_max() {
        let e = canonical_edge_order(3, &[(1, 2), (0, 2), (0, 1)]).unwrap();
        assert_eq!(e, vec![Edge::new(0, 1), Edge::new(0, 2), Edge::new(1, 2)]);
        let e = canonical_edge_order(2, &[(1, 0)]).unwrap();
        assert_eq!(e, vec![Edge::new(0, 1)]);
    }

    #[test]
    fn market_edges_follow_multiplier_listing() {
        // ξ12(UC,UC), ξ11(UC,user), ξ21(UC,user), ξ12(user,user), ξ23(user,user)
        let g = market();
        let labels: Vec<String> = g.edges().iter().map(|e| e.to_string()).collect();
        assert_eq!(labels, ["(1, 2)", "(1, 3)", "(2, 3)", "(3, 4)", "(4, 5)"]);
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert_eq!(
            canonical_edge_order(3, &[(1, 1)]),
            Err(TopologyError::SelfLoop(1))
        );
        assert_eq!(
            canonical_edge_order(3, &[(0, 1), (1, 0)]),
            Err(TopologyError::DuplicateEdge(0, 1))
        );
        assert!(matches!(
            canonical_edge_order(2, &[(0, 2)]),
            Err(TopologyError::VertexOutOfRange { .. })
        ));
        assert!(Graph::from_one_based(2, &[(0, 1)]).is_err());
    }

    #[test]
    fn incidence_of_path_and_single_edge() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.incidence_matrix(), vec![vec![1, 0], vec![-1, 1], vec![0, -1]]);
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.incidence_matrix(), vec![vec![1], vec![-1]]);
    }

    #[test]
    fn neighbor_sets_partition() {
        let g = market();
        let nb = g.neighbors(2);
        assert_eq!(nb.all, vec![0, 1, 3]);
        assert_eq!(nb.owned, vec![(3, 3)]);
        assert_eq!(nb.incoming, vec![(0, 1), (1, 2)]);
        let owned_total: usize = (0..5).map(|i| g.neighbors(i).owned.len()).sum();
        assert_eq!(owned_total, g.n_edges());
    }

    #[test]
    fn apply_m_small_cases() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let op = ConsensusOperator::new(&g, 1, 0);
        assert_eq!(op.apply(&[3.0, 1.0]).unwrap(), vec![2.0]);
        let op = ConsensusOperator::new(&g, 1, 1);
        // consensual θ, arbitrary μ
        assert_eq!(op.apply(&[4.0, 9.0, 4.0, -2.0]).unwrap(), vec![0.0]);
        assert_eq!(
            op.apply_transpose(&[5.0]).unwrap(),
            vec![5.0, 0.0, -5.0, 0.0]
        );
        assert!(matches!(
            op.apply(&[1.0]),
            Err(TopologyError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn connectivity() {
        assert!(Graph::new(3, &[(0, 1), (1, 2)]).unwrap().is_connected());
        assert!(!Graph::new(2, &[]).unwrap().is_connected());
        assert!(Graph::new(1, &[]).unwrap().is_connected());
        assert!(market().is_connected());
    }

    #[test]
    fn spectral_radius_simple_graphs() {
        let k2 = Graph::new(2, &[(0, 1)]).unwrap();
        let s = laplacian_spectral_radius(&k2).unwrap();
        assert!((s.value - 2.0).abs() < 1e-8);
        let star = Graph::new(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let s = laplacian_spectral_radius(&star).unwrap();
        assert!((s.value - 4.0).abs() < 1e-7 * 4.0);
        assert_eq!(s.degree_bound, 6.0);
    }

    #[test]
    fn spectral_fallback_uses_degree_bound() {
        let ring: Vec<_> = (0..40).map(|i| (i, (i + 1) % 40)).collect();
        let g = Graph::new(40, &ring).unwrap();
        assert!(matches!(
            spectral_radius_with(&g, 1e-14, 3),
            Err(TopologyError::SpectralNotConverged { iterations: 3 })
        ));
        let s = spectral_radius_or_bound(&g);
        assert!(s.value <= 4.0 + 1e-9);
    }

    #[test]
    fn edge_flow_reproduces_divergence() {
        let g = market();
        let op = ConsensusOperator::new(&g, 2, 1);
        let r: Vec<Vector> = [[1.0, -2.0], [0.5, 0.0], [-3.0, 1.0], [1.0, 0.5], [0.5, 0.5]]
            .iter()
            .map(|v| Vector::from_row_slice(v))
            .collect();
        let xi = op.min_norm_edge_flow(&r).unwrap();
        for (i, ri) in r.iter().enumerate() {
            let mut acc = Vector::zeros(2);
            for (k, x) in xi.iter().enumerate() {
                acc += x * f64::from(g.incidence_entry(i, k));
            }
            assert!((acc - ri).norm() < 1e-12);
        }
    }
}
