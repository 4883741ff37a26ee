//! Centralized reference solver for instances with quadratic `f_i` and box (or no)
//! local constraints. It shares no code with the distributed iteration: dual ascent on
//! the coupling multiplier `η`, with each agent's box-constrained quadratic solved by
//! projected gradient.

use nalgebra::SymmetricEigen;

use super::{ProblemError, ProblemInstance};
use crate::functions::{NonsmoothFunction, SmoothKind};
use crate::{Matrix, Vector};

const MAX_OUTER: usize = 1_000_000;
const MAX_INNER: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Optimal primal point per agent.
    pub x: Vec<Vector>,
    /// Coupling multiplier `η*`.
    pub eta: Vector,
    /// `μ_i* = −∇f_i(x_i*) − A_iᵀη*`, the multiplier of `x_i = z_i`.
    pub mu: Vec<Vector>,
    /// `Σ f_i(x_i*)` (the box indicators vanish at the solution).
    pub objective: f64,
    /// `‖Σ A_i x_i* − b‖`.
    pub residual: f64,
    pub iterations: usize,
}

struct LocalQp {
    p: Matrix,
    q: Vector,
    r: f64,
    lo: Vector,
    hi: Vector,
    step: f64,
}

impl LocalQp {
    /// `argmin xᵀPx + (q + shift)ᵀx` over the box, warm-started at `x`.
    fn solve(&self, shift: &Vector, x: &mut Vector) {
        let lin = &self.q + shift;
        let project = |v: Vector| {
            Vector::from_iterator(
                v.len(),
                v.iter()
                    .zip(self.lo.iter().zip(self.hi.iter()))
                    .map(|(a, (l, h))| a.clamp(*l, *h)),
            )
        };
        for _ in 0..MAX_INNER {
            let grad = &self.p * &*x * 2.0 + &lin;
            let next = project(&*x - grad * self.step);
            let moved = (&next - &*x).amax();
            *x = next;
            if moved <= 1e-15 * (1.0 + x.amax()) {
                break;
            }
        }
    }

    fn value(&self, x: &Vector) -> f64 {
        x.dot(&(&self.p * x)) + self.q.dot(x) + self.r
    }
}

/// Solves the primal problem directly until `‖Σ A_i x_i − b‖ ≤ tolerance`.
///
/// Requires quadratic `f_i` and `g_i` that is either zero or a box indicator.
pub fn centralized_oracle(
    instance: &ProblemInstance,
    tolerance: f64,
) -> Result<OracleSolution, ProblemError> {
    let dims = instance.dims();
    let mut locals = Vec::with_capacity(dims.n);
    let mut sigma_min = f64::INFINITY;
    let mut a_norm_sq = 0.0;
    for (i, a) in instance.agents.iter().enumerate() {
        let (p, q, r) = match a.f.kind() {
            SmoothKind::Quadratic { p, q, r } => (p.clone(), q.clone(), *r),
            SmoothKind::Custom(_) => {
                return Err(ProblemError::Unsupported(format!(
                    "oracle needs a quadratic f for agent {}",
                    i + 1
                )))
            }
        };
        let (lo, hi) = match &a.g {
            NonsmoothFunction::Zero => (
                Vector::from_element(dims.m, f64::NEG_INFINITY),
                Vector::from_element(dims.m, f64::INFINITY),
            ),
            NonsmoothFunction::BoxIndicator { lo, hi } => (lo.clone(), hi.clone()),
            _ => {
                return Err(ProblemError::Unsupported(format!(
                    "oracle needs a box or zero g for agent {}",
                    i + 1
                )))
            }
        };
        let eig = SymmetricEigen::new(p.clone()).eigenvalues;
        sigma_min = sigma_min.min(2.0 * eig.min());
        a_norm_sq += a.a_block.norm_squared();
        locals.push(LocalQp {
            step: 1.0 / (2.0 * eig.max()),
            p,
            q,
            r,
            lo,
            hi,
        });
    }

    // The dual gradient Σ A_i x_i(η) − b is Lipschitz with constant ‖A‖² / σ_min;
    // the Frobenius norm bounds ‖A‖².
    let step = sigma_min / a_norm_sq.max(f64::MIN_POSITIVE);
    let mut eta = Vector::zeros(dims.b);
    let mut x: Vec<Vector> = locals
        .iter()
        .map(|l| {
            Vector::from_iterator(
                dims.m,
                l.lo.iter().zip(l.hi.iter()).map(|(a, b)| 0.0f64.clamp(*a, *b)),
            )
        })
        .collect();

    let mut residual = f64::INFINITY;
    for iter in 0..MAX_OUTER {
        for ((l, a), xi) in locals.iter().zip(&instance.agents).zip(x.iter_mut()) {
            l.solve(&(a.a_block.transpose() * &eta), xi);
        }
        let gap = instance.coupling_residual(&x);
        residual = gap.norm();
        if residual <= tolerance {
            let mu = instance
                .agents
                .iter()
                .zip(&x)
                .map(|(a, xi)| -(a.f.gradient(xi) + a.a_block.transpose() * &eta))
                .collect();
            let objective = locals.iter().zip(&x).map(|(l, xi)| l.value(xi)).sum();
            return Ok(OracleSolution {
                x,
                eta,
                mu,
                objective,
                residual,
                iterations: iter,
            });
        }
        eta += gap * step;
        if !eta.iter().all(|v| v.is_finite() && v.abs() < 1e15) {
            return Err(ProblemError::OracleNotConverged {
                iterations: iter,
                residual,
            });
        }
    }
    Err(ProblemError::OracleNotConverged {
        iterations: MAX_OUTER,
        residual,
    })
}
