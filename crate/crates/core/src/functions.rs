//! Function catalog: strongly convex smooth parts `f_i` and nonsmooth parts
//! `g_i + I_{X_i}` (one object for the sum), with the conjugate machinery the dual
//! iteration needs.
//!
//! Quadratics use the convention `f(x) = xᵀPx + qᵀx + r`, so `σ = 2 λ_min(P)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, Dyn, SymmetricEigen};
use thiserror::Error;

use crate::{Matrix, Vector};

/// Gradient-norm stopping tolerance of the inner-loop minimizer.
pub const INNER_TOL: f64 = 1e-10;
/// Iteration cap of the inner-loop minimizer.
pub const INNER_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionError {
    #[error("quadratic matrix is not symmetric")]
    NotSymmetric,
    #[error("quadratic matrix is not positive definite (smallest eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("prox step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("inner loop stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    InnerLoop { iterations: usize, grad_norm: f64 },
}

/// Value in `(-∞, +∞]`. `Infinite` marks a point outside the conjugate's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }
}

impl std::ops::Add for ExtendedReal {
    type Output = ExtendedReal;
    fn add(self, rhs: ExtendedReal) -> ExtendedReal {
        match (self, rhs) {
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => ExtendedReal::Finite(a + b),
            _ => ExtendedReal::Infinite,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => f.write_str("inf"),
        }
    }
}

/// User-supplied smooth, strongly convex function.
///
/// Implementations must be side-effect free; solvers call them from worker threads.
pub trait SmoothOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// Strong convexity modulus.
    fn sigma(&self) -> f64;
}

#[derive(Debug, Clone)]
pub enum SmoothKind {
    Quadratic { p: Matrix, q: Vector, r: f64 },
    Custom(Arc<dyn SmoothOracle>),
}

/// The differentiable, `σ`-strongly convex part `f_i` of an agent's cost.
#[derive(Debug, Clone)]
pub struct SmoothFunction {
    kind: SmoothKind,
    sigma: f64,
    // Cholesky factor of 2P for the closed-form conjugate gradient.
    factor: Option<Cholesky<f64, Dyn>>,
}

impl PartialEq for SmoothFunction {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (
                SmoothKind::Quadratic { p, q, r },
                SmoothKind::Quadratic {
                    p: p2,
                    q: q2,
                    r: r2,
                },
            ) => p == p2 && q == q2 && r == r2,
            (SmoothKind::Custom(a), SmoothKind::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl SmoothFunction {
    /// `f(x) = xᵀPx + qᵀx + r` with `P` symmetric positive definite.
    pub fn quadratic(p: Matrix, q: Vector, r: f64) -> Result<Self, FunctionError> {
        let m = q.len();
        if p.nrows() != m || p.ncols() != m {
            return Err(FunctionError::Dimension {
                expected: m,
                actual: p.nrows().max(p.ncols()),
            });
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(FunctionError::InvalidParameter(
                "quadratic coefficients must be finite".into(),
            ));
        }
        let scale = p.amax().max(1.0);
        if (&p - p.transpose()).amax() > 1e-12 * scale {
            return Err(FunctionError::NotSymmetric);
        }
        let min_eig = SymmetricEigen::new(p.clone()).eigenvalues.min();
        if min_eig <= 0.0 {
            return Err(FunctionError::NotPositiveDefinite(min_eig));
        }
        let factor = Cholesky::new(&p * 2.0).ok_or(FunctionError::NotPositiveDefinite(min_eig))?;
        Ok(SmoothFunction {
            kind: SmoothKind::Quadratic { p, q, r },
            sigma: 2.0 * min_eig,
            factor: Some(factor),
        })
    }

    /// Scalar quadratic `δx² + ςx + β`.
    pub fn scalar_quadratic(delta: f64, linear: f64, constant: f64) -> Result<Self, FunctionError> {
        SmoothFunction::quadratic(
            Matrix::from_element(1, 1, delta),
            Vector::from_element(1, linear),
            constant,
        )
    }

    pub fn custom(oracle: Arc<dyn SmoothOracle>) -> Result<Self, FunctionError> {
        let sigma = oracle.sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(FunctionError::InvalidParameter(format!(
                "strong convexity modulus must be positive, got {sigma}"
            )));
        }
        Ok(SmoothFunction {
            kind: SmoothKind::Custom(oracle),
            sigma,
            factor: None,
        })
    }

    pub fn kind(&self) -> &SmoothKind {
        &self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SmoothKind::Quadratic { q, .. } => q.len(),
            SmoothKind::Custom(o) => o.dim(),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match &self.kind {
            SmoothKind::Quadratic { p, q, r } => x.dot(&(p * x)) + q.dot(x) + r,
            SmoothKind::Custom(o) => o.value(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.kind {
            SmoothKind::Quadratic { p, q, .. } => p * x * 2.0 + q,
            SmoothKind::Custom(o) => o.gradient(x),
        }
    }

    /// `∇f^◇(v)`, the unique maximizer of `vᵀu − f(u)`.
    pub fn conjugate_gradient(&self, v: &Vector) -> Result<Vector, FunctionError> {
        self.check_dim(v)?;
        match (&self.kind, &self.factor) {
            (SmoothKind::Quadratic { q, .. }, Some(chol)) => Ok(chol.solve(&(v - q))),
            _ => self.conjugate_gradient_iterative(v),
        }
    }

    /// Inner-loop route for `∇f^◇(v)`: minimizes `f(u) − vᵀu` by steepest
    /// descent. Works for every kind; quadratics normally use the closed form.
    pub fn conjugate_gradient_iterative(&self, v: &Vector) -> Result<Vector, FunctionError> {
        self.check_dim(v)?;
        minimize_strongly_convex(
            |u| self.gradient(u) - v,
            Vector::zeros(v.len()),
        )
    }

    /// `f^◇(v) = vᵀu − f(u)` at `u = ∇f^◇(v)`.
    pub fn conjugate_value(&self, v: &Vector) -> Result<f64, FunctionError> {
        let u = self.conjugate_gradient(v)?;
        Ok(v.dot(&u) - self.value(&u))
    }

    fn check_dim(&self, v: &Vector) -> Result<(), FunctionError> {
        let m = self.dim();
        if v.len() != m {
            return Err(FunctionError::Dimension {
                expected: m,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// User-supplied proximal mapping of a closed convex function.
pub trait ProxOracle: Send + Sync + fmt::Debug {
    /// `prox^α_ψ(v)`.
    fn prox(&self, alpha: f64, v: &Vector) -> Vector;
    /// `ψ^◇(μ)` when known in closed form.
    fn conjugate_value(&self, _mu: &Vector) -> Option<ExtendedReal> {
        None
    }
}

/// User-supplied differentiable, strongly convex nonsmooth-slot function. Its prox
/// and conjugate are computed by inner-loop minimization.
pub trait StronglyConvexOracle: Send + Sync + fmt::Debug {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn sigma(&self) -> f64;
}

/// Which norm `‖·‖_e` is the penalty in [`NonsmoothFunction::Norm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `‖x‖₁`; conjugate is the indicator of the unit ∞-ball.
    L1,
    /// `‖x‖₂`; self-dual.
    L2,
}

/// `g_i + I_{X_i}` as a single proper, closed, convex function.
#[derive(Debug, Clone)]
pub enum NonsmoothFunction {
    Zero,
    /// `w ‖x‖₁` on all of `ℝ^M`.
    L1 { weight: f64 },
    /// Indicator of `[lo, hi]`; bounds may be infinite.
    BoxIndicator { lo: Vector, hi: Vector },
    /// `‖x‖_e` on all of `ℝ^M`, whose conjugate is the dual-norm unit ball indicator.
    Norm(NormKind),
    CustomProx(Arc<dyn ProxOracle>),
    CustomStronglyConvex(Arc<dyn StronglyConvexOracle>),
}

impl PartialEq for NonsmoothFunction {
    fn eq(&self, other: &Self) -> bool {
        use NonsmoothFunction::*;
        match (self, other) {
            (Zero, Zero) => true,
            (L1 { weight: a }, L1 { weight: b }) => a == b,
            (BoxIndicator { lo, hi }, BoxIndicator { lo: l2, hi: h2 }) => lo == l2 && hi == h2,
            (Norm(a), Norm(b)) => a == b,
            (CustomProx(a), CustomProx(b)) => Arc::ptr_eq(a, b),
            (CustomStronglyConvex(a), CustomStronglyConvex(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl NonsmoothFunction {
    pub fn l1(weight: f64) -> Result<Self, FunctionError> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(FunctionError::InvalidParameter(format!(
                "l1 weight must be finite and non-negative, got {weight}"
            )));
        }
        Ok(NonsmoothFunction::L1 { weight })
    }

    pub fn box_indicator(lo: Vector, hi: Vector) -> Result<Self, FunctionError> {
        if lo.len() != hi.len() {
            return Err(FunctionError::Dimension {
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        for (k, (l, h)) in lo.iter().zip(hi.iter()).enumerate() {
            if l.is_nan() || h.is_nan() || l > h || *l == f64::INFINITY || *h == f64::NEG_INFINITY
            {
                return Err(FunctionError::InvalidParameter(format!(
                    "box component {k} has empty interval [{l}, {h}]"
                )));
            }
        }
        Ok(NonsmoothFunction::BoxIndicator { lo, hi })
    }

    /// Scalar interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self, FunctionError> {
        NonsmoothFunction::box_indicator(Vector::from_element(1, lo), Vector::from_element(1, hi))
    }

    pub fn custom_strongly_convex(
        oracle: Arc<dyn StronglyConvexOracle>,
    ) -> Result<Self, FunctionError> {
        let s = oracle.sigma();
        if !(s > 0.0 && s.is_finite()) {
            return Err(FunctionError::InvalidParameter(format!(
                "strong convexity modulus must be positive, got {s}"
            )));
        }
        Ok(NonsmoothFunction::CustomStronglyConvex(oracle))
    }

    /// Dimension fixed by the function itself, if any.
    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            NonsmoothFunction::BoxIndicator { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }

    /// `ψ(x)`, or `None` for prox-only oracles.
    pub fn value(&self, x: &Vector) -> Option<ExtendedReal> {
        use NonsmoothFunction::*;
        Some(match self {
            Zero => ExtendedReal::Finite(0.0),
            L1 { weight } => ExtendedReal::Finite(weight * x.lp_norm(1)),
            BoxIndicator { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .all(|(v, (l, h))| l <= v && v <= h);
                if inside {
                    ExtendedReal::Finite(0.0)
                } else {
                    ExtendedReal::Infinite
                }
            }
            Norm(NormKind::L1) => ExtendedReal::Finite(x.lp_norm(1)),
            Norm(NormKind::L2) => ExtendedReal::Finite(x.norm()),
            CustomProx(_) => return None,
            CustomStronglyConvex(o) => ExtendedReal::Finite(o.value(x)),
        })
    }

    /// `prox^α_ψ(v) = argmin_u ψ(u) + ‖u − v‖² / (2α)`.
    pub fn prox(&self, alpha: f64, v: &Vector) -> Result<Vector, FunctionError> {
        use NonsmoothFunction::*;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(FunctionError::InvalidStep(alpha));
        }
        Ok(match self {
            Zero => v.clone(),
            L1 { weight } => v.map(|x| soft_threshold(x, alpha * weight)),
            BoxIndicator { lo, hi } => {
                check_len(lo.len(), v.len())?;
                Vector::from_iterator(
                    v.len(),
                    v.iter()
                        .zip(lo.iter().zip(hi.iter()))
                        .map(|(x, (l, h))| x.clamp(*l, *h)),
                )
            }
            Norm(NormKind::L1) => v.map(|x| soft_threshold(x, alpha)),
            Norm(NormKind::L2) => {
                let n = v.norm();
                if n <= alpha {
                    Vector::zeros(v.len())
                } else {
                    v * (1.0 - alpha / n)
                }
            }
            CustomProx(o) => o.prox(alpha, v),
            CustomStronglyConvex(o) => minimize_strongly_convex(
                |u| o.gradient(u) + (u - v) / alpha,
                v.clone(),
            )?,
        })
    }

    /// `prox^α_{ψ^◇}(v)` through the Moreau decomposition
    /// `prox^α_{ψ^◇}(v) = v − α · prox^{1/α}_ψ(v / α)`; `ψ^◇` is never evaluated.
    pub fn prox_conjugate(&self, alpha: f64, v: &Vector) -> Result<Vector, FunctionError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(FunctionError::InvalidStep(alpha));
        }
        let inner = self.prox(1.0 / alpha, &(v / alpha))?;
        Ok(v - inner * alpha)
    }

    /// `ψ^◇(μ) = sup_u μᵀu − ψ(u)`, with [`ExtendedReal::Infinite`] outside the domain.
    ///
    /// Domain membership for the ball-type conjugates is tested with a relative slack
    /// of `1e-12`, since iterates produced by the prox land on the boundary up to rounding.
    pub fn support_value(&self, mu: &Vector) -> Result<ExtendedReal, FunctionError> {
        use NonsmoothFunction::*;
        const SLACK: f64 = 1e-12;
        Ok(match self {
            Zero => {
                if mu.amax() <= SLACK {
                    ExtendedReal::Finite(0.0)
                } else {
                    ExtendedReal::Infinite
                }
            }
            L1 { weight } => ball_indicator(mu.amax(), *weight, SLACK),
            Norm(NormKind::L1) => ball_indicator(mu.amax(), 1.0, SLACK),
            Norm(NormKind::L2) => ball_indicator(mu.norm(), 1.0, SLACK),
            BoxIndicator { lo, hi } => {
                check_len(lo.len(), mu.len())?;
                let mut total = 0.0;
                for (m, (l, h)) in mu.iter().zip(lo.iter().zip(hi.iter())) {
                    let term = if *m > 0.0 {
                        m * h
                    } else if *m < 0.0 {
                        m * l
                    } else {
                        0.0
                    };
                    if term == f64::INFINITY {
                        return Ok(ExtendedReal::Infinite);
                    }
                    total += term;
                }
                ExtendedReal::Finite(total)
            }
            CustomProx(o) => o.conjugate_value(mu).ok_or_else(|| {
                FunctionError::InvalidParameter(
                    "custom prox oracle provides no conjugate value".into(),
                )
            })?,
            CustomStronglyConvex(o) => {
                let u = minimize_strongly_convex(
                    |u| o.gradient(u) - mu,
                    Vector::zeros(mu.len()),
                )?;
                ExtendedReal::Finite(mu.dot(&u) - o.value(&u))
            }
        })
    }
}

fn ball_indicator(norm: f64, radius: f64, slack: f64) -> ExtendedReal {
    if norm <= radius * (1.0 + slack) + slack {
        ExtendedReal::Finite(0.0)
    } else {
        ExtendedReal::Infinite
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn check_len(expected: usize, actual: usize) -> Result<(), FunctionError> {
    if expected == actual {
        Ok(())
    } else {
        Err(FunctionError::Dimension { expected, actual })
    }
}

/// Steepest descent for a strongly convex objective, driven by its gradient alone.
///
/// Each step searches along `−∇φ` for a point where the directional derivative has
/// risen to between half its initial value and zero, which never overshoots the line
/// minimum. Objective values are not compared, so progress continues after value
/// differences fall below rounding noise. Stops when `‖∇φ‖ ≤ INNER_TOL`; fails loudly
/// after `INNER_MAX_ITER` iterations.
pub fn minimize_strongly_convex<G>(gradient: G, start: Vector) -> Result<Vector, FunctionError>
where
    G: Fn(&Vector) -> Vector,
{
    let mut x = start;
    let mut g = gradient(&x);
    let mut gn = g.norm();
    let mut step = 1.0;
    let fail = |gn: f64| FunctionError::InnerLoop {
        iterations: INNER_MAX_ITER,
        grad_norm: gn,
    };
    for _ in 0..INNER_MAX_ITER {
        if gn <= INNER_TOL {
            return Ok(x);
        }
        if !gn.is_finite() {
            return Err(fail(gn));
        }
        let gg = gn * gn;
        let slope = |t: f64| -g.dot(&gradient(&(&x - &g * t)));
        let (mut lo, mut hi) = (0.0, step);
        let mut s_hi = slope(hi);
        while s_hi < -0.5 * gg {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(fail(gn));
            }
            s_hi = slope(hi);
        }
        let t = if s_hi <= 0.0 {
            hi
        } else {
            let mut found = None;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let s = slope(mid);
                if s > 0.0 {
                    hi = mid;
                } else if s < -0.5 * gg {
                    lo = mid;
                } else {
                    found = Some(mid);
                    break;
                }
            }
            match found {
                Some(t) => t,
                None if lo > 0.0 => lo,
                None => return Err(fail(gn)),
            }
        };
        x -= &g * t;
        g = gradient(&x);
        gn = g.norm();
        step = t;
    }
    if gn <= INNER_TOL {
        Ok(x)
    } else {
        Err(fail(gn))
    }
}
