use std::sync::Arc;

use ddpg_core::functions::{NormKind, StronglyConvexOracle};
use ddpg_core::{ExtendedReal, Matrix, NonsmoothFunction, SmoothFunction, Vector};
use proptest::prelude::*;

#[derive(Debug)]
struct HalfSquare(f64);

impl StronglyConvexOracle for HalfSquare {
    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.0 * x.norm_squared()
    }
    fn gradient(&self, x: &Vector) -> Vector {
        x * self.0
    }
    fn sigma(&self) -> f64 {
        self.0
    }
}

type ConjProx = Box<dyn Fn(f64, &Vector) -> Vector>;

/// Catalog entries paired with a closed-form `prox^β_{ψ^◇}` written independently of
/// the library.
fn catalog(m: usize) -> Vec<(NonsmoothFunction, ConjProx)> {
    let lo = Vector::from_fn(m, |i, _| -1.0 - i as f64);
    let hi = Vector::from_fn(m, |i, _| 0.5 + i as f64);
    let (lo2, hi2) = (lo.clone(), hi.clone());
    let half_open_lo = Vector::from_element(m, 0.0);
    let half_open_hi = Vector::from_element(m, f64::INFINITY);
    vec![
        (NonsmoothFunction::Zero, Box::new(|_, w: &Vector| Vector::zeros(w.len()))),
        (
            NonsmoothFunction::l1(0.7).unwrap(),
            Box::new(|_, w: &Vector| w.map(|x| x.clamp(-0.7, 0.7))),
        ),
        (
            NonsmoothFunction::Norm(NormKind::L1),
            Box::new(|_, w: &Vector| w.map(|x| x.clamp(-1.0, 1.0))),
        ),
        (
            NonsmoothFunction::Norm(NormKind::L2),
            Box::new(|_, w: &Vector| {
                let n = w.norm();
                if n <= 1.0 {
                    w.clone()
                } else {
                    w / n
                }
            }),
        ),
        (
            NonsmoothFunction::box_indicator(lo, hi).unwrap(),
            Box::new(move |beta, w: &Vector| {
                Vector::from_fn(w.len(), |i, _| {
                    if w[i] > beta * hi2[i] {
                        w[i] - beta * hi2[i]
                    } else if w[i] < beta * lo2[i] {
                        w[i] - beta * lo2[i]
                    } else {
                        0.0
                    }
                })
            }),
        ),
        (
            NonsmoothFunction::box_indicator(half_open_lo, half_open_hi).unwrap(),
            Box::new(|_, w: &Vector| w.map(|x| x.min(0.0))),
        ),
        (
            NonsmoothFunction::custom_strongly_convex(Arc::new(HalfSquare(2.0))).unwrap(),
            Box::new(|beta, w: &Vector| w * (2.0 / (2.0 + beta))),
        ),
    ]
}

fn vector(m: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-20.0..20.0f64, m).prop_map(Vector::from_vec)
}

fn alpha() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.1, 1.0, 10.0])
}

fn spd(m: usize) -> impl Strategy<Value = Matrix> {
    (prop::collection::vec(-1.0..1.0f64, m * m), 0.1..2.0f64).prop_map(move |(e, shift)| {
        let l = Matrix::from_vec(m, m, e);
        &l * l.transpose() + Matrix::identity(m, m) * shift
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn moreau_identity_holds(v in (1usize..4).prop_flat_map(vector), a in alpha()) {
        let m = v.len();
        for (psi, conj_prox) in catalog(m) {
            let p = psi.prox(a, &v).unwrap();
            let q = conj_prox(1.0 / a, &(&v / a));
            let err = (&v - &p - q * a).amax();
            prop_assert!(err <= 1e-9, "{psi:?}: Moreau error {err}");

            let lib = psi.prox_conjugate(a, &v).unwrap();
            let want = conj_prox(a, &v);
            prop_assert!((lib - want).amax() <= 1e-9, "{psi:?}: conjugate prox mismatch");
        }
    }

    #[test]
    fn prox_is_nonexpansive(u in vector(3), v in vector(3), a in alpha()) {
        for (psi, _) in catalog(3) {
            let d = (psi.prox(a, &u).unwrap() - psi.prox(a, &v).unwrap()).norm();
            prop_assert!(d <= (&u - &v).norm() * (1.0 + 1e-9) + 1e-9, "{psi:?}");
        }
    }

    #[test]
    fn conjugate_gradient_is_inverse_sigma_lipschitz(
        p in spd(3),
        q in vector(3),
        u in vector(3),
        v in vector(3),
    ) {
        let f = SmoothFunction::quadratic(p, q, 0.0).unwrap();
        let du = f.conjugate_gradient(&u).unwrap();
        let dv = f.conjugate_gradient(&v).unwrap();
        prop_assert!((du - dv).norm() <= (&u - &v).norm() / f.sigma() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn fenchel_young(p in spd(2), q in vector(2), v in vector(2), x in vector(2)) {
        let f = SmoothFunction::quadratic(p, q, 1.5).unwrap();
        let conj = f.conjugate_value(&v).unwrap();
        let scale = 1.0 + conj.abs() + f.value(&x).abs();
        prop_assert!(f.value(&x) + conj >= x.dot(&v) - 1e-9 * scale);
        let u = f.conjugate_gradient(&v).unwrap();
        let scale = 1.0 + conj.abs();
        prop_assert!((f.value(&u) + conj - u.dot(&v)).abs() <= 1e-9 * scale);
    }

    #[test]
    fn iterative_conjugate_gradient_matches_closed_form(p in spd(2), q in vector(2), v in vector(2)) {
        let f = SmoothFunction::quadratic(p, q, 0.0).unwrap();
        let closed = f.conjugate_gradient(&v).unwrap();
        let iter = f.conjugate_gradient_iterative(&v).unwrap();
        prop_assert!((closed - iter).amax() <= 1e-8 * (1.0 / f.sigma()).max(1.0));
    }

    #[test]
    fn box_support_matches_piecewise_linear(mu in vector(3)) {
        let lo = Vector::from_vec(vec![-1.0, 0.0, 2.0]);
        let hi = Vector::from_vec(vec![1.0, 3.0, 2.5]);
        let g = NonsmoothFunction::box_indicator(lo.clone(), hi.clone()).unwrap();
        let want: f64 = (0..3).map(|i| (hi[i] * mu[i]).max(lo[i] * mu[i])).sum();
        match g.support_value(&mu).unwrap() {
            ExtendedReal::Finite(got) => prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs())),
            ExtendedReal::Infinite => prop_assert!(false, "bounded box has finite support"),
        }
    }
}

#[test]
fn unbounded_box_support_is_infinite_in_the_open_direction() {
    let g = NonsmoothFunction::box_indicator(
        Vector::from_element(1, 0.0),
        Vector::from_element(1, f64::INFINITY),
    )
    .unwrap();
    assert_eq!(g.support_value(&Vector::from_element(1, 1.0)).unwrap(), ExtendedReal::Infinite);
    assert_eq!(
        g.support_value(&Vector::from_element(1, -1.0)).unwrap(),
        ExtendedReal::Finite(0.0)
    );
}
