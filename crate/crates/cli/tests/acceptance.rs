//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain binary under
//! `cargo test`; exits nonzero when any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use ddpg_cli::{cmd_solve, market_demo, RunArgs};
use ddpg_core::functions::{NormKind, StronglyConvexOracle};
use ddpg_core::netsim::message_volume;
use ddpg_core::problems::{
    build_market, centralized_oracle, seeded_instance, MarketParams, SyntheticSpec, REPORTED_ETA,
    REPORTED_MU, REPORTED_X,
};
use ddpg_core::solver::{
    ergodic_gap_bound, eval_dual_objective, grad_p, lipschitz_h, lyapunov, validate_step_sizes,
    Ddpg, ErgodicAverage, SaddlePoint,
};
use ddpg_core::{
    solve, AgentDual, AgentProblem, ConsensusOperator, DualState, Engine, InMemoryTransport, Matrix,
    NonsmoothFunction, ProblemInstance, SmoothFunction, SolverConfig, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn market() -> ProblemInstance {
    build_market(&MarketParams::table_one(), None).unwrap()
}

fn random_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec::scalar(2 + (seed % 3) as usize)
}

fn criterion_1() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = RunArgs {
        trace_out: Some(dir.path().join("market.csv")),
        ..RunArgs::default()
    };
    let started = Instant::now();
    let demo = market_demo(&run, None, &mut std::io::sink()).map_err(|e| e.to_string())?;
    let r = &demo.result;
    ensure(r.converged(), || format!("not converged after {} iterations", r.iterations))?;
    for i in 0..5 {
        let (x, l) = (r.x[i][0], &r.state.lambda[i]);
        ensure((x - REPORTED_X[i]).abs() <= 0.15, || format!("x_{} = {x}", i + 1))?;
        ensure((l.theta[0] - REPORTED_ETA).abs() <= 0.05, || format!("theta_{} = {}", i + 1, l.theta[0]))?;
        ensure((l.mu[0] - REPORTED_MU[i]).abs() <= 0.05, || format!("mu_{} = {}", i + 1, l.mu[0]))?;
    }
    Ok(format!(
        "{} iterations in {:.2?}; x = {:?}",
        r.iterations,
        started.elapsed(),
        r.x.iter().map(|v| (v[0] * 1e3).round() / 1e3).collect::<Vec<_>>()
    ))
}

fn criterion_2() -> Outcome {
    let p = market();
    let r = solve(&p, &SolverConfig { trace_every: 0, ..SolverConfig::default() }).map_err(|e| e.to_string())?;
    let oracle = centralized_oracle(&p, 1e-10).map_err(|e| e.to_string())?;
    let phi = r.residuals.dual.total.finite().ok_or("Phi infinite at the output")?;
    let gap = phi + oracle.objective;
    ensure(gap.abs() <= 1e-2, || format!("Phi + F = {gap:e}"))?;
    Ok(format!(
        "Phi = {phi:.6}, F = {:.6}, gap = {gap:.2e} (smooth part {:.2})",
        oracle.objective, r.residuals.dual.smooth
    ))
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let p = seeded_instance(1000 + seed, &random_spec(seed)).map_err(|e| e.to_string())?;
        let oracle = centralized_oracle(&p, 1e-11).map_err(|e| format!("seed {seed}: {e}"))?;
        let cfg = SolverConfig {
            tol_consensus: 1e-8,
            tol_primal: 1e-8,
            trace_every: 0,
            ..SolverConfig::default()
        };
        let r = solve(&p, &cfg).map_err(|e| e.to_string())?;
        ensure(r.converged(), || format!("seed {seed} did not converge"))?;
        for (x, y) in r.x.iter().zip(&oracle.x) {
            worst = worst.max((x - y).amax());
        }
    }
    ensure(worst <= 1e-3, || format!("max deviation {worst:e}"))?;
    Ok(format!("20 instances, max |x - x_oracle| = {worst:.2e}"))
}

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

/// Catalog entries with closed-form `prox^β_{ψ^◇}`.
fn catalog(m: usize) -> Vec<(&'static str, NonsmoothFunction, ConjProx)> {
    let lo = Vector::from_fn(m, |i, _| -1.0 - i as f64);
    let hi = Vector::from_fn(m, |i, _| 0.5 + i as f64);
    let (l2, h2) = (lo.clone(), hi.clone());
    vec![
        ("zero", NonsmoothFunction::Zero, Box::new(|_, w: &Vector| Vector::zeros(w.len()))),
        (
            "l1",
            NonsmoothFunction::l1(0.7).unwrap(),
            Box::new(|_, w: &Vector| w.map(|x| x.clamp(-0.7, 0.7))),
        ),
        (
            "norm1",
            NonsmoothFunction::Norm(NormKind::L1),
            Box::new(|_, w: &Vector| w.map(|x| x.clamp(-1.0, 1.0))),
        ),
        (
            "norm2",
            NonsmoothFunction::Norm(NormKind::L2),
            Box::new(|_, w: &Vector| if w.norm() <= 1.0 { w.clone() } else { w / w.norm() }),
        ),
        (
            "box",
            NonsmoothFunction::box_indicator(lo, hi).unwrap(),
            Box::new(move |b, w: &Vector| {
                Vector::from_fn(w.len(), |i, _| {
                    if w[i] > b * h2[i] {
                        w[i] - b * h2[i]
                    } else if w[i] < b * l2[i] {
                        w[i] - b * l2[i]
                    } else {
                        0.0
                    }
                })
            }),
        ),
        (
            "strongly convex",
            NonsmoothFunction::custom_strongly_convex(Arc::new(HalfSquare(2.0))).unwrap(),
            Box::new(|b, w: &Vector| w * (2.0 / (2.0 + b))),
        ),
    ]
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let v = Vector::from_fn(m, |_, _| rng.random_range(-20.0..20.0));
        for alpha in [0.1, 1.0, 10.0] {
            for (name, psi, conj) in catalog(m) {
                let p = psi.prox(alpha, &v).map_err(|e| format!("{name}: {e}"))?;
                let err = (&v - p - conj(1.0 / alpha, &(&v / alpha)) * alpha).amax();
                let lib = psi.prox_conjugate(alpha, &v).map_err(|e| format!("{name}: {e}"))?;
                let err2 = (lib - conj(alpha, &v)).amax();
                worst = worst.max(err).max(err2);
                count += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max identity error {worst:e}"))?;
    Ok(format!("{count} checks, max error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ratio = 0.0f64;
    let mut worst_h = 0.0f64;
    for case in 0..50 {
        let (b, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let l = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let p = &l * l.transpose() + Matrix::identity(m, m) * rng.random_range(0.05..1.0);
        let a = Matrix::from_fn(b, m, |_, _| rng.random_range(-3.0..3.0));
        let sigma_ref = 2.0 * p.clone().svd(false, false).singular_values.min();
        let f = SmoothFunction::quadratic(p, Vector::zeros(m), 0.0).map_err(|e| e.to_string())?;
        let agent = AgentProblem::new(f, NonsmoothFunction::Zero, a.clone(), 1.0);
        let h = lipschitz_h(&a, agent.f.sigma()).map_err(|e| e.to_string())?;
        let s = a.svd(false, false).singular_values.max();
        let h_ref = (s * s + 1.0) / sigma_ref;
        let rel = (h - h_ref).abs() / h_ref;
        worst_h = worst_h.max(rel);
        ensure(rel <= 1e-10, || format!("case {case}: h = {h}, SVD oracle {h_ref}"))?;
        let bvec = Vector::from_fn(b, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..100 {
            let mut draw = || {
                AgentDual::new(
                    Vector::from_fn(b, |_, _| rng.random_range(-10.0..10.0)),
                    Vector::from_fn(m, |_, _| rng.random_range(-10.0..10.0)),
                )
            };
            let (u, v) = (draw(), draw());
            let gu = grad_p(&agent, &bvec, &u).map_err(|e| e.to_string())?;
            let gv = grad_p(&agent, &bvec, &v).map_err(|e| e.to_string())?;
            let dg = ((gu.theta - gv.theta).norm_squared() + (gu.mu - gv.mu).norm_squared()).sqrt();
            let dx = (u.stacked() - v.stacked()).norm();
            let ratio = dg / (h * dx);
            worst_ratio = worst_ratio.max(ratio);
            ensure(ratio <= 1.0 + 1e-9, || format!("case {case}: ratio {ratio}"))?;
        }
    }
    Ok(format!(
        "50 x 100 pairs, max |grad diff| / (h |point diff|) = {worst_ratio:.4}, max h error {worst_h:.1e}"
    ))
}

fn criterion_6() -> Outcome {
    let mut problems = vec![("market".to_string(), market())];
    for seed in 0..20u64 {
        problems.push((format!("random {seed}"), seeded_instance(1000 + seed, &random_spec(seed)).unwrap()));
    }
    let mut largest = 0.0f64;
    for (name, p) in &problems {
        let ddpg = Ddpg::new(p, 1.0, None).map_err(|e| format!("{name}: {e}"))?;
        let (h, tau, c) = (ddpg.h(), ddpg.tau(), ddpg.steps().c);
        let bound = h + tau;
        ensure(validate_step_sizes(h, tau, c, 1.0).unwrap(), || format!("{name}: suggested c rejected"))?;
        let c_bad = 1.0 / (bound - 1e-12);
        ensure(!validate_step_sizes(h, tau, c_bad, 1.0).unwrap(), || {
            format!("{name}: accepted 1/c = bound - 1e-12")
        })?;
        let r = solve(p, &SolverConfig { trace_every: 1, ..SolverConfig::default() }).map_err(|e| e.to_string())?;
        ensure(r.converged(), || format!("{name}: not converged"))?;
        for row in &r.trace.rows {
            let worst = row.consensus.max(row.primal);
            ensure(worst.is_finite() && worst <= 1e6, || format!("{name}: residual {worst} at {}", row.iter))?;
            largest = largest.max(worst);
        }
    }
    Ok(format!("{} instances, boundary accepted, bound - 1e-12 rejected, max residual {largest:.3e}", problems.len()))
}

/// Runs the market from zero for 10⁴ + 1 rounds and checks the ergodic bounds at
/// T ∈ {10, 10², 10³, 10⁴} and the Lyapunov sequence at every round.
fn market_rate_run() -> Result<(String, String), String> {
    let p = market();
    let oracle = centralized_oracle(&p, 1e-12).map_err(|e| e.to_string())?;
    let saddle = SaddlePoint::from_oracle(&p, &oracle).map_err(|e| e.to_string())?;
    let phi_star = eval_dual_objective(&p, &saddle.lambda).map_err(|e| e.to_string())?.total.finite().unwrap();
    let ddpg = Ddpg::new(&p, 1.0, None).map_err(|e| e.to_string())?;
    let steps = ddpg.steps();
    let d = p.dims();
    let op = ConsensusOperator::new(&p.graph, d.b, d.m);
    let xi_star = saddle.xi.iter().map(|e| e.xi.norm_squared()).sum::<f64>().sqrt();

    let init = DualState::zeros(&p);
    let mut s = init.clone();
    let mut avg = ErgodicAverage::new(d.n, d.b, d.m);
    let mut a_prev = lyapunov(&p, &s, &saddle, &steps);
    let mut max_increase = f64::NEG_INFINITY;
    let mut rate = Ok(Vec::new());
    for t in 1..=10_001usize {
        s = ddpg.iterate(&s).map_err(|e| e.to_string())?;
        avg.push(&s.lambda);
        let a = lyapunov(&p, &s, &saddle, &steps);
        max_increase = max_increase.max(a - a_prev);
        a_prev = a;
        let horizon = t - 1;
        if [10, 100, 1000, 10_000].contains(&horizon) {
            let bound = ergodic_gap_bound(&p, &init, &saddle, &steps, horizon).map_err(|e| e.to_string())?;
            let phi = eval_dual_objective(&p, avg.mean()).map_err(|e| e.to_string())?.total.finite().unwrap();
            let stacked: Vec<f64> = avg.mean().iter().flat_map(|l| l.stacked().iter().copied().collect::<Vec<_>>()).collect();
            let feas = xi_star * Vector::from_vec(op.apply(&stacked).unwrap()).norm();
            let gap = (phi - phi_star).abs();
            if let Ok(rows) = &mut rate {
                if gap > bound || feas > bound {
                    rate = Err(format!("T = {horizon}: gap {gap:e}, feasibility {feas:e}, bound {bound:e}"));
                } else {
                    rows.push(format!("T={horizon}: {gap:.1e}/{feas:.1e} <= {bound:.1e}"));
                }
            }
        }
    }
    let rate = rate.map(|rows| rows.join(", "))?;
    let lyap = if max_increase <= 1e-10 {
        Ok(format!("10001 rounds, max increase {max_increase:.2e}"))
    } else {
        Err(format!("max increase {max_increase:e}"))
    };
    Ok((rate, lyap?))
}

fn criterion_9() -> Outcome {
    let p = market();
    let ddpg = Ddpg::new(&p, 1.0, None).map_err(|e| e.to_string())?;
    let mut s = DualState::zeros(&p);
    let mut engine = Engine::new(&p, ddpg.steps(), &s, InMemoryTransport::new()).map_err(|e| e.to_string())?;
    let expected = message_volume(&p.graph, 1, 1);
    ensure(expected.messages == 20 && expected.scalars == 35, || format!("volume formula gives {expected:?}"))?;
    for round in 0..1000 {
        s = ddpg.iterate(&s).map_err(|e| e.to_string())?;
        let stats = engine.run_round().map_err(|e| e.to_string())?;
        ensure(stats == expected, || format!("round {round}: {stats:?}"))?;
        ensure(engine.state() == s, || format!("states differ at round {round}"))?;
    }
    Ok("1000 rounds bit-identical, 20 messages / 35 scalars per round".into())
}

fn criterion_10() -> Outcome {
    let p = market();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut traces = Vec::new();
    for threads in [1, 2, 4] {
        let path = dir.path().join(format!("trace_{threads}.csv"));
        let run = RunArgs {
            threads: Some(threads),
            trace_every: Some(1),
            states: true,
            seed: Some(7),
            ..RunArgs::default()
        };
        cmd_solve(&p, &run, Some(&path), 1, &mut std::io::sink()).map_err(|e| e.to_string())?;
        traces.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure(traces[0] == traces[1] && traces[0] == traces[2], || "traces differ across thread counts".into())?;
    Ok(format!("{} bytes identical for 1, 2, 4 threads", traces[0].len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    panic::set_hook(Box::new(|_| {}));
    let rate_run = guarded(|| market_rate_run().map(|(a, b)| format!("{a}\n{b}")));
    let (rate, lyap) = match rate_run {
        Ok(s) => {
            let (a, b) = s.split_once('\n').unwrap();
            (Ok(a.to_string()), Ok(b.to_string()))
        }
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("market benchmark optimum", guarded(criterion_1)),
        ("strong duality against the centralized oracle", guarded(criterion_2)),
        ("random instances match the centralized oracle", guarded(criterion_3)),
        ("Moreau identity over the catalog", guarded(criterion_4)),
        ("Lipschitz constant of the local dual gradient", guarded(criterion_5)),
        ("step-size rule and bounded residuals", guarded(criterion_6)),
        ("ergodic gap and feasibility bounds", rate),
        ("Lyapunov sequence non-increasing", lyap),
        ("message-passing engine equals the solver", guarded(criterion_9)),
        ("traces identical across worker counts", guarded(criterion_10)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
