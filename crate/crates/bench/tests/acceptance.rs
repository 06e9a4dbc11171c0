//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. The
//! process fails when any criterion outside `KNOWN_RED` fails.

use gradtrack_bench::compare::{matched_period, most_efficient_agent};
use gradtrack_bench::experiment::{initial_state, simulate};
use gradtrack_bench::ExperimentConfig;
use gradtrack_core::cgt::cgt_rhs;
use gradtrack_core::dataset::{logistic_fixture, quadratic_fixture};
use gradtrack_core::dgt::{dgt_step_causal, DgtState};
use gradtrack_core::graph::{erdos_renyi, laplacian, metropolis_weights};
use gradtrack_core::linalg::block_sum;
use gradtrack_core::monitor::{LyapunovMonitor, PerturbationMonitor, RatioMonitor};
use gradtrack_core::ode::integrate;
use gradtrack_core::stacked::{join, optimality_errors, split};
use gradtrack_core::trace::{fit_decay, fit_decay_window};
use gradtrack_core::trigger::{zeno_report, AsyncParams, GridObserver, GridPoint, Schedule, Simulation, TriggerLaw};
use gradtrack_core::{
    iss_sweep, run_dgt, Certificate, DgtForm, Graph64, IntegratorConfig, IssVariant, LaplacianSet, Method, NoiseSpec,
    Problem64, Trace,
};
use nalgebra::{DMatrix, DVector};
use std::time::Instant;

/// Criteria expected to fail; the reasons are recorded with the results.
const KNOWN_RED: &[usize] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// N = 10 logistic fixture on ER(0.4), shared by criteria 3, 6, 7, 9, 10.
struct Fixture {
    cfg: ExperimentConfig,
    graph: Graph64,
    problem: Problem64,
    lap: LaplacianSet<f64>,
    x0: DVector<f64>,
}

fn fixture_config(variant: serde_json::Value) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "seed": 1,
        "problem": {"kind": "logistic", "d": 3, "m_i": 10, "C": 0.1},
        "graph": {"kind": "erdos_renyi", "n": 10, "p": 0.4},
        "variant": variant,
        "integrator": {"h": 1e-3, "t_end": 40.0},
    }))
    .unwrap()
}

fn fixture() -> Fixture {
    let cfg = fixture_config(serde_json::json!({"kind": "async", "lambda": 0.1, "nu": 5.0, "xi0": 1.0}));
    let graph = cfg.build_graph().unwrap();
    let problem = cfg.build_problem(graph.n()).unwrap();
    let lap = laplacian(&graph, problem.dim());
    let x0 = initial_state(&cfg, graph.n(), problem.dim());
    Fixture { cfg, graph, problem, lap, x0 }
}

fn cfg(h: f64, t_end: f64, sample_every: usize) -> IntegratorConfig<f64> {
    let mut c = IntegratorConfig::new(h, t_end, Method::Rk4);
    c.sample_every = sample_every;
    c
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let gamma = 0.01;
    let mut p: Problem64 = quadratic_fixture(5, 2, 1).unwrap();
    p.solve_centralized(1e-13).unwrap();
    let g = Graph64::ring(5);
    let lap = laplacian(&g, 2);
    let w = DMatrix::identity(5, 5) - &lap.small * gamma;
    let x0 = DVector::from_fn(10, |i, _| (i as f64 * 0.7).sin() * 3.0);

    let mut dgt = vec![DgtState::new(&p, x0.clone(), gamma)];
    for _ in 0..200 {
        let next = dgt_step_causal(dgt.last().unwrap(), &w, &p);
        dgt.push(next);
    }
    let euler_cfg = IntegratorConfig::new(gamma, 200.0 * gamma, Method::Euler);
    let rhs = |_t: f64, y: &DVector<f64>| {
        let (x, z) = split(y);
        let (dx, dz) = cgt_rhs(&x, &z, &lap, &p);
        join(&dx, &dz)
    };
    let euler = integrate(rhs, join(&x0, &DVector::zeros(10)), &euler_cfg, |_, y| Ok(y.clone())).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let gap = dgt
        .iter()
        .zip(&euler)
        .map(|(s, y)| (join(&s.x, &s.z) - y).amax())
        .fold(0.0, f64::max);
    let pass = euler.len() == 201 && gap < 1e-10 && elapsed < 1.0;
    outcome(pass, format!("201 iterates, max |DGT − Euler| = {gap:.2e} (< 1e-10), {elapsed:.3} s (< 1 s)"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let c: ExperimentConfig = serde_json::from_value(serde_json::json!({
        "seed": 1,
        "problem": {"kind": "logistic", "d": 3, "m_i": 10, "C": 0.1},
        "graph": {"kind": "erdos_renyi", "n": 50, "p": 0.4},
        "variant": {"kind": "cgt"},
        "integrator": {"h": 1e-3, "t_end": 40.0, "sample_every": 10},
    }))
    .unwrap();
    c.validate().unwrap();
    let out = simulate(&c).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let s = &out.summary;
    let (e0, e1) = (s.initial_err.unwrap(), s.final_err.unwrap());
    let (r2, rate) = (s.decay_r2.unwrap_or(f64::NAN), s.decay_rate.unwrap_or(f64::NAN));
    let pass = r2 > 0.95 && rate > 0.0 && e1 < 1e-4 * e0 && elapsed < 60.0;
    outcome(
        pass,
        format!(
            "N=50: rate {rate:.3}, R² {r2:.5} (> 0.95), final/initial {:.2e} (< 1e-4), {elapsed:.1} s (< 60 s)",
            e1 / e0
        ),
    )
}

fn criterion_3(f: &Fixture) -> Outcome {
    let c = cfg(1e-3, 40.0, 1);
    let schedules = [
        ("cgt", Schedule::Continuous),
        ("sync", Schedule::periodic(0.1, 1e-3).unwrap()),
        ("async", Schedule::Event(AsyncParams::new(0.1, 5.0, 10))),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, sched) in schedules {
        let run = Simulation::new(&f.problem, &f.lap, sched, c).run(f.x0.clone()).unwrap();
        let drift = run.trace.max_z_mean_norm().max(block_sum(&run.final_state.z, 3).norm());
        worst = worst.max(drift);
        parts.push(format!("{name} {drift:.1e}"));
    }
    outcome(worst < 1e-8, format!("max ‖𝟏ᵀz(t)‖ over 40 s: {} (< 1e-8)", parts.join(", ")))
}

/// Root of `r̄(Δ) = s` for `u̇ = βu + c₂u²`, `u = 1 + r`, `u(0) = 1`, by bisection.
/// With `w = 1/u`: `w(t) = 1 + (1 + c₂/β)(e^{−βt} − 1)`, and `r̄ = s` iff `w = 1/(1+s)`.
fn bisect_delta(s: f64, beta: f64, c2: f64) -> f64 {
    let residual = |t: f64| s / (1.0 + s) + (1.0 + c2 / beta) * (-beta * t).exp_m1();
    let (mut lo, mut hi) = (0.0, (1.0 + beta / c2).ln() / beta);
    assert!(residual(lo) > 0.0 && residual(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut worst_rel = 0.0f64;
    let mut cases = 0;
    let mut failures = Vec::new();
    for n in [3, 5, 10] {
        for kind in ["ring", "er"] {
            let (graph, problem): (Graph64, Problem64) = match kind {
                "ring" => (Graph64::ring(n), quadratic_fixture(n, 2, n as u64).unwrap()),
                _ => (erdos_renyi(n, 0.4, n as u64).unwrap(), logistic_fixture(n, 10, 3, 0.1, n as u64).unwrap()),
            };
            cases += 1;
            let cert = match Certificate::build(&graph, &problem) {
                Ok(c) => c,
                Err(e) => {
                    pass = false;
                    failures.push(format!("{kind}-{n}: {e}"));
                    continue;
                }
            };
            let lam = cert.lambda_star();
            let nu = cert.nu_star(lam / 2.0);
            let ok = cert.eig_min_p > 0.0
                && cert.eig_min_q_tilde > 0.0
                && cert.q > 0.0
                && cert.delta_star() > 0.0
                && lam > 0.0
                && nu.is_some_and(f64::is_finite);
            let oracle = bisect_delta(cert.period.ratio_bound, cert.beta, cert.period.c2);
            let rel = (oracle - cert.delta_star()).abs() / oracle;
            worst_rel = worst_rel.max(rel);
            if !ok || rel > 1e-10 {
                pass = false;
                failures.push(format!("{kind}-{n}"));
            }
        }
    }
    outcome(
        pass,
        format!(
            "{cases} graphs (ring/ER, N ∈ {{3,5,10}}): P≻0, Q̃≻0, q>0, Δ*>0, λ*>0, ν*(λ*/2) finite; \
             max relative |Δ* − bisection| = {worst_rel:.1e} (≤ 1e-10){}",
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

/// Ring-5 scalar quadratic used by criteria 5 and 8.
fn small_fixture() -> (Graph64, Problem64, LaplacianSet<f64>, DVector<f64>) {
    let g = Graph64::ring(5);
    let mut p: Problem64 = quadratic_fixture(5, 1, 1).unwrap();
    p.solve_centralized(1e-13).unwrap();
    let lap = laplacian(&g, 1);
    let x0 = gradtrack_core::cgt::default_initial_state(5, 1, 1);
    (g, p, lap, x0)
}

fn criterion_5() -> Outcome {
    let (g, p, lap, x0) = small_fixture();
    let cert = Certificate::build(&g, &p).unwrap();
    let probe = cert.probe(&p).unwrap();
    let delta = cert.delta_star() / 2.0;
    let every = 10;
    let c = cfg(delta / every as f64, 20.0, 1000);
    let sim = Simulation::new(&p, &lap, Schedule::Periodic { every }, c).with_probe(&probe);
    let mut ratio = RatioMonitor::from_certificate(&probe, &cert);
    let run = sim.run_observed(x0, &mut [&mut ratio]).unwrap();
    let fit = fit_decay(&run.trace);
    let r2 = fit.map_or(f64::NAN, |f| f.r2);
    let pass = ratio.violations == 0 && ratio.samples > 0 && r2 > 0.95 && fit.is_some_and(|f| f.rate > 0.0);
    outcome(
        pass,
        format!(
            "Δ = Δ*/2 = {delta:.3e}: max r = {:.2e} < √(q/c₁) = {:.2e} at {} of {} samples, decay R² {r2:.4} (> 0.95)",
            ratio.max_r,
            ratio.bound,
            ratio.samples - ratio.violations,
            ratio.samples
        ),
    )
}

/// Post-hoc check of the event law at every agent that did not broadcast.
struct Compliance {
    lambda: f64,
    checked: usize,
    violations: usize,
}

impl GridObserver<f64> for Compliance {
    fn observe(&mut self, p: &GridPoint<'_, f64>) -> gradtrack_core::Result<()> {
        if p.k == 0 {
            return Ok(());
        }
        let d = p.cache.d();
        for i in (0..p.fired.len()).filter(|&i| !p.fired[i]) {
            let r = i * d..(i + 1) * d;
            let e = r
                .clone()
                .map(|k| {
                    (p.x[k] - p.cache.x_hat[k]).powi(2)
                        + (p.z[k] - p.cache.z_hat[k]).powi(2)
                        + (p.g[k] - p.cache.g_hat[k]).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let h = r.map(|k| (p.z[k] + p.g[k]).powi(2)).sum::<f64>().sqrt();
            self.checked += 1;
            if e > self.lambda * h + p.xi[i].abs() {
                self.violations += 1;
            }
        }
        Ok(())
    }
}

fn criterion_6(f: &Fixture) -> (Outcome, Trace, gradtrack_core::EventLog) {
    let c = cfg(1e-3, 40.0, 1);
    let sim = Simulation::new(&f.problem, &f.lap, Schedule::Event(AsyncParams::new(0.1, 5.0, 10)), c);
    let mut comp = Compliance { lambda: 0.1, checked: 0, violations: 0 };
    let run = sim.run_observed(f.x0.clone(), &mut [&mut comp]).unwrap();
    let fit = fit_decay(&run.trace);
    let zeno = zeno_report(&run.events, 40.0);
    let steps = c.steps() as u64;
    let total = run.events.total();
    let (e0, e1) = (run.trace.first().unwrap().err_x, run.trace.last().unwrap().err_x);
    let r2 = fit.map_or(f64::NAN, |f| f.r2);
    let pass = r2 > 0.95
        && fit.is_some_and(|f| f.rate > 0.0)
        && e1 < e0
        && total < 10 * (steps + 1)
        && zeno.flagged().is_empty()
        && comp.checked > 0
        && comp.violations == 0;
    let detail = format!(
        "N=10, λ=0.1, ν=5, h=1e-3: decay rate {:.3}, R² {r2:.4}; {total} events vs {} checks; \
         Zeno flags {:?}; compliance {}/{} non-trigger samples",
        fit.map_or(f64::NAN, |f| f.rate),
        10 * (steps + 1),
        zeno.flagged(),
        comp.checked - comp.violations,
        comp.checked
    );
    (outcome(pass, detail), run.trace, run.events)
}

fn criterion_7(f: &Fixture, async_trace: &Trace, async_log: &gradtrack_core::EventLog) -> Outcome {
    let target = 1e-4;
    let Some((a_agent, a_count, a_t)) = most_efficient_agent(async_trace, target) else {
        return outcome(false, "async never reached the target".into());
    };
    let delta = matched_period(async_log, a_t).unwrap();
    let c = cfg(1e-3, 40.0, 1);
    let sync = Simulation::new(&f.problem, &f.lap, Schedule::periodic(delta, 1e-3).unwrap(), c).run(f.x0.clone());
    let sync_best = sync.ok().and_then(|r| most_efficient_agent(&r.trace, target));
    let w = metropolis_weights(&f.graph);
    let dgt = run_dgt(&f.problem, &w, 0.1, f.x0.clone(), 5000, DgtForm::Causal).unwrap();
    let dgt_best = most_efficient_agent(&dgt, target);
    let fmt = |b: Option<(usize, u64, f64)>| b.map_or("not reached".to_string(), |b| format!("{} (agent {})", b.1, b.0 + 1));
    let beats = |b: Option<(usize, u64, f64)>| b.is_none_or(|b| a_count < b.1);
    let pass = beats(sync_best) && beats(dgt_best);
    outcome(
        pass,
        format!(
            "target 1e-4, most efficient agent: async {a_count} (agent {}), sync(Δ matched = {delta:.4}) {}, DGT(γ=0.1) {}; \
             async<sync {}, async<DGT {}",
            a_agent + 1,
            fmt(sync_best),
            fmt(dgt_best),
            beats(sync_best),
            beats(dgt_best)
        ),
    )
}

fn criterion_8() -> Outcome {
    let (g, p, lap, x0) = small_fixture();
    let cert = Certificate::build(&g, &p).unwrap();
    let probe = cert.probe(&p).unwrap();

    let sim = Simulation::new(&p, &lap, Schedule::Continuous, cfg(1e-3, 20.0, 1));
    let mut nominal = LyapunovMonitor::new(&probe, 1e-10);
    sim.run_observed(x0.clone(), &mut [&mut nominal]).unwrap();

    let lam = cert.lambda_star() / 2.0;
    let nu = 2.0 * cert.nu_star(lam).unwrap();
    let sim = Simulation::new(&p, &lap, Schedule::Event(AsyncParams::new(lam, nu, 5)), cfg(1e-3, 20.0, 1));
    let mut tilde = LyapunovMonitor::new(&probe, 1e-10);
    let mut pert = PerturbationMonitor::new(&probe, &cert, lam);
    sim.run_observed(x0, &mut [&mut tilde, &mut pert]).unwrap();

    let pass = nominal.violations == 0 && tilde.violations == 0 && nominal.values.len() > 1 && tilde.values.len() > 1;
    outcome(
        pass,
        format!(
            "C-GT V: {} increases beyond 1e-10 over {} steps (max step change {:.1e}); \
             async λ=λ*/2={lam:.2e}, ν=2ν*={nu:.2e}: Ṽ {} increases (max step change {:.1e}), trigger bound held at {}/{} samples",
            nominal.violations,
            nominal.values.len() - 1,
            nominal.max_increase,
            tilde.violations,
            tilde.max_increase,
            pert.samples - pert.violations,
            pert.samples
        ),
    )
}

fn criterion_9(f: &Fixture) -> Outcome {
    let c = cfg(1e-3, 40.0, 10);
    let variants = [
        IssVariant::Cgt,
        IssVariant::Sync { delta: 0.1 },
        IssVariant::Async(AsyncParams::new(0.1, 5.0, 10)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for v in &variants {
        let report = iss_sweep(&f.problem, &f.lap, v, &[0.0, 0.01, 0.1], &f.x0, &c, f.cfg.seed).unwrap();
        let finite = report.rows.iter().all(|r| r.steady_state_err.is_finite() && r.sup_err.is_finite());
        let steady: Vec<String> = report.rows.iter().map(|r| format!("{:.1e}", r.steady_state_err)).collect();

        let mut noise = NoiseSpec::uniform(0.1, f.cfg.seed);
        noise.off_after = Some(20.0);
        let run = Simulation::new(&f.problem, &f.lap, v.schedule(1e-3).unwrap(), c)
            .with_noise(&noise)
            .run(f.x0.clone())
            .unwrap();
        let fit = fit_decay_window(&run.trace, 20.0, 40.0);
        let r2 = fit.map_or(f64::NAN, |f| f.r2);
        let ok = finite && report.is_monotone() && r2 > 0.9 && fit.is_some_and(|f| f.rate > 0.0);
        pass &= ok;
        parts.push(format!("{} steady [{}] switch-off R² {r2:.4}", v.name(), steady.join(", ")));
    }
    outcome(pass, format!("amplitudes {{0, 0.01, 0.1}}: {} (non-decreasing, R² > 0.9)", parts.join("; ")))
}

/// RK4 C-GT reference: per-step errors, final state and `sup ‖ẏ‖`.
fn reference(f: &Fixture, c: &IntegratorConfig<f64>) -> (Vec<f64>, DVector<f64>, f64) {
    let x_star = f.problem.x_star().unwrap().clone();
    let rhs = |_t: f64, y: &DVector<f64>| {
        let (x, z) = split(y);
        let (dx, dz) = cgt_rhs(&x, &z, &f.lap, &f.problem);
        join(&dx, &dz)
    };
    let mut sup = 0.0f64;
    let mut last = DVector::zeros(0);
    let errs = integrate(rhs, join(&f.x0, &DVector::zeros(f.x0.len())), c, |_, y| {
        let (x, z) = split(y);
        let (dx, dz) = cgt_rhs(&x, &z, &f.lap, &f.problem);
        sup = sup.max(join(&dx, &dz).norm());
        last = x.clone();
        Ok(optimality_errors(&x, &x_star).0)
    })
    .unwrap();
    (errs, last, sup)
}

fn criterion_10(f: &Fixture) -> Outcome {
    let mut gaps = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for h in [1e-3, 5e-4] {
        let c = cfg(h, 10.0, 1);
        let (ref_err, ref_x, sup) = reference(f, &c);
        let bound = 10.0 * h * sup;
        let mut worst = 0.0f64;
        let every = AsyncParams { law: TriggerLaw::EveryCheck, ..AsyncParams::new(0.1, 5.0, 10) };
        for (name, sched) in [("sync Δ=h", Schedule::Periodic { every: 1 }), ("async every check", Schedule::Event(every))] {
            let run = Simulation::new(&f.problem, &f.lap, sched, c).run(f.x0.clone()).unwrap();
            let err_gap = run.trace.rows.iter().zip(&ref_err).map(|(r, e)| (r.err_x - e).abs()).fold(0.0, f64::max);
            let state_gap = (&run.final_state.x - &ref_x).amax();
            let gap = err_gap.max(state_gap);
            worst = worst.max(gap);
            pass &= run.trace.len() == ref_err.len() && gap <= bound;
            parts.push(format!("h={h:e} {name}: gap {gap:.2e} ≤ {bound:.2e}"));
        }
        gaps.push(worst);
    }
    let order = gaps[0] / gaps[1];
    pass &= (1.6..=2.4).contains(&order);
    outcome(pass, format!("{}; gap ratio h→h/2 = {order:.3} (first order, ∈ [1.6, 2.4])", parts.join(", ")))
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut run = |k: usize, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {k}: {} - {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((k, o));
    };
    let fx = fixture();
    run(1, &mut criterion_1);
    run(2, &mut criterion_2);
    run(3, &mut || criterion_3(&fx));
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    let mut async_run = None;
    run(6, &mut || {
        let (o, tr, log) = criterion_6(&fx);
        async_run = Some((tr, log));
        o
    });
    let (atr, alog) = async_run.unwrap();
    run(7, &mut || criterion_7(&fx, &atr, &alog));
    run(8, &mut criterion_8);
    run(9, &mut || criterion_9(&fx));
    run(10, &mut || criterion_10(&fx));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(k, _)| *k).collect();
    let unexpected: Vec<usize> = failed.iter().copied().filter(|k| !KNOWN_RED.contains(k)).collect();
    println!("acceptance: {}/{} PASS; failed {:?}; known red {:?}", results.len() - failed.len(), results.len(), failed, KNOWN_RED);
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
