//! Sampled-broadcast gradient tracking.
//!
//! Each agent keeps integrating its own `(x_i, z_i)` but its neighbours only
//! see the last broadcast `(x̂_i, ẑ_i, ∇f̂_i)`:
//!
//! ```text
//! ẋ_i = −Σ_j w_ij (x̂_i − x̂_j) − z_i − ∇f_i(x_i)
//! ż_i = −Σ_j w_ij (ẑ_i − ẑ_j) − Σ_j w_ij (∇f̂_i − ∇f̂_j)
//! ```
//!
//! Broadcasts happen either periodically for all agents at once, or per
//! agent when `‖e_i‖ > λ‖h_i‖ + |ξ_i|` with `ξ_i(t) = ξ_i(0) e^{−νt}`.
//! Triggers are checked on the integration grid only.

use crate::certify::LyapunovProbe;
use crate::cgt::{cgt_rhs, require_x_star};
use crate::costs::Problem;
use crate::error::{Error, Result};
use crate::graph::LaplacianSet;
use crate::ode::IntegratorConfig;
use crate::robust::{add_noise, NoiseSpec};
use crate::scalar::{to_f64, Real};
use crate::stacked::{block, join, mean_norm, optimality_errors, split, DIVERGENCE_GUARD};
use crate::trace::{Trace, TraceRow};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Last broadcast values, stacked like the state.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastCache<T: Real> {
    pub x_hat: DVector<T>,
    pub z_hat: DVector<T>,
    pub g_hat: DVector<T>,
    pub last_t: Vec<T>,
    d: usize,
}

impl<T: Real> BroadcastCache<T> {
    /// Everyone broadcasts at `t`.
    pub fn full(x: &DVector<T>, z: &DVector<T>, g: &DVector<T>, t: T, d: usize) -> Self {
        Self { x_hat: x.clone(), z_hat: z.clone(), g_hat: g.clone(), last_t: vec![t; x.len() / d], d }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.last_t.len()
    }

    /// Agent `i` broadcasts its current values at `t`.
    pub fn refresh(&mut self, i: usize, x: &DVector<T>, z: &DVector<T>, g: &DVector<T>, t: T) {
        let d = self.d;
        self.x_hat.rows_mut(i * d, d).copy_from(&x.rows(i * d, d));
        self.z_hat.rows_mut(i * d, d).copy_from(&z.rows(i * d, d));
        self.g_hat.rows_mut(i * d, d).copy_from(&g.rows(i * d, d));
        self.last_t[i] = t;
    }
}

/// Full state of a triggered run.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggeredState<T: Real> {
    pub x: DVector<T>,
    pub z: DVector<T>,
    /// Auxiliary thresholds, empty for periodic broadcasting.
    pub xi: DVector<T>,
    pub cache: BroadcastCache<T>,
    pub t: T,
}

/// Right-hand side with cached neighbour information.
pub fn triggered_rhs<T: Real>(
    x: &DVector<T>,
    z: &DVector<T>,
    cache: &BroadcastCache<T>,
    lap: &LaplacianSet<T>,
    problem: &Problem<T>,
) -> (DVector<T>, DVector<T>) {
    let g = problem.stacked_gradient(x);
    let dx = -lap.apply(&cache.x_hat) - z - g;
    let dz = -lap.apply(&cache.z_hat) - lap.apply(&cache.g_hat);
    (dx, dz)
}

/// Which inequality decides an asynchronous broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerLaw {
    /// `‖e_i‖ > λ‖h_i‖ + |ξ_i|`.
    #[default]
    WithAuxiliary,
    /// `‖e_i‖ > λ‖h_i‖`; may chatter near the optimum.
    WithoutAuxiliary,
    /// Broadcast at every check.
    EveryCheck,
}

/// `(‖e_i‖, ‖h_i‖)` with `e_i = (x_i − x̂_i, z_i − ẑ_i, ∇f_i − ∇f̂_i)` and
/// `h_i = z_i + ∇f_i(x_i)`.
pub fn trigger_quantities<T: Real>(
    i: usize,
    x: &DVector<T>,
    z: &DVector<T>,
    g: &DVector<T>,
    cache: &BroadcastCache<T>,
) -> (T, T) {
    let d = cache.d();
    let (xi, zi, gi) = (block(x, i, d), block(z, i, d), block(g, i, d));
    let (xh, zh, gh) = (block(&cache.x_hat, i, d), block(&cache.z_hat, i, d), block(&cache.g_hat, i, d));
    let mut e2 = T::zero();
    let mut h2 = T::zero();
    for k in 0..d {
        let (a, b, c) = (xi[k] - xh[k], zi[k] - zh[k], gi[k] - gh[k]);
        e2 += a * a + b * b + c * c;
        let h = zi[k] + gi[k];
        h2 += h * h;
    }
    (e2.sqrt(), h2.sqrt())
}

fn fires<T: Real>(law: TriggerLaw, e: T, h: T, xi: T, lambda: T) -> bool {
    match law {
        TriggerLaw::WithAuxiliary => e > lambda * h + xi.abs(),
        TriggerLaw::WithoutAuxiliary => e > lambda * h,
        TriggerLaw::EveryCheck => true,
    }
}

/// Evaluates the event law of agent `i` on the current state.
pub fn async_trigger_check<T: Real>(i: usize, state: &TriggeredState<T>, problem: &Problem<T>, lambda: T) -> bool {
    let g = problem.stacked_gradient(&state.x);
    let (e, h) = trigger_quantities(i, &state.x, &state.z, &g, &state.cache);
    fires(TriggerLaw::WithAuxiliary, e, h, state.xi[i], lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Initial,
    Sync,
    Async,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Initial => "initial",
            EventKind::Sync => "sync",
            EventKind::Async => "async",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "initial" => Ok(EventKind::Initial),
            "sync" => Ok(EventKind::Sync),
            "async" => Ok(EventKind::Async),
            other => Err(Error::InvalidInput(format!("unknown event kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    /// 0-based.
    pub agent: usize,
    pub kind: EventKind,
}

/// Time-ordered broadcast record.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub counts: Vec<u64>,
    /// Smallest gap between consecutive broadcasts of each agent.
    pub min_gap: Vec<f64>,
    last: Vec<Option<f64>>,
}

impl EventLog {
    pub fn new(n: usize) -> Self {
        Self { events: Vec::new(), counts: vec![0; n], min_gap: vec![f64::INFINITY; n], last: vec![None; n] }
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, t: f64, agent: usize, kind: EventKind) {
        if let Some(prev) = self.last[agent] {
            self.min_gap[agent] = self.min_gap[agent].min(t - prev);
        }
        self.last[agent] = Some(t);
        self.counts[agent] += 1;
        self.events.push(Event { t, agent, kind });
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times_of(&self, agent: usize) -> Vec<f64> {
        self.events.iter().filter(|e| e.agent == agent).map(|e| e.t).collect()
    }

    /// Writes `t,agent_id,kind` with 1-based agent ids.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "agent_id", "kind"])?;
        for e in &self.events {
            out.write_record([format!("{:e}", e.t), (e.agent + 1).to_string(), e.kind.as_str().to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, n: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut log = Self::new(n);
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::InvalidInput(format!("event row has {} fields", rec.len())));
            }
            let t: f64 = rec[0].parse().map_err(|e| Error::InvalidInput(format!("event time: {e}")))?;
            let id: usize = rec[1].parse().map_err(|e| Error::InvalidInput(format!("agent id: {e}")))?;
            if id == 0 || id > n {
                return Err(Error::InvalidInput(format!("agent id {id} out of range 1..={n}")));
            }
            log.record(t, id - 1, EventKind::parse(&rec[2])?);
        }
        Ok(log)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentZeno {
    pub events: u64,
    pub min_gap: f64,
    pub mean_gap: f64,
    pub overall_rate: f64,
    /// Events per unit time over the last 10% of the horizon.
    pub trailing_rate: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZenoReport {
    pub agents: Vec<AgentZeno>,
}

impl ZenoReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.agents.iter().enumerate().filter(|(_, a)| a.flagged).map(|(i, _)| i).collect()
    }
}

/// Inter-event statistics; an agent is flagged when its trailing rate is
/// more than ten times its overall rate.
pub fn zeno_report(log: &EventLog, horizon: f64) -> ZenoReport {
    let cut = 0.9 * horizon;
    let window = horizon - cut;
    let agents = (0..log.n())
        .map(|i| {
            let times = log.times_of(i);
            let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let mean_gap = if gaps.is_empty() { f64::INFINITY } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
            let overall_rate = if horizon > 0.0 { times.len() as f64 / horizon } else { 0.0 };
            let trailing = times.iter().filter(|&&t| t >= cut).count() as f64;
            let trailing_rate = if window > 0.0 { trailing / window } else { 0.0 };
            AgentZeno {
                events: times.len() as u64,
                min_gap,
                mean_gap,
                overall_rate,
                trailing_rate,
                flagged: trailing_rate > 10.0 * overall_rate,
            }
        })
        .collect();
    ZenoReport { agents }
}

/// Parameters of the event law.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncParams<T: Real> {
    pub lambda: T,
    pub nu: T,
    pub xi0: DVector<T>,
    pub law: TriggerLaw,
}

impl<T: Real> AsyncParams<T> {
    /// `ξ(0) = 𝟏`.
    pub fn new(lambda: T, nu: T, n: usize) -> Self {
        Self { lambda, nu, xi0: DVector::from_element(n, T::one()), law: TriggerLaw::WithAuxiliary }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.xi0.len() != n {
            return Err(Error::InvalidInput(format!("ξ(0) must have {n} entries")));
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return Err(Error::InvalidInput("λ must be positive".into()));
        }
        if self.law == TriggerLaw::WithAuxiliary {
            if !(self.nu > T::zero() && self.nu.is_finite()) {
                return Err(Error::InvalidInput("ν must be positive".into()));
            }
            if self.xi0.iter().all(|v| *v == T::zero()) {
                return Err(Error::InvalidInput("ξ(0) must not be identically zero".into()));
            }
        }
        Ok(())
    }

    /// `ξ(t) = ξ(0) e^{−νt}`.
    pub fn xi_at(&self, t: T) -> DVector<T> {
        &self.xi0 * (-self.nu * t).exp()
    }
}

/// How neighbour information is refreshed.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T: Real> {
    /// Neighbours see the live state (plain C-GT).
    Continuous,
    /// All agents broadcast every `every` grid steps.
    Periodic { every: usize },
    Event(AsyncParams<T>),
}

impl<T: Real> Schedule<T> {
    /// Periodic schedule for period `delta`, rounded up to a multiple of `h`.
    pub fn periodic(delta: T, h: T) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {delta}")));
        }
        let ratio = to_f64(delta) / to_f64(h);
        let every = (ratio - 1e-9).ceil().max(1.0) as usize;
        if (every as f64 - ratio).abs() > 1e-9 * ratio.max(1.0) {
            log::warn!("period {delta} rounded up to {} grid steps ({})", every, to_f64(h) * every as f64);
        }
        Ok(Schedule::Periodic { every })
    }
}

/// Grid-point snapshot handed to observers. `cache_before` is what the
/// dynamics used on the step just finished; `cache` includes this point's
/// broadcasts.
pub struct GridPoint<'a, T: Real> {
    pub k: usize,
    pub t: T,
    pub x: &'a DVector<T>,
    pub z: &'a DVector<T>,
    pub g: &'a DVector<T>,
    pub xi: &'a DVector<T>,
    pub cache_before: &'a BroadcastCache<T>,
    pub cache: &'a BroadcastCache<T>,
    pub fired: &'a [bool],
}

pub trait GridObserver<T: Real> {
    fn observe(&mut self, p: &GridPoint<'_, T>) -> Result<()>;
}

#[derive(Debug, Clone)]
pub struct TriggeredRun<T: Real> {
    pub trace: Trace,
    pub events: EventLog,
    pub final_state: TriggeredState<T>,
}

/// One configured simulation.
pub struct Simulation<'a, T: Real> {
    pub problem: &'a Problem<T>,
    pub lap: &'a LaplacianSet<T>,
    pub schedule: Schedule<T>,
    pub cfg: IntegratorConfig<T>,
    pub noise: Option<&'a NoiseSpec>,
    pub probe: Option<&'a LyapunovProbe<T>>,
}

impl<'a, T: Real> Simulation<'a, T> {
    pub fn new(problem: &'a Problem<T>, lap: &'a LaplacianSet<T>, schedule: Schedule<T>, cfg: IntegratorConfig<T>) -> Self {
        Self { problem, lap, schedule, cfg, noise: None, probe: None }
    }

    pub fn with_noise(mut self, noise: &'a NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_probe(mut self, probe: &'a LyapunovProbe<T>) -> Self {
        self.probe = Some(probe);
        self
    }

    pub fn run(&self, x0: DVector<T>) -> Result<TriggeredRun<T>> {
        self.run_observed(x0, &mut [])
    }

    pub fn run_observed(&self, x0: DVector<T>, observers: &mut [&mut dyn GridObserver<T>]) -> Result<TriggeredRun<T>> {
        let z0 = DVector::zeros(x0.len());
        self.run_from(x0, z0, observers)
    }

    pub fn run_from(
        &self,
        x0: DVector<T>,
        z0: DVector<T>,
        observers: &mut [&mut dyn GridObserver<T>],
    ) -> Result<TriggeredRun<T>> {
        let (problem, lap, cfg) = (self.problem, self.lap, &self.cfg);
        cfg.validate()?;
        let x_star = require_x_star(problem)?;
        let (n, d) = (problem.n(), problem.dim());
        if x0.len() != n * d || z0.len() != n * d {
            return Err(Error::InvalidInput(format!("initial state must have {} entries", n * d)));
        }
        if lap.n() != n || lap.d != d {
            return Err(Error::InvalidInput("Laplacian does not match the problem size".into()));
        }
        let asynchronous = match &self.schedule {
            Schedule::Event(p) => {
                p.validate(n)?;
                Some(p)
            }
            Schedule::Periodic { every } if *every == 0 => {
                return Err(Error::InvalidInput("period must span at least one step".into()));
            }
            _ => None,
        };
        let broadcasting = !matches!(self.schedule, Schedule::Continuous);

        let mut x = x0;
        let mut z = z0;
        let mut g = problem.stacked_gradient(&x);
        let mut cache = BroadcastCache::full(&x, &z, &g, T::zero(), d);
        let mut xi = asynchronous.map_or_else(|| DVector::zeros(0), |p| p.xi0.clone());
        let mut events = EventLog::new(n);
        let mut fired = vec![broadcasting; n];
        if broadcasting {
            for i in 0..n {
                events.record(0.0, i, EventKind::Initial);
            }
        }

        let mut rows = Vec::with_capacity(cfg.steps() / cfg.sample_every + 2);
        let row = |t: T, x: &DVector<T>, z: &DVector<T>, xi: &DVector<T>, events: &EventLog| -> Result<TraceRow> {
            let (err_x, agent_err) = optimality_errors(x, &x_star);
            if !err_x.is_finite() || err_x > DIVERGENCE_GUARD {
                return Err(Error::Diverged { t: to_f64(t), err: err_x });
            }
            let lyap = self.probe.map(|p| {
                if xi.is_empty() {
                    to_f64(p.v(x, z))
                } else {
                    to_f64(p.v_tilde(x, z, xi))
                }
            });
            Ok(TraceRow {
                t: to_f64(t),
                err_x,
                z_mean_norm: mean_norm(z, d),
                lyap,
                comm_total: events.total(),
                agent_comm: events.counts.clone(),
                agent_err,
            })
        };

        rows.push(row(T::zero(), &x, &z, &xi, &events)?);
        if !observers.is_empty() {
            let p = GridPoint { k: 0, t: T::zero(), x: &x, z: &z, g: &g, xi: &xi, cache_before: &cache, cache: &cache, fired: &fired };
            for o in observers.iter_mut() {
                o.observe(&p)?;
            }
        }

        let steps = cfg.steps();
        for k in 0..steps {
            let t0 = cfg.time(k);
            let v = self.noise.map(|spec| spec.sample::<T>(k, to_f64(t0), n * d)).filter(|v| !v.is_zero());
            let mut rhs = |_t: T, y: &DVector<T>| {
                let (xs, zs) = split(y);
                let (mut dx, mut dz) = if broadcasting {
                    triggered_rhs(&xs, &zs, &cache, lap, problem)
                } else {
                    cgt_rhs(&xs, &zs, lap, problem)
                };
                if let Some(v) = &v {
                    add_noise(&mut dx, &mut dz, v, lap);
                }
                join(&dx, &dz)
            };
            let y = cfg.method.step(&mut rhs, t0, &join(&x, &z), cfg.h);
            let t = cfg.time(k + 1);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: to_f64(t) });
            }
            (x, z) = split(&y);
            g = problem.stacked_gradient(&x);
            if let Some(p) = asynchronous {
                xi = p.xi_at(t);
            }

            let before = (!observers.is_empty()).then(|| cache.clone());
            match &self.schedule {
                Schedule::Continuous => {}
                Schedule::Periodic { every } => fired.fill((k + 1) % every == 0),
                Schedule::Event(p) => {
                    for (i, f) in fired.iter_mut().enumerate() {
                        let (e, h) = trigger_quantities(i, &x, &z, &g, &cache);
                        *f = fires(p.law, e, h, xi[i], p.lambda);
                    }
                }
            }
            let kind = if asynchronous.is_some() { EventKind::Async } else { EventKind::Sync };
            for i in (0..n).filter(|&i| fired[i]) {
                cache.refresh(i, &x, &z, &g, t);
                events.record(to_f64(t), i, kind);
            }

            if let Some(before) = &before {
                let p = GridPoint { k: k + 1, t, x: &x, z: &z, g: &g, xi: &xi, cache_before: before, cache: &cache, fired: &fired };
                for o in observers.iter_mut() {
                    o.observe(&p)?;
                }
            }
            if cfg.keeps(k + 1) {
                rows.push(row(t, &x, &z, &xi, &events)?);
            } else {
                let (err, _) = optimality_errors(&x, &x_star);
                if !err.is_finite() || err > DIVERGENCE_GUARD {
                    return Err(Error::Diverged { t: to_f64(t), err });
                }
            }
        }
        let t = cfg.time(steps);
        Ok(TriggeredRun { trace: Trace { rows }, events, final_state: TriggeredState { x, z, xi, cache, t } })
    }
}

/// Periodic broadcasting with period `delta`.
pub fn sync_run<T: Real>(
    problem: &Problem<T>,
    lap: &LaplacianSet<T>,
    x0: DVector<T>,
    delta: T,
    cfg: &IntegratorConfig<T>,
) -> Result<(Trace, EventLog)> {
    let sim = Simulation::new(problem, lap, Schedule::periodic(delta, cfg.h)?, *cfg);
    let run = sim.run(x0)?;
    Ok((run.trace, run.events))
}

/// Event-triggered broadcasting checked every `cfg.h`.
pub fn async_run<T: Real>(
    problem: &Problem<T>,
    lap: &LaplacianSet<T>,
    x0: DVector<T>,
    params: AsyncParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<(Trace, EventLog)> {
    let sim = Simulation::new(problem, lap, Schedule::Event(params), *cfg);
    let run = sim.run(x0)?;
    Ok((run.trace, run.events))
}

/// Mean gap between consecutive broadcasts of agent `i` up to time `until`.
pub fn mean_gap_until(log: &EventLog, agent: usize, until: f64) -> Option<f64> {
    let times: Vec<f64> = log.times_of(agent).into_iter().filter(|&t| t <= until).collect();
    (times.len() >= 2).then(|| (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgt::{cgt_rhs, default_initial_state, run_cgt};
    use crate::dataset::{logistic_fixture, quadratic_fixture};
    use crate::graph::{erdos_renyi, laplacian, Graph};
    use crate::linalg::{block_sum, tile};
    use crate::ode::Method;

    fn fixture() -> (Problem<f64>, LaplacianSet<f64>) {
        let mut p = logistic_fixture(6, 10, 3, 0.1, 4).unwrap();
        p.solve_centralized(1e-12).unwrap();
        (p, laplacian(&erdos_renyi(6, 0.5, 4).unwrap(), 3))
    }

    #[test]
    fn fresh_cache_reduces_to_cgt() {
        let (p, lap) = fixture();
        let x = default_initial_state::<f64>(6, 3, 1);
        let z = default_initial_state::<f64>(6, 3, 2);
        let g = p.stacked_gradient(&x);
        let cache = BroadcastCache::full(&x, &z, &g, 0.0, 3);
        let (a, b) = triggered_rhs(&x, &z, &cache, &lap, &p);
        let (c, d) = cgt_rhs(&x, &z, &lap, &p);
        assert_eq!(a, c);
        assert_eq!(b, d);
    }

    #[test]
    fn stale_cache_keeps_z_mean() {
        let (p, lap) = fixture();
        let x = default_initial_state::<f64>(6, 3, 1);
        let z = default_initial_state::<f64>(6, 3, 2);
        let cache = BroadcastCache::full(
            &default_initial_state(6, 3, 3),
            &default_initial_state(6, 3, 4),
            &default_initial_state(6, 3, 5),
            0.0,
            3,
        );
        let (_, dz) = triggered_rhs(&x, &z, &cache, &lap, &p);
        assert!(block_sum(&dz, 3).amax() < 1e-12);
    }

    #[test]
    fn equilibrium_with_fresh_cache() {
        let (p, lap) = fixture();
        let x = tile(p.x_star().unwrap(), 6);
        let z = -p.stacked_gradient(&x);
        let cache = BroadcastCache::full(&x, &z, &p.stacked_gradient(&x), 0.0, 3);
        let (dx, dz) = triggered_rhs(&x, &z, &cache, &lap, &p);
        assert!(dx.amax() < 1e-10 && dz.amax() < 1e-10);
    }

    fn state_with(x: Vec<f64>, z: Vec<f64>, xh: Vec<f64>, zh: Vec<f64>, gh: Vec<f64>, xi: f64) -> TriggeredState<f64> {
        let cache = BroadcastCache::full(&DVector::from_vec(xh), &DVector::from_vec(zh), &DVector::from_vec(gh), 0.0, 1);
        TriggeredState { x: DVector::from_vec(x), z: DVector::from_vec(z), xi: DVector::from_element(1, xi), cache, t: 0.0 }
    }

    #[test]
    fn trigger_check_examples() {
        // single agent with f(x) = x²/2 so ∇f(x) = x
        let p = Problem::new(vec![crate::costs::CostOracle::quadratic(
            nalgebra::DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
        )
        .unwrap()])
        .unwrap();
        let fresh = state_with(vec![0.3], vec![0.2], vec![0.3], vec![0.2], vec![0.3], 0.5);
        assert!(!async_trigger_check(0, &fresh, &p, 0.1));
        let zero = state_with(vec![0.0], vec![0.0], vec![0.0], vec![0.0], vec![0.0], 0.0);
        assert!(!async_trigger_check(0, &zero, &p, 0.1));
        // e = (0, 1, 0) so ‖e‖ = 1; h = z + x = 0, λ‖h‖ + |ξ| = 0.5
        let hand = state_with(vec![0.0], vec![0.0], vec![0.0], vec![-1.0], vec![0.0], -0.5);
        assert!(async_trigger_check(0, &hand, &p, 0.1));
    }

    #[test]
    fn event_log_csv_round_trip() {
        let mut log = EventLog::new(3);
        log.record(0.0, 0, EventKind::Initial);
        log.record(0.0, 2, EventKind::Initial);
        log.record(0.25, 2, EventKind::Async);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,agent_id,kind\n"));
        assert!(text.contains(",3,async"));
        assert_eq!(EventLog::read_csv(buf.as_slice(), 3).unwrap(), log);
        assert_eq!(log.min_gap[2], 0.25);
    }

    #[test]
    fn empty_log_has_no_flags() {
        let rep = zeno_report(&EventLog::new(4), 10.0);
        assert!(rep.agents.iter().all(|a| a.events == 0 && !a.flagged));
    }

    #[test]
    fn sync_gaps_equal_period() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-3, 0.5, Method::Rk4);
        let (_, log) = sync_run(&p, &lap, default_initial_state(6, 3, 0), 0.01, &cfg).unwrap();
        let rep = zeno_report(&log, 0.5);
        for a in &rep.agents {
            assert_eq!(a.events, 51);
            assert!((a.min_gap - 0.01).abs() < 1e-12 && (a.mean_gap - 0.01).abs() < 1e-12);
        }
        assert!(log.events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn sync_period_is_rounded_up() {
        assert_eq!(Schedule::<f64>::periodic(0.0105, 1e-3).unwrap(), Schedule::Periodic { every: 11 });
        assert_eq!(Schedule::<f64>::periodic(0.01, 1e-3).unwrap(), Schedule::Periodic { every: 10 });
        assert!(Schedule::<f64>::periodic(0.0, 1e-3).is_err());
    }

    #[test]
    fn async_rejects_zero_auxiliary() {
        let (p, lap) = fixture();
        let mut params = AsyncParams::new(0.1, 5.0, 6);
        params.xi0.fill(0.0);
        let cfg = IntegratorConfig::new(1e-3, 0.1, Method::Rk4);
        assert!(matches!(async_run(&p, &lap, default_initial_state(6, 3, 0), params, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn huge_gain_keeps_only_initial_broadcasts() {
        let (p, lap) = fixture();
        let mut params = AsyncParams::new(1e6, 5.0, 6);
        params.xi0.fill(1e6);
        let cfg = IntegratorConfig::new(1e-3, 0.2, Method::Rk4);
        let x0 = default_initial_state(6, 3, 0);
        let (tr, log) = async_run(&p, &lap, x0.clone(), params, &cfg).unwrap();
        assert_eq!(log.total(), 6);
        assert!(log.events.iter().all(|e| e.kind == EventKind::Initial));
        let cgt = run_cgt(&p, &lap, x0, &cfg, None).unwrap();
        assert!((tr.last().unwrap().err_x - cgt.last().unwrap().err_x).abs() > 1e-6);
    }

    #[test]
    fn every_check_law_matches_sync_every_step() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-3, 0.3, Method::Rk4);
        let x0 = default_initial_state(6, 3, 7);
        let mut params = AsyncParams::new(0.1, 5.0, 6);
        params.law = TriggerLaw::EveryCheck;
        let (a, _) = async_run(&p, &lap, x0.clone(), params, &cfg).unwrap();
        let (s, _) = sync_run(&p, &lap, x0, 1e-3, &cfg).unwrap();
        for (ra, rs) in a.rows.iter().zip(&s.rows) {
            assert_eq!(ra.err_x, rs.err_x);
        }
    }

    struct Compliance {
        lambda: f64,
        checked: usize,
        bad: usize,
    }

    impl GridObserver<f64> for Compliance {
        fn observe(&mut self, p: &GridPoint<'_, f64>) -> Result<()> {
            if p.k == 0 {
                return Ok(());
            }
            let d = p.cache.d();
            for i in (0..p.fired.len()).filter(|&i| !p.fired[i]) {
                let mut e = 0.0;
                let mut h = 0.0;
                for k in i * d..(i + 1) * d {
                    e += (p.x[k] - p.cache.x_hat[k]).powi(2)
                        + (p.z[k] - p.cache.z_hat[k]).powi(2)
                        + (p.g[k] - p.cache.g_hat[k]).powi(2);
                    h += (p.z[k] + p.g[k]).powi(2);
                }
                self.checked += 1;
                if e.sqrt() > self.lambda * h.sqrt() + p.xi[i].abs() {
                    self.bad += 1;
                }
            }
            Ok(())
        }
    }

    #[test]
    fn async_run_complies_and_conserves() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-3, 3.0, Method::Rk4);
        let sim = Simulation::new(&p, &lap, Schedule::Event(AsyncParams::new(0.1, 5.0, 6)), cfg);
        let mut mon = Compliance { lambda: 0.1, checked: 0, bad: 0 };
        let run = sim.run_observed(default_initial_state(6, 3, 1), &mut [&mut mon]).unwrap();
        assert!(mon.checked > 0 && mon.bad == 0);
        assert!(run.trace.max_z_mean_norm() < 1e-8);
        assert!(run.events.min_gap.iter().all(|&g| g >= 1e-3 - 1e-12));
        assert!(run.events.total() < 6 * 3000);
        assert!(run.trace.last().unwrap().err_x < run.trace.first().unwrap().err_x);
    }

    #[test]
    fn quadratic_sync_in_single_precision() {
        let mut p: Problem<f32> = quadratic_fixture(4, 2, 1).unwrap();
        p.solve_centralized(1e-4).unwrap();
        let lap = laplacian(&Graph::<f32>::ring(4), 2);
        let cfg = IntegratorConfig::new(1e-2f32, 5.0, Method::Rk4);
        let (tr, _) = sync_run(&p, &lap, default_initial_state(4, 2, 3), 2e-2, &cfg).unwrap();
        assert!(tr.last().unwrap().err_x < 1e-2 * tr.first().unwrap().err_x);
    }

    #[test]
    fn broadcast_counts_enter_the_trace() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-3, 0.05, Method::Rk4);
        let (tr, log) = sync_run(&p, &lap, default_initial_state(6, 3, 0), 0.01, &cfg).unwrap();
        assert_eq!(tr.first().unwrap().comm_total, 6);
        assert_eq!(tr.last().unwrap().comm_total, log.total());
        assert_eq!(log.total(), 6 * 6);
    }
}
