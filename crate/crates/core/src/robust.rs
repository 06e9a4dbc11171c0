//! Bounded disturbances on the state and gradient channels:
//!
//! ```text
//! ẋ += −L v_x − v_z − v_∇
//! ż += −L v_z − L v_∇
//! ```
//!
//! `v` is sampled on the integration grid and held over each step.

use crate::costs::Problem;
use crate::error::{Error, Result};
use crate::graph::LaplacianSet;
use crate::ode::IntegratorConfig;
use crate::scalar::{lit, Real};
use crate::trigger::{triggered_rhs, AsyncParams, BroadcastCache, Schedule, Simulation};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseKind {
    /// Fixed vector with entries drawn once in `[−a, a]`.
    Constant,
    /// Fresh entries in `[−a, a]` every step.
    Uniform,
    /// `a sin(ωt + φ_k)` with random phases.
    Sinusoidal { omega: f64 },
}

/// Per-channel amplitudes of `(v_x, v_z, v_∇)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub amp_x: f64,
    pub amp_z: f64,
    pub amp_g: f64,
    #[serde(default)]
    pub seed: u64,
    /// Noise is zero from this time on.
    #[serde(default)]
    pub off_after: Option<f64>,
}

impl NoiseSpec {
    /// Same amplitude on all three channels.
    pub fn uniform(amplitude: f64, seed: u64) -> Self {
        Self { kind: NoiseKind::Uniform, amp_x: amplitude, amp_z: amplitude, amp_g: amplitude, seed, off_after: None }
    }

    pub fn amplitude(&self) -> f64 {
        self.amp_x.max(self.amp_z).max(self.amp_g)
    }

    pub fn validate(&self) -> Result<()> {
        let amps = [self.amp_x, self.amp_z, self.amp_g];
        if amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput("noise amplitudes must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Noise held on `[t_k, t_k + h)`; deterministic in `(seed, step)`.
    pub fn sample<T: Real>(&self, step: usize, t: f64, nd: usize) -> NoiseSample<T> {
        if self.off_after.is_some_and(|off| t >= off) || self.amplitude() == 0.0 {
            return NoiseSample::zeros(nd);
        }
        let amps = [self.amp_x, self.amp_z, self.amp_g];
        let unit: Vec<f64> = match self.kind {
            NoiseKind::Constant => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..3 * nd).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
            NoiseKind::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(step as u64 + 1);
                (0..3 * nd).map(|_| rng.random_range(-1.0..=1.0)).collect()
            }
            NoiseKind::Sinusoidal { omega } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..3 * nd)
                    .map(|_| (omega * t + rng.random_range(0.0..std::f64::consts::TAU)).sin())
                    .collect()
            }
        };
        let channel = |c: usize| DVector::from_fn(nd, |k, _| lit::<T>(amps[c] * unit[c * nd + k]));
        NoiseSample { vx: channel(0), vz: channel(1), vg: channel(2) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample<T: Real> {
    pub vx: DVector<T>,
    pub vz: DVector<T>,
    pub vg: DVector<T>,
}

impl<T: Real> NoiseSample<T> {
    pub fn zeros(nd: usize) -> Self {
        Self { vx: DVector::zeros(nd), vz: DVector::zeros(nd), vg: DVector::zeros(nd) }
    }

    pub fn is_zero(&self) -> bool {
        [&self.vx, &self.vz, &self.vg].iter().all(|v| v.iter().all(|e| *e == T::zero()))
    }

    pub fn sup_norm(&self) -> T {
        self.vx.amax().max(self.vz.amax()).max(self.vg.amax())
    }
}

/// Adds `B₃ v` to a nominal field.
pub fn add_noise<T: Real>(dx: &mut DVector<T>, dz: &mut DVector<T>, v: &NoiseSample<T>, lap: &LaplacianSet<T>) {
    *dx -= lap.apply(&v.vx) + &v.vz + &v.vg;
    *dz -= lap.apply(&v.vz) + lap.apply(&v.vg);
}

/// Nominal field (live state when `cache` is `None`, cached hats otherwise)
/// plus the disturbance.
pub fn perturbed_rhs<T: Real>(
    x: &DVector<T>,
    z: &DVector<T>,
    cache: Option<&BroadcastCache<T>>,
    lap: &LaplacianSet<T>,
    problem: &Problem<T>,
    v: &NoiseSample<T>,
) -> (DVector<T>, DVector<T>) {
    let (mut dx, mut dz) = match cache {
        Some(c) => triggered_rhs(x, z, c, lap, problem),
        None => crate::cgt::cgt_rhs(x, z, lap, problem),
    };
    add_noise(&mut dx, &mut dz, v, lap);
    (dx, dz)
}

/// The flow an ISS sweep perturbs.
#[derive(Debug, Clone, PartialEq)]
pub enum IssVariant<T: Real> {
    Cgt,
    Sync { delta: T },
    Async(AsyncParams<T>),
}

impl<T: Real> IssVariant<T> {
    pub fn name(&self) -> &'static str {
        match self {
            IssVariant::Cgt => "cgt",
            IssVariant::Sync { .. } => "sync",
            IssVariant::Async(_) => "async",
        }
    }

    pub fn schedule(&self, h: T) -> Result<Schedule<T>> {
        match self {
            IssVariant::Cgt => Ok(Schedule::Continuous),
            IssVariant::Sync { delta } => Schedule::periodic(*delta, h),
            IssVariant::Async(p) => Ok(Schedule::Event(p.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssRow {
    pub amplitude: f64,
    /// Mean of `‖x − 𝟏x*‖` over the last 10% of the horizon.
    pub steady_state_err: f64,
    pub sup_err: f64,
    pub variant: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IssReport {
    pub rows: Vec<IssRow>,
}

impl IssReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].steady_state_err >= w[0].steady_state_err)
    }
}

/// Runs `variant` once per amplitude with uniform noise on all channels.
pub fn iss_sweep<T: Real>(
    problem: &Problem<T>,
    lap: &LaplacianSet<T>,
    variant: &IssVariant<T>,
    amplitudes: &[f64],
    x0: &DVector<T>,
    cfg: &IntegratorConfig<T>,
    seed: u64,
) -> Result<IssReport> {
    if amplitudes.first() != Some(&0.0) {
        return Err(Error::InvalidInput("amplitudes must start at 0".into()));
    }
    if amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("amplitudes must be sorted ascending".into()));
    }
    let schedule = variant.schedule(cfg.h)?;
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &amp in amplitudes {
        let noise = NoiseSpec::uniform(amp, seed);
        noise.validate()?;
        let run = Simulation::new(problem, lap, schedule.clone(), *cfg).with_noise(&noise).run(x0.clone())?;
        let rows_tr = &run.trace.rows;
        let t_end = rows_tr.last().map_or(0.0, |r| r.t);
        let tail: Vec<f64> = run.trace.window(0.9 * t_end, t_end).map(|r| r.err_x).collect();
        let steady = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
        let sup = rows_tr.iter().map(|r| r.err_x).fold(0.0, f64::max);
        rows.push(IssRow { amplitude: amp, steady_state_err: steady, sup_err: sup, variant: variant.name().into() });
    }
    Ok(IssReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgt::{cgt_rhs, default_initial_state};
    use crate::dataset::quadratic_fixture;
    use crate::graph::{laplacian, Graph};
    use crate::linalg::{block_sum, tile};
    use crate::ode::Method;

    fn fixture() -> (Problem<f64>, LaplacianSet<f64>) {
        let mut p = quadratic_fixture(5, 2, 3).unwrap();
        p.solve_centralized(1e-12).unwrap();
        (p, laplacian(&Graph::ring(5), 2))
    }

    #[test]
    fn zero_noise_is_nominal() {
        let (p, lap) = fixture();
        let x = default_initial_state::<f64>(5, 2, 0);
        let z = default_initial_state::<f64>(5, 2, 1);
        let (a, b) = perturbed_rhs(&x, &z, None, &lap, &p, &NoiseSample::zeros(10));
        let (c, d) = cgt_rhs(&x, &z, &lap, &p);
        assert_eq!(a, c);
        assert_eq!(b, d);
    }

    #[test]
    fn state_noise_at_equilibrium() {
        let (p, lap) = fixture();
        let x = tile(p.x_star().unwrap(), 5);
        let z = -p.stacked_gradient(&x);
        let mut v = NoiseSample::zeros(10);
        v.vx = DVector::from_fn(10, |k, _| k as f64);
        let (dx, dz) = perturbed_rhs(&x, &z, None, &lap, &p, &v);
        assert!((dx + lap.apply(&v.vx)).amax() < 1e-10);
        assert!(lap.apply(&v.vx).amax() > 0.1);
        assert!(dz.amax() < 1e-10);
    }

    #[test]
    fn noise_keeps_z_mean() {
        let (p, lap) = fixture();
        let x = default_initial_state::<f64>(5, 2, 0);
        let z = default_initial_state::<f64>(5, 2, 1);
        let v = NoiseSpec::uniform(0.3, 9).sample::<f64>(4, 0.0, 10);
        let (_, dz) = perturbed_rhs(&x, &z, None, &lap, &p, &v);
        let (_, dz0) = cgt_rhs(&x, &z, &lap, &p);
        assert!((block_sum(&dz, 2) - block_sum(&dz0, 2)).amax() < 1e-12);
    }

    #[test]
    fn samples_are_bounded_and_reproducible() {
        for kind in [NoiseKind::Constant, NoiseKind::Uniform, NoiseKind::Sinusoidal { omega: 2.0 }] {
            let spec = NoiseSpec { kind, amp_x: 0.1, amp_z: 0.05, amp_g: 0.2, seed: 3, off_after: Some(1.0) };
            for step in 0..50 {
                let v: NoiseSample<f64> = spec.sample(step, step as f64 * 0.01, 8);
                assert!(v.vx.amax() <= 0.1 && v.vz.amax() <= 0.05 && v.vg.amax() <= 0.2);
                assert_eq!(v, spec.sample(step, step as f64 * 0.01, 8));
            }
            assert!(spec.sample::<f64>(200, 1.0, 8).is_zero());
        }
        let spec = NoiseSpec::uniform(1.0, 0);
        assert_ne!(spec.sample::<f64>(0, 0.0, 4), spec.sample::<f64>(1, 0.0, 4));
    }

    #[test]
    fn sweep_validates_amplitudes() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-2, 0.1, Method::Rk4);
        let x0 = default_initial_state(5, 2, 0);
        assert!(iss_sweep(&p, &lap, &IssVariant::Cgt, &[0.1, 0.0], &x0, &cfg, 0).is_err());
        assert!(iss_sweep(&p, &lap, &IssVariant::Cgt, &[0.01], &x0, &cfg, 0).is_err());
    }

    #[test]
    fn cgt_sweep_is_bounded_and_ordered() {
        let (p, lap) = fixture();
        let cfg = IntegratorConfig::new(1e-2, 40.0, Method::Rk4);
        let x0 = default_initial_state(5, 2, 0);
        let rep = iss_sweep(&p, &lap, &IssVariant::Cgt, &[0.0, 0.01, 0.1], &x0, &cfg, 1).unwrap();
        assert!(rep.rows[0].steady_state_err < 1e-6);
        assert!(rep.is_monotone());
        assert!(rep.rows.iter().all(|r| r.sup_err.is_finite()));
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("amplitude,steady_state_err,sup_err,variant\n"));
    }
}
