//! Continuous-time gradient tracking:
//!
//! ```text
//! ẋ = −L x − z − ∇𝐟(x)
//! ż = −L z − L ∇𝐟(x)
//! ```
//!
//! with `L = 𝓛 ⊗ I_d`, started from `z(0) = 0` so that `𝟏ᵀz(t) ≡ 0`.

use crate::certify::LyapunovProbe;
use crate::costs::Problem;
use crate::error::{Error, Result};
use crate::graph::LaplacianSet;
use crate::ode::{integrate, IntegratorConfig};
use crate::scalar::{lit, to_f64, Real};
use crate::stacked::{block, join, mean_norm, optimality_errors, split, DIVERGENCE_GUARD};
use crate::trace::{Trace, TraceRow};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CgtState<T: Real> {
    pub x: DVector<T>,
    pub z: DVector<T>,
    pub t: T,
}

/// Vector field in the per-agent neighbour form.
pub fn cgt_rhs<T: Real>(x: &DVector<T>, z: &DVector<T>, lap: &LaplacianSet<T>, problem: &Problem<T>) -> (DVector<T>, DVector<T>) {
    let g = problem.stacked_gradient(x);
    let dx = -lap.apply(x) - z - &g;
    let dz = -lap.apply(z) - lap.apply(&g);
    (dx, dz)
}

/// Same field assembled from the dense lifted Laplacian.
pub fn cgt_rhs_aggregate<T: Real>(
    x: &DVector<T>,
    z: &DVector<T>,
    lap: &LaplacianSet<T>,
    problem: &Problem<T>,
) -> (DVector<T>, DVector<T>) {
    let g = problem.stacked_gradient(x);
    let dx = -(&lap.big * x) - z - &g;
    let dz = -(&lap.big * z) - &lap.big * &g;
    (dx, dz)
}

/// Explicit per-agent evaluation, written directly from the local update
/// of agent `i`; used to cross-check the stacked forms.
pub fn cgt_rhs_agent<T: Real>(
    i: usize,
    x: &DVector<T>,
    z: &DVector<T>,
    lap: &LaplacianSet<T>,
    problem: &Problem<T>,
) -> (Vec<T>, Vec<T>) {
    let d = problem.dim();
    let grad = |j: usize| problem.oracles()[j].gradient(block(x, j, d));
    let gi = grad(i);
    let (xi, zi) = (block(x, i, d), block(z, i, d));
    let mut dx: Vec<T> = (0..d).map(|k| -zi[k] - gi[k]).collect();
    let mut dz = vec![T::zero(); d];
    for &(j, w) in lap.neighbor_weights(i) {
        let gj = grad(j);
        let (xj, zj) = (block(x, j, d), block(z, j, d));
        for k in 0..d {
            dx[k] -= w * (xi[k] - xj[k]);
            dz[k] -= w * (zi[k] - zj[k]) + w * (gi[k] - gj[k]);
        }
    }
    (dx, dz)
}

/// `x_i(0)` i.i.d. uniform in `[−5, 5]^d`.
pub fn default_initial_state<T: Real>(n: usize, d: usize, seed: u64) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n * d, |_, _| lit::<T>(rng.random_range(-5.0..=5.0)))
}

pub(crate) fn require_x_star<T: Real>(problem: &Problem<T>) -> Result<DVector<T>> {
    problem
        .x_star()
        .cloned()
        .ok_or_else(|| Error::InvalidInput("solve the centralized problem before running".into()))
}

/// Integrates the flow from `(x0, 0)` and records the optimality error,
/// `‖𝟏ᵀz‖`, and `V(ζ)` when a probe is supplied.
pub fn run_cgt<T: Real>(
    problem: &Problem<T>,
    lap: &LaplacianSet<T>,
    x0: DVector<T>,
    cfg: &IntegratorConfig<T>,
    probe: Option<&LyapunovProbe<T>>,
) -> Result<Trace> {
    let z0 = DVector::zeros(x0.len());
    run_cgt_from(problem, lap, x0, z0, cfg, probe)
}

/// As [`run_cgt`] but with an explicit `z(0)`.
pub fn run_cgt_from<T: Real>(
    problem: &Problem<T>,
    lap: &LaplacianSet<T>,
    x0: DVector<T>,
    z0: DVector<T>,
    cfg: &IntegratorConfig<T>,
    probe: Option<&LyapunovProbe<T>>,
) -> Result<Trace> {
    let x_star = require_x_star(problem)?;
    let (n, d) = (problem.n(), problem.dim());
    if x0.len() != n * d || z0.len() != n * d {
        return Err(Error::InvalidInput(format!("initial state must have {} entries", n * d)));
    }
    let rhs = |_t: T, y: &DVector<T>| {
        let (x, z) = split(y);
        let (dx, dz) = cgt_rhs(&x, &z, lap, problem);
        join(&dx, &dz)
    };
    let observer = |t: T, y: &DVector<T>| {
        let (x, z) = split(y);
        let (err_x, agent_err) = optimality_errors(&x, &x_star);
        if !err_x.is_finite() || err_x > DIVERGENCE_GUARD {
            return Err(Error::Diverged { t: to_f64(t), err: err_x });
        }
        Ok(TraceRow {
            t: to_f64(t),
            err_x,
            z_mean_norm: mean_norm(&z, d),
            lyap: probe.map(|p| to_f64(p.v(&x, &z))),
            comm_total: 0,
            agent_comm: vec![0; n],
            agent_err,
        })
    };
    let rows = integrate(rhs, join(&x0, &z0), cfg, observer)?;
    Ok(Trace { rows })
}
