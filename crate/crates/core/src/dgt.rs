//! Discrete-time gradient tracking in the original `(x, s)` and causal
//! `(x, z)` coordinates, linked by `z = s − ∇𝐟(x)`.

use crate::costs::Problem;
use crate::error::{Error, Result};
use crate::linalg::mix;
use crate::scalar::Real;
use crate::stacked::{mean_norm, optimality_errors, DIVERGENCE_GUARD};
use crate::trace::{Trace, TraceRow};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgtForm {
    Original,
    Causal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgtState<T: Real> {
    pub x: DVector<T>,
    pub s: DVector<T>,
    pub z: DVector<T>,
    pub k: usize,
    pub gamma: T,
}

impl<T: Real> DgtState<T> {
    /// `s_0 = ∇𝐟(x_0)`, hence `z_0 = 0`. Both forms share this start.
    pub fn new(problem: &Problem<T>, x0: DVector<T>, gamma: T) -> Self {
        let s = problem.stacked_gradient(&x0);
        let z = DVector::zeros(x0.len());
        Self { x: x0, s, z, k: 0, gamma }
    }
}

/// `x⁺ = Wx − γs`, `s⁺ = Ws + ∇𝐟(x⁺) − ∇𝐟(x)`, with `W` the `N × N` weights.
pub fn dgt_step_original<T: Real>(state: &DgtState<T>, w: &DMatrix<T>, problem: &Problem<T>) -> DgtState<T> {
    let d = problem.dim();
    let g_old = problem.stacked_gradient(&state.x);
    let x = mix(w, &state.x, d) - &state.s * state.gamma;
    let g_new = problem.stacked_gradient(&x);
    let s = mix(w, &state.s, d) + &g_new - g_old;
    let z = &s - g_new;
    DgtState { x, s, z, k: state.k + 1, gamma: state.gamma }
}

/// `x⁺ = Wx − γz − γ∇𝐟(x)`, `z⁺ = Wz − (I − W)∇𝐟(x)`.
pub fn dgt_step_causal<T: Real>(state: &DgtState<T>, w: &DMatrix<T>, problem: &Problem<T>) -> DgtState<T> {
    let d = problem.dim();
    let g = problem.stacked_gradient(&state.x);
    let wg = mix(w, &g, d);
    let x = mix(w, &state.x, d) - (&state.z + &g) * state.gamma;
    let z = mix(w, &state.z, d) - (&g - wg);
    let s = &z + problem.stacked_gradient(&x);
    DgtState { x, s, z, k: state.k + 1, gamma: state.gamma }
}

fn record<T: Real>(state: &DgtState<T>, x_star: &DVector<T>, n: usize, d: usize) -> TraceRow {
    let (err_x, agent_err) = optimality_errors(&state.x, x_star);
    let k = state.k as u64;
    TraceRow {
        t: state.k as f64,
        err_x,
        z_mean_norm: mean_norm(&state.z, d),
        lyap: None,
        comm_total: k * n as u64,
        agent_comm: vec![k; n],
        agent_err,
    }
}

/// Runs `k_max` iterations; one communication round per agent per iteration.
pub fn run_dgt<T: Real>(
    problem: &Problem<T>,
    w: &DMatrix<T>,
    gamma: T,
    x0: DVector<T>,
    k_max: usize,
    form: DgtForm,
) -> Result<Trace> {
    let x_star = problem
        .x_star()
        .ok_or_else(|| Error::InvalidInput("solve the centralized problem before running".into()))?
        .clone();
    let (n, d) = (problem.n(), problem.dim());
    let mut state = DgtState::new(problem, x0, gamma);
    let mut trace = Trace::default();
    trace.rows.push(record(&state, &x_star, n, d));
    for _ in 0..k_max {
        state = match form {
            DgtForm::Original => dgt_step_original(&state, w, problem),
            DgtForm::Causal => dgt_step_causal(&state, w, problem),
        };
        let row = record(&state, &x_star, n, d);
        if !row.err_x.is_finite() || row.err_x > DIVERGENCE_GUARD {
            return Err(Error::Diverged { t: row.t, err: row.err_x });
        }
        trace.rows.push(row);
    }
    Ok(trace)
}
