//! Deterministic fixed-step explicit integrators.

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

impl Method {
    /// One step of size `h` from `(t, y)`.
    pub fn step<T, F>(self, rhs: &mut F, t: T, y: &DVector<T>, h: T) -> DVector<T>
    where
        T: Real,
        F: FnMut(T, &DVector<T>) -> DVector<T>,
    {
        match self {
            Method::Euler => y + rhs(t, y) * h,
            Method::Rk4 => {
                let half = h * lit::<T>(0.5);
                let k1 = rhs(t, y);
                let k2 = rhs(t + half, &(y + &k1 * half));
                let k3 = rhs(t + half, &(y + &k2 * half));
                let k4 = rhs(t + h, &(y + &k3 * h));
                y + (k1 + (k2 + k3) * lit::<T>(2.0) + k4) * (h / lit::<T>(6.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T: Real> {
    pub h: T,
    pub t_end: T,
    pub method: Method,
    /// Keep every `sample_every`-th grid sample (the final one is always kept).
    pub sample_every: usize,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(h: T, t_end: T, method: Method) -> Self {
        Self { h, t_end, method, sample_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > T::zero()) || !self.h.is_finite() {
            return Err(Error::InvalidInput(format!("step size must be positive, got {}", self.h)));
        }
        if !(self.t_end >= T::zero()) || !self.t_end.is_finite() {
            return Err(Error::InvalidInput(format!("horizon must be non-negative, got {}", self.t_end)));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidInput("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of grid steps; the last grid point is the first at or after `t_end`.
    pub fn steps(&self) -> usize {
        let ratio = to_f64(self.t_end) / to_f64(self.h);
        let tol = 1e-9 + 16.0 * to_f64(T::EPS) * ratio;
        (ratio - tol).ceil().max(0.0) as usize
    }

    /// Grid time `k·h`, computed without accumulation.
    pub fn time(&self, k: usize) -> T {
        from_usize::<T>(k) * self.h
    }

    pub fn keeps(&self, k: usize) -> bool {
        k % self.sample_every == 0 || k == self.steps()
    }
}

/// Integrates `ẏ = rhs(t, y)` on the grid `k·h`, calling `observer` at kept
/// grid points (the initial point included).
pub fn integrate<T, F, O, R>(mut rhs: F, y0: DVector<T>, cfg: &IntegratorConfig<T>, mut observer: O) -> Result<Vec<R>>
where
    T: Real,
    F: FnMut(T, &DVector<T>) -> DVector<T>,
    O: FnMut(T, &DVector<T>) -> Result<R>,
{
    cfg.validate()?;
    let steps = cfg.steps();
    let mut out = Vec::with_capacity(steps / cfg.sample_every + 2);
    let mut y = y0;
    out.push(observer(T::zero(), &y)?);
    for k in 0..steps {
        y = cfg.method.step(&mut rhs, cfg.time(k), &y, cfg.h);
        let t = cfg.time(k + 1);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: to_f64(t) });
        }
        if cfg.keeps(k + 1) {
            out.push(observer(t, &y)?);
        }
    }
    Ok(out)
}
