//! Grid observers that check certificate quantities along a run.

use crate::certify::{Certificate, LyapunovProbe};
use crate::error::Result;
use crate::scalar::{to_f64, Real};
use crate::stacked::join;
use crate::trigger::{GridObserver, GridPoint};

/// Tracks `r = ‖ζ̂ − ζ‖/‖ζ‖` just before each refresh.
#[derive(Debug, Clone)]
pub struct RatioMonitor<'a, T: Real> {
    probe: &'a LyapunovProbe<T>,
    pub bound: f64,
    pub max_r: f64,
    pub samples: usize,
    pub violations: usize,
}

impl<'a, T: Real> RatioMonitor<'a, T> {
    pub fn new(probe: &'a LyapunovProbe<T>, bound: f64) -> Self {
        Self { probe, bound, max_r: 0.0, samples: 0, violations: 0 }
    }

    pub fn from_certificate(probe: &'a LyapunovProbe<T>, cert: &Certificate<T>) -> Self {
        Self::new(probe, to_f64(cert.period.ratio_bound))
    }
}

impl<T: Real> GridObserver<T> for RatioMonitor<'_, T> {
    fn observe(&mut self, p: &GridPoint<'_, T>) -> Result<()> {
        let (zeta, _) = self.probe.zeta(p.x, p.z);
        let (zeta_hat, _) = self.probe.zeta(&p.cache_before.x_hat, &p.cache_before.z_hat);
        let den = to_f64(zeta.norm());
        if den > 0.0 {
            let r = to_f64((zeta_hat - zeta).norm()) / den;
            self.max_r = self.max_r.max(r);
            self.samples += 1;
            if r >= self.bound {
                self.violations += 1;
            }
        }
        Ok(())
    }
}

/// Records `V` (or `Ṽ` when `ξ` is present) and its largest one-step increase.
#[derive(Debug, Clone)]
pub struct LyapunovMonitor<'a, T: Real> {
    probe: &'a LyapunovProbe<T>,
    pub slack: f64,
    pub values: Vec<f64>,
    pub max_increase: f64,
    pub violations: usize,
}

impl<'a, T: Real> LyapunovMonitor<'a, T> {
    pub fn new(probe: &'a LyapunovProbe<T>, slack: f64) -> Self {
        Self { probe, slack, values: Vec::new(), max_increase: f64::NEG_INFINITY, violations: 0 }
    }
}

impl<T: Real> GridObserver<T> for LyapunovMonitor<'_, T> {
    fn observe(&mut self, p: &GridPoint<'_, T>) -> Result<()> {
        let v = if p.xi.is_empty() { self.probe.v(p.x, p.z) } else { self.probe.v_tilde(p.x, p.z, p.xi) };
        let v = to_f64(v);
        if let Some(&prev) = self.values.last() {
            let inc = v - prev;
            self.max_increase = self.max_increase.max(inc);
            if inc > self.slack {
                self.violations += 1;
            }
        }
        self.values.push(v);
        Ok(())
    }
}

/// Checks `‖D e‖ ≤ λ c₅ ‖ζ‖ + c₄ ‖ξ‖` with the post-refresh broadcast error.
#[derive(Debug, Clone)]
pub struct PerturbationMonitor<'a, T: Real> {
    probe: &'a LyapunovProbe<T>,
    lambda: f64,
    c4: f64,
    c5: f64,
    pub samples: usize,
    pub violations: usize,
    /// Largest `‖De‖ / (λc₅‖ζ‖ + c₄‖ξ‖)`.
    pub max_ratio: f64,
}

impl<'a, T: Real> PerturbationMonitor<'a, T> {
    pub fn new(probe: &'a LyapunovProbe<T>, cert: &Certificate<T>, lambda: f64) -> Self {
        Self {
            probe,
            lambda,
            c4: to_f64(cert.trigger.c4),
            c5: to_f64(cert.trigger.c5),
            samples: 0,
            violations: 0,
            max_ratio: 0.0,
        }
    }
}

impl<T: Real> GridObserver<T> for PerturbationMonitor<'_, T> {
    fn observe(&mut self, p: &GridPoint<'_, T>) -> Result<()> {
        let e = join(&join(&(&p.cache.x_hat - p.x), &(&p.cache.z_hat - p.z)), &(&p.cache.g_hat - p.g));
        let lhs = to_f64((&self.probe.maps().dmat * e).norm());
        let (zeta, _) = self.probe.zeta(p.x, p.z);
        let rhs = self.lambda * self.c5 * to_f64(zeta.norm()) + self.c4 * to_f64(p.xi.norm());
        self.samples += 1;
        if rhs > 0.0 {
            self.max_ratio = self.max_ratio.max(lhs / rhs);
        }
        if lhs > rhs + 1e-9 * (1.0 + rhs) {
            self.violations += 1;
        }
        Ok(())
    }
}
