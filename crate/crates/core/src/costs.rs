//! Local cost oracles and the centralized reference solver.

use crate::error::{Error, Result};
use crate::linalg::{max_eig, min_eig};
use crate::scalar::{lit, to_f64, Real};
use nalgebra::{DMatrix, DVector};

/// Default stationarity tolerance for the reference optimum.
pub const X_STAR_TOL: f64 = 1e-12;

const SOLVER_MAX_ITERS: usize = 2_000_000;

/// `f(x) = ½xᵀAx + bᵀx` with `A` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost<T: Real> {
    a: DMatrix<T>,
    b: DVector<T>,
    alpha: T,
    lips: T,
}

impl<T: Real> QuadraticCost<T> {
    pub fn new(a: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::InvalidInput(format!(
                "quadratic cost shapes disagree: A is {}×{}, b has {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let scale = a.amax().max(T::one());
        if (&a - a.transpose()).amax() > scale * lit(1e-12) {
            return Err(Error::InvalidInput("quadratic cost matrix is not symmetric".into()));
        }
        let alpha = min_eig(&a);
        if !(alpha > T::zero()) {
            return Err(Error::NotPositiveDefinite { min_eig: to_f64(alpha) });
        }
        let lips = max_eig(&a);
        Ok(Self { a, b, alpha, lips })
    }

    /// `½‖x − center‖²` scaled by `weight`.
    pub fn isotropic(center: &DVector<T>, weight: T) -> Result<Self> {
        let d = center.len();
        Self::new(DMatrix::identity(d, d) * weight, -center * weight)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<T> {
        &self.b
    }
}

/// Regularized logistic loss over local samples, variable `x = (w, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticCost<T: Real> {
    /// `m × (d−1)` feature matrix.
    points: DMatrix<T>,
    labels: Vec<T>,
    reg: T,
    lips: T,
}

impl<T: Real> LogisticCost<T> {
    pub fn new(points: DMatrix<T>, labels: Vec<T>, reg: T) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if !(reg > T::zero()) {
            return Err(Error::InvalidInput("regularization must be positive".into()));
        }
        if labels.iter().any(|&l| l != T::one() && l != -T::one()) {
            return Err(Error::InvalidInput("labels must be ±1".into()));
        }
        // ¼ bounds the sigmoid derivative.
        let quarter = lit::<T>(0.25);
        let mut lips = reg;
        for row in points.row_iter() {
            lips += quarter * (row.norm_squared() + T::one());
        }
        Ok(Self { points, labels, reg, lips })
    }

    pub fn points(&self) -> &DMatrix<T> {
        &self.points
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    fn margin(&self, h: usize, x: &[T]) -> T {
        let p = self.points.ncols();
        let mut s = x[p];
        for k in 0..p {
            s += self.points[(h, k)] * x[k];
        }
        self.labels[h] * s
    }
}

/// A node's private cost `f_i` together with its smoothness metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum CostOracle<T: Real> {
    Quadratic(QuadraticCost<T>),
    Logistic(LogisticCost<T>),
}

impl<T: Real> CostOracle<T> {
    pub fn quadratic(a: DMatrix<T>, b: DVector<T>) -> Result<Self> {
        QuadraticCost::new(a, b).map(Self::Quadratic)
    }

    pub fn logistic(points: DMatrix<T>, labels: Vec<T>, reg: T) -> Result<Self> {
        LogisticCost::new(points, labels, reg).map(Self::Logistic)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.b.len(),
            Self::Logistic(l) => l.points.ncols() + 1,
        }
    }

    /// Strong convexity modulus `α`.
    pub fn alpha(&self) -> T {
        match self {
            Self::Quadratic(q) => q.alpha,
            Self::Logistic(l) => l.reg,
        }
    }

    /// Gradient Lipschitz constant (an upper bound for the logistic loss).
    pub fn lipschitz(&self) -> T {
        match self {
            Self::Quadratic(q) => q.lips,
            Self::Logistic(l) => l.lips,
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        match self {
            Self::Quadratic(q) => {
                let xv = DVector::from_column_slice(x);
                (xv.dot(&(&q.a * &xv))) * lit(0.5) + q.b.dot(&xv)
            }
            Self::Logistic(l) => {
                let mut total = T::zero();
                for h in 0..l.labels.len() {
                    total += softplus(-l.margin(h, x));
                }
                let sq: T = x.iter().map(|&v| v * v).fold(T::zero(), |a, b| a + b);
                total + l.reg * sq * lit(0.5)
            }
        }
    }

    /// Writes `∇f(x)` into `out`.
    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        match self {
            Self::Quadratic(q) => {
                for r in 0..d {
                    let mut acc = q.b[r];
                    for c in 0..d {
                        acc += q.a[(r, c)] * x[c];
                    }
                    out[r] = acc;
                }
            }
            Self::Logistic(l) => {
                for k in 0..d {
                    out[k] = l.reg * x[k];
                }
                let p = d - 1;
                for h in 0..l.labels.len() {
                    // d/ds log(1 + e^{-l s}) = −l σ(−l s)
                    let coef = -l.labels[h] * sigmoid(-l.margin(h, x));
                    for k in 0..p {
                        out[k] += coef * l.points[(h, k)];
                    }
                    out[p] += coef;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[T]) -> DVector<T> {
        let mut out = DVector::zeros(self.dim());
        self.gradient_into(x, out.as_mut_slice());
        out
    }
}

fn softplus<T: Real>(u: T) -> T {
    u.max(T::zero()) + (T::one() + (-u.abs()).exp()).ln()
}

fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// `min_x Σ_i f_i(x)` over a network of `N` agents.
#[derive(Debug, Clone)]
pub struct Problem<T: Real> {
    oracles: Vec<CostOracle<T>>,
    x_star: Option<DVector<T>>,
}

impl<T: Real> Problem<T> {
    pub fn new(oracles: Vec<CostOracle<T>>) -> Result<Self> {
        let first = oracles
            .first()
            .ok_or_else(|| Error::InvalidInput("problem needs at least one agent".into()))?;
        let d = first.dim();
        if oracles.iter().any(|o| o.dim() != d) {
            return Err(Error::InvalidInput("all local costs must share one dimension".into()));
        }
        Ok(Self { oracles, x_star: None })
    }

    pub fn oracles(&self) -> &[CostOracle<T>] {
        &self.oracles
    }

    pub fn n(&self) -> usize {
        self.oracles.len()
    }

    pub fn dim(&self) -> usize {
        self.oracles[0].dim()
    }

    /// Common strong convexity constant, `min_i α_i`.
    pub fn alpha(&self) -> T {
        self.oracles.iter().map(|o| o.alpha()).fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    /// Common Lipschitz constant, `max_i L_i` (the appendices' `β`).
    pub fn beta(&self) -> T {
        self.oracles.iter().map(|o| o.lipschitz()).fold(T::zero(), |a, b| a.max(b))
    }

    pub fn x_star(&self) -> Option<&DVector<T>> {
        self.x_star.as_ref()
    }

    /// Stacked gradient `∇𝐟(x) = col(∇f_1(x_1), …, ∇f_N(x_N))`.
    pub fn stacked_gradient(&self, x: &DVector<T>) -> DVector<T> {
        let d = self.dim();
        let mut out = DVector::zeros(x.len());
        for (i, o) in self.oracles.iter().enumerate() {
            o.gradient_into(&x.as_slice()[i * d..(i + 1) * d], &mut out.as_mut_slice()[i * d..(i + 1) * d]);
        }
        out
    }

    /// `Σ_i ∇f_i(x)` at a common point.
    pub fn total_gradient(&self, x: &DVector<T>) -> DVector<T> {
        let mut acc = DVector::zeros(self.dim());
        let mut buf = DVector::zeros(self.dim());
        for o in &self.oracles {
            o.gradient_into(x.as_slice(), buf.as_mut_slice());
            acc += &buf;
        }
        acc
    }

    pub fn total_value(&self, x: &DVector<T>) -> T {
        self.oracles.iter().map(|o| o.value(x.as_slice())).fold(T::zero(), |a, b| a + b)
    }

    /// Gradient descent with step `1/Σ L_i` from the origin until
    /// `‖Σ_i ∇f_i(x)‖ < tol`. Caches and returns the optimum.
    pub fn solve_centralized(&mut self, tol: T) -> Result<DVector<T>> {
        let step = T::one() / self.oracles.iter().map(|o| o.lipschitz()).fold(T::zero(), |a, b| a + b);
        let mut x = DVector::zeros(self.dim());
        let mut g = self.total_gradient(&x);
        let mut iters = 0;
        while g.norm() >= tol {
            if iters == SOLVER_MAX_ITERS || !g.norm().is_finite() {
                return Err(Error::SolverStalled { residual: to_f64(g.norm()), iters });
            }
            x -= &g * step;
            g = self.total_gradient(&x);
            iters += 1;
        }
        self.x_star = Some(x.clone());
        Ok(x)
    }

    /// Returns the cached optimum, solving to [`X_STAR_TOL`] when absent.
    pub fn ensure_x_star(&mut self) -> Result<DVector<T>> {
        match &self.x_star {
            Some(x) => Ok(x.clone()),
            None => {
                let tol = lit::<T>(X_STAR_TOL).max(T::EPS * lit(1e4));
                self.solve_centralized(tol)
            }
        }
    }
}
