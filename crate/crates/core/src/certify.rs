//! Numerical Lyapunov certificate for the continuous and triggered flows.
//!
//! The error state is reduced to `ζ = (ỹ, ψ̃) ∈ R^{(2N−1)d}` through
//!
//! ```text
//! (x̃, z̃) = (x − 𝟏x*, z + ∇𝐟(𝟏x*))
//! (ỹ, η̃) = T₁ (x̃, z̃),        T₁ = [I 0; L −I]
//! (ỹ, ψ̃, η̃_avg) = T₂ (ỹ, η̃),  T₂ = [I 0; 0 Rᵀ; 0 𝟏ᵀ/√N]
//! ```
//!
//! where `ζ̇ = Aζ + Bu` with `A = [−2L R; −RᵀL² 0]`, `B = [I; 0]`. The
//! quadratic form `V(ζ) = ζᵀPζ`, with `P = [mI −R; −Rᵀ mRᵀ(L²)†R]`, decreases
//! along the flow once `m` clears three lower bounds. The thresholds on the
//! broadcast period (`Δ*`), the trigger gain (`λ*`) and the auxiliary decay
//! rate (`ν*`) follow from the norm bounds `c₁ … c₆`.

use crate::costs::Problem;
use crate::error::{Error, Result};
use crate::graph::{consensus_basis, laplacian, ones_lift, Graph, LaplacianSet};
use crate::linalg::{max_eig, min_eig, pinv_sym, spectral_norm, sym_eigenvalues, symmetrize};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::stacked::join;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Relative cutoff used by the pseudoinverse of `L²`.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Safety factors tried, in order, on the largest lower bound for `m`.
pub const M_SAFETY_FACTORS: [f64; 5] = [1.05, 1.1, 1.25, 1.5, 2.0];

const MAX_EPS_HALVINGS: usize = 200;

/// Sets `dst[r.., c..] = src`.
fn put<T: Real>(dst: &mut DMatrix<T>, r: usize, c: usize, src: &DMatrix<T>) {
    dst.view_mut((r, c), (src.nrows(), src.ncols())).copy_from(src);
}

/// Block-diagonal concatenation.
fn blkdiag<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    put(&mut m, 0, 0, a);
    put(&mut m, a.nrows(), a.ncols(), b);
    m
}

/// Change-of-coordinates matrices and the reduced system / perturbation maps.
#[derive(Debug, Clone)]
pub struct CoordinateMaps<T: Real> {
    pub n_agents: usize,
    pub d: usize,
    /// `L = 𝓛 ⊗ I_d`.
    pub l: DMatrix<T>,
    pub r: DMatrix<T>,
    pub l2_pinv: DMatrix<T>,
    pub t1: DMatrix<T>,
    pub t2: DMatrix<T>,
    /// `T_ỹ = [I 0; 0 Rᵀ]`, the first `(2N−1)d` rows of `T₂`.
    pub t_y: DMatrix<T>,
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    /// Input map of the broadcast error `(x̂ − x, ẑ − z, ∇𝐟̂ − ∇𝐟)`.
    pub b2: DMatrix<T>,
    /// Synchronous perturbation map acting on `(ŷ − ỹ, ψ̂ − ψ̃, e_∇)`.
    pub e: DMatrix<T>,
    /// Asynchronous perturbation map acting on `(x̂ − x, ẑ − z, ∇𝐟̂ − ∇𝐟)`.
    pub dmat: DMatrix<T>,
}

impl<T: Real> CoordinateMaps<T> {
    /// `N·d`.
    pub fn nd(&self) -> usize {
        self.n_agents * self.d
    }

    /// Reduced dimension `(2N−1)d`.
    pub fn reduced_dim(&self) -> usize {
        (2 * self.n_agents - 1) * self.d
    }

    /// `E` as the explicit product `T_ỹ T₁ B₂ blkdiag(T₁, I) blkdiag(T_ỹᵀ, I)`.
    pub fn e_product(&self) -> DMatrix<T> {
        let nd = self.nd();
        let eye = DMatrix::identity(nd, nd);
        &self.t_y * &self.t1 * &self.b2 * blkdiag(&self.t1, &eye) * blkdiag(&self.t_y.transpose(), &eye)
    }

    /// `D` as the explicit product `T_ỹ T₁ B₂`.
    pub fn d_product(&self) -> DMatrix<T> {
        &self.t_y * &self.t1 * &self.b2
    }

    /// `‖T₁T₂ᵀ‖`.
    pub fn reconstruction_norm(&self) -> T {
        spectral_norm(&(&self.t1 * self.t2.transpose()))
    }

    /// Nonzero spectrum bounds of the lifted Laplacian: `(λ₂, λ_max)`.
    pub fn laplacian_extremes(&self) -> (T, T) {
        let ev = sym_eigenvalues(&self.l);
        let lmax = *ev.last().expect("non-empty");
        let cutoff = lmax * lit(1e-9);
        let l2 = ev.iter().copied().find(|&v| v > cutoff).unwrap_or(lmax);
        (l2, lmax)
    }
}

/// Assembles all maps for a connected graph and block dimension `d`.
pub fn build_maps<T: Real>(graph: &Graph<T>, d: usize) -> Result<CoordinateMaps<T>> {
    if !graph.is_connected() {
        return Err(Error::InvalidInput("certificate needs a connected graph".into()));
    }
    let lap = laplacian(graph, d);
    maps_from_laplacian(&lap)
}

pub fn maps_from_laplacian<T: Real>(lap: &LaplacianSet<T>) -> Result<CoordinateMaps<T>> {
    let (n, d) = (lap.n(), lap.d);
    let nd = n * d;
    let rd = (n - 1) * d;
    let r = consensus_basis::<T>(n, d)?.r;
    let l = lap.big.clone();
    let l2 = &l * &l;
    let l2_pinv = pinv_sym(&l2, lit(PINV_REL_TOL));
    let eye = DMatrix::<T>::identity(nd, nd);

    let mut t1 = DMatrix::zeros(2 * nd, 2 * nd);
    put(&mut t1, 0, 0, &eye);
    put(&mut t1, nd, 0, &l);
    put(&mut t1, nd, nd, &(-&eye));

    let mut t_y = DMatrix::zeros(nd + rd, 2 * nd);
    put(&mut t_y, 0, 0, &eye);
    put(&mut t_y, nd, nd, &r.transpose());
    let ones = ones_lift::<T>(n, d) / from_usize::<T>(n).sqrt();
    let mut t2 = DMatrix::zeros(2 * nd, 2 * nd);
    put(&mut t2, 0, 0, &t_y);
    put(&mut t2, nd + rd, nd, &ones.transpose());

    let rt_l = r.transpose() * &l;
    let rt_l2 = r.transpose() * &l2;

    let mut a = DMatrix::zeros(nd + rd, nd + rd);
    put(&mut a, 0, 0, &(&l * lit::<T>(-2.0)));
    put(&mut a, 0, nd, &r);
    put(&mut a, nd, 0, &(-&rt_l2));

    let mut b = DMatrix::zeros(nd + rd, nd);
    put(&mut b, 0, 0, &eye);

    let mut b2 = DMatrix::zeros(2 * nd, 3 * nd);
    put(&mut b2, 0, 0, &(-&l));
    put(&mut b2, nd, nd, &(-&l));
    put(&mut b2, nd, 2 * nd, &(-&l));

    let mut e = DMatrix::zeros(nd + rd, nd + rd + nd);
    put(&mut e, 0, 0, &(-&l));
    put(&mut e, nd, nd, &(-(&rt_l * &r)));
    put(&mut e, nd, nd + rd, &rt_l);

    let mut dmat = DMatrix::zeros(nd + rd, 3 * nd);
    put(&mut dmat, 0, 0, &(-&l));
    put(&mut dmat, nd, 0, &(-&rt_l2));
    put(&mut dmat, nd, nd, &rt_l);
    put(&mut dmat, nd, 2 * nd, &rt_l);

    Ok(CoordinateMaps { n_agents: n, d, l, r, l2_pinv, t1, t2, t_y, a, b, b2, e, dmat })
}

/// `P = [mI −R; −Rᵀ mRᵀ(L²)†R]`.
pub fn p_matrix<T: Real>(maps: &CoordinateMaps<T>, m: T) -> DMatrix<T> {
    let (nd, k) = (maps.nd(), maps.reduced_dim());
    let mut p = DMatrix::zeros(k, k);
    put(&mut p, 0, 0, &(DMatrix::identity(nd, nd) * m));
    put(&mut p, 0, nd, &(-&maps.r));
    put(&mut p, nd, 0, &(-maps.r.transpose()));
    put(&mut p, nd, nd, &(maps.r.transpose() * &maps.l2_pinv * &maps.r * m));
    symmetrize(&p)
}

/// `Q = −(AᵀP + PA)` evaluated numerically.
pub fn q_matrix<T: Real>(maps: &CoordinateMaps<T>, p: &DMatrix<T>) -> DMatrix<T> {
    -(maps.a.transpose() * p + p * &maps.a)
}

/// Closed form of `Q̃ = Q − Q₀`:
/// `[4mL − 2L² + (2mα − β/ε)I, −2LR; −2RᵀL, (2 − βε)I]`.
pub fn q_tilde_matrix<T: Real>(maps: &CoordinateMaps<T>, m: T, alpha: T, beta: T, eps: T) -> DMatrix<T> {
    let (nd, k) = (maps.nd(), maps.reduced_dim());
    let rd = k - nd;
    let l2 = &maps.l * &maps.l;
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    let lr = &maps.l * &maps.r;
    let mut q = DMatrix::zeros(k, k);
    let tl = &maps.l * (four * m) - &l2 * two + DMatrix::identity(nd, nd) * (two * m * alpha - beta / eps);
    put(&mut q, 0, 0, &tl);
    put(&mut q, 0, nd, &(-&lr * two));
    put(&mut q, nd, 0, &(-lr.transpose() * two));
    put(&mut q, nd, nd, &(DMatrix::identity(rd, rd) * (two - beta * eps)));
    symmetrize(&q)
}

/// The three lower bounds on `m`: positivity of `P`, of `Q`, and of `Q̃`.
pub fn m_lower_bounds<T: Real>(maps: &CoordinateMaps<T>, alpha: T, beta: T, eps: T) -> [T; 3] {
    let (l2, lmax) = maps.laplacian_extremes();
    let sq_max = lmax * lmax;
    let reduced = maps.r.transpose() * &maps.l2_pinv * &maps.r;
    let p_bound = T::one() / min_eig(&reduced).sqrt();
    let q_bound = sq_max / l2;
    let two = lit::<T>(2.0);
    let q_tilde_bound = ((T::one() + T::one() / (two - beta * eps)) * sq_max / (two * l2)).max(beta / (two * alpha * eps));
    [p_bound, q_bound, q_tilde_bound]
}

/// Picks `ε = 1/β` and the smallest safety factor on the lower bounds for
/// which both `P` and `Q̃` are positive definite.
pub fn choose_m_eps<T: Real>(maps: &CoordinateMaps<T>, alpha: T, beta: T) -> Result<(T, T)> {
    if !(alpha > T::zero() && beta > T::zero()) {
        return Err(Error::InvalidInput("α and β must be positive".into()));
    }
    let eps = T::one() / beta;
    let bound = m_lower_bounds(maps, alpha, beta, eps).into_iter().fold(T::zero(), |a, b| a.max(b));
    for factor in M_SAFETY_FACTORS {
        let m = bound * lit(factor);
        let p_ok = min_eig(&p_matrix(maps, m)) > T::zero();
        let q_ok = min_eig(&q_tilde_matrix(maps, m, alpha, beta, eps)) > T::zero();
        if p_ok && q_ok {
            return Ok((m, eps));
        }
    }
    Err(Error::Certificate(format!(
        "Q̃ not positive definite with m up to {}× the lower bound",
        M_SAFETY_FACTORS[M_SAFETY_FACTORS.len() - 1]
    )))
}

/// `λ_min(Q̃ − εP²)`.
pub fn margin_at<T: Real>(q_tilde: &DMatrix<T>, p: &DMatrix<T>, eps: T) -> T {
    min_eig(&(q_tilde - (p * p) * eps))
}

/// Halves `ε` from `eps_start` until `ε < λ_min(Q̃)/λ_max(P²)` and the
/// margin is positive. Returns `(q, ε)`.
pub fn margin_q<T: Real>(q_tilde: &DMatrix<T>, p: &DMatrix<T>, eps_start: T) -> Result<(T, T)> {
    let limit = min_eig(q_tilde) / max_eig(&(p * p));
    let mut eps = eps_start;
    for _ in 0..MAX_EPS_HALVINGS {
        if eps < limit {
            let q = margin_at(q_tilde, p, eps);
            if q > T::zero() {
                return Ok((q, eps));
            }
        }
        eps *= lit(0.5);
    }
    Err(Error::Certificate("no ε in (0, 1/β] gives a positive margin".into()))
}

/// Comparison solution `r̄(t, 0)` of `ṙ = β(1 + r) + c₂(1 + r)²`.
pub fn r_bar<T: Real>(t: T, beta: T, c2: T) -> T {
    let em1 = (beta * t).exp_m1();
    (beta + c2) * em1 / (beta - c2 * em1)
}

/// Broadcast-period threshold and the constants behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodThreshold<T: Real> {
    pub c1: T,
    pub c2: T,
    /// `√(q/c₁)`.
    pub ratio_bound: T,
    pub delta_star: T,
    /// Blow-up time of `r̄`.
    pub blowup: T,
}

/// `Δ* = (1/β) ln((1+s)(β+c₂)/(β+c₂+s c₂))`, the root of `r̄(Δ*, 0) = s`
/// with `s = √(q/c₁)`.
pub fn delta_star<T: Real>(maps: &CoordinateMaps<T>, q: T, beta: T, eps_margin: T) -> Result<PeriodThreshold<T>> {
    if !(q > T::zero()) {
        return Err(Error::Certificate("Δ* needs a positive margin q".into()));
    }
    let e_norm = spectral_norm(&maps.e);
    let c1 = spectral_norm(&(maps.e.transpose() * &maps.e)) * (T::one() + beta * beta) / eps_margin;
    let c2 = spectral_norm(&maps.a).max((T::one() + beta) * e_norm);
    let s = (q / c1).sqrt();
    let delta = delta_star_closed_form(s, beta, c2);
    let blowup = ((beta + c2) / c2).ln() / beta;
    if !(delta < blowup) {
        return Err(Error::Certificate(format!("Δ* = {delta} not below the blow-up time {blowup}")));
    }
    Ok(PeriodThreshold { c1, c2, ratio_bound: s, delta_star: delta, blowup })
}

/// Written as `ln(1 + sβ/(β + c₂ + s c₂))/β`, which stays accurate when `Δ*` is tiny.
pub fn delta_star_closed_form<T: Real>(s: T, beta: T, c2: T) -> T {
    (s * beta / (beta + c2 + s * c2)).ln_1p() / beta
}

/// Trigger-gain and decay-rate thresholds with constants `c₃ … c₆`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerThreshold<T: Real> {
    pub c3: T,
    pub c4: T,
    pub c5: T,
    pub c6: T,
    pub p_norm: T,
    /// The margin in the `Ṽ` derivative bound.
    pub q_base: T,
    pub lambda_star: T,
}

impl<T: Real> TriggerThreshold<T> {
    /// `ν*(λ) = c₆²/(q − 2λc₅‖P‖)`; `None` for `λ ≥ λ*`.
    pub fn nu_star(&self, lambda: T) -> Option<T> {
        let q_lambda = self.q_base - lit::<T>(2.0) * lambda * self.c5 * self.p_norm;
        (q_lambda > T::zero()).then(|| self.c6 * self.c6 / q_lambda)
    }
}

/// `λ* = q/(2c₅‖P‖)` with `c₃ = ‖D‖`, `c₄ = c₃√N`,
/// `c₅ = c₄ max{1, β} √2 ‖T₁T₂ᵀ‖`, `c₆ = c₄‖P‖`.
pub fn lambda_nu_star<T: Real>(maps: &CoordinateMaps<T>, p: &DMatrix<T>, q: T, beta: T) -> TriggerThreshold<T> {
    let c3 = spectral_norm(&maps.dmat);
    let c4 = c3 * from_usize::<T>(maps.n_agents).sqrt();
    let c5 = c4 * beta.max(T::one()) * lit::<T>(2.0).sqrt() * maps.reconstruction_norm();
    let p_norm = max_eig(p);
    let c6 = c4 * p_norm;
    let lambda_star = q / (lit::<T>(2.0) * c5 * p_norm);
    TriggerThreshold { c3, c4, c5, c6, p_norm, q_base: q, lambda_star }
}

/// Evaluates `ζ`, `V` and `Ṽ` on network states.
#[derive(Debug, Clone)]
pub struct LyapunovProbe<T: Real> {
    maps: CoordinateMaps<T>,
    p: DMatrix<T>,
    x_star_stacked: DVector<T>,
    grad_star: DVector<T>,
}

impl<T: Real> LyapunovProbe<T> {
    pub fn new(maps: CoordinateMaps<T>, p: DMatrix<T>, problem: &Problem<T>) -> Result<Self> {
        let x_star = problem
            .x_star()
            .ok_or_else(|| Error::InvalidInput("solve the centralized problem first".into()))?;
        let x_star_stacked = crate::linalg::tile(x_star, maps.n_agents);
        let grad_star = problem.stacked_gradient(&x_star_stacked);
        Ok(Self { maps, p, x_star_stacked, grad_star })
    }

    pub fn maps(&self) -> &CoordinateMaps<T> {
        &self.maps
    }

    pub fn p(&self) -> &DMatrix<T> {
        &self.p
    }

    /// `(ζ, η̃_avg)` of a state.
    pub fn zeta(&self, x: &DVector<T>, z: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let nd = self.maps.nd();
        let x_err = x - &self.x_star_stacked;
        let z_err = z + &self.grad_star;
        let eta = &self.maps.l * &x_err - z_err;
        let psi = self.maps.r.transpose() * &eta;
        let scale = T::one() / from_usize::<T>(self.maps.n_agents).sqrt();
        let eta_avg = crate::linalg::block_sum(&eta, self.maps.d) * scale;
        let mut zeta = DVector::zeros(self.maps.reduced_dim());
        zeta.rows_mut(0, nd).copy_from(&x_err);
        zeta.rows_mut(nd, psi.len()).copy_from(&psi);
        (zeta, eta_avg)
    }

    /// `(x̃, z̃) = T₁T₂ᵀ [ζ; η̃_avg]`.
    pub fn errors_from_zeta(&self, zeta: &DVector<T>, eta_avg: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let full = join_rows(zeta, eta_avg);
        let xz = &self.maps.t1 * self.maps.t2.transpose() * full;
        let nd = self.maps.nd();
        (xz.rows(0, nd).into_owned(), xz.rows(nd, nd).into_owned())
    }

    pub fn v(&self, x: &DVector<T>, z: &DVector<T>) -> T {
        lyapunov(&self.zeta(x, z).0, &self.p)
    }

    pub fn v_tilde(&self, x: &DVector<T>, z: &DVector<T>, xi: &DVector<T>) -> T {
        lyapunov_tilde(&self.zeta(x, z).0, xi, &self.p)
    }
}

fn join_rows<T: Real>(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    join(a, b)
}

/// `V(ζ) = ζᵀPζ`.
pub fn lyapunov<T: Real>(zeta: &DVector<T>, p: &DMatrix<T>) -> T {
    zeta.dot(&(p * zeta))
}

/// `Ṽ(ζ, ξ) = ζᵀPζ + ½ξᵀξ`.
pub fn lyapunov_tilde<T: Real>(zeta: &DVector<T>, xi: &DVector<T>, p: &DMatrix<T>) -> T {
    lyapunov(zeta, p) + xi.norm_squared() * lit(0.5)
}

/// Every certified quantity for one graph and problem.
#[derive(Debug, Clone)]
pub struct Certificate<T: Real> {
    pub maps: CoordinateMaps<T>,
    pub alpha: T,
    pub beta: T,
    pub m: T,
    /// Young parameter inside `Q̃`.
    pub eps: T,
    /// Young parameter of the margin `q = λ_min(Q̃ − εP²)`.
    pub eps_margin: T,
    pub p: DMatrix<T>,
    pub q_tilde: DMatrix<T>,
    pub q: T,
    pub eig_min_p: T,
    pub eig_min_q_tilde: T,
    pub period: PeriodThreshold<T>,
    pub trigger: TriggerThreshold<T>,
}

impl<T: Real> Certificate<T> {
    pub fn build(graph: &Graph<T>, problem: &Problem<T>) -> Result<Self> {
        if graph.n() != problem.n() {
            return Err(Error::InvalidInput(format!(
                "graph has {} agents, problem has {}",
                graph.n(),
                problem.n()
            )));
        }
        let maps = build_maps(graph, problem.dim())?;
        Self::from_maps(maps, problem.alpha(), problem.beta())
    }

    pub fn from_maps(maps: CoordinateMaps<T>, alpha: T, beta: T) -> Result<Self> {
        let (m, eps) = choose_m_eps(&maps, alpha, beta)?;
        let p = p_matrix(&maps, m);
        let q_tilde = q_tilde_matrix(&maps, m, alpha, beta, eps);
        let eig_min_p = min_eig(&p);
        let eig_min_q_tilde = min_eig(&q_tilde);
        let (q, eps_margin) = margin_q(&q_tilde, &p, eps)?;
        let period = delta_star(&maps, q, beta, eps_margin)?;
        let trigger = lambda_nu_star(&maps, &p, q, beta);
        Ok(Self { maps, alpha, beta, m, eps, eps_margin, p, q_tilde, q, eig_min_p, eig_min_q_tilde, period, trigger })
    }

    pub fn delta_star(&self) -> T {
        self.period.delta_star
    }

    pub fn lambda_star(&self) -> T {
        self.trigger.lambda_star
    }

    pub fn nu_star(&self, lambda: T) -> Option<T> {
        self.trigger.nu_star(lambda)
    }

    pub fn probe(&self, problem: &Problem<T>) -> Result<LyapunovProbe<T>> {
        LyapunovProbe::new(self.maps.clone(), self.p.clone(), problem)
    }

    /// Report with `ν*` evaluated at `λ*/2`.
    pub fn report(&self) -> CertificateReport {
        let lambda = self.lambda_star() * lit(0.5);
        CertificateReport {
            m: to_f64(self.m),
            eps: to_f64(self.eps),
            eps_margin: to_f64(self.eps_margin),
            q: to_f64(self.q),
            c1: to_f64(self.period.c1),
            c2: to_f64(self.period.c2),
            c3: to_f64(self.trigger.c3),
            c4: to_f64(self.trigger.c4),
            c5: to_f64(self.trigger.c5),
            c6: to_f64(self.trigger.c6),
            delta_star: to_f64(self.delta_star()),
            lambda_star: to_f64(self.lambda_star()),
            lambda_for_nu: to_f64(lambda),
            nu_star_at_lambda: self.nu_star(lambda).map(to_f64).unwrap_or(f64::INFINITY),
            eig_min_p: to_f64(self.eig_min_p),
            eig_min_qtilde: to_f64(self.eig_min_q_tilde),
        }
    }
}

/// JSON export of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub m: f64,
    pub eps: f64,
    pub eps_margin: f64,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub delta_star: f64,
    pub lambda_star: f64,
    pub lambda_for_nu: f64,
    pub nu_star_at_lambda: f64,
    #[serde(rename = "eig_min_P")]
    pub eig_min_p: f64,
    #[serde(rename = "eig_min_Qtilde")]
    pub eig_min_qtilde: f64,
}
