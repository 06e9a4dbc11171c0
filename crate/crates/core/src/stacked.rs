//! Helpers for stacked network vectors `col(v_1, …, v_N)` with blocks of size `d`.

use crate::linalg::block_sum;
use crate::scalar::{to_f64, Real};
use nalgebra::DVector;

/// Divergence guard on `‖x − 𝟏x*‖`.
pub const DIVERGENCE_GUARD: f64 = 1e8;

/// `(‖x − 𝟏x*‖, [‖x_i − x*‖]_i)`.
pub fn optimality_errors<T: Real>(x: &DVector<T>, x_star: &DVector<T>) -> (f64, Vec<f64>) {
    let d = x_star.len();
    let per: Vec<f64> = x
        .as_slice()
        .chunks(d)
        .map(|xi| {
            let sq = xi.iter().zip(x_star.iter()).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            to_f64(sq.sqrt())
        })
        .collect();
    let total = per.iter().map(|e| e * e).sum::<f64>().sqrt();
    (total, per)
}

/// `‖𝟏ᵀz‖`.
pub fn mean_norm<T: Real>(z: &DVector<T>, d: usize) -> f64 {
    to_f64(block_sum(z, d).norm())
}

/// Splits `[x; z]` into its halves.
pub fn split<T: Real>(y: &DVector<T>) -> (DVector<T>, DVector<T>) {
    let half = y.len() / 2;
    (y.rows(0, half).into_owned(), y.rows(half, half).into_owned())
}

pub fn join<T: Real>(x: &DVector<T>, z: &DVector<T>) -> DVector<T> {
    let mut y = DVector::zeros(x.len() + z.len());
    y.rows_mut(0, x.len()).copy_from(x);
    y.rows_mut(x.len(), z.len()).copy_from(z);
    y
}

pub fn block<T: Real>(v: &DVector<T>, i: usize, d: usize) -> &[T] {
    &v.as_slice()[i * d..(i + 1) * d]
}
