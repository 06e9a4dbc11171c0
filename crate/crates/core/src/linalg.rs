//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::scalar::{lit, Real};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `m ⊗ I_d`.
pub fn kron_identity<T: Real>(m: &DMatrix<T>, d: usize) -> DMatrix<T> {
    m.kronecker(&DMatrix::identity(d, d))
}

/// `(m + mᵀ)/2`, used before eigendecompositions to remove roundoff asymmetry.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    vals
}

pub fn min_eig<T: Real>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m)[0]
}

pub fn max_eig<T: Real>(m: &DMatrix<T>) -> T {
    *sym_eigenvalues(m).last().expect("non-empty matrix")
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    let gram = if m.nrows() <= m.ncols() { m * m.transpose() } else { m.transpose() * m };
    max_eig(&gram).max(T::zero()).sqrt()
}

/// Moore–Penrose pseudoinverse of a symmetric matrix.
///
/// Eigenvalues with magnitude at most `rel_tol · max|λ|` are treated as zero.
pub fn pinv_sym<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let cutoff = rel_tol * scale;
    let inv = eig
        .eigenvalues
        .map(|v| if v.abs() > cutoff { T::one() / v } else { T::zero() });
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&inv) * q.transpose()
}

/// Largest absolute entry.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Applies `(w ⊗ I_d)` to a stacked vector without forming the lift.
pub fn mix<T: Real>(w: &DMatrix<T>, v: &DVector<T>, d: usize) -> DVector<T> {
    let n = w.nrows();
    debug_assert_eq!(v.len(), n * d);
    let mut out = DVector::zeros(n * d);
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            if wij == T::zero() {
                continue;
            }
            for k in 0..d {
                out[i * d + k] += wij * v[j * d + k];
            }
        }
    }
    out
}

/// Sum of the `n` blocks of length `d`, i.e. `𝟏ᵀv`.
pub fn block_sum<T: Real>(v: &DVector<T>, d: usize) -> DVector<T> {
    let mut out = DVector::zeros(d);
    for (idx, val) in v.iter().enumerate() {
        out[idx % d] += *val;
    }
    out
}

/// `𝟏 ⊗ x`: stacks `n` copies of `x`.
pub fn tile<T: Real>(x: &DVector<T>, n: usize) -> DVector<T> {
    let d = x.len();
    DVector::from_fn(n * d, |idx, _| x[idx % d])
}
