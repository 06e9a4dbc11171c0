//! Undirected communication topologies, their Laplacians, doubly stochastic
//! mixing weights and the consensus-orthogonal basis `R`.

use crate::error::{Error, Result};
use crate::linalg::kron_identity;
use crate::scalar::{from_usize, lit, to_f64, Real};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Retry budget of [`erdos_renyi`].
pub const ER_MAX_ATTEMPTS: usize = 1000;

/// Undirected weighted graph on agents `0..n` with self-loops.
///
/// `weights[(i, j)] > 0` exactly when `i == j` (self-loop) or `{i, j}` is an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T: Real> {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: DMatrix<T>,
}

impl<T: Real> Graph<T> {
    /// Unit-weight graph with unit self-loops. Edges are 0-based and unordered.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<(usize, usize, T)> = edges.iter().map(|&(i, j)| (i, j, T::one())).collect();
        let mut g = Self::from_weighted_edges(n, &weighted)?;
        for i in 0..n {
            g.weights[(i, i)] = T::one();
        }
        Ok(g)
    }

    /// Builds a graph from 0-based weighted pairs. Pairs `(i, i, w)` set the
    /// self-loop weight; missing self-loops default to zero.
    pub fn from_weighted_edges(n: usize, entries: &[(usize, usize, T)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("graph needs at least one agent".into()));
        }
        let mut weights = DMatrix::zeros(n, n);
        for &(i, j, w) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has non-positive weight")));
            }
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if weights[(i, j)] > T::zero() {
                    edges.push((i, j));
                }
            }
        }
        Ok(Self { n, edges, weights })
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("valid path graph")
    }

    pub fn ring(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n > 2 {
            edges.push((n - 1, 0));
        }
        Self::from_edges(n, &edges).expect("valid ring graph")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self::from_edges(n, &edges).expect("valid complete graph")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges `(i, j)` with `i < j`, 0-based.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Weighted adjacency including self-loops.
    pub fn weights(&self) -> &DMatrix<T> {
        &self.weights
    }

    /// Neighbours of `i`, excluding `i` itself.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && self.weights[(i, j)] > T::zero())
    }

    /// Number of neighbours, excluding the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// `d_i = Σ_{j ∈ N_i} w_ij`, self-loop included.
    pub fn weighted_degree(&self, i: usize) -> T {
        self.weights.row(i).sum()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn to_json(&self) -> GraphJson {
        let mut weights = Vec::new();
        for i in 0..self.n {
            for j in i..self.n {
                let w = self.weights[(i, j)];
                if w > T::zero() {
                    weights.push((i + 1, j + 1, to_f64(w)));
                }
            }
        }
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            weights,
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let to_zero = |i: usize| {
            i.checked_sub(1)
                .ok_or_else(|| Error::InvalidInput("agent indices are 1-based".into()))
        };
        let mut entries = Vec::with_capacity(json.weights.len() + json.edges.len());
        for &[i, j] in &json.edges {
            entries.push((to_zero(i)?, to_zero(j)?, T::one()));
        }
        for &(i, j, w) in &json.weights {
            entries.push((to_zero(i)?, to_zero(j)?, lit(w)));
        }
        let g = Self::from_weighted_edges(json.n, &entries)?;
        let listed: std::collections::BTreeSet<_> = json
            .edges
            .iter()
            .map(|&[i, j]| (i.min(j) - 1, i.max(j) - 1))
            .filter(|(i, j)| i != j)
            .collect();
        if listed.len() != g.edges.len() {
            return Err(Error::InvalidInput("weights reference pairs missing from the edge list".into()));
        }
        Ok(g)
    }
}

/// Wire format of a graph: 1-based agent indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub weights: Vec<(usize, usize, f64)>,
}

/// Connected Erdős–Rényi graph with unit weights and unit self-loops.
///
/// Each attempt draws every pair independently with probability `p` from a
/// ChaCha stream indexed by the attempt number; the first connected sample wins.
pub fn erdos_renyi<T: Real>(n: usize, p: f64, seed: u64) -> Result<Graph<T>> {
    erdos_renyi_with_attempts(n, p, seed, ER_MAX_ATTEMPTS)
}

pub fn erdos_renyi_with_attempts<T: Real>(n: usize, p: f64, seed: u64, attempts: usize) -> Result<Graph<T>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("Erdős–Rényi graph needs n ≥ 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("edge probability must lie in (0, 1], got {p}")));
    }
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::Disconnected { n, p, attempts })
}

/// Laplacian `𝓛 = 𝒟 − 𝒲`, its lift `𝓛 ⊗ I_d`, and a sparse neighbour view.
#[derive(Debug, Clone)]
pub struct LaplacianSet<T: Real> {
    pub small: DMatrix<T>,
    pub big: DMatrix<T>,
    pub degree: DMatrix<T>,
    pub d: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> LaplacianSet<T> {
    pub fn n(&self) -> usize {
        self.small.nrows()
    }

    /// Off-diagonal neighbour weights `w_ij` of agent `i`.
    pub fn neighbor_weights(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    /// `(𝓛 ⊗ I_d) v` evaluated as `Σ_j w_ij (v_i − v_j)` per agent.
    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        let d = self.d;
        let mut out = DVector::zeros(v.len());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                for k in 0..d {
                    out[i * d + k] += w * (v[i * d + k] - v[j * d + k]);
                }
            }
        }
        out
    }
}

pub fn laplacian<T: Real>(g: &Graph<T>, d: usize) -> LaplacianSet<T> {
    let n = g.n();
    let degree = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| g.weighted_degree(i)));
    let small = &degree - g.weights();
    let big = kron_identity(&small, d);
    let rows = (0..n)
        .map(|i| g.neighbors(i).map(|j| (j, g.weights()[(i, j)])).collect())
        .collect();
    LaplacianSet { small, big, degree, d, rows }
}

/// Metropolis–Hastings weights `1/(1 + max(deg_i, deg_j))` on edges, with
/// the remaining mass on the diagonal. Symmetric and doubly stochastic.
pub fn metropolis_weights<T: Real>(g: &Graph<T>) -> DMatrix<T> {
    let n = g.n();
    let deg: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in g.edges() {
        let v = T::one() / from_usize::<T>(1 + deg[i].max(deg[j]));
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: T = w.row(i).sum();
        w[(i, i)] = T::one() - off;
    }
    w
}

/// Orthonormal basis of the complement of `span{𝟏}` in `R^{Nd}`.
#[derive(Debug, Clone)]
pub struct ConsensusBasis<T: Real> {
    /// `(N·d) × ((N−1)·d)` with orthonormal columns.
    pub r: DMatrix<T>,
    pub n: usize,
    pub d: usize,
}

/// Householder reflector mapping `e_1` to `1_N/√N`; its last `N−1` columns
/// span the complement of `1_N`. The result is lifted by `⊗ I_d`.
pub fn consensus_basis<T: Real>(n: usize, d: usize) -> Result<ConsensusBasis<T>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("consensus basis needs n ≥ 2, got {n}")));
    }
    let inv_sqrt_n = T::one() / from_usize::<T>(n).sqrt();
    let mut u = DVector::from_element(n, inv_sqrt_n);
    u[0] -= T::one();
    let norm = u.norm();
    u /= norm;
    let h = DMatrix::<T>::identity(n, n) - (&u * u.transpose()) * lit::<T>(2.0);
    let complement = h.columns(1, n - 1).into_owned();
    Ok(ConsensusBasis { r: kron_identity(&complement, d), n, d })
}

/// `𝟏 = 1_N ⊗ I_d` as an `(N·d) × d` matrix.
pub fn ones_lift<T: Real>(n: usize, d: usize) -> DMatrix<T> {
    kron_identity(&DMatrix::from_element(n, 1, T::one()), d)
}
