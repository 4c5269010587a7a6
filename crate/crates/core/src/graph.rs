//! Dense symmetric adjacency matrices and the operators derived from them.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ensure_square, for_each_row_block, max_asymmetry, Matrix};

/// Absolute tolerance for every symmetry check in the crate.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Adjacency together with the operators the encoder and the losses consume.
///
/// `a_norm` and `laplacian` are caches; they are rebuilt by
/// [`GraphState::set_adjacency`] and never mutated independently.
#[derive(Debug, Clone)]
pub struct GraphState {
    a0: Option<Matrix>,
    a: Matrix,
    a_norm: Matrix,
    laplacian: Matrix,
}

impl GraphState {
    /// Builds the state from the initial adjacency. `a0` is `None` for
    /// datasets without a graph, in which case `a` is the learned
    /// initialisation.
    pub fn new(a0: Option<Matrix>, a: Matrix) -> Result<Self> {
        if let Some(a0) = &a0 {
            if a0.dim() != a.dim() {
                return Err(Error::structural("initial and current adjacency differ in shape"));
            }
        }
        let a_norm = normalize_adjacency(&a)?;
        let laplacian = laplacian(&a)?;
        Ok(Self {
            a0,
            a,
            a_norm,
            laplacian,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn initial(&self) -> Option<&Matrix> {
        self.a0.as_ref()
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.a
    }

    pub fn normalized(&self) -> &Matrix {
        &self.a_norm
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }

    /// Replaces the current adjacency and refreshes the cached operators.
    pub fn set_adjacency(&mut self, a: Matrix) -> Result<()> {
        if a.dim() != self.a.dim() {
            return Err(Error::structural("replacement adjacency has the wrong shape"));
        }
        self.a_norm = normalize_adjacency(&a)?;
        self.laplacian = laplacian(&a)?;
        self.a = a;
        Ok(())
    }
}

fn ensure_symmetric(a: &Matrix, what: &str) -> Result<usize> {
    let n = ensure_square(a, what)?;
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::structural(format!(
            "{what} is not symmetric (max |a_ij - a_ji| = {asym:e})"
        )));
    }
    Ok(n)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    let n = ensure_symmetric(a, "adjacency")?;
    let inv_sqrt: Array1<f64> = a
        .rows()
        .into_iter()
        .map(|row| 1.0 / (row.sum() + 1.0).sqrt())
        .collect();
    let mut out = Matrix::zeros((n, n));
    for_each_row_block(&mut out, |r0, mut block| {
        for (di, mut row) in block.rows_mut().into_iter().enumerate() {
            let i = r0 + di;
            for j in 0..n {
                let tilde = a[[i, j]] + if i == j { 1.0 } else { 0.0 };
                row[j] = (inv_sqrt[i] * inv_sqrt[j]) * tilde;
            }
        }
    });
    Ok(out)
}

/// `L = D - A` with `d_ii = Σ_j a_ij`.
pub fn laplacian(a: &Matrix) -> Result<Matrix> {
    ensure_symmetric(a, "adjacency")?;
    let mut l = a.mapv(|v| -v);
    for (i, row) in a.rows().into_iter().enumerate() {
        l[[i, i]] += row.sum();
    }
    Ok(l)
}

/// `(A + Aᵀ) / 2` with the diagonal pinned to zero.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    let n = ensure_square(a, "adjacency")?;
    let mut out = Matrix::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// Deletes each undirected edge independently with probability
/// `missing_ratio`, mirroring the result so symmetry is preserved.
///
/// Edges are visited in row-major upper-triangle order with one uniform draw
/// per edge, so equal seeds give identical output.
pub fn perturb_edges(a0: &Matrix, missing_ratio: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&missing_ratio) {
        return Err(Error::domain(format!(
            "missing ratio must lie in [0, 1], got {missing_ratio}"
        )));
    }
    let n = ensure_symmetric(a0, "adjacency")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = a0.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            if a0[[i, j]] != 0.0 && rng.random::<f64>() < missing_ratio {
                out[[i, j]] = 0.0;
                out[[j, i]] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Symmetric binary adjacency from an undirected edge list. Self loops are
/// dropped and duplicate edges collapse.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Matrix> {
    let mut a = Matrix::zeros((n, n));
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(Error::structural(format!(
                "edge ({u}, {v}) references a node outside 0..{n}"
            )));
        }
        if u != v {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
    }
    Ok(a)
}

/// Number of nonzero entries strictly above the diagonal.
pub fn undirected_edge_count(a: &Matrix) -> usize {
    let n = a.nrows();
    (0..n)
        .map(|i| ((i + 1)..n).filter(|&j| a[[i, j]] != 0.0).count())
        .sum()
}
