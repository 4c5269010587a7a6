//! Closed-form adjacency learning from embedding distances.
//!
//! Each row `a_i` minimises `Σ_j h_ij a_ij + γ_i a_ij²` over the probability
//! simplex. Fixing `γ_i` so that exactly the `k` nearest neighbours receive
//! weight makes the KKT conditions solvable in closed form:
//!
//! ```text
//! a_ij = (h_(k+1) - h_ij) / (k h_(k+1) - Σ_{j≤k} h_(j))   for the k nearest, 0 otherwise
//! ```
//!
//! where `h_(1) ≤ h_(2) ≤ …` are the row's distances to every other node in
//! ascending order. The node itself is never a candidate neighbour.

use ndarray::{Array1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::symmetrize;
use crate::linalg::{ensure_finite, map_indexed, matmul, Matrix};

/// Below this the closed-form denominator is treated as a `k+1`-way tie.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Neighbour-count bookkeeping and the scalars of the blend update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    /// Neighbour count used for each row in the next solve.
    pub k_per_node: Vec<usize>,
    /// Support size realised by each row in the previous solve; the mean of
    /// the next draw of `k_per_node`.
    pub mu_k: Vec<usize>,
    pub k_min: usize,
    pub k_max: usize,
    /// Mean regulariser from the most recent solve (zero before any solve).
    pub gamma: f64,
    pub alpha: f64,
    pub tau: usize,
}

impl AdaptiveState {
    /// State for `n` nodes with every `k` set to `k_init`.
    ///
    /// `k_max` is lowered to `n - 2` on small graphs, and `k_init` is clamped
    /// into the resulting range.
    pub fn new(
        n: usize,
        k_init: usize,
        k_min: usize,
        k_max: usize,
        alpha: f64,
        tau: usize,
    ) -> Result<Self> {
        if n < 3 {
            return Err(Error::domain(format!(
                "adaptive graph learning needs at least 3 nodes, got {n}"
            )));
        }
        if k_min == 0 || k_min > k_max {
            return Err(Error::domain(format!(
                "neighbour bounds must satisfy 1 <= k_min <= k_max, got {k_min}..{k_max}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let k_max = k_max.min(n - 2);
        let k_min = k_min.min(k_max);
        let k0 = k_init.clamp(k_min, k_max);
        Ok(Self {
            k_per_node: vec![k0; n],
            mu_k: vec![k0; n],
            k_min,
            k_max,
            gamma: 0.0,
            alpha,
            tau,
        })
    }

    /// Draws the next `k_per_node` around the previous support sizes.
    pub fn resample_k<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.k_per_node = sample_k(&self.mu_k, self.k_min, self.k_max, rng)?;
        Ok(())
    }
}

/// `h_ij = ‖z_i − z_j‖²`, symmetric with an exactly zero diagonal.
pub fn pairwise_sq_dist(z: &Matrix) -> Result<Matrix> {
    ensure_finite(z, "embedding")?;
    let n = z.nrows();
    let sq: Array1<f64> = z.map_axis(Axis(1), |row| row.dot(&row));
    let gram = matmul(&z.view(), &z.t());
    let mut h = Matrix::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (sq[i] + sq[j] - 2.0 * gram[[i, j]]).max(0.0);
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    Ok(h)
}

/// Candidate neighbours of `self_index`, ascending by distance with ties
/// broken by node index.
fn sorted_candidates(h_row: &[f64], self_index: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..h_row.len()).filter(|&j| j != self_index).collect();
    idx.sort_by(|&a, &b| h_row[a].total_cmp(&h_row[b]).then(a.cmp(&b)));
    idx
}

/// Sparse solution of one row: `(node, weight)` pairs for the `k` nearest.
/// Zero weights from boundary ties are kept so callers can decide.
pub fn solve_row_sparse(h_row: &[f64], self_index: usize, k: usize) -> Result<Vec<(usize, f64)>> {
    let n = h_row.len();
    if self_index >= n {
        return Err(Error::structural(format!("self index {self_index} outside row of length {n}")));
    }
    if k == 0 || k + 2 > n {
        return Err(Error::domain(format!(
            "neighbour count k = {k} must lie in 1..={} for n = {n}",
            n.saturating_sub(2)
        )));
    }
    if let Some(v) = h_row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Numeric(format!("invalid distance {v}")));
    }
    let order = sorted_candidates(h_row, self_index);
    let nearest = &order[..k];
    let boundary = h_row[order[k]];
    let head: f64 = nearest.iter().map(|&j| h_row[j]).sum();
    let denom = k as f64 * boundary - head;
    if denom <= DEGENERATE_EPS {
        let w = 1.0 / k as f64;
        return Ok(nearest.iter().map(|&j| (j, w)).collect());
    }
    Ok(nearest
        .iter()
        .map(|&j| (j, ((boundary - h_row[j]) / denom).max(0.0)))
        .collect())
}

/// Dense form of [`solve_row_sparse`]: an `n`-vector summing to one with
/// zero weight on `self_index`.
pub fn solve_row(h_row: &[f64], self_index: usize, k: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; h_row.len()];
    for (j, w) in solve_row_sparse(h_row, self_index, k)? {
        out[j] = w;
    }
    Ok(out)
}

/// Per-row regulariser `γ_i = (k_i/2) h_(k_i+1) − ½ Σ_{j≤k_i} h_(j)`.
pub fn row_gamma(h_row: &[f64], self_index: usize, k: usize) -> f64 {
    let order = sorted_candidates(h_row, self_index);
    let head: f64 = order[..k].iter().map(|&j| h_row[j]).sum();
    0.5 * k as f64 * h_row[order[k]] - 0.5 * head
}

/// Mean of the per-row regularisers, floored at zero.
pub fn compute_gamma(h: &Matrix, k_per_node: &[usize]) -> Result<f64> {
    let n = h.nrows();
    if k_per_node.len() != n || h.ncols() != n {
        return Err(Error::structural("distance matrix and neighbour counts disagree in size"));
    }
    if let Some(&k) = k_per_node.iter().find(|&&k| k == 0 || k + 2 > n) {
        return Err(Error::domain(format!("neighbour count {k} out of range for n = {n}")));
    }
    let per_row = map_indexed(n, |i| {
        let row = h.row(i);
        let row = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
        row_gamma(&row, i, k_per_node[i])
    });
    let gamma = per_row.iter().sum::<f64>() / n as f64;
    Ok(gamma.max(0.0))
}

/// `k_i = clamp(round(g_i), k_min, k_max)` with `g_i ~ N(μk_i, 1)`.
pub fn sample_k<R: Rng + ?Sized>(
    mu_k: &[usize],
    k_min: usize,
    k_max: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if mu_k.is_empty() {
        return Err(Error::structural("no neighbour counts to resample"));
    }
    if k_min == 0 || k_min > k_max {
        return Err(Error::domain(format!("invalid neighbour bounds {k_min}..{k_max}")));
    }
    Ok(mu_k
        .iter()
        .map(|&mu| {
            let g = Normal::new(mu as f64, 1.0).expect("unit variance").sample(rng);
            (g.round().max(0.0) as usize).clamp(k_min, k_max)
        })
        .collect())
}

/// Row-stochastic adjacency learned from the rows of `z`.
///
/// Uses `state.k_per_node` for the row sizes, then records the realised
/// support sizes in `state.mu_k` and the mean regulariser in `state.gamma`.
pub fn learn_adjacency(z: &Matrix, state: &mut AdaptiveState) -> Result<Matrix> {
    let n = z.nrows();
    if state.k_per_node.len() != n {
        return Err(Error::structural(format!(
            "adaptive state tracks {} nodes, embedding has {n}",
            state.k_per_node.len()
        )));
    }
    let h = pairwise_sq_dist(z)?;
    let rows = map_indexed(n, |i| {
        let row = h.row(i).to_vec();
        solve_row_sparse(&row, i, state.k_per_node[i])
    });
    let mut a = Matrix::zeros((n, n));
    let mut support = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        support.push(row.iter().filter(|(_, w)| *w > 0.0).count());
        for (j, w) in row {
            a[[i, j]] = w;
        }
    }
    state.gamma = compute_gamma(&h, &state.k_per_node)?;
    state.mu_k = support;
    Ok(a)
}

/// `symmetrize(α A_L + (1 − α) A₀)`.
pub fn blend(a_learned: &Matrix, a_initial: &Matrix, alpha: f64) -> Result<Matrix> {
    if a_learned.dim() != a_initial.dim() {
        return Err(Error::structural(format!(
            "cannot blend {:?} with {:?}",
            a_learned.dim(),
            a_initial.dim()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mixed = a_learned * alpha + a_initial * (1.0 - alpha);
    symmetrize(&mixed)
}
