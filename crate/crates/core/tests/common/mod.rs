//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use bage::Matrix;

/// Euclidean projection of `v` onto the probability simplex, by bisection on
/// the threshold `θ` in `Σ max(v_j − θ, 0) = 1`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mass = |t: f64| v.iter().map(|&x| (x - t).max(0.0)).sum::<f64>();
    let hi0 = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (hi0 - 1.0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - t).max(0.0)).collect()
}

/// Minimises `Σ_j h_j a_j + γ a_j²` over the simplex on every index except
/// `self_index`, by projected gradient descent with step `1/(4γ)`.
pub fn simplex_qp(h: &[f64], self_index: usize, gamma: f64) -> Vec<f64> {
    assert!(gamma > 0.0);
    let idx: Vec<usize> = (0..h.len()).filter(|&j| j != self_index).collect();
    let hh: Vec<f64> = idx.iter().map(|&j| h[j]).collect();
    let m = hh.len();
    let step = 1.0 / (4.0 * gamma);
    let mut a = vec![1.0 / m as f64; m];
    for _ in 0..100_000 {
        let moved: Vec<f64> = a
            .iter()
            .zip(&hh)
            .map(|(&x, &hj)| x - step * (hj + 2.0 * gamma * x))
            .collect();
        let next = project_simplex(&moved);
        let change = next.iter().zip(&a).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        a = next;
        if change < 1e-15 {
            break;
        }
    }
    let mut out = vec![0.0; h.len()];
    for (&j, &x) in idx.iter().zip(&a) {
        out[j] = x;
    }
    out
}

/// `Σ_ij a_ij ‖z_i − z_j‖²` by explicit double loop.
pub fn laplacian_double_loop(z: &Matrix, a: &Matrix) -> f64 {
    let n = z.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d: f64 = z.row(i).iter().zip(z.row(j).iter()).map(|(p, q)| (p - q).powi(2)).sum();
            total += a[[i, j]] * d;
        }
    }
    total
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

/// Best accuracy over every one-to-one relabelling of `predicted`.
pub fn brute_force_accuracy(predicted: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut all = Vec::new();
    permutations(&mut (0..classes).collect(), 0, &mut all);
    let best = all
        .iter()
        .map(|perm| predicted.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap_or(0);
    best as f64 / truth.len() as f64
}
