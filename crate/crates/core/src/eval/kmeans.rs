use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{map_indexed, Matrix};

pub const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each Lloyd assignment step.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn rows(z: &Matrix) -> Vec<Vec<f64>> {
    z.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// k-means++ seeding.
fn seed_centres<R: Rng>(points: &[Vec<f64>], c: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centres.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centres.last().unwrap()));
        }
    }
    centres
}

fn nearest(p: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centres.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// One k-means++ seeded Lloyd run.
///
/// Empty clusters are re-seeded with the point farthest from its centre.
/// Stops when assignments no longer change or after [`MAX_ITER`] iterations.
pub fn kmeans_single(z: &Matrix, c: usize, seed: u64) -> Result<KMeansRun> {
    let n = z.nrows();
    if c == 0 || c > n {
        return Err(Error::domain(format!("cannot form {c} clusters from {n} points")));
    }
    let points = rows(z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centres = seed_centres(&points, c, &mut rng);
    let dim = z.ncols();
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut inertia = f64::INFINITY;

    for _ in 0..MAX_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (k, d) = nearest(p, &centres);
            if assignment[i] != k {
                assignment[i] = k;
                changed = true;
            }
            dists[i] = d;
        }
        inertia = dists.iter().sum();
        history.push(inertia);
        if !changed {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; c];
        let mut counts = vec![0usize; c];
        for (p, &k) in points.iter().zip(&assignment) {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(p) {
                *s += v;
            }
        }
        for k in 0..c {
            if counts[k] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap();
                let old = assignment[far];
                counts[old] -= 1;
                for (s, v) in sums[old].iter_mut().zip(&points[far]) {
                    *s -= v;
                }
                assignment[far] = k;
                dists[far] = 0.0;
                counts[k] = 1;
                sums[k] = points[far].clone();
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                centres[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }
    Ok(KMeansRun {
        assignment,
        inertia,
        history,
    })
}

/// Seed of restart `r` derived from a master seed.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64 + 1)
}

/// All restarts, in restart order.
pub fn kmeans_restarts(z: &Matrix, c: usize, restarts: usize, seed: u64) -> Result<Vec<KMeansRun>> {
    if restarts == 0 {
        return Err(Error::domain("at least one k-means restart is required"));
    }
    map_indexed(restarts, |r| kmeans_single(z, c, restart_seed(seed, r)))
        .into_iter()
        .collect()
}

/// Lowest-inertia assignment over `restarts` runs (first wins ties).
pub fn kmeans(z: &Matrix, c: usize, restarts: usize, seed: u64) -> Result<(Vec<usize>, f64)> {
    let runs = kmeans_restarts(z, c, restarts, seed)?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");
    Ok((best.assignment, best.inertia))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn single_cluster_inertia_is_total_variance() {
        let z = Matrix::from_shape_fn((10, 2), |(i, j)| (i * 3 + j) as f64 * 0.37);
        let (assign, inertia) = kmeans(&z, 1, 3, 1).unwrap();
        assert!(assign.iter().all(|&k| k == 0));
        let mean = z.mean_axis(ndarray::Axis(0)).unwrap();
        let want: f64 = z.rows().into_iter().map(|r| (&r - &mean).mapv(|v| v * v).sum()).sum();
        assert!((inertia - want).abs() < 1e-9);
    }

    #[test]
    fn saturated_clusters_have_zero_inertia() {
        let z = Matrix::from_shape_fn((6, 2), |(i, j)| (i * i + j) as f64);
        let (_, inertia) = kmeans(&z, 6, 2, 4).unwrap();
        assert_eq!(inertia, 0.0);
        assert!(matches!(kmeans(&z, 7, 1, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn separated_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let z = Matrix::from_shape_fn((40, 2), |(i, _)| {
            let centre = if i < 20 { 0.0 } else { 1000.0 };
            centre + rng.sample::<f64, _>(StandardNormal)
        });
        let (assign, inertia) = kmeans(&z, 2, 5, 9).unwrap();
        assert!(assign[..20].iter().all(|&k| k == assign[0]));
        assert!(assign[20..].iter().all(|&k| k == assign[20]));
        assert_ne!(assign[0], assign[20]);
        let within: f64 = [0..20, 20..40]
            .into_iter()
            .map(|r| {
                let block = z.slice(ndarray::s![r, ..]);
                let mean = block.mean_axis(ndarray::Axis(0)).unwrap();
                block.rows().into_iter().map(|p| (&p - &mean).mapv(|v| v * v).sum()).sum::<f64>()
            })
            .sum();
        assert!((inertia - within).abs() < 1e-6);
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = Matrix::from_shape_simple_fn((200, 3), || rng.random::<f64>());
        for r in 0..5 {
            let run = kmeans_single(&z, 6, r).unwrap();
            for w in run.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", run.history);
            }
        }
    }
}
