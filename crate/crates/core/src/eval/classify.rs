use std::collections::BTreeSet;

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const STEPS: usize = 500;
pub const LEARNING_RATE: f64 = 0.1;
pub const PENALTY: f64 = 1e-3;

/// Disjoint, covering train/test split of `0..n`, both sorted ascending.
///
/// With labels, each class is split separately (`round(fraction · size)`
/// members to train). Classes with fewer than two members go entirely to
/// train.
pub fn split_train_test(
    n: usize,
    labels: Option<&[usize]>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let groups: Vec<Vec<usize>> = match labels {
        None => vec![(0..n).collect()],
        Some(y) => {
            if y.len() != n {
                return Err(Error::structural(format!("{} labels for {n} nodes", y.len())));
            }
            let classes = y.iter().max().map_or(0, |m| m + 1);
            let mut g = vec![Vec::new(); classes];
            for (i, &c) in y.iter().enumerate() {
                g[c].push(i);
            }
            g
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n);
    let mut test = Vec::with_capacity(n);
    for (class, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            log::warn!("class {class} has {} member(s); keeping it in the training set", members.len());
            train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let k = (train_fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Rows of `z` selected by `ids`.
pub fn select_rows(z: &Matrix, ids: &[usize]) -> Matrix {
    z.select(Axis(0), ids)
}

/// L2-regularised softmax regression trained by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct SoftmaxClassifier {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Matrix,
    bias: Array1<f64>,
}

impl SoftmaxClassifier {
    /// Fits on `z` (standardised with its own column statistics) and labels `y`.
    pub fn fit(z: &Matrix, y: &[usize], classes: usize) -> Result<Self> {
        let (n, f) = z.dim();
        if n != y.len() || n == 0 {
            return Err(Error::structural(format!("{n} samples for {} labels", y.len())));
        }
        let present: BTreeSet<usize> = y.iter().copied().collect();
        if let Some(&bad) = present.iter().find(|&&c| c >= classes) {
            return Err(Error::domain(format!("label {bad} outside 0..{classes}")));
        }
        if let Some(missing) = (0..classes).find(|c| !present.contains(c)) {
            return Err(Error::domain(format!("class {missing} is absent from the training set")));
        }
        let mean = z.mean_axis(Axis(0)).expect("non-empty");
        let scale = z
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let xs = (z - &mean) / &scale;

        let mut weights = Matrix::zeros((f, classes));
        let mut bias = Array1::<f64>::zeros(classes);
        let mut onehot = Matrix::zeros((n, classes));
        for (i, &c) in y.iter().enumerate() {
            onehot[[i, c]] = 1.0;
        }
        for _ in 0..STEPS {
            let mut probs = xs.dot(&weights) + &bias;
            for mut row in probs.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let s = row.sum();
                row /= s;
            }
            let diff = (probs - &onehot) / n as f64;
            let gw = xs.t().dot(&diff) + &weights * PENALTY;
            let gb = diff.sum_axis(Axis(0));
            weights.scaled_add(-LEARNING_RATE, &gw);
            bias.scaled_add(-LEARNING_RATE, &gb);
        }
        Ok(Self {
            mean,
            scale,
            weights,
            bias,
        })
    }

    pub fn predict(&self, z: &Matrix) -> Vec<usize> {
        let scores = ((z - &self.mean) / &self.scale).dot(&self.weights) + &self.bias;
        scores
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                    .0
            })
            .collect()
    }
}

/// Macro F1 over every class that appears in `truth` or `predicted`.
pub fn macro_f1(truth: &[usize], predicted: &[usize]) -> f64 {
    let classes: BTreeSet<usize> = truth.iter().chain(predicted).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (&t, &p) in truth.iter().zip(predicted) {
                match (t == c, p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    total / classes.len() as f64
}

/// Trains on the training rows and returns macro F1 on the test rows.
pub fn linear_classify_f1(
    z_train: &Matrix,
    y_train: &[usize],
    z_test: &Matrix,
    y_test: &[usize],
    classes: usize,
) -> Result<f64> {
    if z_train.ncols() != z_test.ncols() || z_test.nrows() != y_test.len() {
        return Err(Error::structural("train and test embeddings are inconsistent"));
    }
    let model = SoftmaxClassifier::fit(z_train, y_train, classes)?;
    Ok(macro_f1(y_test, &model.predict(z_test)))
}
