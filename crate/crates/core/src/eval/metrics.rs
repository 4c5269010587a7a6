use crate::error::{Error, Result};

/// Predicted cluster ids against ground-truth class ids, both in `0..classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPartition {
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
    pub classes: usize,
}

impl LabeledPartition {
    pub fn new(predicted: Vec<usize>, truth: Vec<usize>, classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::structural(format!(
                "{} predictions for {} labels",
                predicted.len(),
                truth.len()
            )));
        }
        if let Some(&bad) = predicted.iter().chain(&truth).find(|&&id| id >= classes) {
            return Err(Error::domain(format!("id {bad} outside 0..{classes}")));
        }
        Ok(Self {
            predicted,
            truth,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// `counts[p][t]` = number of items predicted `p` with truth `t`.
    pub fn contingency(&self) -> Vec<Vec<usize>> {
        let mut table = vec![vec![0usize; self.classes]; self.classes];
        for (&p, &t) in self.predicted.iter().zip(&self.truth) {
            table[p][t] += 1;
        }
        table
    }
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`),
/// by the shortest augmenting path form of the Hungarian method.
/// Returns `col_of_row`.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    assert!(rows <= cols, "hungarian: more rows than columns");
    // 1-based potentials and matching, column 0 is a sentinel.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut row_of_col = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; rows];
    for j in 1..=cols {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Fraction of items correctly labelled under the best one-to-one mapping
/// from cluster ids to class ids.
pub fn clustering_accuracy(p: &LabeledPartition) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let table = p.contingency();
    let cost: Vec<Vec<f64>> = table
        .iter()
        .map(|row| row.iter().map(|&c| -(c as f64)).collect())
        .collect();
    let matched: usize = hungarian(&cost)
        .iter()
        .enumerate()
        .map(|(pred, &class)| table[pred][class])
        .sum();
    matched as f64 / p.len() as f64
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Mutual information normalised by the geometric mean of the two entropies.
///
/// When either entropy vanishes the score is 1 if the partitions coincide up
/// to relabelling and 0 otherwise.
pub fn nmi(p: &LabeledPartition) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let table = p.contingency();
    let pred_counts: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let true_counts: Vec<usize> = (0..p.classes)
        .map(|t| table.iter().map(|r| r[t]).sum())
        .collect();
    let h_pred = entropy(&pred_counts, n);
    let h_true = entropy(&true_counts, n);
    if h_pred <= 0.0 || h_true <= 0.0 {
        let same = h_pred <= 0.0 && h_true <= 0.0;
        return if same { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for (pi, row) in table.iter().enumerate() {
        for (ti, &c) in row.iter().enumerate() {
            if c > 0 {
                let joint = c as f64 / n;
                mi += joint * (c as f64 * n / (pred_counts[pi] as f64 * true_counts[ti] as f64)).ln();
            }
        }
    }
    (mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
