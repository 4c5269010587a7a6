//! Downstream evaluation of embeddings: clustering quality against labels
//! and linear separability of classes.

mod classify;
mod kmeans;
mod metrics;

pub use classify::{
    linear_classify_f1, macro_f1, select_rows, split_train_test, SoftmaxClassifier,
};
pub use kmeans::{kmeans, kmeans_restarts, kmeans_single, restart_seed, KMeansRun, MAX_ITER};
pub use metrics::{clustering_accuracy, hungarian, mean_std, nmi, LabeledPartition};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;

/// ACC/NMI over independent k-means restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub acc: Vec<f64>,
    pub nmi: Vec<f64>,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
    /// Restart with the lowest inertia.
    pub best_restart: usize,
    pub best_acc: f64,
    pub best_nmi: f64,
}

/// Runs `restarts` k-means restarts with `classes` clusters and scores each
/// against `labels`.
pub fn evaluate_clustering(
    z: &Matrix,
    labels: &[usize],
    classes: usize,
    restarts: usize,
    seed: u64,
) -> Result<ClusteringReport> {
    let runs = kmeans_restarts(z, classes, restarts, seed)?;
    let mut acc = Vec::with_capacity(restarts);
    let mut nmis = Vec::with_capacity(restarts);
    for run in &runs {
        let part = LabeledPartition::new(run.assignment.clone(), labels.to_vec(), classes)?;
        acc.push(clustering_accuracy(&part));
        nmis.push(nmi(&part));
    }
    let best_restart = (0..runs.len())
        .reduce(|a, b| if runs[b].inertia < runs[a].inertia { b } else { a })
        .unwrap_or(0);
    let (acc_mean, acc_std) = mean_std(&acc);
    let (nmi_mean, nmi_std) = mean_std(&nmis);
    Ok(ClusteringReport {
        best_acc: acc[best_restart],
        best_nmi: nmis[best_restart],
        acc,
        nmi: nmis,
        acc_mean,
        acc_std,
        nmi_mean,
        nmi_std,
        best_restart,
    })
}

/// Stratified 70/30 split, softmax classifier, macro F1 on the test part.
pub fn evaluate_classification(
    z: &Matrix,
    labels: &[usize],
    classes: usize,
    seed: u64,
) -> Result<f64> {
    let (train, test) = split_train_test(z.nrows(), Some(labels), 0.7, seed)?;
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    linear_classify_f1(
        &select_rows(z, &train),
        &y_train,
        &select_rows(z, &test),
        &y_test,
        classes,
    )
}
