//! Experiment orchestration: corrupt, train, evaluate, export.
//!
//! Each run writes three files to the output directory:
//!
//! - `embedding_<runid>.csv`: the `n × f` embedding, no header;
//! - `loss_<runid>.csv`: `epoch,loss` per epoch;
//! - `run_<runid>.json`: the full [`ExperimentResult`], including the
//!   training configuration needed to reproduce the run.
//!
//! and appends one row to the shared `results.csv` summary.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_classification, evaluate_clustering, ClusteringReport};
use crate::graph::perturb_edges;
use crate::linalg::{map_indexed, Matrix};
use crate::train::{train, TrainConfig};

pub const RESULTS_FILE: &str = "results.csv";
pub const RESULTS_HEADER: &str =
    "dataset,model,ratio,lambda,beta,alpha,tau,seed,acc_mean,acc_std,nmi_mean,nmi_std,f1,seconds";
pub const DEFAULT_RESTARTS: usize = 10;
pub const GRID_KEYS: [&str; 6] = ["lambda", "beta", "alpha", "tau", "k_init", "missing_ratio"];

static SUMMARY_LOCK: Mutex<()> = Mutex::new(());

/// Everything needed to reproduce a run on a given dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub config: TrainConfig,
    pub missing_ratio: f64,
    pub restarts: usize,
}

impl RunSpec {
    pub fn new(config: TrainConfig, missing_ratio: f64) -> Self {
        Self {
            config,
            missing_ratio,
            restarts: DEFAULT_RESTARTS,
        }
    }

    /// Seed of the edge-deletion draw, derived from the training seed.
    pub fn perturb_seed(&self) -> u64 {
        self.config.seed ^ 0xA5A5_5A5A_0F0F_F0F0
    }

    /// File-name friendly identifier.
    pub fn run_id(&self, dataset: &str) -> String {
        let c = &self.config;
        let raw = format!(
            "{dataset}_{}_r{}_l{}_b{}_a{}_t{}_k{}_s{}",
            c.model, self.missing_ratio, c.lambda, c.beta, c.alpha, c.tau, c.k_init, c.seed
        );
        raw.chars()
            .map(|ch| if ch.is_ascii_alphanumeric() || matches!(ch, '.' | '-' | '_') { ch } else { '-' })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub run_id: String,
    pub dataset: String,
    pub spec: RunSpec,
    /// Feature preprocessing applied by the loader.
    pub preprocessing: String,
    /// Undirected edges left after corruption (`None` without a graph).
    pub edges_kept: Option<usize>,
    pub clustering: Option<ClusteringReport>,
    pub f1: Option<f64>,
    pub losses: Vec<f64>,
    pub seconds: f64,
}

impl ExperimentResult {
    pub fn acc_mean(&self) -> Option<f64> {
        self.clustering.as_ref().map(|c| c.acc_mean)
    }

    pub fn nmi_mean(&self) -> Option<f64> {
        self.clustering.as_ref().map(|c| c.nmi_mean)
    }

    /// One `results.csv` row; metrics that were not computed are left empty.
    pub fn summary_row(&self) -> String {
        let c = &self.spec.config;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let cl = self.clustering.as_ref();
        [
            self.dataset.clone(),
            c.model.to_string(),
            self.spec.missing_ratio.to_string(),
            c.lambda.to_string(),
            c.beta.to_string(),
            c.alpha.to_string(),
            c.tau.to_string(),
            c.seed.to_string(),
            opt(cl.map(|r| r.acc_mean)),
            opt(cl.map(|r| r.acc_std)),
            opt(cl.map(|r| r.nmi_mean)),
            opt(cl.map(|r| r.nmi_std)),
            opt(self.f1),
            format!("{:.3}", self.seconds),
        ]
        .join(",")
    }
}

fn preprocessing_of(ds: &Dataset) -> &'static str {
    if ds.has_graph() {
        "l1-rows"
    } else {
        "min-max-columns"
    }
}

/// Corrupts the graph, trains, and evaluates, without touching the disk.
pub fn execute(ds: &Dataset, spec: &RunSpec) -> Result<(ExperimentResult, Matrix)> {
    spec.config.validate()?;
    if !(0.0..=1.0).contains(&spec.missing_ratio) {
        return Err(Error::domain(format!(
            "missing ratio must lie in [0, 1], got {}",
            spec.missing_ratio
        )));
    }
    if spec.missing_ratio > 0.0 && !ds.has_graph() {
        return Err(Error::domain(format!(
            "dataset `{}` has no graph to remove edges from",
            ds.name
        )));
    }
    let start = Instant::now();
    let graph = match ds.adjacency()? {
        Some(a) if spec.missing_ratio > 0.0 => Some(perturb_edges(&a, spec.missing_ratio, spec.perturb_seed())?),
        other => other,
    };
    let edges_kept = graph.as_ref().map(crate::graph::undirected_edge_count);
    let out = train(&ds.features, graph.as_ref(), &spec.config)?;
    let z = out.z().clone();

    let (clustering, f1) = match &ds.labels {
        Some(labels) => {
            let c = ds.classes();
            let report = evaluate_clustering(&z, labels, c, spec.restarts, spec.config.seed)?;
            let f1 = match evaluate_classification(&z, labels, c, spec.config.seed) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("classification skipped: {e}");
                    None
                }
            };
            (Some(report), f1)
        }
        None => (None, None),
    };
    let result = ExperimentResult {
        run_id: spec.run_id(&ds.name),
        dataset: ds.name.clone(),
        spec: spec.clone(),
        preprocessing: preprocessing_of(ds).into(),
        edges_kept,
        clustering,
        f1,
        losses: out.losses,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, z))
}

/// Writes the embedding with 17 significant digits per value.
pub fn write_embedding(z: &Matrix, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for row in z.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an embedding written by [`write_embedding`] (or any headerless
/// numeric CSV).
pub fn read_embedding(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "ragged row".into(),
            });
        }
        for cell in rec.iter() {
            values.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("non-numeric cell `{cell}`"),
            })?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::structural(format!("{} is empty", path.display())))?;
    Matrix::from_shape_vec((rows, cols), values).map_err(|e| Error::structural(e.to_string()))
}

fn write_run_files(result: &ExperimentResult, z: &Matrix, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let id = &result.run_id;
    write_embedding(z, &dir.join(format!("embedding_{id}.csv")))?;
    let mut loss = std::io::BufWriter::new(fs::File::create(dir.join(format!("loss_{id}.csv")))?);
    writeln!(loss, "epoch,loss")?;
    for (e, l) in result.losses.iter().enumerate() {
        writeln!(loss, "{},{l}", e + 1)?;
    }
    loss.flush()?;
    fs::write(dir.join(format!("run_{id}.json")), serde_json::to_string_pretty(result)?)?;
    Ok(())
}

/// Appends rows to `results.csv`, writing the header if the file is new.
pub fn append_summary(dir: &Path, results: &[ExperimentResult]) -> Result<()> {
    let _guard = SUMMARY_LOCK.lock().unwrap_or_else(|p| p.into_inner());
    fs::create_dir_all(dir)?;
    let path = dir.join(RESULTS_FILE);
    let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    let mut text = String::new();
    if fresh {
        text.push_str(RESULTS_HEADER);
        text.push('\n');
    }
    for r in results {
        text.push_str(&r.summary_row());
        text.push('\n');
    }
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Runs one experiment; with an output directory, exports its files and
/// summary row.
pub fn run_experiment(ds: &Dataset, spec: &RunSpec, output_dir: Option<&Path>) -> Result<ExperimentResult> {
    let (result, z) = execute(ds, spec)?;
    if let Some(dir) = output_dir {
        write_run_files(&result, &z, dir)?;
        append_summary(dir, std::slice::from_ref(&result))?;
    }
    Ok(result)
}

/// Ordered parameter grid; values for integer keys must be whole numbers.
pub type Grid = Vec<(String, Vec<f64>)>;

fn apply(spec: &mut RunSpec, key: &str, value: f64) -> Result<()> {
    let whole = |v: f64| {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("{key} needs a non-negative integer, got {v}")))
        }
    };
    match key {
        "lambda" => spec.config.lambda = value,
        "beta" => spec.config.beta = value,
        "alpha" => spec.config.alpha = value,
        "tau" => spec.config.tau = whole(value)?,
        "k_init" => spec.config.k_init = whole(value)?,
        "missing_ratio" => spec.missing_ratio = value,
        other => {
            return Err(Error::Config(format!(
                "unknown grid key `{other}` (expected one of {})",
                GRID_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Cartesian product of the grid applied to `base`, last key varying fastest.
/// An empty grid yields `base` alone.
pub fn expand_grid(base: &RunSpec, grid: &Grid) -> Result<Vec<RunSpec>> {
    for (key, values) in grid {
        if !GRID_KEYS.contains(&key.as_str()) {
            apply(&mut base.clone(), key, 0.0)?;
        }
        if values.is_empty() {
            return Err(Error::Config(format!("grid key `{key}` has no values")));
        }
    }
    let mut specs = vec![base.clone()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(specs.len() * values.len());
        for s in &specs {
            for &v in values {
                let mut s = s.clone();
                apply(&mut s, key, v)?;
                next.push(s);
            }
        }
        specs = next;
    }
    Ok(specs)
}

/// Parses `key=v1,v2,…` into a grid entry.
pub fn parse_grid_entry(text: &str) -> Result<(String, Vec<f64>)> {
    let (key, values) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("grid entry `{text}` is not `key=v1,v2,…`")))?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("grid value `{v}` for `{key}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((key.trim().to_string(), values))
}

/// Runs every grid point with at most `jobs` runs in flight. Results come
/// back in grid order and the summary is written in that order.
pub fn sweep(
    ds: &Dataset,
    base: &RunSpec,
    grid: &Grid,
    jobs: usize,
    output_dir: Option<&Path>,
) -> Result<Vec<ExperimentResult>> {
    let specs = expand_grid(base, grid)?;
    let run = |i: usize| -> Result<ExperimentResult> {
        let (result, z) = execute(ds, &specs[i])?;
        if let Some(dir) = output_dir {
            write_run_files(&result, &z, dir)?;
        }
        log::info!("finished {}", result.run_id);
        Ok(result)
    };
    let results: Vec<ExperimentResult> = run_bounded(specs.len(), jobs.max(1), run)?
        .into_iter()
        .collect::<Result<_>>()?;
    if let Some(dir) = output_dir {
        append_summary(dir, &results)?;
    }
    Ok(results)
}

#[cfg(feature = "parallel")]
fn run_bounded<T, F>(count: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if jobs == 1 {
        return Ok((0..count).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| map_indexed(count, f)))
}

#[cfg(not(feature = "parallel"))]
fn run_bounded<T, F>(count: usize, _jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    Ok(map_indexed(count, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> RunSpec {
        RunSpec::new(TrainConfig::default(), 0.0)
    }

    #[test]
    fn grid_product_and_identity() {
        let base = spec();
        assert_eq!(expand_grid(&base, &vec![]).unwrap(), vec![base.clone()]);
        let grid = vec![
            ("lambda".to_string(), vec![0.001, 0.01, 0.1, 1.0, 10.0]),
            ("beta".to_string(), vec![1.0, 10.0, 20.0, 30.0, 40.0]),
        ];
        let specs = expand_grid(&base, &grid).unwrap();
        assert_eq!(specs.len(), 25);
        assert_eq!((specs[1].config.lambda, specs[1].config.beta), (0.001, 10.0));
        let two = expand_grid(&base, &vec![("lambda".into(), vec![0.001, 0.01])]).unwrap();
        let mut a = two[0].clone();
        a.config.lambda = two[1].config.lambda;
        assert_eq!(a, two[1]);
    }

    #[test]
    fn grid_rejects_unknown_or_bad_values() {
        let base = spec();
        assert!(matches!(
            expand_grid(&base, &vec![("gamma".into(), vec![1.0])]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            expand_grid(&base, &vec![("tau".into(), vec![1.5])]),
            Err(Error::Config(_))
        ));
        assert_eq!(
            parse_grid_entry("beta=1, 10").unwrap(),
            ("beta".to_string(), vec![1.0, 10.0])
        );
        assert!(parse_grid_entry("beta").is_err());
    }

    #[test]
    fn run_id_is_filename_safe() {
        let id = spec().run_id("my data/set");
        assert!(id.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c)), "{id}");
    }
}
