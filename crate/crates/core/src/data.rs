//! Dataset formats and synthetic stand-ins.
//!
//! Two on-disk layouts are supported:
//!
//! - **citation**: a `.content` file with one line per node,
//!   `<node_id> <feat_0> … <feat_{m-1}> <class_label>` (whitespace separated),
//!   and a `.cites` file with one `<cited_id> <citing_id>` pair per line;
//! - **csv**: a header `feat_0,…,feat_{m-1},label` followed by one row per
//!   node. There is no graph; the `label` column is optional.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::adjacency_from_edges;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `n × m` node features.
    pub features: Matrix,
    /// Undirected edges over dense node indices; `None` when there is no graph.
    pub edges: Option<Vec<(usize, usize)>>,
    pub labels: Option<Vec<usize>>,
    /// Original label strings, indexed by dense class id.
    pub class_names: Vec<String>,
    /// Original node identifiers, indexed by dense node id.
    pub node_ids: Vec<String>,
    /// Edges dropped while loading because they named unknown nodes.
    pub dropped_edges: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn has_graph(&self) -> bool {
        self.edges.is_some()
    }

    /// Symmetric binary adjacency, if the dataset has a graph.
    pub fn adjacency(&self) -> Result<Option<Matrix>> {
        self.edges
            .as_ref()
            .map(|e| adjacency_from_edges(self.n(), e))
            .transpose()
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Dense ids for label strings: numeric order when every label is an
/// integer, lexicographic otherwise.
fn label_ids(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let unique: BTreeSet<&String> = raw.iter().collect();
    let mut names: Vec<String> = unique.into_iter().cloned().collect();
    if names.iter().all(|s| s.parse::<i64>().is_ok()) {
        names.sort_by_key(|s| s.parse::<i64>().unwrap());
    }
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let ids = raw.iter().map(|s| index[s.as_str()]).collect();
    (ids, names)
}

/// Scales each row to unit L1 norm (all-zero rows are left alone).
pub fn l1_normalize_rows(x: &mut Matrix) {
    for mut row in x.rows_mut() {
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            row /= s;
        }
    }
}

/// Min-max scales each column to `[0, 1]`; constant columns become zero.
pub fn min_max_columns(x: &mut Matrix) {
    for mut col in x.axis_iter_mut(Axis(1)) {
        let lo = col.fold(f64::INFINITY, |m, &v| m.min(v));
        let hi = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let range = hi - lo;
        if range > 0.0 {
            col.mapv_inplace(|v| (v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
}

/// Loads a citation dataset. With `normalize`, feature rows are scaled to
/// unit L1 norm.
pub fn load_citation_dataset(content: &Path, cites: &Path, normalize: bool) -> Result<Dataset> {
    let text = fs::read_to_string(content)?;
    let mut node_ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();
    let mut arity = None;
    let mut index = HashMap::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(parse_err(content, lineno, "expected `<id> <features…> <label>`"));
        }
        let m = tokens.len() - 2;
        match arity {
            None => arity = Some(m),
            Some(a) if a != m => {
                return Err(Error::structural(format!(
                    "{}:{lineno}: {m} features, earlier lines have {a}",
                    content.display()
                )))
            }
            _ => {}
        }
        for tok in &tokens[1..=m] {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(content, lineno, format!("non-numeric feature `{tok}`")))?;
            if !v.is_finite() {
                return Err(parse_err(content, lineno, format!("non-finite feature `{tok}`")));
            }
            values.push(v);
        }
        let id = tokens[0].to_string();
        if index.insert(id.clone(), node_ids.len()).is_some() {
            return Err(parse_err(content, lineno, format!("duplicate node id `{id}`")));
        }
        node_ids.push(id);
        raw_labels.push(tokens[m + 1].to_string());
    }
    let n = node_ids.len();
    let m = arity.ok_or_else(|| Error::structural(format!("{} has no nodes", content.display())))?;
    let mut features = Matrix::from_shape_vec((n, m), values)
        .map_err(|e| Error::structural(e.to_string()))?;
    if normalize {
        l1_normalize_rows(&mut features);
    }

    let text = fs::read_to_string(cites)?;
    let mut edges = Vec::new();
    let mut dropped = 0;
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(parse_err(cites, lineno, "expected `<cited_id> <citing_id>`"));
        }
        match (index.get(tokens[0]), index.get(tokens[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} edge(s) with unknown node ids", cites.display());
    }

    let (labels, class_names) = label_ids(&raw_labels);
    let name = content
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "citation".into());
    Ok(Dataset {
        name,
        features,
        edges: Some(edges),
        labels: Some(labels),
        class_names,
        node_ids,
        dropped_edges: dropped,
    })
}

/// Loads a graphless CSV dataset. With `normalize`, columns are min-max scaled.
pub fn load_feature_dataset(path: &Path, normalize: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let has_label = header.iter().next_back().map(|h| h.trim() == "label").unwrap_or(false);
    let m = header.len() - has_label as usize;
    if m == 0 {
        return Err(parse_err(path, 1, "header declares no feature columns"));
    }
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let lineno = row + 2;
        let record = record.map_err(|e| parse_err(path, lineno, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("{} cells, header has {}", record.len(), header.len()),
            ));
        }
        for (col, cell) in record.iter().take(m).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(path, lineno, format!("column {}: non-numeric cell `{cell}`", col + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("column {}: non-finite", col + 1)));
            }
            values.push(v);
        }
        if has_label {
            raw_labels.push(record[m].trim().to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::structural(format!("{} contains no data rows", path.display())));
    }
    let mut features = Matrix::from_shape_vec((n, m), values)
        .map_err(|e| Error::structural(e.to_string()))?;
    if normalize {
        min_max_columns(&mut features);
    }
    let (labels, class_names) = if has_label {
        let (ids, names) = label_ids(&raw_labels);
        (Some(ids), names)
    } else {
        (None, Vec::new())
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    Ok(Dataset {
        name,
        features,
        edges: None,
        labels,
        class_names,
        node_ids: (0..n).map(|i| i.to_string()).collect(),
        dropped_edges: 0,
    })
}

/// Writes `ds` in the citation layout. Features use the shortest
/// representation that parses back to the same `f64`.
pub fn write_citation_dataset(ds: &Dataset, content: &Path, cites: &Path) -> Result<()> {
    let labels = ds
        .labels
        .as_ref()
        .ok_or_else(|| Error::structural("citation format requires labels"))?;
    let mut out = std::io::BufWriter::new(fs::File::create(content)?);
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        write!(out, "{}", ds.node_ids[i])?;
        for v in row {
            write!(out, "\t{v}")?;
        }
        writeln!(out, "\t{}", ds.class_names[labels[i]])?;
    }
    out.flush()?;
    let mut out = std::io::BufWriter::new(fs::File::create(cites)?);
    for &(u, v) in ds.edges.as_deref().unwrap_or(&[]) {
        writeln!(out, "{}\t{}", ds.node_ids[u], ds.node_ids[v])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the features (and labels, if any) in the CSV layout.
pub fn write_feature_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let m = ds.features.ncols();
    let mut header: Vec<String> = (0..m).map(|j| format!("feat_{j}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &ds.labels {
            rec.push(ds.class_names[labels[i]].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Isotropic Gaussian blobs with unit variance whose centres are pairwise
/// `separation` apart (centres sit on scaled coordinate axes, so
/// `classes <= m`). Labels cycle through the classes.
pub fn gaussian_blobs(n: usize, m: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || classes > m {
        return Err(Error::domain(format!("need 1 <= classes <= m, got {classes} classes, m = {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / std::f64::consts::SQRT_2;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let features = Matrix::from_shape_fn((n, m), |(i, j)| {
        let centre = if j == labels[i] { offset } else { 0.0 };
        centre + rng.sample::<f64, _>(StandardNormal)
    });
    Ok(Dataset {
        name: "blobs".into(),
        features,
        edges: None,
        labels: Some(labels),
        class_names: (0..classes).map(|c| c.to_string()).collect(),
        node_ids: (0..n).map(|i| i.to_string()).collect(),
        dropped_edges: 0,
    })
}

/// Parameters of [`planted_citation`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n: usize,
    pub classes: usize,
    /// Vocabulary size.
    pub m: usize,
    /// Expected within-class and between-class degree.
    pub degree_in: f64,
    pub degree_out: f64,
    /// Words per document.
    pub words: usize,
    /// Probability that a word is drawn from the class topic rather than
    /// the whole vocabulary.
    pub topic_weight: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n: 600,
            classes: 6,
            m: 300,
            degree_in: 3.0,
            degree_out: 0.8,
            words: 15,
            topic_weight: 0.35,
        }
    }
}

/// Citation-like stand-in: a planted-partition graph with bag-of-words
/// features whose word distribution leans towards a per-class topic.
pub fn planted_citation(spec: &PlantedSpec, seed: u64) -> Result<Dataset> {
    let PlantedSpec {
        n,
        classes,
        m,
        degree_in,
        degree_out,
        words,
        topic_weight,
    } = spec.clone();
    if classes == 0 || n < classes || m < classes {
        return Err(Error::domain("planted dataset needs n, m >= classes >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let per_class = n as f64 / classes as f64;
    let p_in = (degree_in / (per_class - 1.0).max(1.0)).min(1.0);
    let p_out = (degree_out / (n as f64 - per_class).max(1.0)).min(1.0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let topic = m / classes;
    let mut features = Matrix::zeros((n, m));
    for i in 0..n {
        for _ in 0..words {
            let w = if rng.random::<f64>() < topic_weight {
                labels[i] * topic + rng.random_range(0..topic)
            } else {
                rng.random_range(0..m)
            };
            features[[i, w]] = 1.0;
        }
    }
    Ok(Dataset {
        name: "planted".into(),
        features,
        edges: Some(edges),
        labels: Some(labels),
        class_names: (0..classes).map(|c| format!("topic_{c}")).collect(),
        node_ids: (0..n).map(|i| format!("p{i}")).collect(),
        dropped_edges: 0,
    })
}

/// On-disk layout of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Citation,
    Csv,
}

/// Seed of the built-in synthetic datasets, fixed so that every training
/// seed sees the same data.
pub const SYNTHETIC_SEED: u64 = 0;

/// Resolves a dataset argument.
///
/// `blobs` and `planted` name the built-in synthetic sets, preprocessed as
/// their file formats would be. Anything else is
/// a path: a CSV file, a directory holding one `.content`/`.cites` pair, or
/// the common stem of such a pair (with or without the `.content` suffix).
/// Without an explicit `format`, a `.csv` extension selects the CSV layout.
pub fn open_dataset(arg: &str, format: Option<Format>) -> Result<Dataset> {
    match arg {
        "blobs" => {
            let mut ds = gaussian_blobs(400, 32, 4, 5.0, SYNTHETIC_SEED)?;
            min_max_columns(&mut ds.features);
            return Ok(ds);
        }
        "planted" => {
            let mut ds = planted_citation(&PlantedSpec::default(), SYNTHETIC_SEED)?;
            l1_normalize_rows(&mut ds.features);
            return Ok(ds);
        }
        _ => {}
    }
    let path = Path::new(arg);
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    match format {
        Some(Format::Csv) => load_feature_dataset(path, true),
        None if is_csv => load_feature_dataset(path, true),
        _ => {
            let stem = if path.is_dir() {
                let mut found = Vec::new();
                for entry in fs::read_dir(path)? {
                    let p = entry?.path();
                    if p.extension().is_some_and(|e| e == "content") {
                        found.push(p);
                    }
                }
                match found.as_slice() {
                    [one] => one.with_extension(""),
                    [] => return Err(Error::structural(format!("no .content file in {arg}"))),
                    _ => return Err(Error::structural(format!("several .content files in {arg}"))),
                }
            } else if path.extension().is_some_and(|e| e == "content") {
                path.with_extension("")
            } else {
                path.to_path_buf()
            };
            let content = stem.with_extension("content");
            let cites = stem.with_extension("cites");
            load_citation_dataset(&content, &cites, true)
        }
    }
}
