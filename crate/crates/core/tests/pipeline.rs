use std::fs;
use std::process::Command;

use bage::data::{
    gaussian_blobs, load_citation_dataset, load_feature_dataset, planted_citation,
    write_citation_dataset, write_feature_dataset, PlantedSpec,
};
use bage::experiment::{
    read_embedding, run_experiment, sweep, RunSpec, RESULTS_FILE, RESULTS_HEADER,
};
use bage::train::{train, TrainConfig};
use bage::{Error, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn small_planted() -> bage::data::Dataset {
    let spec = PlantedSpec {
        n: 60,
        classes: 3,
        m: 30,
        degree_in: 4.0,
        degree_out: 0.5,
        words: 8,
        topic_weight: 0.6,
    };
    let mut ds = planted_citation(&spec, 11).unwrap();
    bage::data::l1_normalize_rows(&mut ds.features);
    ds
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        tau: 5,
        hidden: 8,
        embed: 4,
        k_init: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn citation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = planted_citation(&PlantedSpec::default(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 1.0).unwrap();
    ds.features.mapv_inplace(|v| v * noise.sample(&mut rng) / 3.0);
    let (content, cites) = (dir.path().join("p.content"), dir.path().join("p.cites"));
    write_citation_dataset(&ds, &content, &cites).unwrap();
    let back = load_citation_dataset(&content, &cites, false).unwrap();
    assert_eq!(back.node_ids, ds.node_ids);
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.class_names, ds.class_names);
    assert_eq!(back.edges, ds.edges);
    let err = (&back.features - &ds.features).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(err <= 1e-12, "max feature error {err}");
}

#[test]
fn feature_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = gaussian_blobs(50, 6, 3, 4.0, 2).unwrap();
    let path = dir.path().join("blobs.csv");
    write_feature_dataset(&ds, &path).unwrap();
    let back = load_feature_dataset(&path, false).unwrap();
    assert_eq!(back.labels, ds.labels);
    let err = (&back.features - &ds.features).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(err <= 1e-12);
    let scaled = load_feature_dataset(&path, true).unwrap();
    assert!(scaled.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn two_cluster_graph_is_learned_from_features() {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let x = Matrix::from_shape_fn((n, 8), |(i, j)| {
        let centre = if (i < n / 2) == (j < 4) { 3.0 } else { 0.0 };
        centre + noise.sample(&mut rng)
    });
    let out = train(&x, None, &TrainConfig::default()).unwrap();
    assert!(out.losses.last().unwrap() < &out.losses[0]);
    let a = out.graph.adjacency();
    for i in 0..n {
        let row = a.row(i);
        let own: f64 = (0..n).filter(|&j| (j < n / 2) == (i < n / 2)).map(|j| row[j]).sum();
        assert!(own >= 0.8 * row.sum(), "node {i}: {own} of {}", row.sum());
    }
}

#[test]
fn experiment_writes_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_planted();
    let mut spec = RunSpec::new(quick_config(), 0.2);
    spec.restarts = 3;
    let a = run_experiment(&ds, &spec, Some(dir.path())).unwrap();
    let b = run_experiment(&ds, &spec, None).unwrap();
    assert_eq!(a.clustering, b.clustering);
    assert_eq!(a.f1, b.f1);
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.losses.len(), 15);
    let c = a.clustering.as_ref().unwrap();
    for v in [c.acc_mean, c.nmi_mean, a.f1.unwrap()] {
        assert!((0.0..=1.0).contains(&v));
    }

    let summary = fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], RESULTS_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("planted,bage,0.2,0.01,20,0.1,5,0,"));

    let z = read_embedding(&dir.path().join(format!("embedding_{}.csv", a.run_id))).unwrap();
    assert_eq!(z.dim(), (60, 4));
    let loss = fs::read_to_string(dir.path().join(format!("loss_{}.csv", a.run_id))).unwrap();
    assert_eq!(loss.lines().count(), 16);

    // The snapshot alone reproduces the run.
    let snap = fs::read_to_string(dir.path().join(format!("run_{}.json", a.run_id))).unwrap();
    let restored: bage::experiment::ExperimentResult = serde_json::from_str(&snap).unwrap();
    let again = run_experiment(&ds, &restored.spec, None).unwrap();
    assert_eq!(again.clustering, a.clustering);
}

#[test]
fn graphless_data_rejects_missing_ratio() {
    let ds = gaussian_blobs(30, 4, 2, 5.0, 0).unwrap();
    let spec = RunSpec::new(quick_config(), 0.25);
    assert!(matches!(run_experiment(&ds, &spec, None), Err(Error::Domain(_))));
}

#[test]
fn sweep_runs_grid_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_planted();
    let mut base = RunSpec::new(quick_config(), 0.0);
    base.restarts = 2;
    let grid = vec![("lambda".to_string(), vec![0.001, 0.01])];
    let results = sweep(&ds, &base, &grid, 2, Some(dir.path())).unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0].spec.config.lambda, 0.001);
    assert_eq!(results[1].spec.config.lambda, 0.01);
    let serial = sweep(&ds, &base, &grid, 1, None).unwrap();
    assert_eq!(serial[1].clustering, results[1].clustering);
    let summary = fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let empty = sweep(&ds, &base, &vec![], 1, None).unwrap();
    assert_eq!(empty.len(), 1);
    assert_eq!(empty[0].spec, base);
    assert!(matches!(
        sweep(&ds, &base, &vec![("epochs".into(), vec![1.0])], 1, None),
        Err(Error::Config(_))
    ));
}

fn bage() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bage"));
    cmd.env_remove("AGAE_SEED");
    cmd
}

#[test]
fn cli_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let csv = dir.path().join("tiny.csv");
    write_feature_dataset(&gaussian_blobs(24, 4, 2, 6.0, 1).unwrap(), &csv).unwrap();

    let base = |cmd: &mut Command| {
        cmd.args(["--epochs", "5", "--tau", "2", "--k-init", "4", "--restarts", "2"])
            .arg("--out")
            .arg(&out);
    };

    let mut ok = bage();
    ok.args(["train", "--dataset"]).arg(&csv);
    base(&mut ok);
    let status = ok.output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let json: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    let run_id = json["run_id"].as_str().unwrap().to_string();
    assert!(run_id.ends_with("_s0"));

    let mut seeded = bage();
    seeded.env("AGAE_SEED", "7").args(["train", "--seed", "3", "--dataset"]).arg(&csv);
    base(&mut seeded);
    let json: serde_json::Value = serde_json::from_slice(&seeded.output().unwrap().stdout).unwrap();
    assert!(json["run_id"].as_str().unwrap().ends_with("_s7"));

    let mut eval = bage();
    eval.args(["eval", "--restarts", "2", "--dataset"])
        .arg(&csv)
        .arg("--embedding")
        .arg(out.join(format!("embedding_{run_id}.csv")));
    let res = eval.output().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let mut bad_config = bage();
    bad_config.args(["train", "--tau", "500", "--dataset"]).arg(&csv);
    assert_eq!(bad_config.status().unwrap().code(), Some(2));

    let mut graphless_ratio = bage();
    graphless_ratio.args(["train", "--missing-ratio", "0.5", "--dataset"]).arg(&csv);
    base(&mut graphless_ratio);
    assert_eq!(graphless_ratio.status().unwrap().code(), Some(2));

    let broken = dir.path().join("broken.csv");
    fs::write(&broken, "feat_0,label\n1,0\nx,1\n").unwrap();
    let mut bad_data = bage();
    bad_data.args(["train", "--dataset"]).arg(&broken);
    assert_eq!(bad_data.status().unwrap().code(), Some(3));

    let mut bad_grid = bage();
    bad_grid.args(["sweep", "--grid", "gamma=1", "--dataset"]).arg(&csv);
    assert_eq!(bad_grid.status().unwrap().code(), Some(2));
}
