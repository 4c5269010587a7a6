//! Full-batch training with gated adaptive graph updates.
//!
//! Epoch `e` (1-based) proceeds as:
//!
//! 1. if `2 <= e <= τ`: resample the neighbour counts, learn `A_L` from the
//!    previous epoch's mean embedding, blend it with `A₀`, and rebuild the
//!    normalised operator, Laplacian and penalty matrix;
//! 2. forward pass (fresh reparameterisation noise for the variational model);
//! 3. loss, backward pass, Adam step.
//!
//! For data without a graph, `A₀` is learned from the raw features before
//! epoch 1. After epoch `τ` the adjacency is frozen.

mod adam;
mod backward;
mod gradcheck;

pub use adam::{adam_step, AdamState};
pub use backward::{
    backprop_params, backward, loss_and_gradients, output_gradients, recon_loss_and_grad,
    LossWeights, OutputGrads,
};
pub use gradcheck::{gradient_check, numeric_loss, GradCheckInstance};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adaptive::{blend, learn_adjacency, AdaptiveState};
use crate::error::{Error, Result};
use crate::graph::{symmetrize, GraphState, SYMMETRY_TOL};
use crate::linalg::{ensure_finite, max_asymmetry, Matrix};
use crate::model::{
    forward, penalty_matrix, total_loss, Embedding, LossParts, ModelKind, ModelParams,
};

/// Loss above which training is aborted as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

// Independent ChaCha streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_K: u64 = 1;
const STREAM_NOISE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub lr: f64,
    pub lambda: f64,
    pub nu: f64,
    pub beta: f64,
    pub alpha: f64,
    pub tau: usize,
    pub k_init: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub hidden: usize,
    pub embed: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::Bage)
    }
}

impl TrainConfig {
    /// Defaults for the given model; only the learning rate differs.
    pub fn for_model(model: ModelKind) -> Self {
        Self {
            model,
            epochs: 200,
            lr: Self::default_lr(model),
            lambda: 0.01,
            nu: 1e-4,
            beta: 20.0,
            alpha: 0.1,
            tau: 12,
            k_init: 10,
            k_min: 2,
            k_max: 30,
            hidden: 32,
            embed: 16,
            seed: 0,
        }
    }

    pub fn default_lr(model: ModelKind) -> f64 {
        match model {
            ModelKind::Bage => 1e-4,
            ModelKind::Vbage => 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.tau > self.epochs {
            return fail(format!("tau ({}) exceeds epochs ({})", self.tau, self.epochs));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        for (name, v) in [("lambda", self.lambda), ("nu", self.nu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return fail(format!("beta must be >= 1, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return fail(format!(
                "neighbour bounds must satisfy 1 <= k_min <= k_max, got {}..{}",
                self.k_min, self.k_max
            ));
        }
        if self.hidden == 0 || self.embed == 0 {
            return fail("layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            recon: 1.0,
            lambda: self.lambda,
            nu: self.nu,
        }
    }
}

/// Snapshot handed to the observer after each epoch's optimisation step.
pub struct EpochReport<'a> {
    pub epoch: usize,
    pub graph: &'a GraphState,
    pub parts: LossParts,
    pub loss: f64,
    /// Whether the adjacency was re-learned at the start of this epoch.
    pub graph_updated: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Deterministic embedding of the final parameters (`z = μ`).
    pub embedding: Embedding,
    pub graph: GraphState,
    pub adaptive: AdaptiveState,
    /// Total loss per epoch, length `epochs`.
    pub losses: Vec<f64>,
}

impl TrainOutput {
    pub fn z(&self) -> &Matrix {
        self.embedding.mean()
    }
}

fn adjacency_from_features(x: &Matrix, adaptive: &mut AdaptiveState) -> Result<Matrix> {
    let learned = learn_adjacency(x, adaptive)?;
    symmetrize(&learned)
}

pub fn train(x: &Matrix, initial_graph: Option<&Matrix>, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_observed(x, initial_graph, cfg, |_| {})
}

/// [`train`] with a callback invoked once per epoch.
pub fn train_observed<F>(
    x: &Matrix,
    initial_graph: Option<&Matrix>,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<TrainOutput>
where
    F: FnMut(&EpochReport<'_>),
{
    cfg.validate()?;
    ensure_finite(x, "features")?;
    let (n, m) = x.dim();
    let mut adaptive = AdaptiveState::new(n, cfg.k_init, cfg.k_min, cfg.k_max, cfg.alpha, cfg.tau)?;

    let a0 = match initial_graph {
        Some(a) => {
            if a.dim() != (n, n) {
                return Err(Error::structural(format!(
                    "graph is {:?} but there are {n} nodes",
                    a.dim()
                )));
            }
            if max_asymmetry(a) > SYMMETRY_TOL || a.iter().any(|&v| v < 0.0) {
                return Err(Error::structural("initial graph must be symmetric and non-negative"));
            }
            let mut a = a.clone();
            for i in 0..n {
                a[[i, i]] = 0.0;
            }
            a
        }
        None => adjacency_from_features(x, &mut adaptive)?,
    };
    let mut graph = GraphState::new(Some(a0.clone()), a0)?;
    let mut penalty = penalty_matrix(graph.adjacency(), cfg.beta)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    init_rng.set_stream(STREAM_INIT);
    let mut k_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    k_rng.set_stream(STREAM_K);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(STREAM_NOISE);

    let mut params = ModelParams::init(cfg.model, m, cfg.hidden, cfg.embed, &mut init_rng);
    let mut opt = AdamState::new(&params);
    let weights = cfg.loss_weights();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut previous: Option<Matrix> = None;

    for epoch in 1..=cfg.epochs {
        let mut graph_updated = false;
        if epoch <= cfg.tau {
            if let Some(z_prev) = &previous {
                adaptive.resample_k(&mut k_rng)?;
                let learned = learn_adjacency(z_prev, &mut adaptive)?;
                let a0 = graph.initial().expect("initial graph is always stored");
                let blended = blend(&learned, a0, cfg.alpha)?;
                graph.set_adjacency(blended)?;
                penalty = penalty_matrix(graph.adjacency(), cfg.beta)?;
                graph_updated = true;
            }
        }

        let noise = match cfg.model {
            ModelKind::Bage => None,
            ModelKind::Vbage => Some(Matrix::from_shape_simple_fn((n, cfg.embed), || {
                rand::Rng::sample(&mut noise_rng, StandardNormal)
            })),
        };
        let emb = forward(x, graph.normalized(), &params, noise.as_ref())
            .map_err(|e| diverged(epoch, e))?;
        let (parts, grads) = loss_and_gradients(
            x,
            &graph,
            &penalty,
            &params,
            &emb,
            &weights,
            noise.as_ref(),
            adaptive.gamma,
        )
        .map_err(|e| diverged(epoch, e))?;
        let loss = total_loss(cfg.model, &parts, cfg.lambda);
        if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                epoch,
                reason: format!("loss = {loss:e}"),
            });
        }
        adam_step(&mut params, &grads, &mut opt, cfg.lr)?;
        params.ensure_finite().map_err(|e| diverged(epoch, e))?;
        losses.push(loss);
        observe(&EpochReport {
            epoch,
            graph: &graph,
            parts,
            loss,
            graph_updated,
        });
        previous = Some(emb.mean().clone());
    }

    let embedding = forward(x, graph.normalized(), &params, None)?;
    Ok(TrainOutput {
        params,
        embedding,
        graph,
        adaptive,
        losses,
    })
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(reason) => Error::Diverged { epoch, reason },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::adjacency_from_edges;
    use rand::Rng;

    fn tiny_instance(seed: u64) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_shape_fn((16, 6), |_| rng.random::<f64>());
        let edges: Vec<_> = (0..16).map(|i| (i, (i + 1) % 16)).chain([(0, 8), (3, 12)]).collect();
        (x, adjacency_from_edges(16, &edges).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            tau: 300,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            beta: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::for_model(ModelKind::Vbage).lr, 1e-3);
    }

    #[test]
    fn loss_decreases_over_first_twenty_steps() {
        let (x, a) = tiny_instance(1);
        for model in [ModelKind::Bage, ModelKind::Vbage] {
            let cfg = TrainConfig {
                seed: 3,
                ..TrainConfig::for_model(model)
            };
            let graph = GraphState::new(Some(a.clone()), a.clone()).unwrap();
            let penalty = penalty_matrix(&a, cfg.beta).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut params = ModelParams::init(model, x.ncols(), cfg.hidden, cfg.embed, &mut rng);
            // Frozen noise: the same draws at every step.
            let noise = (model == ModelKind::Vbage).then(|| {
                Matrix::from_shape_simple_fn((16, cfg.embed), || rng.sample(StandardNormal))
            });
            let mut opt = AdamState::new(&params);
            let mut losses = Vec::new();
            for _ in 0..=20 {
                let emb = forward(&x, graph.normalized(), &params, noise.as_ref()).unwrap();
                let (parts, grads) = loss_and_gradients(
                    &x,
                    &graph,
                    &penalty,
                    &params,
                    &emb,
                    &cfg.loss_weights(),
                    noise.as_ref(),
                    0.0,
                )
                .unwrap();
                losses.push(total_loss(model, &parts, cfg.lambda));
                adam_step(&mut params, &grads, &mut opt, cfg.lr).unwrap();
            }
            assert!(losses[20] < losses[0], "{model}: {losses:?}");
        }
    }

    #[test]
    fn tau_zero_never_touches_graph() {
        let (x, a) = tiny_instance(2);
        let cfg = TrainConfig {
            epochs: 5,
            tau: 0,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let out = train_observed(&x, Some(&a), &cfg, |r| {
            seen.push(r.graph.adjacency().clone());
            assert!(!r.graph_updated);
        })
        .unwrap();
        assert!(seen.iter().all(|g| *g == a));
        assert_eq!(out.graph.adjacency(), &a);
    }

    #[test]
    fn alpha_zero_keeps_initial_graph() {
        let (x, a) = tiny_instance(3);
        let cfg = TrainConfig {
            epochs: 6,
            tau: 4,
            alpha: 0.0,
            k_init: 3,
            ..Default::default()
        };
        let mut updates = 0;
        train_observed(&x, Some(&a), &cfg, |r| {
            updates += r.graph_updated as usize;
            assert_eq!(r.graph.adjacency(), &symmetrize(&a).unwrap());
        })
        .unwrap();
        assert_eq!(updates, 3);
    }

    #[test]
    fn graph_frozen_after_tau_and_runs_are_deterministic() {
        let (x, a) = tiny_instance(4);
        let cfg = TrainConfig {
            epochs: 8,
            tau: 4,
            k_init: 3,
            ..TrainConfig::for_model(ModelKind::Vbage)
        };
        let mut history = Vec::new();
        let first = train_observed(&x, Some(&a), &cfg, |r| {
            history.push(r.graph.adjacency().clone())
        })
        .unwrap();
        for e in 4..8 {
            assert_eq!(history[e], history[3], "epoch {}", e + 1);
        }
        assert_ne!(history[1], history[0]);
        let second = train(&x, Some(&a), &cfg).unwrap();
        assert_eq!(first.losses, second.losses);
        assert_eq!(first.z(), second.z());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, a) = tiny_instance(5);
        let cfg = TrainConfig {
            epochs: 2,
            tau: 1,
            ..Default::default()
        };
        assert!(matches!(
            train(&x, Some(&Matrix::zeros((3, 3))), &cfg),
            Err(Error::Structural(_))
        ));
        let mut bad = x.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(matches!(train(&bad, Some(&a), &cfg), Err(Error::Numeric(_))));
    }
}
