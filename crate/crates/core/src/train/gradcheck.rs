//! Central finite-difference verification of the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::backward::{backward, LossWeights};
use super::TrainConfig;
use crate::error::Result;
use crate::graph::{adjacency_from_edges, GraphState};
use crate::linalg::Matrix;
use crate::model::{
    decode, forward, kl_divergence, laplacian_trace_term, loss_l2, loss_recon, penalty_matrix,
    ModelKind, ModelParams, PenaltyMatrix,
};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// A frozen forward problem: everything except the weights is fixed.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub x: Matrix,
    pub graph: GraphState,
    pub penalty: PenaltyMatrix,
    pub params: ModelParams,
    /// Fixed reparameterisation draws for the variational model.
    pub noise: Option<Matrix>,
    pub weights: LossWeights,
}

impl GradCheckInstance {
    /// Random `n`-node instance with `m` features: uniform features, a ring
    /// plus random chords as the graph, Glorot weights and standard-normal noise.
    pub fn random(cfg: &TrainConfig, n: usize, m: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let x = Matrix::from_shape_simple_fn((n, m), || rng.random::<f64>());
        let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        for i in 0..n {
            for j in (i + 2)..n {
                if rng.random::<f64>() < 0.3 {
                    edges.push((i, j));
                }
            }
        }
        let a = adjacency_from_edges(n, &edges)?;
        let graph = GraphState::new(Some(a.clone()), a)?;
        let penalty = penalty_matrix(graph.adjacency(), cfg.beta)?;
        let params = ModelParams::init(cfg.model, m, cfg.hidden, cfg.embed, &mut rng);
        let noise = match cfg.model {
            ModelKind::Bage => None,
            ModelKind::Vbage => Some(Matrix::from_shape_simple_fn((n, cfg.embed), || {
                rng.sample(StandardNormal)
            })),
        };
        Ok(Self {
            x,
            graph,
            penalty,
            params,
            noise,
            weights: cfg.loss_weights(),
        })
    }
}

/// Differentiated loss for `params`, assembled from the reference loss
/// functions (dense decode, trace form) rather than the fused training path.
pub fn numeric_loss(inst: &GradCheckInstance, params: &ModelParams) -> Result<f64> {
    let emb = forward(&inst.x, inst.graph.normalized(), params, inst.noise.as_ref())?;
    let recon = loss_recon(inst.graph.adjacency(), &decode(&emb.z), &inst.penalty)?;
    let kl = match (&emb.mu, &emb.log_sigma) {
        (Some(mu), Some(ls)) => kl_divergence(mu, ls)?,
        _ => 0.0,
    };
    let trace = laplacian_trace_term(&emb.z, inst.graph.laplacian())?;
    let w = &inst.weights;
    Ok(w.recon * recon + kl + w.lambda * trace + loss_l2(params, w.nu))
}

/// Largest `|analytic − numeric| / max(1, |analytic|, |numeric|)` over every
/// weight entry of `inst`.
pub fn max_relative_error(inst: &GradCheckInstance) -> Result<f64> {
    let emb = forward(&inst.x, inst.graph.normalized(), &inst.params, inst.noise.as_ref())?;
    let analytic = backward(
        &inst.x,
        &inst.graph,
        &inst.penalty,
        &inst.params,
        &emb,
        &inst.weights,
        inst.noise.as_ref(),
    )?;
    let mut worst = 0.0f64;
    let count = inst.params.matrices().len();
    for which in 0..count {
        let dim = inst.params.matrices()[which].dim();
        for r in 0..dim.0 {
            for c in 0..dim.1 {
                let mut plus = inst.params.clone();
                plus.matrices_mut()[which][[r, c]] += FD_STEP;
                let mut minus = inst.params.clone();
                minus.matrices_mut()[which][[r, c]] -= FD_STEP;
                let fd = (numeric_loss(inst, &plus)? - numeric_loss(inst, &minus)?) / (2.0 * FD_STEP);
                let an = analytic.matrices()[which][[r, c]];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

/// Builds a random `n × m` instance from `cfg` (model, widths, coefficients,
/// seed) and returns the worst relative gradient error.
pub fn gradient_check(cfg: &TrainConfig, n: usize, m: usize) -> Result<f64> {
    max_relative_error(&GradCheckInstance::random(cfg, n, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ModelKind) -> TrainConfig {
        TrainConfig {
            hidden: 4,
            embed: 3,
            seed: 17,
            ..TrainConfig::for_model(model)
        }
    }

    #[test]
    fn bage_defaults() {
        let err = gradient_check(&small(ModelKind::Bage), 8, 5).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn plain_unweighted_reconstruction() {
        let cfg = TrainConfig {
            lambda: 0.0,
            beta: 1.0,
            ..small(ModelKind::Bage)
        };
        let err = gradient_check(&cfg, 8, 5).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn vbage_frozen_noise() {
        let err = gradient_check(&small(ModelKind::Vbage), 8, 5).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn collapsed_network_has_zero_gradient() {
        let cfg = TrainConfig {
            lambda: 0.0,
            nu: 0.0,
            ..small(ModelKind::Bage)
        };
        let mut inst = GradCheckInstance::random(&cfg, 8, 5).unwrap();
        inst.params = inst.params.zeros_like();
        let emb = forward(&inst.x, inst.graph.normalized(), &inst.params, None).unwrap();
        assert!(decode(&emb.z).iter().all(|&v| v == 0.5));
        let g = backward(
            &inst.x,
            &inst.graph,
            &inst.penalty,
            &inst.params,
            &emb,
            &inst.weights,
            None,
        )
        .unwrap();
        assert!(g.matrices().iter().all(|w| w.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn kl_gradient_is_mu() {
        let cfg = TrainConfig {
            lambda: 0.0,
            ..small(ModelKind::Vbage)
        };
        let mut inst = GradCheckInstance::random(&cfg, 8, 5).unwrap();
        inst.weights.recon = 0.0;
        let emb = forward(&inst.x, inst.graph.normalized(), &inst.params, inst.noise.as_ref())
            .unwrap();
        let (_, out) = super::super::output_gradients(
            &inst.graph,
            &inst.penalty,
            &emb,
            &inst.weights,
            inst.noise.as_ref(),
            0.0,
        )
        .unwrap();
        assert_eq!(&out.mean, emb.mu.as_ref().unwrap());
    }

    #[test]
    fn gradients_ignore_later_adjacency_changes() {
        let cfg = small(ModelKind::Bage);
        let inst = GradCheckInstance::random(&cfg, 8, 5).unwrap();
        let emb = forward(&inst.x, inst.graph.normalized(), &inst.params, None).unwrap();
        let run = |inst: &GradCheckInstance| {
            backward(&inst.x, &inst.graph, &inst.penalty, &inst.params, &emb, &inst.weights, None)
                .unwrap()
        };
        let before = run(&inst);
        // Perturbing a copy of A after the gradient was taken leaves it unchanged.
        let mut other = inst.clone();
        other.graph.set_adjacency(Matrix::zeros((8, 8))).unwrap();
        let again = run(&inst);
        assert_eq!(before, again);
    }
}
