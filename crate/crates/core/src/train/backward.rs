//! Reverse pass for the fixed two-layer encoder.
//!
//! With `S` the normalised adjacency, `Q = S Z⁽¹⁾` and `G_Z = ∂L/∂Z`:
//!
//! ```text
//! G_Z     = 2 Σ_j g_ij z_j + 4λ L Z          g_ij = −2 b²_ij (a_ij − â_ij) â_ij (1 − â_ij)
//! G_μ     = G_Z (+ μ)                        G_logσ = G_Z ⊙ σ ⊙ ε + σ² − 1
//! G_W⁽¹⁾  = Qᵀ G_μ + ν W⁽¹⁾                  G_W′⁽¹⁾ = Qᵀ G_logσ + ν W′⁽¹⁾
//! G_P     = (S (G_μ W⁽¹⁾ᵀ + G_logσ W′⁽¹⁾ᵀ)) ⊙ [Z⁽¹⁾ > 0]
//! G_W⁽⁰⁾  = Xᵀ (S G_P) + ν W⁽⁰⁾
//! ```
//!
//! The reconstruction part assumes `A` and `B` are symmetric, which
//! `GraphState` guarantees. The adjacency is a constant throughout.

use ndarray::{s, Zip};

use crate::error::{Error, Result};
use crate::graph::GraphState;
use crate::linalg::{ensure_finite, for_each_row_block, frobenius_sq, matmul, matmul_tn, Matrix};
use crate::model::{
    kl_divergence, loss_l2, sigmoid, Embedding, LossParts, ModelKind, ModelParams, PenaltyMatrix,
};

/// Coefficients of the differentiated loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Multiplier on the reconstruction term; 1 in training.
    pub recon: f64,
    pub lambda: f64,
    pub nu: f64,
}

/// Gradients with respect to the encoder outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    /// `∂L/∂μ` (equivalently `∂L/∂Z` for the deterministic model).
    pub mean: Matrix,
    pub log_sigma: Option<Matrix>,
}

/// Reconstruction loss and its gradient with respect to `z`, fused so the
/// `n × n` reconstruction is never stored.
pub fn recon_loss_and_grad(z: &Matrix, a: &Matrix, b: &PenaltyMatrix) -> (f64, Matrix) {
    let (n, f) = z.dim();
    // Column 0 of each row holds the row's loss contribution; the rest the gradient.
    let mut packed = Matrix::zeros((n, f + 1));
    for_each_row_block(&mut packed, |r0, mut block| {
        for (di, mut out) in block.rows_mut().into_iter().enumerate() {
            let i = r0 + di;
            let zi = z.row(i);
            let mut loss = 0.0;
            for j in 0..n {
                let zj = z.row(j);
                let a_hat = sigmoid(zi.dot(&zj));
                let w = b.b[[i, j]];
                let diff = a[[i, j]] - a_hat;
                loss += (diff * w) * (diff * w);
                let g = -4.0 * w * w * diff * a_hat * (1.0 - a_hat);
                out.slice_mut(s![1..]).scaled_add(g, &zj);
            }
            out[0] = loss;
        }
    });
    let loss = packed.column(0).iter().sum();
    (loss, packed.slice(s![.., 1..]).to_owned())
}

/// Loss terms of one forward pass together with `∂L/∂μ` and `∂L/∂ log σ`.
///
/// `gamma` only enters the reported Laplacian loss; the `γ‖A‖²` term is
/// constant in the weights.
pub fn output_gradients(
    graph: &GraphState,
    penalty: &PenaltyMatrix,
    emb: &Embedding,
    weights: &LossWeights,
    noise: Option<&Matrix>,
    gamma: f64,
) -> Result<(LossParts, OutputGrads)> {
    let z = &emb.z;
    let (recon, g_recon) = recon_loss_and_grad(z, graph.adjacency(), penalty);
    let mut gz = g_recon * weights.recon;
    let lz = matmul(&graph.laplacian().view(), &z.view());
    let trace = 2.0 * Zip::from(z).and(&lz).fold(0.0, |acc, &a, &b| acc + a * b);
    gz.scaled_add(4.0 * weights.lambda, &lz);
    let mut parts = LossParts {
        recon: weights.recon * recon,
        kl: 0.0,
        laplacian: trace + gamma * frobenius_sq(&graph.adjacency().view()),
        l2: 0.0,
    };
    let grads = match (&emb.mu, &emb.log_sigma) {
        (Some(mu), Some(ls)) => {
            parts.kl = kl_divergence(mu, ls)?;
            let mut g_ls = Matrix::zeros(ls.dim());
            match noise {
                Some(eps) => Zip::from(&mut g_ls)
                    .and(&gz)
                    .and(ls)
                    .and(eps)
                    .for_each(|o, &g, &l, &e| *o = g * l.exp() * e + (2.0 * l).exp() - 1.0),
                None => Zip::from(&mut g_ls)
                    .and(ls)
                    .for_each(|o, &l| *o = (2.0 * l).exp() - 1.0),
            }
            gz += mu;
            OutputGrads {
                mean: gz,
                log_sigma: Some(g_ls),
            }
        }
        (None, None) => OutputGrads {
            mean: gz,
            log_sigma: None,
        },
        _ => return Err(Error::structural("embedding carries only one of mu/log-sigma")),
    };
    Ok((parts, grads))
}

/// Loss terms and weight gradients of one training step.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients(
    x: &Matrix,
    graph: &GraphState,
    penalty: &PenaltyMatrix,
    params: &ModelParams,
    emb: &Embedding,
    weights: &LossWeights,
    noise: Option<&Matrix>,
    gamma: f64,
) -> Result<(LossParts, ModelParams)> {
    if params.kind() == ModelKind::Vbage && emb.mu.is_none() {
        return Err(Error::structural("variational parameters with a deterministic embedding"));
    }
    let (mut parts, out) = output_gradients(graph, penalty, emb, weights, noise, gamma)?;
    parts.l2 = loss_l2(params, weights.nu);
    let grads = backprop_params(x, graph.normalized(), params, emb, &out, weights.nu)?;
    Ok((parts, grads))
}

/// Gradients of the total loss with respect to every weight matrix.
pub fn backward(
    x: &Matrix,
    graph: &GraphState,
    penalty: &PenaltyMatrix,
    params: &ModelParams,
    emb: &Embedding,
    weights: &LossWeights,
    noise: Option<&Matrix>,
) -> Result<ModelParams> {
    loss_and_gradients(x, graph, penalty, params, emb, weights, noise, 0.0).map(|(_, g)| g)
}

/// Chains output gradients back through both GCN layers.
pub fn backprop_params(
    x: &Matrix,
    a_norm: &Matrix,
    params: &ModelParams,
    emb: &Embedding,
    out: &OutputGrads,
    nu: f64,
) -> Result<ModelParams> {
    let q = &emb.agg1;
    let mut g_w1 = matmul_tn(&q.view(), &out.mean.view());
    g_w1.scaled_add(nu, &params.w1);
    let mut g_q = matmul(&out.mean.view(), &params.w1.t());

    let g_wv = match (&params.w1_logvar, &out.log_sigma) {
        (Some(wv), Some(g_ls)) => {
            let mut g = matmul_tn(&q.view(), &g_ls.view());
            g.scaled_add(nu, wv);
            g_q += &matmul(&g_ls.view(), &wv.t());
            Some(g)
        }
        (None, None) => None,
        _ => return Err(Error::structural("log-sigma gradient without matching branch")),
    };

    let mut g_pre = matmul(&a_norm.view(), &g_q.view());
    Zip::from(&mut g_pre)
        .and(&emb.z1)
        .for_each(|g, &h| if h <= 0.0 { *g = 0.0 });
    let g_xw = matmul(&a_norm.view(), &g_pre.view());
    let mut g_w0 = matmul_tn(&x.view(), &g_xw.view());
    g_w0.scaled_add(nu, &params.w0);

    let grads = ModelParams {
        w0: g_w0,
        w1: g_w1,
        w1_logvar: g_wv,
    };
    for w in grads.matrices() {
        ensure_finite(w, "gradient")?;
    }
    Ok(grads)
}
