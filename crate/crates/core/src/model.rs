//! Two-layer GCN encoder (plain and variational), inner-product decoder and
//! the loss terms of both model variants.

use std::fmt;
use std::str::FromStr;

use ndarray::Zip;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, for_each_row_block, frobenius_sq, matmul, Matrix};

/// Adjacency entries above this count as edges when building the penalty.
pub const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Deterministic graph autoencoder.
    Bage,
    /// Variational graph autoencoder.
    Vbage,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Bage => "bage",
            ModelKind::Vbage => "vbage",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bage" => Ok(ModelKind::Bage),
            "vbage" => Ok(ModelKind::Vbage),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Encoder weights. Also used to carry gradients of the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `m × h` first layer, shared by both branches.
    pub w0: Matrix,
    /// `h × f` mean (or only) branch.
    pub w1: Matrix,
    /// `h × f` log-σ branch, present for the variational model.
    pub w1_logvar: Option<Matrix>,
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl ModelParams {
    /// Glorot-uniform initialisation, drawn in the order `w0`, `w1`, `w1_logvar`.
    pub fn init<R: Rng + ?Sized>(
        kind: ModelKind,
        input: usize,
        hidden: usize,
        embed: usize,
        rng: &mut R,
    ) -> Self {
        let w0 = glorot(input, hidden, rng);
        let w1 = glorot(hidden, embed, rng);
        let w1_logvar = match kind {
            ModelKind::Bage => None,
            ModelKind::Vbage => Some(glorot(hidden, embed, rng)),
        };
        Self { w0, w1, w1_logvar }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w0: Matrix::zeros(self.w0.dim()),
            w1: Matrix::zeros(self.w1.dim()),
            w1_logvar: self.w1_logvar.as_ref().map(|w| Matrix::zeros(w.dim())),
        }
    }

    pub fn kind(&self) -> ModelKind {
        if self.w1_logvar.is_some() {
            ModelKind::Vbage
        } else {
            ModelKind::Bage
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.w0, &self.w1];
        out.extend(self.w1_logvar.as_ref());
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w0, &mut self.w1];
        out.extend(self.w1_logvar.as_mut());
        out
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, w) in ["w0", "w1", "w1_logvar"].iter().zip(self.matrices()) {
            ensure_finite(w, name)?;
        }
        Ok(())
    }
}

/// Encoder output plus the intermediates the backward pass needs.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// Latent matrix used by the decoder.
    pub z: Matrix,
    pub mu: Option<Matrix>,
    pub log_sigma: Option<Matrix>,
    /// Hidden activation `relu(Â X W⁽⁰⁾)`.
    pub z1: Matrix,
    /// Aggregated hidden activation `Â Z⁽¹⁾`, the input of the second layer.
    pub agg1: Matrix,
}

impl Embedding {
    /// Deterministic representation: `μ` for the variational model, `z` otherwise.
    pub fn mean(&self) -> &Matrix {
        self.mu.as_ref().unwrap_or(&self.z)
    }
}

fn check_inputs(x: &Matrix, a_norm: &Matrix, params: &ModelParams) -> Result<()> {
    let n = x.nrows();
    if a_norm.dim() != (n, n) {
        return Err(Error::structural(format!(
            "normalized adjacency is {:?}, expected {n}x{n}",
            a_norm.dim()
        )));
    }
    if params.w0.nrows() != x.ncols() {
        return Err(Error::structural(format!(
            "features have {} columns, first layer expects {}",
            x.ncols(),
            params.w0.nrows()
        )));
    }
    if params.w1.nrows() != params.w0.ncols() {
        return Err(Error::structural("layer widths do not chain"));
    }
    if let Some(wv) = &params.w1_logvar {
        if wv.dim() != params.w1.dim() {
            return Err(Error::structural("variational branch shape differs from mean branch"));
        }
    }
    Ok(())
}

fn hidden_layer(x: &Matrix, a_norm: &Matrix, params: &ModelParams) -> (Matrix, Matrix) {
    let xw = matmul(&x.view(), &params.w0.view());
    let z1 = matmul(&a_norm.view(), &xw.view()).mapv_into(|v| v.max(0.0));
    let agg1 = matmul(&a_norm.view(), &z1.view());
    (z1, agg1)
}

/// `Z⁽¹⁾ = relu(Â X W⁽⁰⁾)`, `Z = Â Z⁽¹⁾ W⁽¹⁾`.
pub fn encode(x: &Matrix, a_norm: &Matrix, params: &ModelParams) -> Result<Embedding> {
    check_inputs(x, a_norm, params)?;
    let (z1, agg1) = hidden_layer(x, a_norm, params);
    let z = matmul(&agg1.view(), &params.w1.view());
    ensure_finite(&z, "embedding")?;
    Ok(Embedding {
        z,
        mu: None,
        log_sigma: None,
        z1,
        agg1,
    })
}

/// Variational encoder with reparameterised sampling `z = μ + exp(log σ) ⊙ ε`.
///
/// `noise = None` is the deterministic evaluation mode (`z = μ`).
pub fn encode_variational(
    x: &Matrix,
    a_norm: &Matrix,
    params: &ModelParams,
    noise: Option<&Matrix>,
) -> Result<Embedding> {
    check_inputs(x, a_norm, params)?;
    let wv = params
        .w1_logvar
        .as_ref()
        .ok_or_else(|| Error::structural("variational encoder needs a log-sigma branch"))?;
    let (z1, agg1) = hidden_layer(x, a_norm, params);
    let mu = matmul(&agg1.view(), &params.w1.view());
    let log_sigma = matmul(&agg1.view(), &wv.view());
    let z = match noise {
        None => mu.clone(),
        Some(eps) => {
            if eps.dim() != mu.dim() {
                return Err(Error::structural("noise shape differs from embedding"));
            }
            let mut z = mu.clone();
            Zip::from(&mut z)
                .and(&log_sigma)
                .and(eps)
                .for_each(|z, &ls, &e| *z += ls.exp() * e);
            z
        }
    };
    ensure_finite(&z, "embedding")?;
    Ok(Embedding {
        z,
        mu: Some(mu),
        log_sigma: Some(log_sigma),
        z1,
        agg1,
    })
}

/// Dispatches on the parameter set: variational when `w1_logvar` is present.
pub fn forward(
    x: &Matrix,
    a_norm: &Matrix,
    params: &ModelParams,
    noise: Option<&Matrix>,
) -> Result<Embedding> {
    match params.kind() {
        ModelKind::Bage => encode(x, a_norm, params),
        ModelKind::Vbage => encode_variational(x, a_norm, params, noise),
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(Z Zᵀ)`.
pub fn decode(z: &Matrix) -> Matrix {
    let n = z.nrows();
    let mut out = Matrix::zeros((n, n));
    for_each_row_block(&mut out, |r0, mut block| {
        for (di, mut row) in block.rows_mut().into_iter().enumerate() {
            let zi = z.row(r0 + di);
            for j in 0..n {
                row[j] = sigmoid(zi.dot(&z.row(j)));
            }
        }
    });
    out
}

/// Reconstruction weights: `β` where the adjacency has an edge, 1 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    pub b: Matrix,
    pub beta: f64,
}

pub fn penalty_matrix(a: &Matrix, beta: f64) -> Result<PenaltyMatrix> {
    if beta.is_nan() || beta < 1.0 {
        return Err(Error::domain(format!("beta must be >= 1, got {beta}")));
    }
    let b = a.mapv(|v| if v > EDGE_EPS { beta } else { 1.0 });
    Ok(PenaltyMatrix { b, beta })
}

/// `‖(A − Â) ⊙ B‖²_F`.
pub fn loss_recon(a: &Matrix, a_hat: &Matrix, b: &PenaltyMatrix) -> Result<f64> {
    if a.dim() != a_hat.dim() || a.dim() != b.b.dim() {
        return Err(Error::structural("reconstruction operands differ in shape"));
    }
    let mut total = 0.0;
    Zip::from(a).and(a_hat).and(&b.b).for_each(|&a, &ah, &w| {
        let d = (a - ah) * w;
        total += d * d;
    });
    Ok(total)
}

/// `KL[N(μ, σ²) ‖ N(0, I)] = ½ Σ (μ² + σ² − 1 − 2 log σ)`.
pub fn kl_divergence(mu: &Matrix, log_sigma: &Matrix) -> Result<f64> {
    if mu.dim() != log_sigma.dim() {
        return Err(Error::structural("mu and log-sigma differ in shape"));
    }
    let mut total = 0.0;
    Zip::from(mu).and(log_sigma).for_each(|&m, &ls| {
        total += m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls;
    });
    let kl = 0.5 * total;
    if !kl.is_finite() {
        return Err(Error::Numeric(format!("KL divergence overflowed ({kl})")));
    }
    Ok(kl)
}

/// `Σ_ij a_ij ‖z_i − z_j‖²`, evaluated as `2 tr(Zᵀ L Z)`.
pub fn laplacian_trace_term(z: &Matrix, laplacian: &Matrix) -> Result<f64> {
    let n = z.nrows();
    if laplacian.dim() != (n, n) {
        return Err(Error::structural("Laplacian and embedding disagree in size"));
    }
    let lz = matmul(&laplacian.view(), &z.view());
    Ok(2.0 * Zip::from(z).and(&lz).fold(0.0, |acc, &a, &b| acc + a * b))
}

/// Trace term plus `γ ‖A‖²_F`.
pub fn loss_laplacian(z: &Matrix, laplacian: &Matrix, a: &Matrix, gamma: f64) -> Result<f64> {
    if a.dim() != laplacian.dim() {
        return Err(Error::structural("adjacency and Laplacian differ in shape"));
    }
    Ok(laplacian_trace_term(z, laplacian)? + gamma * frobenius_sq(&a.view()))
}

/// `(ν/2) Σ ‖W‖²_F` over every weight matrix.
pub fn loss_l2(params: &ModelParams, nu: f64) -> f64 {
    0.5 * nu * params.matrices().iter().map(|w| frobenius_sq(&w.view())).sum::<f64>()
}

/// Individual loss terms of one forward pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub recon: f64,
    /// Zero for the deterministic model.
    pub kl: f64,
    /// Full Laplacian loss, including the `γ‖A‖²` term.
    pub laplacian: f64,
    /// Already scaled by `ν`.
    pub l2: f64,
}

/// `recon (+ KL) + λ·laplacian + l2`.
pub fn total_loss(kind: ModelKind, parts: &LossParts, lambda: f64) -> f64 {
    let kl = match kind {
        ModelKind::Bage => 0.0,
        ModelKind::Vbage => parts.kl,
    };
    parts.recon + kl + lambda * parts.laplacian + parts.l2
}
