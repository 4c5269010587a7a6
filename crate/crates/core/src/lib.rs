//! Unsupervised graph embedding with graph-convolutional (variational)
//! autoencoders whose adjacency matrix is re-learned in closed form during
//! training.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: dense symmetric adjacency, spectral normalisation, Laplacian,
//!   edge corruption.
//! - [`adaptive`]: the simplex-constrained per-row adjacency solver, the
//!   adaptive regulariser and the neighbour-count sampler.
//! - [`model`]: the two-layer GCN encoder, inner-product decoder and every
//!   loss term.
//! - [`train`]: hand-derived backward pass, Adam, and the training loop with
//!   gated graph updates.
//! - [`eval`]: k-means, Hungarian-matched accuracy, NMI and a linear
//!   classifier for downstream evaluation.
//! - [`data`] and [`experiment`]: dataset formats, synthetic stand-ins and
//!   the experiment/sweep harness behind the `bage` binary.
//!
//! Row-wise kernels run on rayon when the `parallel` feature (default) is
//! enabled. Work is always split into fixed-size row blocks, so results are
//! bit-identical regardless of thread count or feature selection.

pub mod adaptive;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
