//! Dense matrix helpers and the row-block execution layer.
//!
//! Every kernel that may run on several threads goes through
//! [`for_each_row_block`] or [`map_indexed`]. Both split the work into blocks
//! of [`ROW_BLOCK`] rows whose boundaries never depend on the thread count, and
//! every reduction is finished sequentially in index order. A fixed input
//! therefore produces bit-identical output with and without the `parallel`
//! feature, and under any rayon pool size.

use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Rows per work unit.
pub const ROW_BLOCK: usize = 64;

/// Runs `f(first_row, block)` over consecutive row blocks of `out`.
pub fn for_each_row_block<F>(out: &mut Matrix, f: F)
where
    F: Fn(usize, ArrayViewMut2<'_, f64>) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
        .into_par_iter()
        .enumerate()
        .for_each(|(b, block)| f(b * ROW_BLOCK, block));
    #[cfg(not(feature = "parallel"))]
    out.axis_chunks_iter_mut(Axis(0), ROW_BLOCK)
        .enumerate()
        .for_each(|(b, block)| f(b * ROW_BLOCK, block));
}

/// Evaluates `f(i)` for `i in 0..len`, returning results in index order.
pub fn map_indexed<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// `a · b`, computed one row block at a time.
pub fn matmul(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Matrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let mut out = Matrix::zeros((a.nrows(), b.ncols()));
    for_each_row_block(&mut out, |r0, mut block| {
        let rows = block.nrows();
        block.assign(&a.slice(s![r0..r0 + rows, ..]).dot(b));
    });
    out
}

/// `aᵀ · b` without materialising the transpose.
pub fn matmul_tn(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Matrix {
    assert_eq!(a.nrows(), b.nrows(), "matmul_tn: inner dimensions differ");
    let mut out = Matrix::zeros((a.ncols(), b.ncols()));
    for_each_row_block(&mut out, |r0, mut block| {
        let rows = block.nrows();
        block.assign(&a.slice(s![.., r0..r0 + rows]).t().dot(b));
    });
    out
}

pub fn ensure_square(a: &Matrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::structural(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if let Some(((i, j), v)) = a.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what}[{i},{j}] = {v}")));
    }
    Ok(())
}

/// Largest `|a_ij - a_ji|`.
pub fn max_asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

pub fn frobenius_sq(a: &ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_matches_ndarray_dot() {
        let a = Matrix::from_shape_fn((150, 7), |(i, j)| ((i * 7 + j) as f64).sin());
        let b = Matrix::from_shape_fn((7, 5), |(i, j)| ((i + 3 * j) as f64).cos());
        let got = matmul(&a.view(), &b.view());
        let want = a.dot(&b);
        for (x, y) in got.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let got_tn = matmul_tn(&a.view(), &a.view());
        let want_tn = a.t().dot(&a);
        for (x, y) in got_tn.iter().zip(want_tn.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetry_and_finiteness() {
        let a = array![[0.0, 1.0], [0.5, 0.0]];
        assert_eq!(max_asymmetry(&a), 0.5);
        assert!(ensure_finite(&a, "a").is_ok());
        let b = array![[0.0, f64::NAN], [0.0, 0.0]];
        assert!(matches!(ensure_finite(&b, "b"), Err(Error::Numeric(_))));
        assert!(ensure_square(&Matrix::zeros((2, 3)), "x").is_err());
    }
}
