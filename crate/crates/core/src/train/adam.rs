use ndarray::Zip;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ModelParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, one pair per weight matrix.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .matrices()
            .iter()
            .map(|w| Matrix::zeros(w.dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let g = grads.matrices();
    let mut p = params.matrices_mut();
    if p.len() != g.len() || p.len() != state.m.len() {
        return Err(Error::structural("gradient set does not match parameters"));
    }
    if p.iter().zip(&g).any(|(p, g)| p.dim() != g.dim()) {
        return Err(Error::structural("gradient shape does not match parameter"));
    }
    state.t += 1;
    let bc1 = 1.0 - BETA1.powi(state.t as i32);
    let bc2 = 1.0 - BETA2.powi(state.t as i32);
    for (((w, g), m), v) in p.iter_mut().zip(g).zip(&mut state.m).zip(&mut state.v) {
        Zip::from(&mut **w)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one(w: f64) -> ModelParams {
        ModelParams {
            w0: array![[w]],
            w1: array![[w]],
            w1_logvar: None,
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = one(0.7);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &one(0.0), &mut st, 0.1).unwrap();
        assert_eq!(p, one(0.7));
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_hand_value() {
        let mut p = one(0.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &one(1.0), &mut st, 0.1).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.w0[[0, 0]] - want).abs() < 1e-15);
    }

    #[test]
    fn steady_state_step_is_lr_times_sign() {
        let mut p = one(0.0);
        let mut st = AdamState::new(&p);
        let g = ModelParams {
            w0: array![[3.0]],
            w1: array![[-0.2]],
            w1_logvar: None,
        };
        for _ in 0..999 {
            adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        }
        let before = p.clone();
        adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        assert!((before.w0[[0, 0]] - p.w0[[0, 0]] - 0.01).abs() < 1e-3 * 0.01 + 1e-9);
        assert!((p.w1[[0, 0]] - before.w1[[0, 0]] - 0.01).abs() < 1e-3 * 0.01 + 1e-9);
        assert_eq!(st.t, 1000);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut p = one(0.0);
        let mut st = AdamState::new(&p);
        let g = ModelParams {
            w0: array![[1.0, 2.0]],
            w1: array![[1.0]],
            w1_logvar: None,
        };
        assert!(adam_step(&mut p, &g, &mut st, 0.1).is_err());
    }
}
