//! Bias-corrected Adam.

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`.
    pub fn new<'a>(hyper: AdamHyper, params: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first: Vec<Matrix> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamState { hyper, step: 0, second: first.clone(), first }
    }

    pub(crate) fn from_parts(hyper: AdamHyper, step: u64, first: Vec<Matrix>, second: Vec<Matrix>) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::shape("AdamState", "moment buffers disagree"));
        }
        Ok(AdamState { hyper, step, first, second })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.second
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} params, {} grads, {} moment buffers", params.len(), grads.len(), state.first.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[i].shape() {
            return Err(Error::shape("adam_step", format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape())));
        }
    }
    state.step += 1;
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    let t = state.step as f64;
    let c1 = 1.0 - beta1.powf(t);
    let c2 = 1.0 - beta2.powf(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (Matrix, AdamState) {
        let p = Matrix::scalar(value);
        let s = AdamState::new(AdamHyper { lr: 0.01, ..Default::default() }, [&p]);
        (p, s)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.2] {
            let (mut p, mut s) = single(1.0);
            adam_step(&mut [&mut p], &[Matrix::scalar(g)], &mut s).unwrap();
            let moved = p.item() - 1.0;
            assert!((moved + 0.01 * f64::signum(g)).abs() < 1e-6, "moved {moved}");
            assert_eq!(s.step_count(), 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_but_advances_counter() {
        let (mut p, mut s) = single(0.5);
        adam_step(&mut [&mut p], &[Matrix::scalar(0.0)], &mut s).unwrap();
        assert_eq!(p.item(), 0.5);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn repeated_steps_move_monotonically() {
        let (mut p, mut s) = single(0.0);
        let mut last = p.item();
        for _ in 0..2 {
            adam_step(&mut [&mut p], &[Matrix::scalar(1.5)], &mut s).unwrap();
            assert!(p.item() < last);
            last = p.item();
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, mut s) = single(0.0);
        let err = adam_step(&mut [&mut p], &[Matrix::zeros(2, 1)], &mut s).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
        assert_eq!(s.step_count(), 0);
    }
}
