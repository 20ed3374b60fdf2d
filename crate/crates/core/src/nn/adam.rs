use super::{Gradients, Weights};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moments per tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Weights,
    pub second_moment: Weights,
}

impl AdamState {
    pub fn new(like: &Weights) -> Self {
        Self {
            step: 0,
            first_moment: like.zeros_like(),
            second_moment: like.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update. On a non-finite or mis-shaped gradient
/// nothing is modified. Parameters and moments are rounded to f32 afterwards.
pub fn adam_step(weights: &mut Weights, state: &mut AdamState, grads: &Gradients, lr: f64) -> Result<()> {
    if !weights.same_shapes(grads) {
        return Err(Error::shape(
            "adam_step gradients",
            "same tensor shapes as parameters",
            "mismatched gradients",
        ));
    }
    for (name, g) in grads.named() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { tensor: name });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let bias1 = 1.0 - ADAM_BETA1.powf(t);
    let bias2 = 1.0 - ADAM_BETA2.powf(t);

    let params = weights.tensors_mut();
    let firsts = state.first_moment.tensors_mut();
    let seconds = state.second_moment.tensors_mut();
    let named = grads.named();
    for (((p, m), v), (_, g)) in params.into_iter().zip(firsts).zip(seconds).zip(named) {
        let p = p.as_mut_slice();
        let m = m.as_mut_slice();
        let v = v.as_mut_slice();
        for i in 0..p.len() {
            let gi = g.as_slice()[i];
            let mi = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            let vi = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = mi / bias1;
            let v_hat = vi / bias2;
            let pi = p[i] - lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            m[i] = mi as f32 as f64;
            v[i] = vi as f32 as f64;
            p[i] = pi as f32 as f64;
        }
    }
    Ok(())
}
