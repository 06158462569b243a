use ndarray::Zip;

use super::mlp::{Gradient, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(params: &mut MlpParams, state: &mut AdamState, grads: &Gradient, hp: &AdamHyper) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let (b1, b2, lr, eps) = (hp.beta1, hp.beta2, hp.learning_rate, hp.eps);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, m), v), g) in params
        .layers
        .iter_mut()
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
        .zip(&grads.layers)
    {
        Zip::from(&mut p.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(update);
        Zip::from(&mut p.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(update);
    }
}
