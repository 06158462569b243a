//! Deep Q-learning from scratch: MLP action-value network, Huber TD loss
//! against a periodically synchronized target network, Adam, replay, and
//! epsilon-greedy exploration.

mod adam;
pub mod checkpoint;
mod mlp;
mod replay;
mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use mlp::{Gradient, Layer, MlpParams};
pub use replay::{ReplayBuffer, Transition};
pub use train::{train, train_with, TrainEvent, TrainLogRow, TrainOptions, TrainOutcome, Trainer};

use ndarray::Array2;
use rand::Rng;

use crate::env::{ActionIndex, N_ACTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub discount: f64,
    pub epsilon_train: f64,
    pub epsilon_eval: f64,
    pub learning_rate: f64,
    /// Environment steps between update phases.
    pub update_period_steps: usize,
    /// Transitions drawn from replay per outer iteration.
    pub sample_block: usize,
    pub minibatch: usize,
    /// Passes over each sampled block.
    pub epochs: usize,
    /// Independent blocks per update phase.
    pub outer_iterations: usize,
    pub target_sync_steps: usize,
    pub total_steps: usize,
    /// Greedy evaluation steps after every update phase.
    pub eval_steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            discount: 0.99,
            epsilon_train: 0.2,
            epsilon_eval: 0.0,
            learning_rate: 1e-4,
            update_period_steps: 300,
            sample_block: 2048,
            minibatch: 32,
            epochs: 8,
            outer_iterations: 4,
            target_sync_steps: 3000,
            total_steps: 100_000,
            eval_steps: 300,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            replay_capacity: 50_000,
            hidden: vec![128, 128, 128],
        }
    }
}

impl TrainConfig {
    /// Reduced schedule for quick end-to-end runs.
    pub fn smoke() -> Self {
        TrainConfig {
            total_steps: 600,
            sample_block: 256,
            epochs: 2,
            outer_iterations: 1,
            target_sync_steps: 300,
            ..TrainConfig::default()
        }
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(N_ACTIONS);
        dims
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(msg.to_string()));
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_train) || !(0.0..=1.0).contains(&self.epsilon_eval) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.update_period_steps == 0
            || self.sample_block == 0
            || self.minibatch == 0
            || self.epochs == 0
            || self.outer_iterations == 0
            || self.target_sync_steps == 0
            || self.eval_steps == 0
        {
            return bad("training schedule counts must be positive");
        }
        if self.replay_capacity < self.sample_block {
            return bad("replay capacity must hold at least one sample block");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// Huber loss with unit threshold.
pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`huber`].
pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Bootstrapped target `r + gamma * max_a' Q_target(s', a')`; no bootstrap on terminal transitions.
pub fn td_target(tr: &Transition, target: &MlpParams, discount: f64) -> Result<f64> {
    if tr.terminal {
        return Ok(tr.reward);
    }
    let q = target.forward(tr.next_state.as_slice())?;
    Ok(tr.reward + discount * max_of(&q))
}

fn max_of(q: &[f64]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean-over-batch gradient of the Huber TD loss with respect to the online
/// parameters. Only the taken action's output receives gradient and the
/// target term is held constant. Returns the gradient and the mean loss.
pub fn grad(
    params: &MlpParams,
    batch: &[&Transition],
    target: &MlpParams,
    discount: f64,
) -> Result<(Gradient, f64)> {
    if batch.is_empty() {
        return Ok((params.zeros_like(), 0.0));
    }
    let dim = params.input_dim();
    let b = batch.len();
    let mut states = Array2::zeros((b, dim));
    let mut next = Array2::zeros((b, dim));
    for (i, tr) in batch.iter().enumerate() {
        for (arr, sv) in [(&mut states, &tr.state), (&mut next, &tr.next_state)] {
            if sv.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: sv.len(),
                });
            }
            arr.row_mut(i)
                .assign(&ndarray::ArrayView1::from(sv.as_slice()));
        }
    }
    let q_next = target.forward_batch(next.view());
    let (inputs, pre) = params.forward_cached(states);
    let q = pre.last().unwrap();

    let mut d_out = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (i, tr) in batch.iter().enumerate() {
        let y = if tr.terminal {
            tr.reward
        } else {
            tr.reward + discount * max_of(q_next.row(i).as_slice().unwrap())
        };
        let a = tr.action.index();
        let x = q[[i, a]] - y;
        loss += huber(x);
        d_out[[i, a]] = huber_grad(x) / b as f64;
    }
    let g = params.backward(&inputs, &pre, d_out);
    Ok((g, loss / b as f64))
}

/// Epsilon-greedy selection; greedy ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> ActionIndex {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return ActionIndex::new(rng.random_range(0..N_ACTIONS)).unwrap();
    }
    ActionIndex::new(argmax(q)).unwrap()
}

pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}
