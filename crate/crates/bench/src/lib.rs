//! Fixtures shared by the benchmarks.

use wirebeam_core::dqn::{MlpParams, Transition};
use wirebeam_core::env::{ActionIndex, StateVector};
use wirebeam_core::wire::{self, WireParams, WireState};

/// Equilibrium wire with every interior point nudged, so the spring term is non-trivial.
pub fn perturbed_wire(params: &WireParams) -> WireState {
    let mut state = wire::solve_equilibrium(params);
    let n = state.positions.len();
    for (i, x) in state.positions.iter_mut().enumerate().take(n - 1).skip(1) {
        x.z += 0.01 * (i as f64).sin();
    }
    state
}

/// Deterministic minibatch of `n` transitions with `dim`-long states.
pub fn synthetic_batch(n: usize, dim: usize) -> Vec<Transition> {
    (0..n)
        .map(|i| {
            let s: Vec<f64> = (0..dim)
                .map(|j| ((i * dim + j) as f64 * 0.37).sin())
                .collect();
            let s2: Vec<f64> = s.iter().map(|v| v * 0.9 + 0.01).collect();
            Transition {
                state: StateVector(s),
                action: ActionIndex::new(i % 9).unwrap(),
                reward: ((i as f64) * 0.1).cos(),
                next_state: StateVector(s2),
                terminal: false,
            }
        })
        .collect()
}

pub fn network(dim: usize, seed: u64) -> MlpParams {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    MlpParams::init(&[dim, 128, 128, 128, 9], &mut rng)
}
