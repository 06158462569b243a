use std::collections::VecDeque;

use rand::Rng;

use crate::env::{ActionIndex, StateVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionIndex,
    pub reward: f64,
    pub next_state: StateVector,
    /// No bootstrapping past this transition.
    pub terminal: bool,
}

/// Bounded FIFO of transitions; the oldest record is evicted when full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `amount` distinct indices drawn uniformly (fewer if the buffer is smaller).
    pub fn sample_indices<R: Rng + ?Sized>(&self, amount: usize, rng: &mut R) -> Vec<usize> {
        let amount = amount.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), amount).into_vec()
    }

    pub fn sample<R: Rng + ?Sized>(&self, amount: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(amount, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}
