use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RunRng;

/// One stored step: state, raw action and next value for each agent, plus
/// each agent's reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub mu_t: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub mu_next: Vec<f64>,
    pub reward_mu: f64,
    pub sigma_t: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub sigma_next: Vec<f64>,
    pub reward_sigma: f64,
}

/// Bounded FIFO of transitions; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidInput("buffer capacity must be ≥ 1".into()));
        }
        Ok(Self {
            capacity,
            storage: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.storage.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.storage.iter()
    }

    pub fn store(&mut self, transition: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(transition);
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch_size: usize, rng: &mut RunRng) -> Result<Vec<usize>> {
        if batch_size == 0 || self.storage.len() < batch_size {
            return Err(Error::InvalidInput(format!(
                "cannot draw a batch of {batch_size} from {} transitions",
                self.storage.len()
            )));
        }
        Ok((0..batch_size)
            .map(|_| rng.random_range(0..self.storage.len()))
            .collect())
    }

    pub fn sample_batch(&self, batch_size: usize, rng: &mut RunRng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }
}

pub fn store(buffer: &mut ReplayBuffer, transition: Transition) {
    buffer.store(transition);
}

pub fn sample_batch<'a>(
    buffer: &'a ReplayBuffer,
    batch_size: usize,
    rng: &mut RunRng,
) -> Result<Vec<&'a Transition>> {
    buffer.sample_batch(batch_size, rng)
}
