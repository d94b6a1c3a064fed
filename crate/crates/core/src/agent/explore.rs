//! Exploration noise, reward baseline and replay memory.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuit::StateMatrix;
use crate::params::ActionMatrix;

/// Zero-mean Gaussian truncated at `truncation` standard deviations, with a
/// standard deviation that decays geometrically per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcess {
    pub initial_std: f64,
    pub decay: f64,
    pub truncation: f64,
    episodes: u64,
}

impl NoiseProcess {
    pub fn new(initial_std: f64, decay: f64, truncation: f64) -> Self {
        Self {
            initial_std,
            decay,
            truncation,
            episodes: 0,
        }
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn std(&self) -> f64 {
        self.initial_std * libm::pow(self.decay, self.episodes as f64)
    }

    /// Largest absolute perturbation at the current std.
    pub fn half_width(&self) -> f64 {
        self.truncation * self.std()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= self.truncation {
                return z * self.std();
            }
        }
    }

    pub fn advance(&mut self) {
        self.episodes += 1;
    }
}

/// Exponential moving average of rewards, seeded with the first reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTracker {
    pub beta: f64,
    value: Option<f64>,
}

impl BaselineTracker {
    pub fn new(beta: f64) -> Self {
        Self { beta, value: None }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn update(&mut self, reward: f64) -> f64 {
        let b = match self.value {
            None => reward,
            Some(b) => self.beta * b + (1.0 - self.beta) * reward,
        };
        self.value = Some(b);
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub state: StateMatrix,
    pub action: ActionMatrix,
    pub reward: f64,
}

/// Fixed-capacity ring of records; the oldest is overwritten when full.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<ReplayRecord>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: ReplayRecord) {
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            self.records[self.next] = record;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Up to `count` distinct records chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<&ReplayRecord> {
        let k = count.min(self.records.len());
        rand::seq::index::sample(rng, self.records.len(), k)
            .into_iter()
            .map(|i| &self.records[i])
            .collect()
    }
}
