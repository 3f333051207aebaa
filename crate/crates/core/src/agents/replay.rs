//! FIFO experience replay with uniform sampling.

use super::env::Obs;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: Obs,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Obs,
    pub terminal: bool,
}

pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 10_000;

    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer { capacity, storage: Vec::with_capacity(capacity.min(4096)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Uniform sample with replacement; `None` until `batch` items exist.
    pub fn sample<'a>(&'a self, batch: usize, rng: &mut ChaCha8Rng) -> Option<Vec<&'a Transition>> {
        if self.storage.len() < batch {
            return None;
        }
        Some((0..batch).map(|_| &self.storage[rng.gen_range(0..self.storage.len())]).collect())
    }
}
