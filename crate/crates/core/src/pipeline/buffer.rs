use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MiniBatch;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferConfig {
    /// Oversampling factor: epochs of distinct batches generated before reuse.
    pub osf: usize,
    pub batches_per_epoch: usize,
}

impl BufferConfig {
    pub fn capacity(&self) -> usize {
        self.osf * self.batches_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        if self.osf == 0 || self.capacity() == 0 {
            return Err(Error::Config(format!(
                "buffer capacity must be positive (osf={}, batches_per_epoch={})",
                self.osf, self.batches_per_epoch
            )));
        }
        Ok(())
    }

    /// Fresh batches needed over `total_draws` draws.
    pub fn fresh_needed(&self, total_draws: usize) -> usize {
        total_draws.min(self.capacity())
    }
}

/// Where a drawn batch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Draw {
    Fresh(usize),
    Reused(usize),
}

impl Draw {
    pub fn slot(self) -> usize {
        match self {
            Draw::Fresh(s) | Draw::Reused(s) => s,
        }
    }
}

/// Stores every fresh batch until `capacity` is reached, then serves
/// uniformly random stored batches and generates nothing new.
#[derive(Debug)]
pub struct ReuseBuffer {
    capacity: usize,
    slots: Vec<MiniBatch>,
    hits: Vec<u64>,
    reused: usize,
    rng: ChaCha8Rng,
}

impl ReuseBuffer {
    pub fn new(config: BufferConfig, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            capacity: config.capacity(),
            slots: Vec::with_capacity(config.capacity()),
            hits: vec![0; config.capacity()],
            reused: 0,
            rng,
        })
    }

    /// Next batch; `fresh` is called only while the buffer is filling.
    pub fn next(&mut self, fresh: impl FnOnce() -> Result<MiniBatch>) -> Result<Draw> {
        if self.slots.len() < self.capacity {
            self.slots.push(fresh()?);
            let slot = self.slots.len() - 1;
            self.hits[slot] += 1;
            return Ok(Draw::Fresh(slot));
        }
        let slot = self.rng.random_range(0..self.capacity);
        self.hits[slot] += 1;
        self.reused += 1;
        Ok(Draw::Reused(slot))
    }

    pub fn get(&self, slot: usize) -> &MiniBatch {
        &self.slots[slot]
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fresh_count(&self) -> usize {
        self.slots.len()
    }

    pub fn reused_count(&self) -> usize {
        self.reused
    }

    /// Reuse draws per slot (fresh insertions excluded).
    pub fn reuse_hits(&self) -> Vec<u64> {
        self.hits.iter().map(|&h| h.saturating_sub(1)).collect()
    }
}
