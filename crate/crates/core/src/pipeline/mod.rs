//! Mini-batch generation, the oversampling reuse buffer and the training
//! loop.

mod buffer;
mod train;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, ItemSet};
use crate::sampler::{pool_negatives, BatchContext, NegativeBatch, SamplerConfig, SamplerTables};
use crate::{Error, ItemId, Result};

pub use buffer::{BufferConfig, Draw, ReuseBuffer};
pub use train::{evaluate_total, select_epoch, train_run, EpochLog, FeedMode, TrainConfig, TrainOutcome};

/// Independent random streams derived from one run seed.
pub mod stream {
    pub const INIT: u64 = 0;
    pub const PRODUCER: u64 = 1;
    pub const REUSE: u64 = 2;
    pub const DROPOUT: u64 = 3;
}

/// ChaCha stream `id` of `seed`.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One training mini-batch. Negatives are stored before adaptive filtering,
/// which depends on the model at consumption time.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    /// Internal user ids.
    pub users: Vec<u32>,
    /// `[B][S]`, left-padded with 0.
    pub sequences: Vec<Vec<ItemId>>,
    /// `[B][S]`; `targets[b][t]` is the item following `sequences[b][t]`, 0
    /// where unsupervised.
    pub targets: Vec<Vec<ItemId>>,
    pub pad_mask: Vec<Vec<bool>>,
    pub negatives: NegativeBatch,
}

/// Windowed training inputs per eligible user (at least two train items).
#[derive(Debug, Clone)]
pub struct TrainData {
    pub users: Vec<u32>,
    pub windows: Vec<Vec<ItemId>>,
    pub targets: Vec<Vec<ItemId>>,
    pub histories: Vec<ItemSet>,
    pub seq_len: usize,
}

/// Window over the most recent `seq_len` items, left-padded; every position
/// predicts the next item, the last position is unsupervised.
pub fn window(items: &[ItemId], seq_len: usize) -> (Vec<ItemId>, Vec<ItemId>) {
    let tail = &items[items.len().saturating_sub(seq_len)..];
    let pad = seq_len - tail.len();
    let mut seq = vec![0; seq_len];
    seq[pad..].copy_from_slice(tail);
    let mut targets = vec![0; seq_len];
    if tail.len() > 1 {
        targets[pad..seq_len - 1].copy_from_slice(&tail[1..]);
    }
    (seq, targets)
}

impl TrainData {
    pub fn new(train: &Dataset, seq_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        let mut data = Self {
            users: Vec::new(),
            windows: Vec::new(),
            targets: Vec::new(),
            histories: Vec::new(),
            seq_len,
        };
        for seq in train.sequences.iter().filter(|s| s.len() >= 2) {
            let items: Vec<ItemId> = seq.items().collect();
            let (w, t) = window(&items, seq_len);
            data.users.push(seq.user);
            data.windows.push(w);
            data.targets.push(t);
            data.histories
                .push(ItemSet::from_items(train.num_items, items.iter().copied()));
        }
        if data.users.is_empty() {
            return Err(Error::TooSparse("no training user has two or more interactions".into()));
        }
        Ok(data)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.users.len().div_ceil(batch_size)
    }
}

/// Position in the current epoch's user permutation; a new permutation is
/// drawn when the previous one is exhausted.
#[derive(Debug, Clone, Default)]
pub struct EpochCursor {
    order: Vec<usize>,
    next: usize,
    epochs: usize,
}

impl EpochCursor {
    /// Permutations started so far.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    fn take<R: Rng + ?Sized>(&mut self, n_users: usize, batch: usize, rng: &mut R) -> Vec<usize> {
        if self.next >= self.order.len() {
            self.order = (0..n_users).collect();
            self.order.shuffle(rng);
            self.next = 0;
            self.epochs += 1;
        }
        let end = (self.next + batch).min(self.order.len());
        let picked = self.order[self.next..end].to_vec();
        self.next = end;
        picked
    }
}

/// Next `batch_size` users of the permutation (fewer at the end of an
/// epoch), windowed and with negatives attached.
pub fn generate_minibatch<R: Rng + ?Sized>(
    data: &TrainData,
    sampler: &SamplerConfig,
    tables: &SamplerTables,
    cursor: &mut EpochCursor,
    batch_size: usize,
    rng: &mut R,
) -> Result<MiniBatch> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let picked = cursor.take(data.num_users(), batch_size, rng);
    let sequences: Vec<Vec<ItemId>> = picked.iter().map(|&u| data.windows[u].clone()).collect();
    let targets: Vec<Vec<ItemId>> = picked.iter().map(|&u| data.targets[u].clone()).collect();
    // The last supervised target is the final window item.
    let positives: Vec<ItemId> = picked.iter().map(|&u| data.windows[u][data.seq_len - 1]).collect();
    let histories: Vec<&ItemSet> = picked.iter().map(|&u| &data.histories[u]).collect();
    let ctx = BatchContext {
        sequences: &sequences,
        positives: &positives,
        histories: &histories,
    };
    let negatives = pool_negatives(sampler, &ctx, tables, rng)?;
    let pad_mask = targets.iter().map(|t| t.iter().map(|&i| i != 0).collect()).collect();
    Ok(MiniBatch {
        users: picked.iter().map(|&u| data.users[u]).collect(),
        sequences,
        targets,
        pad_mask,
        negatives,
    })
}
