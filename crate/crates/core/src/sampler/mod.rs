//! Negative sampling: global (random/popularity), in-batch, mixed and the
//! adaptive top-K variants.
//!
//! Every method yields a [`NegativeBatch`]: a per-user candidate pool shared
//! across the `S` positions of that user's window, plus an exclusion mask
//! (candidates that appear in the user's own history) and, for adaptive
//! methods, a per-position retention mask.

mod adaptive;
mod batch;
mod global;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ItemSet;
use crate::{Error, ItemId, Result};

pub use adaptive::{adaptive_filter, adaptive_filter_row};
pub use batch::{sample_batch, sample_mixed};
pub use global::{sample_global, GlobalDraw, GlobalSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Popularity,
    Batch,
    Mixed,
    Adaptive,
    AdaptiveMixed,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Random,
        Method::Popularity,
        Method::Batch,
        Method::Mixed,
        Method::Adaptive,
        Method::AdaptiveMixed,
    ];

    pub fn is_adaptive(self) -> bool {
        matches!(self, Method::Adaptive | Method::AdaptiveMixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Popularity => "popularity",
            Method::Batch => "batch",
            Method::Mixed => "mixed",
            Method::Adaptive => "adaptive",
            Method::AdaptiveMixed => "adaptive_mixed",
        }
    }

    /// Short acronym (RNS, PNS, ...).
    pub fn acronym(self) -> &'static str {
        match self {
            Method::Random => "RNS",
            Method::Popularity => "PNS",
            Method::Batch => "BNS",
            Method::Mixed => "MNS",
            Method::Adaptive => "ANS",
            Method::AdaptiveMixed => "AMNS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" | "rns" => Method::Random,
            "popularity" | "pns" => Method::Popularity,
            "batch" | "in_batch" | "bns" => Method::Batch,
            "mixed" | "mns" => Method::Mixed,
            "adaptive" | "ans" => Method::Adaptive,
            "adaptive_mixed" | "amns" => Method::AdaptiveMixed,
            other => return Err(Error::Config(format!("unknown sampling method `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: Method,
    /// Global pool size per user.
    pub num_negatives: usize,
    /// Adaptive retention count.
    pub adaptive_k: usize,
    /// Popularity exponent used by [`Method::Popularity`].
    pub gamma: f64,
    /// Random negatives per in-batch negative for mixed pools; `None` uses
    /// `num_negatives` for the random part.
    pub mixed_ratio: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            method: Method::Random,
            num_negatives: 128,
            adaptive_k: 32,
            gamma: 1.0,
            mixed_ratio: Some(10),
        }
    }
}

impl SamplerConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// Size of the random part of a mixed pool for a batch of `batch` users.
    pub fn mixed_random_size(&self, batch: usize) -> usize {
        match self.mixed_ratio {
            Some(r) => r * batch,
            None => self.num_negatives,
        }
    }

    /// Candidate pool width for a batch of `batch` users.
    pub fn pool_size(&self, batch: usize) -> usize {
        match self.method {
            Method::Random | Method::Popularity | Method::Adaptive => self.num_negatives,
            Method::Batch => batch,
            Method::Mixed | Method::AdaptiveMixed => batch + self.mixed_random_size(batch),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_negatives == 0 {
            return Err(Error::Config("num_negatives must be at least 1".into()));
        }
        if self.method.is_adaptive() && self.adaptive_k == 0 {
            return Err(Error::Config("adaptive_k must be at least 1".into()));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Config("gamma must be finite".into()));
        }
        Ok(())
    }

    /// Checks `K <= pool size` for a full batch of `batch` users.
    pub fn validate_for_batch(&self, batch: usize) -> Result<()> {
        self.validate()?;
        if self.method.is_adaptive() && self.adaptive_k > self.pool_size(batch) {
            return Err(Error::Config(format!(
                "adaptive_k = {} exceeds pool size {}",
                self.adaptive_k,
                self.pool_size(batch)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    /// `[B, S, N]`
    Global,
    /// `[B, S, B]`
    InBatch,
    /// `[B, S, B + N]`
    Mixed,
}

/// Logical shape of the negative score tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalShape {
    pub kind: ShapeKind,
    pub batch: usize,
    pub seq_len: usize,
    pub candidates: usize,
}

impl LogicalShape {
    pub fn dims(&self) -> [usize; 3] {
        [self.batch, self.seq_len, self.candidates]
    }
}

impl fmt::Display for LogicalShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.batch, self.seq_len, self.candidates)
    }
}

/// Negative candidates for one mini-batch.
///
/// The pool and exclusion mask are shared across positions of a user; the
/// retention mask is per `(user, position, candidate)` and present only after
/// adaptive filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeBatch {
    pub shape: LogicalShape,
    /// `B x P` candidate ids; id 0 marks an unfilled slot (always excluded).
    pub pools: Vec<Vec<ItemId>>,
    /// `B x P`, true where the candidate may not act as a negative.
    pub exclusion: Vec<Vec<bool>>,
    /// `B * S * P`, row-major, true where the candidate is retained.
    pub retention: Option<Vec<bool>>,
    /// Set when a global draw had fewer eligible items than requested.
    pub shortfall: bool,
}

impl NegativeBatch {
    #[inline]
    pub fn is_excluded(&self, user: usize, _position: usize, candidate: usize) -> bool {
        self.exclusion[user][candidate]
    }

    #[inline]
    pub fn is_retained(&self, user: usize, position: usize, candidate: usize) -> bool {
        match &self.retention {
            Some(r) => {
                let s = self.shape;
                r[(user * s.seq_len + position) * s.candidates + candidate]
            }
            None => true,
        }
    }

    /// Whether the entry contributes a negative term to the loss.
    #[inline]
    pub fn is_active(&self, user: usize, position: usize, candidate: usize) -> bool {
        !self.is_excluded(user, position, candidate) && self.is_retained(user, position, candidate)
    }
}

/// Scores every pool candidate at every position of every user's window with
/// the current model. Returned as `B * S * P`, row-major.
pub trait NegativeScorer {
    fn score_candidates(&self, sequences: &[Vec<ItemId>], pools: &[Vec<ItemId>]) -> Vec<f64>;
}

/// The slice of a mini-batch the samplers need.
#[derive(Debug, Clone, Copy)]
pub struct BatchContext<'a> {
    /// Left-padded input windows, one per user.
    pub sequences: &'a [Vec<ItemId>],
    /// Each user's positive item for in-batch pools.
    pub positives: &'a [ItemId],
    /// Each user's full training history, for exclusion.
    pub histories: &'a [&'a ItemSet],
}

impl BatchContext<'_> {
    pub fn batch_size(&self) -> usize {
        self.sequences.len()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }
}

/// Global samplers for the two exponents the methods use.
#[derive(Debug, Clone)]
pub struct SamplerTables {
    pub uniform: GlobalSampler,
    pub popularity: GlobalSampler,
}

impl SamplerTables {
    pub fn new(pop: &crate::dataset::PopularityTable, gamma: f64) -> Result<Self> {
        Ok(Self {
            uniform: GlobalSampler::new(pop, 0.0)?,
            popularity: GlobalSampler::new(pop, gamma)?,
        })
    }
}

/// Builds the candidate pool for `config.method` without adaptive filtering.
/// Adaptive methods get their base pool (random or mixed).
pub fn pool_negatives<R: Rng + ?Sized>(
    config: &SamplerConfig,
    ctx: &BatchContext<'_>,
    tables: &SamplerTables,
    rng: &mut R,
) -> Result<NegativeBatch> {
    config.validate()?;
    let b = ctx.batch_size();
    let s = ctx.seq_len();
    let global = |sampler: &GlobalSampler, n: usize, rng: &mut R| {
        let mut pools = Vec::with_capacity(b);
        let mut exclusion = Vec::with_capacity(b);
        let mut shortfall = false;
        for hist in ctx.histories {
            let draw = sampler.sample(n, hist, rng);
            shortfall |= draw.shortfall;
            let (pool, excl) = draw.into_padded(n);
            pools.push(pool);
            exclusion.push(excl);
        }
        NegativeBatch {
            shape: LogicalShape {
                kind: ShapeKind::Global,
                batch: b,
                seq_len: s,
                candidates: n,
            },
            pools,
            exclusion,
            retention: None,
            shortfall,
        }
    };

    Ok(match config.method {
        Method::Random | Method::Adaptive => global(&tables.uniform, config.num_negatives, rng),
        Method::Popularity => global(&tables.popularity, config.num_negatives, rng),
        Method::Batch => sample_batch(ctx.positives, ctx.histories, s),
        Method::Mixed | Method::AdaptiveMixed => {
            let batch_part = sample_batch(ctx.positives, ctx.histories, s);
            let random_part = global(&tables.uniform, config.mixed_random_size(b), rng);
            sample_mixed(batch_part, random_part)?
        }
    })
}

/// Method-dispatched negative construction, including adaptive filtering with
/// `scorer` for the adaptive methods.
pub fn build_negatives<R: Rng + ?Sized>(
    config: &SamplerConfig,
    ctx: &BatchContext<'_>,
    tables: &SamplerTables,
    scorer: Option<&dyn NegativeScorer>,
    rng: &mut R,
) -> Result<NegativeBatch> {
    if config.method.is_adaptive() && scorer.is_none() {
        return Err(Error::Config(format!(
            "method `{}` needs a model scorer",
            config.method
        )));
    }
    let mut negatives = pool_negatives(config, ctx, tables, rng)?;
    if let (true, Some(scorer)) = (config.method.is_adaptive(), scorer) {
        let scores = scorer.score_candidates(ctx.sequences, &negatives.pools);
        let retention = adaptive_filter(&scores, &negatives, config.adaptive_k)?;
        negatives.retention = Some(retention);
    }
    Ok(negatives)
}
