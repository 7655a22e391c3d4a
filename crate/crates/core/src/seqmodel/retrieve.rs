use std::cmp::Ordering;

use super::ops::dot;
use super::SasRecModel;
use crate::dataset::ItemSet;
use crate::sampler::NegativeScorer;
use crate::{Error, ItemId, Result, Scalar};

fn rank_key<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        T::neg_infinity()
    } else {
        x
    }
}

fn desc_then_id<T: Scalar>(a: &(ItemId, T), b: &(ItemId, T)) -> Ordering {
    rank_key(b.1)
        .partial_cmp(&rank_key(a.1))
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Top-`k` corpus items for the embedding of `history`'s last position, by
/// score descending then id ascending. Padding is never returned; history
/// items are skipped when `exclude_history` is set. Returns fewer than `k`
/// items only when fewer are available.
pub fn retrieve_topk<T: Scalar>(
    model: &SasRecModel<T>,
    history: &[ItemId],
    k: usize,
    exclude_history: bool,
) -> Result<Vec<ItemId>> {
    Ok(retrieve_scored(model, history, k, exclude_history)?
        .into_iter()
        .map(|(i, _)| i)
        .collect())
}

/// [`retrieve_topk`] with the scores attached.
pub fn retrieve_scored<T: Scalar>(
    model: &SasRecModel<T>,
    history: &[ItemId],
    k: usize,
    exclude_history: bool,
) -> Result<Vec<(ItemId, T)>> {
    if history.is_empty() {
        return Err(Error::Input("empty history".into()));
    }
    let n = model.config.num_items;
    let user = model.user_embedding(history)?;
    let excluded = exclude_history.then(|| ItemSet::from_items(n, history.iter().copied()));
    let mut scored: Vec<(ItemId, T)> = (1..=n as ItemId)
        .filter(|&i| excluded.as_ref().is_none_or(|s| !s.contains(i)))
        .map(|i| (i, dot(&user, model.item_embedding(i))))
        .collect();
    if k == 0 {
        return Ok(Vec::new());
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, desc_then_id);
        scored.truncate(k);
    }
    scored.sort_unstable_by(desc_then_id);
    Ok(scored)
}

/// Frozen-model recommender for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Retriever<'a, T> {
    pub model: &'a SasRecModel<T>,
    pub exclude_history: bool,
}

impl<'a, T: Scalar> Retriever<'a, T> {
    pub fn new(model: &'a SasRecModel<T>) -> Self {
        Self {
            model,
            exclude_history: true,
        }
    }

    pub fn top_k(&self, history: &[ItemId], k: usize) -> Result<Vec<ItemId>> {
        retrieve_topk(self.model, history, k, self.exclude_history)
    }
}

impl<T: Scalar> NegativeScorer for SasRecModel<T> {
    /// Eval-mode scores of every pool candidate at every window position;
    /// padded positions score zero.
    fn score_candidates(&self, sequences: &[Vec<ItemId>], pools: &[Vec<ItemId>]) -> Vec<f64> {
        let s = sequences.first().map_or(0, Vec::len);
        let p = pools.first().map_or(0, Vec::len);
        let d = self.config.embed_dim;
        let mut out = vec![0.0; sequences.len() * s * p];
        for (b, (seq, pool)) in sequences.iter().zip(pools).enumerate() {
            let Ok(cache) = self.forward_one(seq, false, &mut super::encoder::NoRng) else {
                continue;
            };
            for t in cache.start()..s {
                let e = cache.embedding(t, d).expect("real position");
                for (c, &item) in pool.iter().enumerate() {
                    out[(b * s + t) * p + c] = dot(e, self.item_embedding(item)).as_f64();
                }
            }
        }
        out
    }
}
