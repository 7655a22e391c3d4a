use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{bce_loss_grad, LossCounts};
use super::ops::{axpy, dot};
use super::{Params, SasRecModel};
use crate::sampler::{adaptive_filter_row, NegativeBatch};
use crate::{Error, ItemId, Result, Scalar};

/// One training mini-batch. `sequences` and `targets` are `[B][S]`; a target
/// of 0 marks an unsupervised position.
#[derive(Debug, Clone, Copy)]
pub struct TrainBatch<'a> {
    pub sequences: &'a [Vec<ItemId>],
    pub targets: &'a [Vec<ItemId>],
    pub negatives: &'a NegativeBatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub counts: LossCounts,
    /// Adaptive retention mask (`B*S*P`) chosen from this pass's scores.
    #[serde(skip)]
    pub retention: Option<Vec<bool>>,
}

impl<'a> TrainBatch<'a> {
    fn validate(&self) -> Result<(usize, usize, usize)> {
        let b = self.sequences.len();
        let s = self.sequences.first().map_or(0, Vec::len);
        let shape = self.negatives.shape;
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.targets.len() != b
            || self.sequences.iter().chain(self.targets).any(|r| r.len() != s)
            || shape.batch != b
            || shape.seq_len != s
            || self.negatives.pools.len() != b
            || self.negatives.pools.iter().any(|p| p.len() != shape.candidates)
        {
            return Err(Error::Input(format!(
                "batch shapes disagree: {b} sequences of length {s}, negatives {shape}"
            )));
        }
        Ok((b, s, shape.candidates))
    }
}

impl<T: Scalar> SasRecModel<T> {
    /// Loss and parameter gradients for one batch. With `adaptive_k` set, the
    /// top-K eligible negatives per position are chosen from the scores of
    /// this same forward pass; their selection is not differentiated.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &TrainBatch<'_>,
        adaptive_k: Option<usize>,
        train_mode: bool,
        rng: &mut R,
    ) -> Result<(LossReport, Params<T>)> {
        let (b_n, s, p) = batch.validate()?;
        let d = self.config.embed_dim;
        let fwd = self.forward(batch.sequences, train_mode, rng)?;
        let neg = batch.negatives;

        let mut pos_scores = vec![T::zero(); b_n * s];
        let mut pad_mask = vec![false; b_n * s];
        let mut neg_scores = vec![T::zero(); b_n * s * p];
        let mut neg_mask = vec![false; b_n * s * p];
        let mut retention = adaptive_k.map(|_| vec![false; b_n * s * p]);

        for b in 0..b_n {
            for t in 0..s {
                let target = batch.targets[b][t];
                let Some(e) = fwd.embedding(b, t) else { continue };
                if target == 0 {
                    continue;
                }
                if target as usize > self.config.num_items {
                    return Err(Error::Input(format!("target id {target} out of range")));
                }
                let i = b * s + t;
                pad_mask[i] = true;
                pos_scores[i] = dot(e, self.item_embedding(target));
                let row = &mut neg_scores[i * p..(i + 1) * p];
                for (c, &item) in neg.pools[b].iter().enumerate() {
                    if !neg.exclusion[b][c] {
                        row[c] = dot(e, self.item_embedding(item));
                    }
                }
                let mrow = &mut neg_mask[i * p..(i + 1) * p];
                match (adaptive_k, retention.as_mut()) {
                    (Some(k), Some(ret)) => {
                        let keep = adaptive_filter_row(row, &neg.exclusion[b], k)?;
                        mrow.copy_from_slice(&keep);
                        ret[i * p..(i + 1) * p].copy_from_slice(&keep);
                    }
                    _ => {
                        for c in 0..p {
                            mrow[c] = neg.is_active(b, t, c);
                        }
                    }
                }
            }
        }

        let lg = bce_loss_grad(&pos_scores, &neg_scores, &neg_mask, &pad_mask, p)?;
        let mut grads = self.params.zeros_like();
        let mut d_out = Vec::new();
        for (b, cache) in fwd.caches.iter().enumerate() {
            let start = cache.start();
            let out = cache.real_output();
            d_out.clear();
            d_out.resize(cache.len() * d, T::zero());
            for r in 0..cache.len() {
                let i = b * s + start + r;
                if !pad_mask[i] {
                    continue;
                }
                let e = &out[r * d..(r + 1) * d];
                let de = &mut d_out[r * d..(r + 1) * d];
                let target = batch.targets[b][start + r] as usize;
                let g = lg.d_pos[i];
                axpy(g, &self.params.item_emb[target * d..(target + 1) * d], de);
                axpy(g, e, &mut grads.item_emb[target * d..(target + 1) * d]);
                for (c, &item) in neg.pools[b].iter().enumerate() {
                    if !neg_mask[i * p + c] {
                        continue;
                    }
                    let g = lg.d_neg[i * p + c];
                    let item = item as usize;
                    axpy(g, &self.params.item_emb[item * d..(item + 1) * d], de);
                    axpy(g, e, &mut grads.item_emb[item * d..(item + 1) * d]);
                }
            }
            self.backward_one(cache, &d_out, &mut grads);
        }

        Ok((
            LossReport {
                loss: lg.loss.as_f64(),
                counts: lg.counts,
                retention,
            },
            grads,
        ))
    }
}
