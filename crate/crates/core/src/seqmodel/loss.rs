//! Sampled binary cross-entropy.

use serde::{Deserialize, Serialize};

use super::ops::{sigmoid, softplus};
use crate::{Error, Result, Scalar};

/// Term counts of one loss evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossCounts {
    /// Supervised (non-padded) positions; the normaliser.
    pub positions: usize,
    /// Active negative terms summed over all positions.
    pub negatives: usize,
}

/// Loss value with gradients w.r.t. every score. Inactive entries have zero
/// gradient.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub loss: T,
    pub counts: LossCounts,
    pub d_pos: Vec<T>,
    pub d_neg: Vec<T>,
}

fn check_shapes<T>(pos: &[T], neg: &[T], neg_mask: &[bool], pad_mask: &[bool], pool: usize) -> Result<()> {
    if pad_mask.len() != pos.len() || neg.len() != pos.len() * pool || neg_mask.len() != neg.len() {
        return Err(Error::Input(format!(
            "inconsistent loss shapes: {} positives, {} pad flags, {} negatives, {} mask flags, pool {pool}",
            pos.len(),
            pad_mask.len(),
            neg.len(),
            neg_mask.len()
        )));
    }
    Ok(())
}

/// `pos_scores` is `[B*S]`, `neg_scores`/`neg_mask` are `[B*S*pool]`.
/// `pad_mask[i]` is true for supervised positions and `neg_mask` true for
/// active negatives. Returns the mean over supervised positions of
/// `-ln σ(s⁺) - Σ ln(1 - σ(s⁻))`.
pub fn bce_loss<T: Scalar>(
    pos_scores: &[T],
    neg_scores: &[T],
    neg_mask: &[bool],
    pad_mask: &[bool],
    pool: usize,
) -> Result<(T, LossCounts)> {
    let g = bce_loss_grad(pos_scores, neg_scores, neg_mask, pad_mask, pool)?;
    Ok((g.loss, g.counts))
}

/// [`bce_loss`] together with its score gradients.
pub fn bce_loss_grad<T: Scalar>(
    pos_scores: &[T],
    neg_scores: &[T],
    neg_mask: &[bool],
    pad_mask: &[bool],
    pool: usize,
) -> Result<LossGrad<T>> {
    check_shapes(pos_scores, neg_scores, neg_mask, pad_mask, pool)?;
    let positions = pad_mask.iter().filter(|&&m| m).count();
    if positions == 0 {
        return Err(Error::EmptyBatch);
    }
    let norm = T::of(positions as f64);
    let mut total = T::zero();
    let mut negatives = 0;
    let mut d_pos = vec![T::zero(); pos_scores.len()];
    let mut d_neg = vec![T::zero(); neg_scores.len()];
    for (i, &s) in pos_scores.iter().enumerate() {
        if !pad_mask[i] {
            continue;
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("positive score at position {i}")));
        }
        let mut term = softplus(-s);
        d_pos[i] = (sigmoid(s) - T::one()) / norm;
        for c in 0..pool {
            let j = i * pool + c;
            if !neg_mask[j] {
                continue;
            }
            let sn = neg_scores[j];
            if !sn.is_finite() {
                return Err(Error::NonFinite(format!(
                    "negative score at position {i}, candidate {c}"
                )));
            }
            term += softplus(sn);
            d_neg[j] = sigmoid(sn) / norm;
            negatives += 1;
        }
        total += term;
    }
    Ok(LossGrad {
        loss: total / norm,
        counts: LossCounts { positions, negatives },
        d_pos,
        d_neg,
    })
}
