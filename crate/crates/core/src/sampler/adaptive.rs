use std::cmp::Ordering;

use num_traits::Float;

use super::NegativeBatch;
use crate::{Error, Result};

#[inline]
fn rank_key<T: Float>(x: T) -> T {
    if x.is_nan() {
        T::neg_infinity()
    } else {
        x
    }
}

/// Keeps the `min(k, eligible)` highest-scoring eligible candidates of one
/// `(user, position)` row; ties go to the lower candidate index.
pub fn adaptive_filter_row<T: Float>(scores: &[T], excluded: &[bool], k: usize) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::Config("adaptive K must be at least 1".into()));
    }
    debug_assert_eq!(scores.len(), excluded.len());
    let mut eligible: Vec<usize> = (0..scores.len()).filter(|&c| !excluded[c]).collect();
    let mut keep = vec![false; scores.len()];
    if eligible.len() > k {
        let order = |&a: &usize, &b: &usize| {
            rank_key(scores[b])
                .partial_cmp(&rank_key(scores[a]))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        };
        eligible.select_nth_unstable_by(k - 1, order);
        eligible.truncate(k);
    }
    for c in eligible {
        keep[c] = true;
    }
    Ok(keep)
}

/// Batch-level adaptive filtering. `scores` is `B * S * P` row-major, as
/// returned by a [`super::NegativeScorer`]; the result has the same layout.
pub fn adaptive_filter(scores: &[f64], negatives: &NegativeBatch, k: usize) -> Result<Vec<bool>> {
    let shape = negatives.shape;
    let (s, p) = (shape.seq_len, shape.candidates);
    if scores.len() != shape.batch * s * p {
        return Err(Error::Input(format!(
            "score tensor has {} entries, expected {}",
            scores.len(),
            shape.batch * s * p
        )));
    }
    let mut out = Vec::with_capacity(scores.len());
    for b in 0..shape.batch {
        for t in 0..s {
            let row = &scores[(b * s + t) * p..(b * s + t + 1) * p];
            out.extend(adaptive_filter_row(row, &negatives.exclusion[b], k)?);
        }
    }
    Ok(out)
}
