use super::{LogicalShape, NegativeBatch, ShapeKind};
use crate::dataset::ItemSet;
use crate::{Error, ItemId, Result};

/// In-batch pools: every user sees the batch's positive items (one per user,
/// in batch order), masked where the candidate is in that user's history.
pub fn sample_batch(positives: &[ItemId], histories: &[&ItemSet], seq_len: usize) -> NegativeBatch {
    let b = positives.len();
    let exclusion = histories
        .iter()
        .map(|h| positives.iter().map(|&c| c == 0 || h.contains(c)).collect())
        .collect();
    NegativeBatch {
        shape: LogicalShape {
            kind: ShapeKind::InBatch,
            batch: b,
            seq_len,
            candidates: b,
        },
        pools: vec![positives.to_vec(); b],
        exclusion,
        retention: None,
        shortfall: false,
    }
}

/// Concatenates an in-batch part with a random part: `[B,S,B] ++ [B,S,N]`.
pub fn sample_mixed(batch_part: NegativeBatch, random_part: NegativeBatch) -> Result<NegativeBatch> {
    let (bs, rs) = (batch_part.shape, random_part.shape);
    if bs.batch != rs.batch || bs.seq_len != rs.seq_len {
        return Err(Error::Input(format!(
            "mixed parts disagree: batch part {bs}, random part {rs}"
        )));
    }
    let pools = batch_part
        .pools
        .into_iter()
        .zip(random_part.pools)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    let exclusion = batch_part
        .exclusion
        .into_iter()
        .zip(random_part.exclusion)
        .map(|(mut a, b)| {
            a.extend(b);
            a
        })
        .collect();
    Ok(NegativeBatch {
        shape: LogicalShape {
            kind: ShapeKind::Mixed,
            batch: bs.batch,
            seq_len: bs.seq_len,
            candidates: bs.candidates + rs.candidates,
        },
        pools,
        exclusion,
        retention: None,
        shortfall: batch_part.shortfall || random_part.shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn own_positive_is_masked() {
        // items: A=1, B=2
        let h1 = ItemSet::from_items(3, [1]);
        let h2 = ItemSet::from_items(3, [2]);
        let nb = sample_batch(&[1, 2], &[&h1, &h2], 4);
        assert_eq!(nb.shape.dims(), [2, 4, 2]);
        assert_eq!(nb.exclusion[0], vec![true, false]);
        assert_eq!(nb.exclusion[1], vec![false, true]);

        let h2b = ItemSet::from_items(3, [1, 2]);
        let nb = sample_batch(&[1, 2], &[&h1, &h2b], 4);
        assert_eq!(nb.exclusion[1], vec![true, true]);
    }

    #[test]
    fn single_user_batch_has_no_eligible_candidates() {
        let h = ItemSet::from_items(5, [3]);
        let nb = sample_batch(&[3], &[&h], 2);
        assert_eq!(nb.exclusion, vec![vec![true]]);
        assert!((0..2).all(|t| !nb.is_active(0, t, 0)));
    }

    #[test]
    fn no_overlap_means_no_exclusion() {
        let h1 = ItemSet::from_items(9, [7]);
        let h2 = ItemSet::from_items(9, [8]);
        let h3 = ItemSet::from_items(9, [9]);
        let nb = sample_batch(&[1, 2, 3], &[&h1, &h2, &h3], 2);
        assert!(nb.exclusion.iter().flatten().all(|&e| !e));
    }

    fn random_part(b: usize, s: usize, n: usize) -> NegativeBatch {
        NegativeBatch {
            shape: LogicalShape {
                kind: ShapeKind::Global,
                batch: b,
                seq_len: s,
                candidates: n,
            },
            pools: vec![(10..10 + n as ItemId).collect(); b],
            exclusion: vec![vec![false; n]; b],
            retention: None,
            shortfall: false,
        }
    }

    #[test]
    fn mixed_concatenates() {
        let h1 = ItemSet::from_items(20, [1]);
        let h2 = ItemSet::from_items(20, [2]);
        let m = sample_mixed(sample_batch(&[1, 2], &[&h1, &h2], 3), random_part(2, 3, 4)).unwrap();
        assert_eq!(m.shape.dims(), [2, 3, 6]);
        assert_eq!(m.pools[0], vec![1, 2, 10, 11, 12, 13]);
        assert_eq!(m.exclusion[0], vec![true, false, false, false, false, false]);
    }

    #[test]
    fn mixed_with_empty_random_part_is_batch() {
        let h1 = ItemSet::from_items(5, [1]);
        let h2 = ItemSet::from_items(5, [4]);
        let b = sample_batch(&[1, 2], &[&h1, &h2], 3);
        let m = sample_mixed(b.clone(), random_part(2, 3, 0)).unwrap();
        assert_eq!(m.pools, b.pools);
        assert_eq!(m.exclusion, b.exclusion);
        assert_eq!(m.shape.candidates, 2);
    }

    #[test]
    fn mixed_with_fully_masked_batch_part() {
        let h = ItemSet::from_items(5, [1, 2]);
        let m = sample_mixed(sample_batch(&[1, 2], &[&h, &h], 1), random_part(2, 1, 3)).unwrap();
        let active: Vec<_> = (0..5)
            .filter(|&c| m.is_active(0, 0, c))
            .map(|c| m.pools[0][c])
            .collect();
        assert_eq!(active, vec![10, 11, 12]);
    }

    #[test]
    fn mismatched_parts_error() {
        let h = ItemSet::from_items(5, [1]);
        assert!(sample_mixed(sample_batch(&[1], &[&h], 2), random_part(2, 2, 1)).is_err());
    }
}
