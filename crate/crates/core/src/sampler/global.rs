use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::dataset::{ItemSet, PopularityTable};
use crate::{Error, ItemId, Result};

/// Rejection attempts per draw before falling back to a renormalised draw over
/// the eligible items.
const MAX_REJECTIONS: usize = 100;

/// Draws items i.i.d. from `freq^gamma` over seen items, with O(1) alias draws.
#[derive(Debug, Clone)]
pub struct GlobalSampler {
    gamma: f64,
    weights: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
    support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalDraw {
    pub items: Vec<ItemId>,
    /// Fewer eligible items than requested draws (duplicates are then
    /// unavoidable), or none at all.
    pub shortfall: bool,
}

impl GlobalDraw {
    /// Pads to `n` slots with id 0; padded slots come back marked excluded.
    pub fn into_padded(self, n: usize) -> (Vec<ItemId>, Vec<bool>) {
        let mut excl = vec![false; self.items.len()];
        let mut items = self.items;
        excl.resize(n, true);
        items.resize(n, 0);
        (items, excl)
    }
}

impl GlobalSampler {
    pub fn new(pop: &PopularityTable, gamma: f64) -> Result<Self> {
        let weights = pop.weights(gamma);
        let support = weights.iter().filter(|&&w| w > 0.0).count();
        if support == 0 {
            return Err(Error::Input("popularity table has no seen items".into()));
        }
        let alias = WeightedAliasIndex::new(weights.clone()).map_err(|e| Error::Input(format!("alias table: {e}")))?;
        Ok(Self {
            gamma,
            weights,
            alias,
            support,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Normalised weights indexed by item id.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eligible(&self, exclude: &ItemSet) -> Vec<ItemId> {
        (1..self.weights.len())
            .filter(|&i| self.weights[i] > 0.0 && !exclude.contains(i as ItemId))
            .map(|i| i as ItemId)
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, exclude: &ItemSet, rng: &mut R) -> GlobalDraw {
        // exact eligible count only needed when exclusions could bite
        let eligible_count = if self.support >= exclude.len() + n {
            None
        } else {
            Some(self.eligible(exclude).len())
        };
        if eligible_count == Some(0) {
            return GlobalDraw {
                items: Vec::new(),
                shortfall: true,
            };
        }

        let mut fallback: Option<(Vec<ItemId>, Vec<f64>)> = None;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let mut drawn = None;
            for _ in 0..MAX_REJECTIONS {
                let i = self.alias.sample(rng) as ItemId;
                if !exclude.contains(i) {
                    drawn = Some(i);
                    break;
                }
            }
            let item = drawn.unwrap_or_else(|| {
                let (ids, cum) = fallback.get_or_insert_with(|| {
                    let ids = self.eligible(exclude);
                    let mut acc = 0.0;
                    let cum = ids
                        .iter()
                        .map(|&i| {
                            acc += self.weights[i as usize];
                            acc
                        })
                        .collect();
                    (ids, cum)
                });
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let k = cum.partition_point(|&c| c <= u).min(ids.len() - 1);
                ids[k]
            });
            items.push(item);
        }
        GlobalDraw {
            items,
            shortfall: eligible_count.is_some_and(|c| c < n),
        }
    }
}

/// One-shot global draw: `n` i.i.d. items from `freq^gamma` outside `exclude`.
pub fn sample_global<R: Rng + ?Sized>(
    pop: &PopularityTable,
    gamma: f64,
    n: usize,
    exclude: &ItemSet,
    rng: &mut R,
) -> Result<GlobalDraw> {
    Ok(GlobalSampler::new(pop, gamma)?.sample(n, exclude, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pop(freqs: &[u64]) -> PopularityTable {
        let mut freq = vec![0];
        freq.extend_from_slice(freqs);
        PopularityTable {
            total_interactions: freqs.iter().sum(),
            freq,
        }
    }

    #[test]
    fn forced_outcome_when_one_item_left() {
        let p = pop(&[5; 10]);
        let excl = ItemSet::from_items(10, (1..=10).filter(|&i| i != 4));
        let d = sample_global(&p, 1.0, 50, &excl, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(d.items.iter().all(|&i| i == 4));
        assert_eq!(d.items.len(), 50);
        assert!(d.shortfall);
    }

    #[test]
    fn nothing_eligible_returns_empty() {
        let p = pop(&[1, 1]);
        let excl = ItemSet::from_items(2, [1, 2]);
        let d = sample_global(&p, 0.0, 3, &excl, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(d.items.is_empty() && d.shortfall);
        let (items, excl) = d.into_padded(3);
        assert_eq!(items, vec![0, 0, 0]);
        assert_eq!(excl, vec![true; 3]);
    }

    #[test]
    fn never_returns_excluded_or_unseen() {
        let p = pop(&[3, 0, 1, 9, 2, 0, 4]);
        let excl = ItemSet::from_items(7, [4, 7]);
        let s = GlobalSampler::new(&p, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let d = s.sample(3, &excl, &mut rng);
            assert!(!d.shortfall);
            assert!(d.items.iter().all(|&i| ![0, 2, 4, 6, 7].contains(&i)));
        }
    }

    #[test]
    fn heavy_exclusion_uses_fallback() {
        // the only eligible item has weight 1e-6 relative; rejection almost always fails
        let mut freqs = vec![1_000_000u64; 20];
        freqs.push(1);
        let p = pop(&freqs);
        let excl = ItemSet::from_items(21, 1..=20);
        let d = sample_global(&p, 1.0, 10, &excl, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(d.items, vec![21; 10]);
    }

    #[test]
    fn seeded_streams_repeat() {
        let p = pop(&[1, 2, 3, 4, 5]);
        let s = GlobalSampler::new(&p, 1.0).unwrap();
        let e = ItemSet::new(5);
        let a = s.sample(100, &e, &mut ChaCha8Rng::seed_from_u64(11));
        let b = s.sample(100, &e, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }
}
