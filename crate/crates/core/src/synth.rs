//! Synthetic interaction logs with a long-tailed item popularity, clustered
//! user tastes and item-to-item transitions, shaped like a small movie-rating
//! log (about 1k users, 1.7k items, 100k interactions).

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::dataset::Interaction;
use crate::pipeline::rng_stream;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Minimum events per user.
    pub min_len: usize,
    /// Mean events per user above the minimum (geometric tail).
    pub mean_extra_len: f64,
    /// Popularity exponent: item of rank `r` has base weight `r^-zipf`.
    pub zipf: f64,
    pub clusters: usize,
    /// Favourite clusters per user.
    pub user_clusters: usize,
    /// Chance the next event follows a successor of the previous item.
    pub transition_prob: f64,
    /// Successors per item.
    pub successors: usize,
    /// Timeline length in seconds.
    pub horizon: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 943,
            num_items: 1682,
            min_len: 20,
            mean_extra_len: 86.0,
            zipf: 1.0,
            clusters: 18,
            user_clusters: 3,
            transition_prob: 0.5,
            successors: 4,
            horizon: 200 * 86_400,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.num_users > 0
            && self.num_items > self.clusters
            && self.clusters > 0
            && (1..=self.clusters).contains(&self.user_clusters)
            && self.min_len >= 1
            && self.mean_extra_len >= 0.0
            && self.zipf >= 0.0
            && (0.0..=1.0).contains(&self.transition_prob)
            && self.successors >= 1
            && self.horizon > 0;
        if !ok {
            return Err(Error::Config(format!("invalid synthetic data settings: {self:?}")));
        }
        Ok(())
    }
}

/// Generates interactions in user-major, time-ascending order. Every user's
/// activity extends to the end of the timeline, so temporal splits leave most
/// users with held-out events. Users never repeat an item.
pub fn generate(config: &SynthConfig, seed: u64) -> Result<Vec<Interaction>> {
    config.validate()?;
    let mut rng = rng_stream(seed, 0);
    let n = config.num_items;

    // Popularity rank is a random permutation of item ids.
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.shuffle(&mut rng);
    let mut weight = vec![0.0; n];
    for (r, &item) in by_rank.iter().enumerate() {
        weight[item] = ((r + 1) as f64).powf(-config.zipf);
    }
    // Equal-sized clusters, independent of popularity.
    let mut shuffled: Vec<usize> = (0..n).collect();
    shuffled.shuffle(&mut rng);
    let mut cluster_of = vec![0; n];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); config.clusters];
    for (k, &i) in shuffled.iter().enumerate() {
        cluster_of[i] = k % config.clusters;
        members[k % config.clusters].push(i);
    }
    let samplers: Vec<WeightedAliasIndex<f64>> = members
        .iter()
        .map(|m| WeightedAliasIndex::new(m.iter().map(|&i| weight[i]).collect()).expect("positive weights"))
        .collect();
    let successors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let c = cluster_of[i];
            (0..config.successors)
                .map(|_| members[c][samplers[c].sample(&mut rng)])
                .collect()
        })
        .collect();

    let p_stop = 1.0 / (config.mean_extra_len + 1.0);
    let mut rows = Vec::new();
    for u in 0..config.num_users {
        let mut extra = 0usize;
        while rng.random::<f64>() >= p_stop && extra < 20 * n {
            extra += 1;
        }
        let len = (config.min_len + extra).min(n);
        let favourites: Vec<usize> = (0..config.user_clusters)
            .map(|_| rng.random_range(0..config.clusters))
            .collect();
        let start = rng.random_range(0..config.horizon / 2);
        let mut times: Vec<i64> = (0..len).map(|_| rng.random_range(start..=config.horizon)).collect();
        times.sort_unstable();

        let mut seen = vec![false; n];
        let mut prev: Option<usize> = None;
        for &ts in &times {
            let mut item = None;
            for _ in 0..50 {
                let cand = match prev {
                    Some(p) if rng.random::<f64>() < config.transition_prob => {
                        *successors[p].choose(&mut rng).expect("non-empty successors")
                    }
                    _ => {
                        let c = favourites[rng.random_range(0..favourites.len())];
                        members[c][samplers[c].sample(&mut rng)]
                    }
                };
                if !seen[cand] {
                    item = Some(cand);
                    break;
                }
            }
            let Some(item) = item.or_else(|| (0..n).map(|k| by_rank[k]).find(|&i| !seen[i])) else {
                break;
            };
            seen[item] = true;
            prev = Some(item);
            rows.push(Interaction::new(format!("u{}", u + 1), format!("i{}", item + 1), ts));
        }
    }
    Ok(rows)
}
