use std::fmt;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, ItemId, Result};

/// Per-item interaction counts in the training split, indexed by item id
/// (`freq[0]` is the padding slot and always zero).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub freq: Vec<u64>,
    pub total_interactions: u64,
}

impl PopularityTable {
    pub fn num_items(&self) -> usize {
        self.freq.len() - 1
    }

    pub fn seen_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.freq
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &f)| f > 0)
            .map(|(i, _)| i as ItemId)
    }

    /// Sampling weights proportional to `freq^gamma` over seen items,
    /// normalised to sum to one. Unseen items (and padding) get zero.
    pub fn weights(&self, gamma: f64) -> Vec<f64> {
        let raw: Vec<f64> = self
            .freq
            .iter()
            .enumerate()
            .map(|(i, &f)| if i == 0 || f == 0 { 0.0 } else { (f as f64).powf(gamma) })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / sum).collect()
    }

    /// Items by descending frequency, ties by ascending id; seen items only.
    pub fn ranked_items(&self) -> Vec<ItemId> {
        let mut items: Vec<ItemId> = self.seen_items().collect();
        items.sort_by(|&a, &b| self.freq[b as usize].cmp(&self.freq[a as usize]).then(a.cmp(&b)));
        items
    }
}

/// Counts every training interaction (repeats included).
pub fn build_popularity(train: &Dataset) -> Result<PopularityTable> {
    let mut freq = vec![0u64; train.num_items + 1];
    for item in train.sequences.iter().flat_map(|s| s.items()) {
        freq[item as usize] += 1;
    }
    let total_interactions: u64 = freq.iter().sum();
    if total_interactions == 0 {
        return Err(Error::Input("training split has no interactions".into()));
    }
    Ok(PopularityTable {
        freq,
        total_interactions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Head,
    Mid,
    Tail,
    Unseen,
}

impl Cohort {
    pub const ALL: [Cohort; 4] = [Cohort::Head, Cohort::Mid, Cohort::Tail, Cohort::Unseen];
    pub const RANKED: [Cohort; 3] = [Cohort::Head, Cohort::Mid, Cohort::Tail];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Head => "head",
            Cohort::Mid => "mid",
            Cohort::Tail => "tail",
            Cohort::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMap {
    /// Label per item id; slot 0 (padding) is `Unseen`.
    pub labels: Vec<Cohort>,
    pub theta_head: f64,
    pub theta_mid: f64,
}

impl CohortMap {
    #[inline]
    pub fn cohort(&self, item: ItemId) -> Cohort {
        self.labels.get(item as usize).copied().unwrap_or(Cohort::Unseen)
    }

    pub fn items_in(&self, cohort: Cohort) -> impl Iterator<Item = ItemId> + '_ {
        self.labels
            .iter()
            .enumerate()
            .skip(1)
            .filter(move |(_, &c)| c == cohort)
            .map(|(i, _)| i as ItemId)
    }
}

/// Labels items by cumulative share of training interactions: walking items
/// in descending frequency, Head is the shortest prefix reaching `theta_head`,
/// Mid extends it until `theta_mid`, the remaining seen items are Tail.
pub fn assign_cohorts(pop: &PopularityTable, theta_head: f64, theta_mid: f64) -> Result<CohortMap> {
    if !(0.0 < theta_head && theta_head < theta_mid && theta_mid < 1.0) {
        return Err(Error::Config(format!(
            "cohort thresholds must satisfy 0 < head < mid < 1, got ({theta_head}, {theta_mid})"
        )));
    }
    const TOL: f64 = 1e-12;
    let mut labels = vec![Cohort::Unseen; pop.freq.len()];
    let total = pop.total_interactions as f64;
    let mut cum = 0u64;
    let mut current = Cohort::Head;
    for item in pop.ranked_items() {
        labels[item as usize] = current;
        cum += pop.freq[item as usize];
        let share = cum as f64 / total;
        if current == Cohort::Head && share >= theta_head - TOL {
            current = if share >= theta_mid - TOL {
                Cohort::Tail
            } else {
                Cohort::Mid
            };
        } else if current == Cohort::Mid && share >= theta_mid - TOL {
            current = Cohort::Tail;
        }
    }
    Ok(CohortMap {
        labels,
        theta_head,
        theta_mid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortStats {
    pub cohort: Cohort,
    pub items: usize,
    pub item_share_pct: f64,
    pub interaction_share_pct: f64,
    /// Median over the cohort's items of the percentage of users who touched
    /// the item; absent for an empty cohort.
    pub mpu_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_interactions: u64,
    pub cohorts: Vec<CohortStats>,
    /// `(rank, freq / total)` for seen items, rank starting at 1.
    pub histogram: Vec<(usize, f64)>,
}

impl DatasetStats {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("rank,normalized_frequency\n");
        for (rank, f) in &self.histogram {
            out.push_str(&format!("{rank},{f}\n"));
        }
        out
    }
}

pub fn dataset_stats(pop: &PopularityTable, cohorts: &CohortMap, train: &Dataset) -> Result<DatasetStats> {
    if cohorts.labels.len() != pop.freq.len() || train.num_items + 1 != pop.freq.len() {
        return Err(Error::Input(
            "popularity, cohorts and dataset disagree on item count".into(),
        ));
    }
    let num_items = pop.num_items();
    let users = train.sequences.len();

    let mut distinct_users = vec![0usize; num_items + 1];
    for seq in &train.sequences {
        let mut items: Vec<ItemId> = seq.items().collect();
        items.sort_unstable();
        items.dedup();
        for i in items {
            distinct_users[i as usize] += 1;
        }
    }

    let cohort_rows = Cohort::ALL
        .iter()
        .map(|&c| {
            let items: Vec<ItemId> = cohorts.items_in(c).collect();
            let interactions: u64 = items.iter().map(|&i| pop.freq[i as usize]).sum();
            let mut pcts: Vec<f64> = items
                .iter()
                .map(|&i| distinct_users[i as usize] as f64 / users.max(1) as f64 * 100.0)
                .collect();
            CohortStats {
                cohort: c,
                items: items.len(),
                item_share_pct: items.len() as f64 / num_items.max(1) as f64 * 100.0,
                interaction_share_pct: interactions as f64 / pop.total_interactions as f64 * 100.0,
                mpu_pct: median(&mut pcts),
            }
        })
        .collect();

    let total = pop.total_interactions as f64;
    let histogram = pop
        .ranked_items()
        .into_iter()
        .enumerate()
        .map(|(r, i)| (r + 1, pop.freq[i as usize] as f64 / total))
        .collect();

    Ok(DatasetStats {
        num_users: users,
        num_items,
        num_interactions: pop.total_interactions,
        cohorts: cohort_rows,
        histogram,
    })
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}
