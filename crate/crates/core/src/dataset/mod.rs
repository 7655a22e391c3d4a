//! Interaction logs, user sequences, temporal splits and popularity statistics.

mod load;
mod popularity;
mod split;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, ItemId, Result};

pub use load::{load_interactions, parse_interactions, InputFormat, LoadReport};
pub use popularity::{
    assign_cohorts, build_popularity, dataset_stats, Cohort, CohortMap, CohortStats, DatasetStats, PopularityTable,
};
pub use split::{temporal_split, EvalCase, Split};

/// One raw interaction as read from disk. Ids are the external tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            timestamp,
        }
    }
}

/// An interaction with internal ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub item: ItemId,
    pub timestamp: i64,
}

/// One user's interactions, ascending by timestamp (ties keep file order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    /// Internal user index.
    pub user: u32,
    pub events: Vec<Event>,
}

impl UserSequence {
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.events.iter().map(|e| e.item)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// External/internal id bijections. `items[k]` is the external id of internal
/// item `k + 1`; `users[u]` is the external id of internal user `u`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMaps {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMaps {
    pub fn external_item(&self, item: ItemId) -> Option<&str> {
        (item as usize)
            .checked_sub(1)
            .and_then(|k| self.items.get(k))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub sequences: Vec<UserSequence>,
    pub num_items: usize,
    pub num_users: usize,
    pub id_maps: IdMaps,
}

impl Dataset {
    pub fn num_interactions(&self) -> usize {
        self.sequences.iter().map(UserSequence::len).sum()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.sequences.iter().flat_map(|s| s.events.iter().map(|e| e.timestamp))
    }
}

/// Builds contiguous-id user sequences, dropping users with fewer than
/// `min_len` interactions. Item ids are assigned by first appearance among the
/// retained interactions, in input order.
pub fn build_dataset(interactions: &[Interaction], min_len: usize) -> Result<Dataset> {
    if interactions.is_empty() {
        return Err(Error::TooSparse("no interactions".into()));
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for it in interactions {
        *counts.entry(it.user.as_str()).or_default() += 1;
    }

    let mut user_index: HashMap<&str, u32> = HashMap::new();
    let mut item_index: HashMap<&str, ItemId> = HashMap::new();
    let mut id_maps = IdMaps::default();
    // (input position, event) per user so the sort below can break ties by file order
    let mut per_user: Vec<Vec<(usize, Event)>> = Vec::new();

    for (pos, it) in interactions.iter().enumerate() {
        if counts[it.user.as_str()] < min_len {
            continue;
        }
        let u = *user_index.entry(it.user.as_str()).or_insert_with(|| {
            id_maps.users.push(it.user.clone());
            per_user.push(Vec::new());
            (id_maps.users.len() - 1) as u32
        });
        let item = *item_index.entry(it.item.as_str()).or_insert_with(|| {
            id_maps.items.push(it.item.clone());
            id_maps.items.len() as ItemId
        });
        per_user[u as usize].push((
            pos,
            Event {
                item,
                timestamp: it.timestamp,
            },
        ));
    }

    if per_user.is_empty() {
        return Err(Error::TooSparse(format!(
            "every user has fewer than {min_len} interactions"
        )));
    }

    let sequences = per_user
        .into_iter()
        .enumerate()
        .map(|(u, mut evs)| {
            evs.sort_by_key(|(pos, e)| (e.timestamp, *pos));
            UserSequence {
                user: u as u32,
                events: evs.into_iter().map(|(_, e)| e).collect(),
            }
        })
        .collect::<Vec<_>>();

    Ok(Dataset {
        num_users: sequences.len(),
        num_items: id_maps.items.len(),
        sequences,
        id_maps,
    })
}

/// Dense membership set over item ids, used for history exclusion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemSet {
    bits: Vec<bool>,
    len: usize,
}

impl ItemSet {
    pub fn new(num_items: usize) -> Self {
        Self {
            bits: vec![false; num_items + 1],
            len: 0,
        }
    }

    pub fn from_items(num_items: usize, items: impl IntoIterator<Item = ItemId>) -> Self {
        let mut set = Self::new(num_items);
        for i in items {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, item: ItemId) {
        let slot = &mut self.bits[item as usize];
        if !*slot {
            *slot = true;
            self.len += 1;
        }
    }

    #[inline]
    pub fn contains(&self, item: ItemId) -> bool {
        self.bits.get(item as usize).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
