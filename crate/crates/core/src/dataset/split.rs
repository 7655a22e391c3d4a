use serde::{Deserialize, Serialize};

use super::{Dataset, Event, UserSequence};
use crate::{Error, ItemId, Result};

/// A held-out next-item prediction case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub user: u32,
    /// Interactions visible at prediction time, oldest first.
    pub history: Vec<Event>,
    pub target: ItemId,
    pub target_timestamp: i64,
}

impl EvalCase {
    pub fn history_items(&self) -> Vec<ItemId> {
        self.history.iter().map(|e| e.item).collect()
    }
}

/// Global temporal split. `train` keeps the full item id space of the source
/// dataset, so items first seen after `t_train` remain retrievable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Dataset,
    pub val_cases: Vec<EvalCase>,
    pub test_cases: Vec<EvalCase>,
    pub t_train: i64,
    pub t_val: i64,
}

/// Nearest-rank quantile of a sorted slice.
fn quantile(sorted: &[i64], q: f64) -> i64 {
    let n = sorted.len();
    let rank = (q * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Splits on calendar time: `t_train` and `t_val` are the `q_train`/`q_val`
/// quantiles of all interaction timestamps. Boundary ties go to the earlier
/// side. Each user contributes at most one validation case (earliest event in
/// `(t_train, t_val]`) and one test case (earliest event after `t_val`).
pub fn temporal_split(dataset: &Dataset, q_train: f64, q_val: f64) -> Result<Split> {
    if !(0.0 < q_train && q_train < q_val && q_val < 1.0) {
        return Err(Error::Config(format!(
            "split quantiles must satisfy 0 < q_train < q_val < 1, got ({q_train}, {q_val})"
        )));
    }
    let mut ts: Vec<i64> = dataset.timestamps().collect();
    if ts.is_empty() {
        return Err(Error::DegenerateSplit("dataset has no interactions".into()));
    }
    ts.sort_unstable();
    let t_train = quantile(&ts, q_train);
    let t_val = quantile(&ts, q_val);

    let mut train_seqs = Vec::new();
    let mut val_cases = Vec::new();
    let mut test_cases = Vec::new();

    for seq in &dataset.sequences {
        let train_end = seq.events.partition_point(|e| e.timestamp <= t_train);
        let val_end = seq.events.partition_point(|e| e.timestamp <= t_val);

        if train_end > 0 {
            train_seqs.push(UserSequence {
                user: seq.user,
                events: seq.events[..train_end].to_vec(),
            });
        }
        if train_end > 0 && train_end < val_end {
            let target = seq.events[train_end];
            val_cases.push(EvalCase {
                user: seq.user,
                history: seq.events[..train_end].to_vec(),
                target: target.item,
                target_timestamp: target.timestamp,
            });
        }
        if val_end > 0 && val_end < seq.events.len() {
            let target = seq.events[val_end];
            test_cases.push(EvalCase {
                user: seq.user,
                history: seq.events[..val_end].to_vec(),
                target: target.item,
                target_timestamp: target.timestamp,
            });
        }
    }

    let diag = || {
        format!(
            "t_train={t_train}, t_val={t_val}, timestamps [{}, {}], {} train users, {} val cases, {} test cases",
            ts[0],
            ts[ts.len() - 1],
            train_seqs.len(),
            val_cases.len(),
            test_cases.len()
        )
    };
    if train_seqs.is_empty() || val_cases.is_empty() || test_cases.is_empty() {
        return Err(Error::DegenerateSplit(diag()));
    }

    let train = Dataset {
        num_users: dataset.num_users,
        num_items: dataset.num_items,
        id_maps: dataset.id_maps.clone(),
        sequences: train_seqs,
    };
    Ok(Split {
        train,
        val_cases,
        test_cases,
        t_train,
        t_val,
    })
}

impl Split {
    /// Checks the leakage invariants; returns the first violation found.
    pub fn check_leakage(&self) -> std::result::Result<(), String> {
        for seq in &self.train.sequences {
            if let Some(e) = seq.events.iter().find(|e| e.timestamp > self.t_train) {
                return Err(format!("train event at {} after t_train", e.timestamp));
            }
        }
        let check = |cases: &[EvalCase], lo: i64, hi: Option<i64>, name: &str| {
            for c in cases {
                if c.history.is_empty() {
                    return Err(format!("{name} case for user {} has empty history", c.user));
                }
                if let Some(e) = c.history.iter().find(|e| e.timestamp > lo) {
                    return Err(format!("{name} history event at {} beyond boundary {lo}", e.timestamp));
                }
                if c.target_timestamp <= lo || hi.is_some_and(|h| c.target_timestamp > h) {
                    return Err(format!("{name} target at {} outside its window", c.target_timestamp));
                }
            }
            Ok(())
        };
        check(&self.val_cases, self.t_train, Some(self.t_val), "val")?;
        check(&self.test_cases, self.t_val, None, "test")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, Interaction};

    fn single_user(ts: impl IntoIterator<Item = i64>) -> Dataset {
        let rows: Vec<_> = ts
            .into_iter()
            .map(|t| Interaction::new("u", format!("i{t}"), t))
            .collect();
        build_dataset(&rows, 1).unwrap()
    }

    #[test]
    fn ten_events_boundaries() {
        let ds = single_user(1..=10);
        let s = temporal_split(&ds, 0.8, 0.9).unwrap();
        assert_eq!((s.t_train, s.t_val), (8, 9));
        let train_ts: Vec<_> = s.train.timestamps().collect();
        assert_eq!(train_ts, (1..=8).collect::<Vec<_>>());
        assert_eq!(s.val_cases.len(), 1);
        assert_eq!(s.val_cases[0].target_timestamp, 9);
        assert_eq!(s.val_cases[0].history.len(), 8);
        assert_eq!(s.test_cases[0].target_timestamp, 10);
        assert_eq!(s.test_cases[0].history.len(), 9);
        s.check_leakage().unwrap();
    }

    #[test]
    fn user_entirely_before_boundary_has_no_cases() {
        let rows: Vec<_> = (1..=10)
            .map(|t| Interaction::new("a", format!("x{t}"), t))
            .chain((1..=3).map(|t| Interaction::new("b", format!("y{t}"), t)))
            .collect();
        let ds = build_dataset(&rows, 1).unwrap();
        let s = temporal_split(&ds, 0.8, 0.9).unwrap();
        let b = ds.id_maps.users.iter().position(|u| u == "b").unwrap() as u32;
        assert!(s.train.sequences.iter().any(|q| q.user == b));
        assert!(s.val_cases.iter().chain(&s.test_cases).all(|c| c.user != b));
    }

    #[test]
    fn boundary_ties_go_to_the_earlier_split() {
        // many events share the t_train timestamp
        let ds = single_user([1, 2, 5, 5, 5, 5, 5, 5, 9, 10]);
        let s = temporal_split(&ds, 0.5, 0.9).unwrap();
        assert_eq!(s.t_train, 5);
        assert_eq!(s.train.num_interactions(), 8);
        assert_eq!(s.val_cases[0].target_timestamp, 9);
        s.check_leakage().unwrap();
    }

    #[test]
    fn empty_validation_window_is_degenerate() {
        // all mass at one timestamp: t_train == t_val == max
        let ds = single_user([7; 6]);
        assert!(matches!(temporal_split(&ds, 0.5, 0.9), Err(Error::DegenerateSplit(_))));
    }

    #[test]
    fn rejects_bad_quantiles() {
        let ds = single_user(1..=10);
        assert!(matches!(temporal_split(&ds, 0.9, 0.8), Err(Error::Config(_))));
        assert!(matches!(temporal_split(&ds, 0.0, 0.8), Err(Error::Config(_))));
    }
}
