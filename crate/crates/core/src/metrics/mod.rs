//! Full-corpus ranking metrics, popularity-stratified evaluation and
//! multi-run aggregation.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_popularity, Cohort, CohortMap, Dataset, EvalCase, PopularityTable};
use crate::seqmodel::Retriever;
use crate::{Error, ItemId, Result, Scalar};

/// Top-`k` recommendation for one case, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    items: Vec<ItemId>,
    k: usize,
}

impl RankedList {
    pub fn new(items: Vec<ItemId>, k: usize) -> Result<Self> {
        if items.len() > k {
            return Err(Error::Input(format!(
                "ranked list of {} items exceeds k={k}",
                items.len()
            )));
        }
        let mut seen = HashSet::with_capacity(items.len());
        if let Some(dup) = items.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::Input(format!("item {dup} appears twice in a ranked list")));
        }
        Ok(Self { items, k })
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// 1-based rank of `item`.
    pub fn rank_of(&self, item: ItemId) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }

    /// The first `k` entries as a list with cutoff `k`.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            items: self.items[..self.items.len().min(k)].to_vec(),
            k,
        }
    }
}

/// A ranked list and its held-out label.
pub type Case = (RankedList, ItemId);

fn mean_over(cases: &[Case], gain: impl Fn(usize) -> f64) -> Option<f64> {
    if cases.is_empty() {
        return None;
    }
    // Empty float sums are -0.0; fold from +0.0 so misses report 0.
    let total = cases
        .iter()
        .filter_map(|(l, y)| l.rank_of(*y))
        .map(gain)
        .fold(0.0, |a, g| a + g);
    Some(total / cases.len() as f64)
}

/// Fraction of cases whose label is in the list; `None` for no cases.
pub fn hit_rate(cases: &[Case]) -> Option<f64> {
    mean_over(cases, |_| 1.0)
}

/// Mean of `1/log2(rank + 1)` over cases, zero for a miss.
pub fn ndcg(cases: &[Case]) -> Option<f64> {
    mean_over(cases, |r| 1.0 / ((r + 1) as f64).log2())
}

/// Cases per label cohort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub total: usize,
    pub head: usize,
    pub mid: usize,
    pub tail: usize,
    pub unseen: usize,
}

/// Metric values as fractions; `None` where the case subset is empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub hr_total: Option<f64>,
    pub hr_head: Option<f64>,
    pub hr_mid: Option<f64>,
    pub hr_tail: Option<f64>,
    pub ndcg_total: Option<f64>,
    pub ndcg_head: Option<f64>,
    pub ndcg_mid: Option<f64>,
    pub ndcg_tail: Option<f64>,
    /// Percentage in `[0, 100]`.
    pub balance: Option<f64>,
}

impl MetricValues {
    pub const FIELDS: [&'static str; 9] = [
        "hr_total",
        "hr_head",
        "hr_mid",
        "hr_tail",
        "ndcg_total",
        "ndcg_head",
        "ndcg_mid",
        "ndcg_tail",
        "balance",
    ];

    /// Values in [`Self::FIELDS`] order.
    pub fn to_array(&self) -> [Option<f64>; 9] {
        [
            self.hr_total,
            self.hr_head,
            self.hr_mid,
            self.hr_tail,
            self.ndcg_total,
            self.ndcg_head,
            self.ndcg_mid,
            self.ndcg_tail,
            self.balance,
        ]
    }

    pub fn from_array(a: [Option<f64>; 9]) -> Self {
        Self {
            hr_total: a[0],
            hr_head: a[1],
            hr_mid: a[2],
            hr_tail: a[3],
            ndcg_total: a[4],
            ndcg_head: a[5],
            ndcg_mid: a[6],
            ndcg_tail: a[7],
            balance: a[8],
        }
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        let i = Self::FIELDS.iter().position(|&f| f == field)?;
        self.to_array()[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub k: usize,
    pub values: MetricValues,
    /// Set when head, mid and tail hit rates are all zero.
    pub balance_degenerate: bool,
    pub counts: CaseCounts,
}

/// Per-cohort and total HR/NDCG at cutoff `k`, cohorts taken from the label.
/// Unseen labels count toward the total only.
pub fn cohort_metrics(cases: &[Case], cohorts: &CohortMap, k: usize) -> Result<MetricsRecord> {
    if let Some((l, _)) = cases.iter().find(|(l, _)| l.k() != k) {
        return Err(Error::Input(format!(
            "case with cutoff {} in an evaluation at k={k}",
            l.k()
        )));
    }
    let mut parts: [Vec<Case>; 3] = Default::default();
    let mut unseen = 0;
    for case in cases {
        match cohorts.cohort(case.1) {
            Cohort::Head => parts[0].push(case.clone()),
            Cohort::Mid => parts[1].push(case.clone()),
            Cohort::Tail => parts[2].push(case.clone()),
            Cohort::Unseen => unseen += 1,
        }
    }
    let [head, mid, tail] = &parts;
    let (hr_head, hr_mid, hr_tail) = (hit_rate(head), hit_rate(mid), hit_rate(tail));
    let (balance, degenerate) = match (hr_head, hr_mid, hr_tail) {
        (Some(h), Some(m), Some(t)) => {
            let b = balance(h, m, t)?;
            (Some(b.value), b.degenerate)
        }
        _ => (None, false),
    };
    Ok(MetricsRecord {
        k,
        values: MetricValues {
            hr_total: hit_rate(cases),
            hr_head,
            hr_mid,
            hr_tail,
            ndcg_total: ndcg(cases),
            ndcg_head: ndcg(head),
            ndcg_mid: ndcg(mid),
            ndcg_tail: ndcg(tail),
            balance,
        },
        balance_degenerate: degenerate,
        counts: CaseCounts {
            total: cases.len(),
            head: head.len(),
            mid: mid.len(),
            tail: tail.len(),
            unseen,
        },
    })
}

/// Mean absolute pairwise difference over twice the mean:
/// `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² μ)`. Zero for an all-zero input.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("gini of an empty vector".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "gini requires finite non-negative values, got {v}"
        )));
    }
    let n = values.len() as f64;
    let sum = values.iter().fold(0.0, |a, v| a + v);
    if sum == 0.0 {
        return Ok(0.0);
    }
    let mut diff = 0.0;
    for a in values {
        for b in values {
            diff += (a - b).abs();
        }
    }
    Ok(diff / (2.0 * n * sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    /// `(1 − gini) × 100`.
    pub value: f64,
    pub degenerate: bool,
}

pub fn balance(hr_head: f64, hr_mid: f64, hr_tail: f64) -> Result<Balance> {
    let v = [hr_head, hr_mid, hr_tail];
    Ok(Balance {
        value: (1.0 - gini(&v)?) * 100.0,
        degenerate: v.iter().all(|&x| x == 0.0),
    })
}

/// Anything that produces a top-`k` list from a user's history.
pub trait Recommender {
    fn recommend(&self, history: &[ItemId], k: usize) -> Result<Vec<ItemId>>;
}

impl<T: Scalar> Recommender for Retriever<'_, T> {
    fn recommend(&self, history: &[ItemId], k: usize) -> Result<Vec<ItemId>> {
        self.top_k(history, k)
    }
}

/// Popularity baseline: one list for everybody, history not excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopRec {
    ranking: Vec<ItemId>,
}

impl PopRec {
    /// Seen items by frequency descending then id; unseen items follow by id.
    pub fn new(pop: &PopularityTable) -> Self {
        let mut ranking = pop.ranked_items();
        ranking.extend((1..=pop.num_items() as ItemId).filter(|&i| pop.freq[i as usize] == 0));
        Self { ranking }
    }

    pub fn list(&self, k: usize) -> RankedList {
        RankedList {
            items: self.ranking[..self.ranking.len().min(k)].to_vec(),
            k,
        }
    }
}

impl Recommender for PopRec {
    fn recommend(&self, _history: &[ItemId], k: usize) -> Result<Vec<ItemId>> {
        Ok(self.list(k).items)
    }
}

/// The `k` most frequent training items.
pub fn poprec(train: &Dataset, k: usize) -> Result<RankedList> {
    Ok(PopRec::new(&build_popularity(train)?).list(k))
}

/// Ranks every case with `rec` and scores the lists.
pub fn evaluate(rec: &dyn Recommender, cases: &[EvalCase], cohorts: &CohortMap, k: usize) -> Result<MetricsRecord> {
    let scored = cases
        .iter()
        .map(|c| Ok((RankedList::new(rec.recommend(&c.history_items(), k)?, k)?, c.target)))
        .collect::<Result<Vec<Case>>>()?;
    cohort_metrics(&scored, cohorts, k)
}

/// Mean and sample standard deviation across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: MetricValues,
    pub std: MetricValues,
    /// Only one run: every std is zero by convention.
    pub single_run: bool,
}

/// Per-field mean and `n−1` standard deviation. A field absent from any run
/// is absent in the result. Values are summed in sorted order, so the output
/// does not depend on run order.
pub fn aggregate_runs(records: &[MetricsRecord]) -> Result<Aggregate> {
    let Some(first) = records.first() else {
        return Err(Error::Input("no runs to aggregate".into()));
    };
    if records.iter().any(|r| r.k != first.k) {
        return Err(Error::Input("runs use different cutoffs".into()));
    }
    let n = records.len();
    let mut mean = [None; 9];
    let mut std = [None; 9];
    for f in 0..9 {
        let Some(mut xs) = records
            .iter()
            .map(|r| r.values.to_array()[f])
            .collect::<Option<Vec<f64>>>()
        else {
            continue;
        };
        xs.sort_by(f64::total_cmp);
        let m = xs.iter().fold(0.0, |a, x| a + x) / n as f64;
        let s = if n > 1 {
            let mut dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
            dev.sort_by(f64::total_cmp);
            (dev.iter().fold(0.0, |a, x| a + x) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        mean[f] = Some(m);
        std[f] = Some(s);
    }
    Ok(Aggregate {
        runs: n,
        mean: MetricValues::from_array(mean),
        std: MetricValues::from_array(std),
        single_run: n == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(items: &[ItemId], label: ItemId) -> Case {
        (RankedList::new(items.to_vec(), 10).unwrap(), label)
    }

    #[test]
    fn hit_and_ndcg_examples() {
        assert_eq!(hit_rate(&[case(&[5, 1, 2], 5)]), Some(1.0));
        assert_eq!(hit_rate(&[case(&[5, 1, 2], 9)]), Some(0.0));
        assert_eq!(hit_rate(&[]), None);
        assert_eq!(ndcg(&[case(&[5, 1, 2], 5)]), Some(1.0));
        assert_eq!(ndcg(&[case(&[5, 1, 2], 2)]), Some(0.5));
        assert_eq!(ndcg(&[]), None);
    }

    #[test]
    fn ranked_list_invariants() {
        assert!(RankedList::new(vec![1, 2, 1], 5).is_err());
        assert!(RankedList::new(vec![1, 2, 3], 2).is_err());
        assert_eq!(RankedList::new(vec![4, 2, 3], 3).unwrap().truncated(2).items(), &[4, 2]);
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert!((gini(&[1.0, 0.0, 0.0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((gini(&[3.0, 2.0, 1.0]).unwrap() - 8.0 / 36.0).abs() < 1e-12);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(gini(&[1.0, -0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn balance_examples() {
        assert!((balance(0.4, 0.0, 0.0).unwrap().value - 100.0 / 3.0).abs() < 1e-9);
        assert_eq!(balance(0.2, 0.2, 0.2).unwrap().value, 100.0);
        assert!((balance(3.0, 2.0, 1.0).unwrap().value - 77.777_777_777).abs() < 1e-6);
        let z = balance(0.0, 0.0, 0.0).unwrap();
        assert_eq!(z.value, 100.0);
        assert!(z.degenerate);
    }

    #[test]
    fn aggregate_examples() {
        let rec = |hr| MetricsRecord {
            k: 10,
            values: MetricValues {
                hr_total: Some(hr),
                ..Default::default()
            },
            balance_degenerate: false,
            counts: CaseCounts::default(),
        };
        let a = aggregate_runs(&[rec(0.2), rec(0.4)]).unwrap();
        assert!((a.mean.hr_total.unwrap() - 0.3).abs() < 1e-12);
        assert!((a.std.hr_total.unwrap() - 0.141_421_356).abs() < 1e-8);
        assert_eq!(a.mean.hr_head, None);
        let one = aggregate_runs(&[rec(0.25)]).unwrap();
        assert!(one.single_run);
        assert_eq!(one.std.hr_total, Some(0.0));
        let b = aggregate_runs(&[rec(0.4), rec(0.2)]).unwrap();
        assert_eq!(a, b);
    }
}
