//! Split export and sampler audit traces.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{output::OutputDir, ExperimentConfig, Prepared, SweepPoint};
use crate::dataset::{Dataset, EvalCase};
use crate::pipeline::{generate_minibatch, rng_stream, stream, EpochCursor, TrainData};
use crate::sampler::{adaptive_filter, NegativeScorer, SamplerTables};
use crate::seqmodel::{ModelConfig, SasRecModel};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub t_train: i64,
    pub t_val: i64,
    pub train_users: usize,
    pub train_interactions: usize,
    pub num_items: usize,
    pub val_cases: usize,
    pub test_cases: usize,
}

fn external_user(ds: &Dataset, user: u32) -> &str {
    ds.id_maps.users.get(user as usize).map_or("?", String::as_str)
}

fn external_item(ds: &Dataset, item: u32) -> &str {
    ds.id_maps.external_item(item).unwrap_or("?")
}

fn cases_tsv(ds: &Dataset, cases: &[EvalCase]) -> String {
    let mut s = String::from("user\titem\ttimestamp\thistory_len\n");
    for c in cases {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            external_user(ds, c.user),
            external_item(ds, c.target),
            c.target_timestamp,
            c.history.len()
        );
    }
    s
}

/// Writes the split boundaries, the train interactions and both case lists
/// (external ids) under `dir`, with a manifest.
pub fn write_split(prepared: &Prepared, dir: &Path) -> Result<SplitSummary> {
    let split = &prepared.split;
    let ds = &prepared.dataset;
    let summary = SplitSummary {
        t_train: split.t_train,
        t_val: split.t_val,
        train_users: split.train.sequences.len(),
        train_interactions: split.train.num_interactions(),
        num_items: split.train.num_items,
        val_cases: split.val_cases.len(),
        test_cases: split.test_cases.len(),
    };
    let out = OutputDir::create(dir)?;
    out.write_json("split.json", &summary)?;
    let mut train = String::from("user\titem\ttimestamp\n");
    for seq in &split.train.sequences {
        for e in &seq.events {
            let _ = writeln!(
                train,
                "{}\t{}\t{}",
                external_user(ds, seq.user),
                external_item(ds, e.item),
                e.timestamp
            );
        }
    }
    out.write("train.tsv", train.as_bytes())?;
    out.write("val.tsv", cases_tsv(ds, &split.val_cases).as_bytes())?;
    out.write("test.tsv", cases_tsv(ds, &split.test_cases).as_bytes())?;
    out.finish()?;
    Ok(summary)
}

/// CSV of the first `batches` producer mini-batches of run seed `seed`: one
/// row per supervised `(user, position, candidate slot)`. Adaptive retention
/// is scored with `model`, or with a freshly initialised one when absent.
pub fn sample_trace(
    prepared: &Prepared,
    config: &ExperimentConfig,
    point: &SweepPoint,
    seed: u64,
    batches: usize,
    model: Option<&SasRecModel<f64>>,
) -> Result<String> {
    let sampler = config.sampler_config(point);
    sampler.validate_for_batch(config.batch_size)?;
    let data = TrainData::new(&prepared.split.train, config.model.max_seq_len)?;
    let tables = SamplerTables::new(&prepared.popularity, sampler.gamma)?;
    let fresh;
    let model = match model {
        Some(m) => m,
        None => {
            let mc = ModelConfig {
                num_items: prepared.split.train.num_items,
                ..config.model.clone()
            };
            fresh = SasRecModel::new(mc, &mut rng_stream(seed, stream::INIT))?;
            &fresh
        }
    };
    let mut rng = rng_stream(seed, stream::PRODUCER);
    let mut cursor = EpochCursor::default();
    let mut csv = String::from("batch,user,position,candidate,excluded,retained\n");
    for b in 0..batches {
        let mut mb = generate_minibatch(&data, &sampler, &tables, &mut cursor, config.batch_size, &mut rng)?;
        if sampler.method.is_adaptive() {
            let scores = model.score_candidates(&mb.sequences, &mb.negatives.pools);
            mb.negatives.retention = Some(adaptive_filter(&scores, &mb.negatives, sampler.adaptive_k)?);
        }
        let neg = &mb.negatives;
        for (u, user) in mb.users.iter().enumerate() {
            for t in (0..neg.shape.seq_len).filter(|&t| mb.pad_mask[u][t]) {
                for (c, item) in neg.pools[u].iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{b},{user},{t},{item},{},{}",
                        neg.is_excluded(u, t, c),
                        neg.is_retained(u, t, c)
                    );
                }
            }
        }
    }
    Ok(csv)
}
