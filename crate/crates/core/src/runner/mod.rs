//! Experiment orchestration: data preparation, seeded repeats over a sweep,
//! the method comparison table and hashed result files.

mod config;
mod output;
mod tools;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    assign_cohorts, build_dataset, build_popularity, dataset_stats, load_interactions, temporal_split, CohortMap,
    Dataset, DatasetStats, PopularityTable, Split,
};
use crate::metrics::{aggregate_runs, evaluate, Aggregate, MetricValues, MetricsRecord, PopRec};
use crate::pipeline::{train_run, EpochLog};
use crate::sampler::Method;
use crate::seqmodel::{ModelConfig, Retriever};
use crate::synth::generate;
use crate::{Error, Result, SasRec};

pub use config::{config_path, DataConfig, DataSource, ExperimentConfig, SweepPoint, CONFIG_ENV};
pub use output::{
    read_runs_csv, verify_manifest, write_manifest, ComparisonRow, ComparisonTable, Manifest, ManifestEntry,
};
pub use tools::{sample_trace, write_split, SplitSummary};

/// Cutoff of every reported metric.
pub const EVAL_K: usize = 10;

/// Data shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub popularity: PopularityTable,
    pub cohorts: CohortMap,
    pub stats: DatasetStats,
    /// Rows the loader could not parse.
    pub skipped_rows: usize,
}

pub fn load_dataset(data: &DataConfig) -> Result<(Dataset, usize)> {
    match &data.source {
        DataSource::File { path, format } => {
            let report = load_interactions(path, format)?;
            Ok((build_dataset(&report.interactions, data.min_len)?, report.skipped))
        }
        DataSource::Synthetic { config, seed } => Ok((build_dataset(&generate(config, *seed)?, data.min_len)?, 0)),
    }
}

/// Loads, splits and labels the data. Deterministic in `data`.
pub fn prepare(data: &DataConfig) -> Result<Prepared> {
    let (dataset, skipped_rows) = load_dataset(data)?;
    let split = temporal_split(&dataset, data.q_train, data.q_val)?;
    let popularity = build_popularity(&split.train)?;
    let cohorts = assign_cohorts(&popularity, data.theta_head, data.theta_mid)?;
    let stats = dataset_stats(&popularity, &cohorts, &split.train)?;
    Ok(Prepared {
        dataset,
        split,
        popularity,
        cohorts,
        stats,
        skipped_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

/// Outcome of one seeded repeat at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub point: SweepPoint,
    pub run: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub best_epoch: Option<usize>,
    pub best_val_ndcg10: Option<f64>,
    /// Test metrics of the selected checkpoint.
    pub metrics: Option<MetricsRecord>,
    pub fresh_batches: usize,
    pub reused_batches: usize,
}

/// A finished run with its per-epoch log and selected model.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub log: Vec<EpochLog>,
    pub model: Option<SasRec>,
}

/// Trains one repeat and evaluates the selected checkpoint on test. Faults
/// are captured in the record rather than returned.
pub fn run_once(prepared: &Prepared, config: &ExperimentConfig, point: SweepPoint, run: usize) -> RunOutput {
    let seed = config.base_seed.wrapping_add(run as u64);
    let sampler = config.sampler_config(&point);
    let train = config.train_config(&point);
    let model_config = ModelConfig {
        num_items: prepared.split.train.num_items,
        ..config.model.clone()
    };
    let result = train_run::<f64>(&prepared.split, &model_config, &sampler, &train, seed).and_then(|out| {
        let metrics = evaluate(
            &Retriever::new(&out.model),
            &prepared.split.test_cases,
            &prepared.cohorts,
            EVAL_K,
        )?;
        Ok((out, metrics))
    });
    match result {
        Ok((out, metrics)) => RunOutput {
            record: RunRecord {
                point,
                run,
                seed,
                status: RunStatus::Ok,
                best_epoch: Some(out.best_epoch),
                best_val_ndcg10: Some(out.best_val_ndcg),
                metrics: Some(metrics),
                fresh_batches: out.fresh_batches,
                reused_batches: out.reused_batches,
            },
            log: out.log,
            model: Some(out.model),
        },
        Err(e) => RunOutput {
            record: RunRecord {
                point,
                run,
                seed,
                status: RunStatus::Failed(e.to_string()),
                best_epoch: None,
                best_val_ndcg10: None,
                metrics: None,
                fresh_batches: 0,
                reused_batches: 0,
            },
            log: Vec::new(),
            model: None,
        },
    }
}

/// Aggregate over the successful runs of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAggregate {
    pub point: SweepPoint,
    pub failed: usize,
    /// Absent when every run failed.
    pub aggregate: Option<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<PointAggregate>,
    pub poprec: MetricsRecord,
}

impl ExperimentReport {
    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.status != RunStatus::Ok).count()
    }
}

fn aggregate_point(point: SweepPoint, runs: &[RunRecord]) -> Result<PointAggregate> {
    let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.point == point).collect();
    let ok: Vec<MetricsRecord> = mine.iter().filter_map(|r| r.metrics.clone()).collect();
    Ok(PointAggregate {
        point,
        failed: mine.len() - ok.len(),
        aggregate: if ok.is_empty() {
            None
        } else {
            Some(aggregate_runs(&ok)?)
        },
    })
}

/// PopRec on the test cases; needs no training.
pub fn poprec_metrics(prepared: &Prepared) -> Result<MetricsRecord> {
    evaluate(
        &PopRec::new(&prepared.popularity),
        &prepared.split.test_cases,
        &prepared.cohorts,
        EVAL_K,
    )
}

/// Runs every sweep point `repeats` times (seed `base_seed + r`) and writes
/// all result files under `out_dir`. A failed run is recorded and left out of
/// the aggregates; only configuration and I/O problems return an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = prepare(&config.data)?;
    let out = output::OutputDir::create(&config.out_dir)?;
    // The output location is not part of the result, so identical
    // experiments written to different directories hash identically.
    let text: String = config
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("run.out_dir"))
        .map(|l| format!("{l}\n"))
        .collect();
    out.write("config.txt", text.as_bytes())?;
    out.write("popularity_hist.csv", prepared.stats.histogram_csv().as_bytes())?;
    out.write_json("dataset_stats.json", &prepared.stats)?;

    let mut runs = Vec::new();
    for point in config.sweep() {
        for r in 0..config.repeats {
            let result = run_once(&prepared, config, point, r);
            out.write_log(&point, r, &result.log)?;
            runs.push(result.record);
        }
    }
    let aggregates = config
        .sweep()
        .into_iter()
        .map(|p| aggregate_point(p, &runs))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport {
        poprec: poprec_metrics(&prepared)?,
        runs,
        aggregates,
    };
    out.write_report(&report)?;
    out.finish()?;
    Ok(report)
}

/// Table-shaped comparison of trained methods and PopRec.
pub fn compare_configs(configs: &[ExperimentConfig]) -> Result<ComparisonTable> {
    let Some(first) = configs.first() else {
        return Err(Error::Config("nothing to compare".into()));
    };
    if let Some(c) = configs.iter().find(|c| c.data != first.data) {
        return Err(Error::Config(format!(
            "data, split and cohort settings must match across compared configurations ({:?} vs {:?})",
            first.data, c.data
        )));
    }
    for c in configs {
        c.validate()?;
    }
    let prepared = prepare(&first.data)?;
    let poprec = poprec_metrics(&prepared)?;
    let mut rows = vec![ComparisonRow::from_aggregate("PopRec", &aggregate_runs(&[poprec])?)];
    for c in configs {
        for point in c.sweep() {
            let records: Vec<MetricsRecord> = (0..c.repeats)
                .filter_map(|r| run_once(&prepared, c, point, r).record.metrics)
                .collect();
            let name = if c.sweep().len() == 1 {
                point.method.acronym().to_string()
            } else {
                format!(
                    "{} (lr={}, N={})",
                    point.method.acronym(),
                    point.learning_rate,
                    point.num_negatives
                )
            };
            let failed = c.repeats - records.len();
            let mut row = match records.is_empty() {
                true => ComparisonRow {
                    method: name,
                    runs: 0,
                    failed,
                    mean: MetricValues::default(),
                    std: MetricValues::default(),
                },
                false => ComparisonRow::from_aggregate(&name, &aggregate_runs(&records)?),
            };
            row.failed = failed;
            rows.push(row);
        }
    }
    Ok(ComparisonTable { rows })
}

/// Splits `base` into one configuration per method and compares them.
pub fn compare_methods(base: &ExperimentConfig, methods: &[Method]) -> Result<ComparisonTable> {
    let configs: Vec<ExperimentConfig> = methods
        .iter()
        .map(|&m| ExperimentConfig {
            methods: vec![m],
            learning_rates: vec![base.learning_rates[0]],
            num_negatives: vec![base.num_negatives[0]],
            ..base.clone()
        })
        .collect();
    compare_configs(&configs)
}

/// Writes `comparison.csv`, `comparison.json` and a manifest into `dir`.
pub fn write_comparison(dir: &Path, table: &ComparisonTable) -> Result<()> {
    let out = output::OutputDir::create(dir)?;
    out.write("comparison.csv", table.to_csv().as_bytes())?;
    out.write_json("comparison.json", table)?;
    out.finish()
}
