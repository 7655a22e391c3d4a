//! Result files and the hash manifest.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentReport, RunRecord, RunStatus, SweepPoint};
use crate::metrics::{Aggregate, CaseCounts, MetricValues, MetricsRecord};
use crate::pipeline::EpochLog;
use crate::{Error, Result};

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Contents vary between identical runs (wall-clock fields).
    pub volatile: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Entries whose content must be reproducible.
    pub fn stable(&self) -> Vec<&ManifestEntry> {
        self.files.iter().filter(|e| !e.volatile).collect()
    }
}

fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Hashes `files` (relative to `dir`) into `dir/manifest.json`.
pub fn write_manifest(dir: &Path, files: &[(String, bool)]) -> Result<Manifest> {
    let mut entries = files
        .iter()
        .map(|(rel, volatile)| {
            let (sha256, bytes) = sha256_file(&dir.join(rel))?;
            Ok(ManifestEntry {
                path: rel.clone(),
                sha256,
                bytes,
                volatile: *volatile,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest { files: entries };
    let path = dir.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Re-hashes every listed file; returns the paths that no longer match.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let manifest = Manifest::load(dir)?;
    let mut bad = Vec::new();
    for e in &manifest.files {
        let (sha, bytes) = sha256_file(&dir.join(&e.path))?;
        if sha != e.sha256 || bytes != e.bytes {
            bad.push(e.path.clone());
        }
    }
    Ok(bad)
}

pub(super) struct OutputDir {
    root: PathBuf,
    written: RefCell<Vec<(String, bool)>>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: RefCell::new(Vec::new()),
        })
    }

    fn put(&self, rel: &str, bytes: &[u8], volatile: bool) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.borrow_mut().push((rel.to_string(), volatile));
        Ok(())
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.put(rel, bytes, false)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut json = serde_json::to_string_pretty(value)?;
        json.push('\n');
        self.put(rel, json.as_bytes(), false)
    }

    /// Per-epoch JSON lines; volatile because of `wall_clock_s`.
    pub fn write_log(&self, point: &SweepPoint, run: usize, log: &[EpochLog]) -> Result<()> {
        let mut text = String::new();
        for line in log {
            text.push_str(&serde_json::to_string(line)?);
            text.push('\n');
        }
        self.put(&format!("logs/{}_run{run}.jsonl", point.label()), text.as_bytes(), true)
    }

    pub fn write_report(&self, report: &ExperimentReport) -> Result<()> {
        self.write("runs.csv", &runs_csv(&report.runs)?)?;
        let mut jsonl = String::new();
        for r in &report.runs {
            jsonl.push_str(&serde_json::to_string(r)?);
            jsonl.push('\n');
        }
        self.write("runs.jsonl", jsonl.as_bytes())?;
        self.write("aggregate.csv", &aggregate_csv(report)?)?;
        self.write_json("aggregate.json", &report.aggregates)?;
        self.write_json("poprec.json", &report.poprec)?;
        self.write("scatter.csv", &scatter_csv(&report.runs)?)
    }

    pub fn finish(&self) -> Result<()> {
        write_manifest(&self.root, &self.written.borrow()).map(|_| ())
    }
}

const RUN_HEADER: [&str; 26] = [
    "method",
    "learning_rate",
    "num_negatives",
    "run",
    "seed",
    "status",
    "best_epoch",
    "best_val_ndcg10",
    "hr_total",
    "hr_head",
    "hr_mid",
    "hr_tail",
    "ndcg_total",
    "ndcg_head",
    "ndcg_mid",
    "ndcg_tail",
    "balance",
    "balance_degenerate",
    "cases_total",
    "cases_head",
    "cases_mid",
    "cases_tail",
    "cases_unseen",
    "fresh_batches",
    "reused_batches",
    "error",
];

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn runs_csv(runs: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_HEADER).map_err(csv_error)?;
    for r in runs {
        let values = r.metrics.as_ref().map(|m| m.values.to_array()).unwrap_or([None; 9]);
        let counts = r.metrics.as_ref().map(|m| m.counts);
        let (status, error) = match &r.status {
            RunStatus::Ok => ("ok", String::new()),
            RunStatus::Failed(e) => ("failed", e.clone()),
        };
        let mut row = vec![
            r.point.method.to_string(),
            r.point.learning_rate.to_string(),
            r.point.num_negatives.to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            status.to_string(),
            r.best_epoch.map_or(String::new(), |e| e.to_string()),
            fmt_opt(r.best_val_ndcg10),
        ];
        row.extend(values.iter().map(|v| fmt_opt(*v)));
        row.push(
            r.metrics
                .as_ref()
                .map_or(String::new(), |m| m.balance_degenerate.to_string()),
        );
        for c in [
            counts.map(|c| c.total),
            counts.map(|c| c.head),
            counts.map(|c| c.mid),
            counts.map(|c| c.tail),
            counts.map(|c| c.unseen),
        ] {
            row.push(c.map_or(String::new(), |c| c.to_string()));
        }
        row.push(r.fresh_batches.to_string());
        row.push(r.reused_batches.to_string());
        row.push(error);
        w.write_record(&row).map_err(csv_error)?;
    }
    finish_csv(w)
}

/// Parses a `runs.csv` back into `(sweep point, run, test metrics)`;
/// failed runs carry no metrics.
pub fn read_runs_csv(path: &Path) -> Result<Vec<(SweepPoint, usize, Option<MetricsRecord>)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_error)?;
    let mut out = Vec::new();
    let bad = |what: &str| Error::Format(format!("{}: bad {what}", path.display()));
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>> {
            match get(i) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(RUN_HEADER[i])),
            }
        };
        let count = |i: usize| -> Result<usize> { get(i).parse().map_err(|_| bad(RUN_HEADER[i])) };
        let point = SweepPoint {
            method: get(0).parse()?,
            learning_rate: get(1).parse().map_err(|_| bad("learning_rate"))?,
            num_negatives: count(2)?,
        };
        let run = count(3)?;
        let metrics = if get(5) == "ok" {
            let mut vals = [None; 9];
            for (f, v) in vals.iter_mut().enumerate() {
                *v = num(8 + f)?;
            }
            Some(MetricsRecord {
                k: super::EVAL_K,
                values: MetricValues::from_array(vals),
                balance_degenerate: get(17) == "true",
                counts: CaseCounts {
                    total: count(18)?,
                    head: count(19)?,
                    mid: count(20)?,
                    tail: count(21)?,
                    unseen: count(22)?,
                },
            })
        } else {
            None
        };
        out.push((point, run, metrics));
    }
    Ok(out)
}

fn aggregate_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "method".to_string(),
        "learning_rate".into(),
        "num_negatives".into(),
        "runs".into(),
        "failed".into(),
    ];
    for f in MetricValues::FIELDS {
        header.push(format!("{f}_mean"));
        header.push(format!("{f}_std"));
    }
    w.write_record(&header).map_err(csv_error)?;
    for a in &report.aggregates {
        let mut row = vec![
            a.point.method.to_string(),
            a.point.learning_rate.to_string(),
            a.point.num_negatives.to_string(),
            a.aggregate.as_ref().map_or(0, |g| g.runs).to_string(),
            a.failed.to_string(),
        ];
        let (mean, std) = match &a.aggregate {
            Some(Aggregate { mean, std, .. }) => (mean.to_array(), std.to_array()),
            None => ([None; 9], [None; 9]),
        };
        for (m, s) in mean.iter().zip(&std) {
            row.push(fmt_opt(*m));
            row.push(fmt_opt(*s));
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    finish_csv(w)
}

fn scatter_csv(runs: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "learning_rate",
        "num_negatives",
        "run",
        "ndcg_total",
        "balance",
    ])
    .map_err(csv_error)?;
    for r in runs {
        let Some(m) = &r.metrics else { continue };
        w.write_record([
            r.point.method.to_string(),
            r.point.learning_rate.to_string(),
            r.point.num_negatives.to_string(),
            r.run.to_string(),
            fmt_opt(m.values.ndcg_total),
            fmt_opt(m.values.balance),
        ])
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

/// One row of the comparison table, fractions as stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub runs: usize,
    /// Runs that faulted and are left out of `mean`/`std`.
    pub failed: usize,
    pub mean: MetricValues,
    pub std: MetricValues,
}

impl ComparisonRow {
    pub fn from_aggregate(method: &str, a: &Aggregate) -> Self {
        Self {
            method: method.to_string(),
            runs: a.runs,
            failed: 0,
            mean: a.mean,
            std: a.std,
        }
    }

    /// `mean ± std` in percent (Balance is already a percentage); `—` when
    /// absent.
    pub fn cells(&self) -> Vec<String> {
        let (m, s) = (self.mean.to_array(), self.std.to_array());
        (0..9)
            .map(|f| {
                let scale = if f == 8 { 1.0 } else { 100.0 };
                match (m[f], s[f]) {
                    (Some(m), Some(s)) => format!("{:.2} ± {:.2}", m * scale, s * scale),
                    _ => "—".to_string(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub const COLUMNS: [&'static str; 9] = [
        "HR@10 Total",
        "HR@10 Head",
        "HR@10 Mid",
        "HR@10 Tail",
        "NDCG@10 Total",
        "NDCG@10 Head",
        "NDCG@10 Mid",
        "NDCG@10 Tail",
        "Balance",
    ];

    pub fn failed_runs(&self) -> usize {
        self.rows.iter().map(|r| r.failed).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Method", "Runs"];
        header.extend(Self::COLUMNS);
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut row = vec![r.method.clone(), r.runs.to_string()];
            row.extend(r.cells());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}
