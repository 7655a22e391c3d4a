use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use negsample::runner::{
    compare_methods, config_path, prepare, run_experiment, run_once, sample_trace, write_comparison, write_manifest,
    write_split, DataSource, ExperimentConfig, RunStatus, SweepPoint,
};
use negsample::sampler::Method;
use negsample::seqmodel::{load_checkpoint, save_checkpoint};
use negsample::synth;

/// Sequential recommendation experiments with configurable negative sampling.
#[derive(Parser)]
#[command(name = "negsample", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`section.key = value` lines); falls back to $NEGSAMP_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shorthand for `--run.out_dir=DIR`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Shorthand for `--run.repeats=R`.
    #[arg(long)]
    repeats: Option<usize>,
    /// Config overrides such as `--train.epochs=20 --sampler.method=rns,pns`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset and cohort report.
    Stats(Common),
    /// Writes the temporal split (train, validation and test cases).
    Split(Common),
    /// One training run at the first sweep point; saves its checkpoint.
    Train {
        /// Repeat index; the seed is `run.base_seed + run`.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Every sweep point times every repeat, with aggregates.
    Experiment(Common),
    /// Method comparison table including PopRec.
    Compare {
        /// Comma-separated methods; defaults to `sampler.method`.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[command(flatten)]
        common: Common,
    },
    /// Dumps sampled negatives and their masks as CSV.
    SampleTrace {
        #[arg(long, default_value_t = 1)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model used for adaptive retention; a fresh one otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Writes the configured synthetic log as `user<TAB>item<TAB>timestamp`.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match config_path(self.config.as_deref()) {
            Some(path) => ExperimentConfig::load(&path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn first_point(cfg: &ExperimentConfig) -> SweepPoint {
    cfg.sweep()[0]
}

/// Writes `files` into `dir` and hashes them into its manifest.
fn write_files(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let names: Vec<(String, bool)> = files.iter().map(|(n, _)| (n.to_string(), false)).collect();
    write_manifest(dir, &names)?;
    Ok(())
}

/// Prints to stdout; a closed pipe is not an error since results are on disk.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Stats(common) => {
            let cfg = common.load()?;
            let prepared = prepare(&cfg.data)?;
            let json = serde_json::to_string_pretty(&prepared.stats)?;
            write_files(
                &cfg.out_dir,
                &[
                    ("dataset_stats.json", format!("{json}\n").into_bytes()),
                    ("popularity_hist.csv", prepared.stats.histogram_csv().into_bytes()),
                ],
            )?;
            emit(&json);
            if prepared.skipped_rows > 0 {
                eprintln!("skipped {} unparseable rows", prepared.skipped_rows);
            }
            Ok(true)
        }
        Command::Split(common) => {
            let cfg = common.load()?;
            let summary = write_split(&prepare(&cfg.data)?, &cfg.out_dir)?;
            emit(&serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::Train { run, common } => {
            let cfg = common.load()?;
            let prepared = prepare(&cfg.data)?;
            let out = run_once(&prepared, &cfg, first_point(&cfg), run);
            let mut log = String::new();
            for line in &out.log {
                log.push_str(&serde_json::to_string(line)?);
                log.push('\n');
            }
            let record = serde_json::to_string_pretty(&out.record)?;
            fs::create_dir_all(&cfg.out_dir)?;
            fs::write(cfg.out_dir.join("record.json"), format!("{record}\n"))?;
            fs::write(cfg.out_dir.join("log.jsonl"), log)?;
            // The log holds wall-clock times.
            let mut names: Vec<(String, bool)> = vec![("record.json".into(), false), ("log.jsonl".into(), true)];
            if let Some(model) = &out.model {
                save_checkpoint(&cfg.out_dir.join("model.ckpt"), model, out.record.seed)?;
                names.push(("model.ckpt".into(), false));
            }
            write_manifest(&cfg.out_dir, &names)?;
            emit(&record);
            Ok(out.record.status == RunStatus::Ok)
        }
        Command::Experiment(common) => {
            let cfg = common.load()?;
            let report = run_experiment(&cfg)?;
            for a in &report.aggregates {
                let ndcg = a.aggregate.as_ref().and_then(|g| g.mean.ndcg_total);
                let bal = a.aggregate.as_ref().and_then(|g| g.mean.balance);
                emit(&format!(
                    "{}: ndcg@10 {} balance {} ({} failed)",
                    a.point.label(),
                    ndcg.map_or("—".into(), |v| format!("{v:.4}")),
                    bal.map_or("—".into(), |v| format!("{v:.2}")),
                    a.failed
                ));
            }
            let failed = report.failed_runs();
            if failed > 0 {
                eprintln!("{failed} run(s) failed; see {}", cfg.out_dir.join("runs.csv").display());
            }
            Ok(failed == 0)
        }
        Command::Compare { methods, common } => {
            let cfg = common.load()?;
            let methods: Vec<Method> = match methods {
                Some(names) => names.iter().map(|m| m.parse()).collect::<negsample::Result<_>>()?,
                None => cfg.methods.clone(),
            };
            let table = compare_methods(&cfg, &methods)?;
            write_comparison(&cfg.out_dir, &table)?;
            emit(table.to_csv().trim_end());
            Ok(table.failed_runs() == 0)
        }
        Command::SampleTrace {
            batches,
            seed,
            checkpoint,
            common,
        } => {
            let cfg = common.load()?;
            let prepared = prepare(&cfg.data)?;
            let model = match &checkpoint {
                Some(path) => Some(load_checkpoint::<f64>(path)?.model),
                None => None,
            };
            let csv = sample_trace(&prepared, &cfg, &first_point(&cfg), seed, batches, model.as_ref())?;
            write_files(&cfg.out_dir, &[("sample_trace.csv", csv.into_bytes())])?;
            emit(&cfg.out_dir.join("sample_trace.csv").display().to_string());
            Ok(true)
        }
        Command::Synth { output, common } => {
            let cfg = common.load()?;
            let DataSource::Synthetic { config, seed } = &cfg.data.source else {
                bail!("`synth` needs data.format = synthetic");
            };
            let mut text = String::new();
            for i in synth::generate(config, *seed)? {
                text.push_str(&format!("{}\t{}\t{}\n", i.user, i.item, i.timestamp));
            }
            fs::write(&output, text).with_context(|| format!("writing {}", output.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = matches!(e.downcast_ref::<negsample::Error>(), Some(negsample::Error::Config(_)));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
