//! Flat `section.key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::InputFormat;
use crate::pipeline::{BufferConfig, FeedMode, TrainConfig};
use crate::sampler::{Method, SamplerConfig};
use crate::seqmodel::{AdamConfig, ModelConfig};
use crate::synth::SynthConfig;
use crate::{Error, Result};

/// Environment variable naming the config file when none is given.
pub const CONFIG_ENV: &str = "NEGSAMP_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    File { path: PathBuf, format: InputFormat },
    Synthetic { config: SynthConfig, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    /// Users with fewer interactions are dropped.
    pub min_len: usize,
    pub q_train: f64,
    pub q_val: f64,
    pub theta_head: f64,
    pub theta_mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    /// Sweep over methods.
    pub methods: Vec<Method>,
    /// Sweep over negatives per position.
    pub num_negatives: Vec<usize>,
    pub adaptive_k: usize,
    pub gamma: f64,
    pub mixed_ratio: Option<usize>,
    pub epochs: usize,
    pub eval_every: usize,
    /// Sweep over learning rates.
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    /// Oversampling factor; `None` picks 4 for mixed methods and 1 otherwise.
    pub osf: Option<usize>,
    /// Background batch producer; off means serial generation.
    pub threaded: bool,
    pub prefetch: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                config: SynthConfig::default(),
                seed: 0,
            },
            min_len: 5,
            q_train: 0.8,
            q_val: 0.9,
            theta_head: 0.5,
            theta_mid: 0.8,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sampler = SamplerConfig::default();
        let train = TrainConfig::default();
        Self {
            data: DataConfig::default(),
            model: ModelConfig::default(),
            methods: Method::ALL.to_vec(),
            num_negatives: vec![sampler.num_negatives],
            adaptive_k: sampler.adaptive_k,
            gamma: sampler.gamma,
            mixed_ratio: sampler.mixed_ratio,
            epochs: train.epochs,
            eval_every: train.eval_every,
            learning_rates: vec![train.learning_rate],
            batch_size: train.batch_size,
            osf: None,
            threaded: true,
            prefetch: 4,
            repeats: 20,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
        }
    }
}

/// One point of the method × learning-rate × negatives sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub method: Method,
    pub learning_rate: f64,
    pub num_negatives: usize,
}

impl SweepPoint {
    /// File-name-safe identifier.
    pub fn label(&self) -> String {
        // Scientific notation keeps extreme rates short.
        format!("{}_lr{:e}_n{}", self.method, self.learning_rate, self.num_negatives)
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| bad_value(key, s)))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for `{key}`"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad_value(key, value))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad_value(key, value)),
    }
}

fn opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn unescape(value: &str) -> String {
    match value {
        "tab" | "\\t" => "\t".into(),
        "space" | "whitespace" => " ".into(),
        other => other.into(),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `--key=value` style overrides (leading dashes optional).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref().trim_start_matches('-');
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Sets one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let d = &mut self.data;
        match key {
            "data.path" => {
                let path = PathBuf::from(value);
                let format = match &d.source {
                    DataSource::File { format, .. } => format.clone(),
                    DataSource::Synthetic { .. } => InputFormat::tsv(),
                };
                d.source = DataSource::File { path, format };
            }
            "data.format" => {
                let format = match value {
                    "tsv" => Some(InputFormat::tsv()),
                    "csv" => Some(InputFormat::csv()),
                    "movielens" => Some(InputFormat::Delimited {
                        delimiter: "::".into(),
                        user_col: 0,
                        item_col: 1,
                        time_col: 3,
                        skip_header: false,
                    }),
                    "tokens" => Some(InputFormat::Tokens),
                    "synthetic" => None,
                    _ => return Err(bad_value(key, value)),
                };
                d.source = match (format, &d.source) {
                    (None, DataSource::Synthetic { .. }) => d.source.clone(),
                    (None, DataSource::File { .. }) => DataSource::Synthetic {
                        config: SynthConfig::default(),
                        seed: 0,
                    },
                    (Some(f), DataSource::File { path, .. }) => DataSource::File {
                        path: path.clone(),
                        format: f,
                    },
                    (Some(f), DataSource::Synthetic { .. }) => DataSource::File {
                        path: PathBuf::new(),
                        format: f,
                    },
                };
            }
            "data.delimiter" | "data.user_col" | "data.item_col" | "data.time_col" | "data.header" => {
                let DataSource::File {
                    format:
                        InputFormat::Delimited {
                            delimiter,
                            user_col,
                            item_col,
                            time_col,
                            skip_header,
                        },
                    ..
                } = &mut d.source
                else {
                    return Err(Error::Config(format!("`{key}` applies to delimited files only")));
                };
                match key {
                    "data.delimiter" => *delimiter = unescape(value),
                    "data.user_col" => *user_col = parse(key, value)?,
                    "data.item_col" => *item_col = parse(key, value)?,
                    "data.time_col" => *time_col = parse(key, value)?,
                    _ => *skip_header = parse_bool(key, value)?,
                }
            }
            k if k.starts_with("data.synth_") => {
                let DataSource::Synthetic { config, seed } = &mut d.source else {
                    return Err(Error::Config(format!("`{key}` applies to synthetic data only")));
                };
                match &k["data.synth_".len()..] {
                    "seed" => *seed = parse(key, value)?,
                    "users" => config.num_users = parse(key, value)?,
                    "items" => config.num_items = parse(key, value)?,
                    "min_len" => config.min_len = parse(key, value)?,
                    "mean_extra_len" => config.mean_extra_len = parse(key, value)?,
                    "zipf" => config.zipf = parse(key, value)?,
                    "clusters" => config.clusters = parse(key, value)?,
                    "user_clusters" => config.user_clusters = parse(key, value)?,
                    "transition_prob" => config.transition_prob = parse(key, value)?,
                    "successors" => config.successors = parse(key, value)?,
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
            }
            "data.min_len" => d.min_len = parse(key, value)?,
            "split.q_train" => d.q_train = parse(key, value)?,
            "split.q_val" => d.q_val = parse(key, value)?,
            "cohort.theta_head" => d.theta_head = parse(key, value)?,
            "cohort.theta_mid" => d.theta_mid = parse(key, value)?,
            "model.embed_dim" => self.model.embed_dim = parse(key, value)?,
            "model.num_blocks" => self.model.num_blocks = parse(key, value)?,
            "model.num_heads" => self.model.num_heads = parse(key, value)?,
            "model.max_seq_len" => self.model.max_seq_len = parse(key, value)?,
            "model.dropout" => self.model.dropout = parse(key, value)?,
            "sampler.method" => self.methods = parse_list(key, value)?,
            "sampler.num_negatives" => self.num_negatives = parse_list(key, value)?,
            "sampler.adaptive_k" => self.adaptive_k = parse(key, value)?,
            "sampler.gamma" => self.gamma = parse(key, value)?,
            "sampler.mixed_ratio" => self.mixed_ratio = opt(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.eval_every" => self.eval_every = parse(key, value)?,
            "train.learning_rate" => self.learning_rates = parse_list(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.osf" => self.osf = opt(key, value)?,
            "train.threaded" => self.threaded = parse_bool(key, value)?,
            "train.prefetch" => self.prefetch = parse(key, value)?,
            "run.repeats" => self.repeats = parse(key, value)?,
            "run.base_seed" => self.base_seed = parse(key, value)?,
            "run.out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.repeats == 0 {
            return bad("run.repeats must be at least 1".into());
        }
        if self.methods.is_empty() || self.learning_rates.is_empty() || self.num_negatives.is_empty() {
            return bad("sweep lists must be non-empty".into());
        }
        let d = &self.data;
        if !(0.0 < d.q_train && d.q_train < d.q_val && d.q_val < 1.0) {
            return bad(format!(
                "split quantiles must satisfy 0 < q_train < q_val < 1, got ({}, {})",
                d.q_train, d.q_val
            ));
        }
        if !(0.0 < d.theta_head && d.theta_head < d.theta_mid && d.theta_mid < 1.0) {
            return bad(format!(
                "cohort thresholds must satisfy 0 < theta_head < theta_mid < 1, got ({}, {})",
                d.theta_head, d.theta_mid
            ));
        }
        if let DataSource::File { path, .. } = &self.data.source {
            if path.as_os_str().is_empty() {
                return bad("data.path is required for file input".into());
            }
        }
        if let DataSource::Synthetic { config, .. } = &self.data.source {
            config.validate()?;
        }
        for point in self.sweep() {
            self.sampler_config(&point).validate_for_batch(self.batch_size)?;
            self.train_config(&point).validate()?;
        }
        ModelConfig {
            num_items: 1,
            ..self.model.clone()
        }
        .validate()
    }

    /// Sweep points in method-major order.
    pub fn sweep(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &learning_rate in &self.learning_rates {
                for &num_negatives in &self.num_negatives {
                    out.push(SweepPoint {
                        method,
                        learning_rate,
                        num_negatives,
                    });
                }
            }
        }
        out
    }

    pub fn sampler_config(&self, point: &SweepPoint) -> SamplerConfig {
        SamplerConfig {
            method: point.method,
            num_negatives: point.num_negatives,
            adaptive_k: self.adaptive_k,
            gamma: self.gamma,
            mixed_ratio: self.mixed_ratio,
        }
    }

    pub fn osf_for(&self, method: Method) -> usize {
        self.osf.unwrap_or(match method {
            Method::Mixed | Method::AdaptiveMixed => 4,
            _ => 1,
        })
    }

    pub fn train_config(&self, point: &SweepPoint) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            eval_every: self.eval_every,
            learning_rate: point.learning_rate,
            batch_size: self.batch_size,
            osf: self.osf_for(point.method),
            feed: if self.threaded {
                FeedMode::Threaded {
                    prefetch: self.prefetch,
                }
            } else {
                FeedMode::Serial
            },
            adam: AdamConfig::default(),
        }
    }

    pub fn buffer_config(&self, point: &SweepPoint, batches_per_epoch: usize) -> BufferConfig {
        BufferConfig {
            osf: self.osf_for(point.method),
            batches_per_epoch,
        }
    }

    /// Canonical `key = value` rendering; parsing it yields `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.data;
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let join = |xs: Vec<String>| xs.join(",");
        match &d.source {
            DataSource::File { path, format } => {
                match format {
                    InputFormat::Tokens => put("data.format", "tokens".into()),
                    InputFormat::Delimited {
                        delimiter,
                        user_col,
                        item_col,
                        time_col,
                        skip_header,
                    } => {
                        put("data.format", "tsv".into());
                        put("data.path", path.display().to_string());
                        let delim = match delimiter.as_str() {
                            "\t" => "tab".to_string(),
                            " " => "space".to_string(),
                            other => other.to_string(),
                        };
                        put("data.delimiter", delim);
                        put("data.user_col", user_col.to_string());
                        put("data.item_col", item_col.to_string());
                        put("data.time_col", time_col.to_string());
                        put("data.header", skip_header.to_string());
                    }
                }
                if matches!(format, InputFormat::Tokens) {
                    put("data.path", path.display().to_string());
                }
            }
            DataSource::Synthetic { config, seed } => {
                put("data.format", "synthetic".into());
                put("data.synth_seed", seed.to_string());
                put("data.synth_users", config.num_users.to_string());
                put("data.synth_items", config.num_items.to_string());
                put("data.synth_min_len", config.min_len.to_string());
                put("data.synth_mean_extra_len", config.mean_extra_len.to_string());
                put("data.synth_zipf", config.zipf.to_string());
                put("data.synth_clusters", config.clusters.to_string());
                put("data.synth_user_clusters", config.user_clusters.to_string());
                put("data.synth_transition_prob", config.transition_prob.to_string());
                put("data.synth_successors", config.successors.to_string());
            }
        }
        put("data.min_len", d.min_len.to_string());
        put("split.q_train", d.q_train.to_string());
        put("split.q_val", d.q_val.to_string());
        put("cohort.theta_head", d.theta_head.to_string());
        put("cohort.theta_mid", d.theta_mid.to_string());
        put("model.embed_dim", self.model.embed_dim.to_string());
        put("model.num_blocks", self.model.num_blocks.to_string());
        put("model.num_heads", self.model.num_heads.to_string());
        put("model.max_seq_len", self.model.max_seq_len.to_string());
        put("model.dropout", self.model.dropout.to_string());
        put(
            "sampler.method",
            join(self.methods.iter().map(|m| m.to_string()).collect()),
        );
        put(
            "sampler.num_negatives",
            join(self.num_negatives.iter().map(|n| n.to_string()).collect()),
        );
        put("sampler.adaptive_k", self.adaptive_k.to_string());
        put("sampler.gamma", self.gamma.to_string());
        put(
            "sampler.mixed_ratio",
            self.mixed_ratio.map_or("none".into(), |r| r.to_string()),
        );
        put("train.epochs", self.epochs.to_string());
        put("train.eval_every", self.eval_every.to_string());
        put(
            "train.learning_rate",
            join(self.learning_rates.iter().map(|x| x.to_string()).collect()),
        );
        put("train.batch_size", self.batch_size.to_string());
        put("train.osf", self.osf.map_or("auto".into(), |o| o.to_string()));
        put("train.threaded", self.threaded.to_string());
        put("train.prefetch", self.prefetch.to_string());
        put("run.repeats", self.repeats.to_string());
        put("run.base_seed", self.base_seed.to_string());
        put("run.out_dir", self.out_dir.display().to_string());
        s
    }
}

/// Resolves the config path: explicit argument first, then [`CONFIG_ENV`].
pub fn config_path(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
}
