use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{generate_minibatch, rng_stream, stream, BufferConfig, EpochCursor, MiniBatch, ReuseBuffer, TrainData};
use crate::dataset::{build_popularity, EvalCase, Split};
use crate::metrics::{hit_rate, ndcg, Case, RankedList};
use crate::sampler::{SamplerConfig, SamplerTables};
use crate::seqmodel::{backward_and_step, Adam, AdamConfig, ModelConfig, Retriever, SasRecModel, TrainBatch};
use crate::{Error, Result, Scalar};

/// How fresh batches reach the trainer. Both modes yield the same batches for
/// the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedMode {
    Serial,
    /// Background producer with a bounded hand-off queue.
    Threaded {
        prefetch: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Validate every this many epochs; the final epoch is always validated.
    pub eval_every: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub osf: usize,
    pub feed: FeedMode,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            eval_every: 5,
            learning_rate: 1e-3,
            batch_size: 128,
            osf: 1,
            feed: FeedMode::Threaded { prefetch: 4 },
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.osf == 0 {
            return bad("oversampling factor must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if let FeedMode::Threaded { prefetch: 0 } = self.feed {
            return bad("prefetch depth must be at least 1");
        }
        Ok(())
    }

    fn is_eval_epoch(&self, epoch: usize) -> bool {
        epoch % self.eval_every == 0 || epoch == self.epochs
    }
}

/// One line of the per-epoch log. Validation fields are absent on epochs
/// without validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ndcg10: Option<f64>,
    pub val_hr10: Option<f64>,
    pub wall_clock_s: f64,
    pub fresh_batches: usize,
    pub reused_batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the highest validation NDCG@10.
    pub model: SasRecModel<T>,
    pub best_epoch: usize,
    pub best_val_ndcg: f64,
    pub log: Vec<EpochLog>,
    pub fresh_batches: usize,
    pub reused_batches: usize,
    /// Time spent generating fresh batches.
    pub sampling_s: f64,
    /// Reuse draws per buffer slot.
    pub reuse_hits: Vec<u64>,
}

/// Whether `score` replaces the current best; ties keep the earlier epoch.
fn improves(best: Option<f64>, score: f64) -> bool {
    best.is_none_or(|b| score > b)
}

/// The selected `(epoch, score)` among validation results in epoch order.
pub fn select_epoch(scores: &[(usize, f64)]) -> Option<(usize, f64)> {
    scores.iter().fold(None, |best: Option<(usize, f64)>, &(e, s)| {
        if improves(best.map(|b| b.1), s) {
            Some((e, s))
        } else {
            best
        }
    })
}

/// Total HR@k and NDCG@k over `cases`, history excluded from retrieval.
pub fn evaluate_total<T: Scalar>(
    model: &SasRecModel<T>,
    cases: &[EvalCase],
    k: usize,
) -> Result<(Option<f64>, Option<f64>)> {
    let retriever = Retriever::new(model);
    let scored = cases
        .iter()
        .map(|c| Ok((RankedList::new(retriever.top_k(&c.history_items(), k)?, k)?, c.target)))
        .collect::<Result<Vec<Case>>>()?;
    Ok((hit_rate(&scored), ndcg(&scored)))
}

struct Producer<'a> {
    data: &'a TrainData,
    sampler: &'a SamplerConfig,
    tables: &'a SamplerTables,
    batch_size: usize,
    cursor: EpochCursor,
    rng: rand_chacha::ChaCha8Rng,
    busy: Duration,
}

impl Producer<'_> {
    fn next(&mut self) -> Result<MiniBatch> {
        let start = Instant::now();
        let b = generate_minibatch(
            self.data,
            self.sampler,
            self.tables,
            &mut self.cursor,
            self.batch_size,
            &mut self.rng,
        );
        self.busy += start.elapsed();
        b
    }
}

/// Trains from `model_config` (corpus size taken from the split) and keeps
/// the parameters with the best validation NDCG@10, ties going to the earlier
/// epoch.
pub fn train_run<T: Scalar>(
    split: &Split,
    model_config: &ModelConfig,
    sampler: &SamplerConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    sampler.validate_for_batch(config.batch_size)?;
    let model_config = ModelConfig {
        num_items: split.train.num_items,
        ..model_config.clone()
    };
    let data = TrainData::new(&split.train, model_config.max_seq_len)?;
    let pop = build_popularity(&split.train)?;
    let tables = SamplerTables::new(&pop, sampler.gamma)?;
    let bpe = data.batches_per_epoch(config.batch_size);
    let buffer_cfg = BufferConfig {
        osf: config.osf,
        batches_per_epoch: bpe,
    };
    let fresh_total = buffer_cfg.fresh_needed(config.epochs * bpe);
    let mut producer = Producer {
        data: &data,
        sampler,
        tables: &tables,
        batch_size: config.batch_size,
        cursor: EpochCursor::default(),
        rng: rng_stream(seed, stream::PRODUCER),
        busy: Duration::ZERO,
    };
    let model = SasRecModel::<T>::new(model_config, &mut rng_stream(seed, stream::INIT))?;
    let buffer = ReuseBuffer::new(buffer_cfg, rng_stream(seed, stream::REUSE))?;
    let adaptive_k = sampler.method.is_adaptive().then_some(sampler.adaptive_k);
    let mut trainer = Trainer {
        split,
        config,
        bpe,
        adaptive_k,
        optimizer: Adam::new(&model.params, config.adam),
        model,
        buffer,
        dropout_rng: rng_stream(seed, stream::DROPOUT),
        best: None,
        log: Vec::new(),
        started: Instant::now(),
    };

    let sampling = match config.feed {
        FeedMode::Serial => {
            trainer.run(|| producer.next())?;
            producer.busy
        }
        FeedMode::Threaded { prefetch } => std::thread::scope(|scope| {
            let (tx, rx) = sync_channel::<Result<MiniBatch>>(prefetch);
            let handle = scope.spawn(move || {
                for _ in 0..fresh_total {
                    let batch = producer.next();
                    let failed = batch.is_err();
                    if tx.send(batch).is_err() || failed {
                        break;
                    }
                }
                producer.busy
            });
            let result = trainer.run(|| {
                rx.recv()
                    .unwrap_or_else(|_| Err(Error::Input("batch producer stopped early".into())))
            });
            drop(rx);
            let busy = handle.join().expect("batch producer panicked");
            result.map(|_| busy)
        })?,
    };

    let (model, best_epoch, best_val_ndcg) = trainer.best.expect("final epoch is always validated");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_ndcg,
        log: trainer.log,
        fresh_batches: trainer.buffer.fresh_count(),
        reused_batches: trainer.buffer.reused_count(),
        sampling_s: sampling.as_secs_f64(),
        reuse_hits: trainer.buffer.reuse_hits(),
    })
}

struct Trainer<'a, T> {
    split: &'a Split,
    config: &'a TrainConfig,
    bpe: usize,
    adaptive_k: Option<usize>,
    model: SasRecModel<T>,
    optimizer: Adam<T>,
    buffer: ReuseBuffer,
    dropout_rng: rand_chacha::ChaCha8Rng,
    best: Option<(SasRecModel<T>, usize, f64)>,
    log: Vec<EpochLog>,
    started: Instant,
}

impl<T: Scalar> Trainer<'_, T> {
    fn run(&mut self, mut fresh: impl FnMut() -> Result<MiniBatch>) -> Result<()> {
        for epoch in 1..=self.config.epochs {
            self.epoch(epoch, &mut fresh).map_err(|e| match e {
                Error::NonFinite(message) => Error::TrainingFault { epoch, message },
                other => other,
            })?;
        }
        Ok(())
    }

    fn epoch(&mut self, epoch: usize, fresh: &mut impl FnMut() -> Result<MiniBatch>) -> Result<()> {
        let (fresh0, reused0) = (self.buffer.fresh_count(), self.buffer.reused_count());
        let mut loss_sum = 0.0;
        for _ in 0..self.bpe {
            let slot = self.buffer.next(&mut *fresh)?.slot();
            let mb = self.buffer.get(slot);
            let batch = TrainBatch {
                sequences: &mb.sequences,
                targets: &mb.targets,
                negatives: &mb.negatives,
            };
            let (report, grads) = self
                .model
                .loss_and_grads(&batch, self.adaptive_k, true, &mut self.dropout_rng)?;
            backward_and_step(&mut self.model, &grads, &mut self.optimizer, self.config.learning_rate)?;
            loss_sum += report.loss;
        }
        let (val_hr10, val_ndcg10) = if self.config.is_eval_epoch(epoch) {
            let (hr, nd) = evaluate_total(&self.model, &self.split.val_cases, 10)?;
            let score = nd.unwrap_or(0.0);
            if improves(self.best.as_ref().map(|b| b.2), score) {
                self.best = Some((self.model.clone(), epoch, score));
            }
            (hr, nd)
        } else {
            (None, None)
        };
        self.log.push(EpochLog {
            epoch,
            train_loss: loss_sum / self.bpe as f64,
            val_ndcg10,
            val_hr10,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            fresh_batches: self.buffer.fresh_count() - fresh0,
            reused_batches: self.buffer.reused_count() - reused0,
        });
        Ok(())
    }
}
