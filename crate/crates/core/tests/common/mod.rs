#![allow(dead_code)]

use std::cmp::Ordering;

use negsample::pipeline::{rng_stream, BufferConfig, Draw, MiniBatch, ReuseBuffer};
use negsample::sampler::{LogicalShape, NegativeBatch, ShapeKind};
use negsample::seqmodel::{ModelConfig, SasRecModel, TrainBatch};
use negsample::{ItemId, SasRec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's chi-square statistic. Cells with zero
/// expected probability must be empty and are left out.
pub fn chi_square_p(observed: &[u64], probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(probs) {
        if p == 0.0 {
            assert_eq!(o, 0, "draw landed on a zero-probability cell");
            continue;
        }
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

/// Reference top-K selection: eligible candidates sorted by score
/// descending (NaN last), then index ascending; the first `k` are kept.
pub fn adaptive_oracle(scores: &[f64], excluded: &[bool], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| !excluded[i]).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (scores[a], scores[b]);
        let by_score = match (x.is_nan(), y.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Greater,
            (false, true) => Ordering::Less,
            (false, false) => y.partial_cmp(&x).unwrap(),
        };
        by_score.then(a.cmp(&b))
    });
    let mut keep = vec![false; scores.len()];
    for &i in idx.iter().take(k) {
        keep[i] = true;
    }
    keep
}

/// Every assignment of `values` to `len` slots, in lexicographic order.
pub fn all_vectors(values: &[f64], len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v| {
                values.iter().map(move |&x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

/// Every boolean mask of length `len`.
pub fn all_masks(len: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u32..1 << len).map(move |bits| (0..len).map(|i| bits >> i & 1 == 1).collect())
}

pub fn tiny(seed: u64) -> SasRec {
    let cfg = ModelConfig {
        embed_dim: 4,
        num_blocks: 1,
        num_heads: 1,
        max_seq_len: 3,
        dropout: 0.0,
        num_items: 10,
    };
    SasRecModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub fn negatives(pools: Vec<Vec<ItemId>>, exclusion: Vec<Vec<bool>>, seq_len: usize) -> NegativeBatch {
    NegativeBatch {
        shape: LogicalShape {
            kind: ShapeKind::Global,
            batch: pools.len(),
            seq_len,
            candidates: pools[0].len(),
        },
        pools,
        exclusion,
        retention: None,
        shortfall: false,
    }
}

pub fn loss_of(model: &SasRec, batch: &TrainBatch<'_>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    model.loss_and_grads(batch, None, false, &mut rng).unwrap().0.loss
}

/// Worst relative error between analytic gradients and central differences
/// over every parameter of the tiny model, one model per seed.
pub fn max_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let seqs = vec![vec![3, 7, 2], vec![0, 5, 9], vec![0, 0, 4]];
    let targets = vec![vec![7, 2, 1], vec![0, 9, 6], vec![0, 0, 8]];
    let neg = negatives(
        vec![vec![1, 6, 10, 3], vec![2, 4, 9, 0], vec![8, 5, 7, 3]],
        vec![
            vec![false, false, false, true],
            vec![false, false, true, true],
            vec![true, false, false, false],
        ],
        3,
    );
    let batch = TrainBatch {
        sequences: &seqs,
        targets: &targets,
        negatives: &neg,
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in seeds {
        let model = tiny(seed);
        let (_, grads) = model
            .loss_and_grads(&batch, None, false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        for (ti, (name, g)) in grads.tensors().into_iter().enumerate() {
            for i in 0..g.len() {
                let bump = |delta: f64| {
                    let mut m = model.clone();
                    m.params.tensors_mut()[ti].1[i] += delta;
                    loss_of(&m, &batch)
                };
                let numeric = (bump(h) - bump(-h)) / (2.0 * h);
                // Padding row receives no gradient by construction.
                if name == "item_emb" && i < 4 {
                    assert_eq!(g[i], 0.0);
                    continue;
                }
                // Floor the denominator at the central-difference noise level so
                // exactly-zero gradients (e.g. key biases) compare absolutely.
                let err = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    worst
}

pub fn dummy_batch(tag: ItemId) -> MiniBatch {
    MiniBatch {
        users: vec![tag],
        sequences: vec![vec![tag]],
        targets: vec![vec![0]],
        pad_mask: vec![vec![false]],
        negatives: NegativeBatch {
            shape: LogicalShape {
                kind: ShapeKind::Global,
                batch: 1,
                seq_len: 1,
                candidates: 0,
            },
            pools: vec![vec![]],
            exclusion: vec![vec![]],
            retention: None,
            shortfall: false,
        },
    }
}

/// Drives a reuse buffer for `epochs` epochs with tagged dummy batches;
/// returns the buffer and the fresh count per epoch.
pub fn drive(osf: usize, bpe: usize, epochs: usize) -> (ReuseBuffer, Vec<usize>) {
    let cfg = BufferConfig {
        osf,
        batches_per_epoch: bpe,
    };
    let mut buf = ReuseBuffer::new(cfg, rng_stream(3, 2)).unwrap();
    let mut per_epoch = Vec::new();
    let mut produced: ItemId = 0;
    for _ in 0..epochs {
        let mut fresh = 0;
        for _ in 0..bpe {
            if let Draw::Fresh(_) = buf
                .next(|| {
                    produced += 1;
                    Ok(dummy_batch(produced))
                })
                .unwrap()
            {
                fresh += 1;
            }
        }
        per_epoch.push(fresh);
    }
    assert_eq!(produced as usize, buf.fresh_count());
    (buf, per_epoch)
}
