mod common;

use negsample::sampler::NegativeBatch;
use negsample::seqmodel::{
    backward_and_step, load_checkpoint, retrieve_scored, retrieve_topk, save_checkpoint, Adam, AdamConfig, ModelConfig,
    TrainBatch,
};
use negsample::{ItemId, SasRec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{loss_of, max_gradient_error, negatives, tiny};

#[test]
fn gradients_match_central_differences() {
    let worst = max_gradient_error(0..6);
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn causality_probe() {
    let mut cfg = tiny(0).config;
    cfg.max_seq_len = 6;
    cfg.num_blocks = 2;
    cfg.embed_dim = 8;
    cfg.num_heads = 2;
    let model = SasRec::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = vec![1, 4, 2, 8, 5, 3];
    let out = model.forward(&[base.clone()], false, &mut rng).unwrap();
    for t in 0..6 {
        let mut pert = base.clone();
        pert[t] = if base[t] == 9 { 10 } else { 9 };
        let o2 = model.forward(&[pert], false, &mut rng).unwrap();
        for t2 in 0..6 {
            let a = out.embedding(0, t2).unwrap();
            let b = o2.embedding(0, t2).unwrap();
            let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if t2 < t {
                assert!(diff <= 1e-9, "position {t2} moved after perturbing {t}");
            } else {
                assert!(diff > 1e-9, "position {t2} ignored perturbation at {t}");
            }
        }
    }
}

#[test]
fn padding_is_neutral() {
    let mut cfg = tiny(0).config;
    cfg.max_seq_len = 5;
    let model = SasRec::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let short = model.forward(&[vec![3, 6, 1]], false, &mut rng).unwrap();
    let long = model.forward(&[vec![0, 0, 3, 6, 1]], false, &mut rng).unwrap();
    for t in 0..3 {
        assert_eq!(short.embedding(0, t), long.embedding(0, t + 2));
    }
    assert!(long.embedding(0, 1).is_none());
    assert_eq!(
        retrieve_topk(&model, &[3, 6, 1], 4, true).unwrap(),
        retrieve_topk(&model, &[3, 6, 1], 4, true).unwrap()
    );

    let neg = |s| negatives(vec![vec![2, 9, 4]], vec![vec![false, false, true]], s);
    let (n3, n5) = (neg(3), neg(5));
    let l3 = loss_of(
        &model,
        &TrainBatch {
            sequences: &[vec![3, 6, 1]],
            targets: &[vec![6, 1, 7]],
            negatives: &n3,
        },
    );
    let l5 = loss_of(
        &model,
        &TrainBatch {
            sequences: &[vec![0, 0, 3, 6, 1]],
            targets: &[vec![0, 0, 6, 1, 7]],
            negatives: &n5,
        },
    );
    assert_eq!(l3, l5);
}

#[test]
fn zero_weights_give_equal_embeddings() {
    let model = SasRec::zeros(tiny(0).config).unwrap();
    let out = model
        .forward(
            &[vec![1, 2, 3], vec![4, 4, 4]],
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
    let first = out.embedding(0, 0).unwrap().to_vec();
    for b in 0..2 {
        for t in 0..3 {
            assert_eq!(out.embedding(b, t).unwrap(), first.as_slice());
        }
    }
}

#[test]
fn identical_rows_and_bit_determinism() {
    let model = tiny(9);
    let seqs = vec![vec![2, 5, 7]; 3];
    let a = model.forward(&seqs, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(a.dense(0), a.dense(1));
    assert_eq!(a.dense(1), a.dense(2));
    let targets = vec![vec![5, 7, 1]; 3];
    let neg = negatives(vec![vec![3, 4]; 3], vec![vec![false; 2]; 3], 3);
    let batch = TrainBatch {
        sequences: &seqs,
        targets: &targets,
        negatives: &neg,
    };
    let run = || {
        model
            .loss_and_grads(&batch, None, false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
    };
    let (r1, g1) = run();
    let (r2, g2) = run();
    assert_eq!(r1, r2);
    assert_eq!(g1, g2);
}

#[test]
fn masking_equals_removal() {
    let model = tiny(2);
    let seqs = vec![vec![1, 3, 5]];
    let targets = vec![vec![3, 5, 6]];
    let masked = negatives(vec![vec![2, 8, 9]], vec![vec![false, true, false]], 3);
    let removed = negatives(vec![vec![2, 9]], vec![vec![false, false]], 3);
    let run = |n: &NegativeBatch| {
        model
            .loss_and_grads(
                &TrainBatch {
                    sequences: &seqs,
                    targets: &targets,
                    negatives: n,
                },
                None,
                false,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap()
    };
    let (a, ga) = run(&masked);
    let (b, gb) = run(&removed);
    assert_eq!(a.loss, b.loss);
    assert_eq!(ga, gb);

    let mut retained = negatives(vec![vec![2, 8, 9]], vec![vec![false; 3]], 3);
    let mut keep = vec![true; 9];
    for t in 0..3 {
        keep[t * 3 + 1] = false;
    }
    retained.retention = Some(keep);
    let (c, gc) = run(&retained);
    assert_eq!(c.loss, b.loss);
    assert_eq!(gc, gb);
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut model = tiny(1);
    let before = model.params.clone();
    let seqs = vec![vec![1, 2, 3]];
    let targets = vec![vec![2, 3, 4]];
    let neg = negatives(vec![vec![5, 6]], vec![vec![false; 2]], 3);
    let batch = TrainBatch {
        sequences: &seqs,
        targets: &targets,
        negatives: &neg,
    };
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    for _ in 0..3 {
        let (_, g) = model
            .loss_and_grads(&batch, None, false, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        backward_and_step(&mut model, &g, &mut adam, 0.0).unwrap();
    }
    assert_eq!(model.params, before);
}

#[test]
fn overfits_five_users() {
    let cfg = ModelConfig {
        embed_dim: 16,
        num_blocks: 1,
        num_heads: 1,
        max_seq_len: 5,
        dropout: 0.0,
        num_items: 20,
    };
    let mut model = SasRec::new(cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let seqs: Vec<Vec<ItemId>> = vec![
        vec![1, 2, 3, 4, 5],
        vec![0, 6, 7, 8, 9],
        vec![10, 11, 12, 13, 14],
        vec![0, 0, 15, 16, 17],
        vec![18, 19, 20, 1, 3],
    ];
    let targets: Vec<Vec<ItemId>> = seqs
        .iter()
        .map(|s| {
            let mut t: Vec<ItemId> = s[1..].to_vec();
            t.push(s[4] % 20 + 1);
            t.iter().zip(s).map(|(&n, &c)| if c == 0 { 0 } else { n }).collect()
        })
        .collect();
    let pools: Vec<Vec<ItemId>> = (0..5)
        .map(|b| (0..6).map(|c| ((b * 7 + c * 3) % 20 + 1) as ItemId).collect())
        .collect();
    let exclusion = pools
        .iter()
        .zip(&seqs)
        .zip(&targets)
        .map(|((p, s), t)| p.iter().map(|i| s.contains(i) || t.contains(i)).collect())
        .collect();
    let neg = negatives(pools, exclusion, 5);
    let batch = TrainBatch {
        sequences: &seqs,
        targets: &targets,
        negatives: &neg,
    };
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut first = None;
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let (r, g) = model.loss_and_grads(&batch, None, true, &mut rng).unwrap();
        first.get_or_insert(r.loss);
        last = r.loss;
        backward_and_step(&mut model, &g, &mut adam, 0.01).unwrap();
        assert!(model.params.item_emb[..16].iter().all(|&x| x == 0.0));
    }
    let (r, _) = model.loss_and_grads(&batch, None, false, &mut rng).unwrap();
    assert!(r.loss < 0.05, "loss {} (first {:?}, last step {last})", r.loss, first);
}

#[test]
fn retrieval_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..5 {
        let n = rng.random_range(5..1000);
        let cfg = ModelConfig {
            embed_dim: 8,
            num_blocks: 1,
            num_heads: 2,
            max_seq_len: 6,
            dropout: 0.0,
            num_items: n,
        };
        let model = SasRec::new(cfg, &mut ChaCha8Rng::seed_from_u64(trial)).unwrap();
        let hist: Vec<ItemId> = (0..rng.random_range(1..10))
            .map(|_| rng.random_range(1..=n as ItemId))
            .collect();
        let user = model.user_embedding(&hist).unwrap();
        for exclude in [true, false] {
            let mut all: Vec<(ItemId, f64)> = (1..=n as ItemId)
                .filter(|i| !exclude || !hist.contains(i))
                .map(|i| (i, user.iter().zip(model.item_embedding(i)).map(|(a, b)| a * b).sum()))
                .collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let k = rng.random_range(1..=n + 3);
            let got = retrieve_scored(&model, &hist, k, exclude).unwrap();
            let want: Vec<ItemId> = all.iter().take(k).map(|x| x.0).collect();
            assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), want);
        }
    }
}

#[test]
fn retrieval_examples() {
    // Three items with scores 0.1, 0.9, 0.5 against a unit user vector.
    let mut model = SasRec::zeros(ModelConfig {
        embed_dim: 2,
        num_blocks: 1,
        num_heads: 1,
        max_seq_len: 2,
        dropout: 0.0,
        num_items: 3,
    })
    .unwrap();
    // Zero weights, unit LN2 bias on dim 0: every user embedding is (1, 0).
    model.params.blocks[0].ln2_bias = vec![1.0, 0.0];
    model.params.item_emb = vec![0.0, 0.0, 0.1, 0.0, 0.9, 0.0, 0.5, 0.0];
    assert_eq!(retrieve_topk(&model, &[1], 2, false).unwrap(), vec![2, 3]);
    assert_eq!(retrieve_topk(&model, &[2], 2, true).unwrap(), vec![3, 1]);
    assert_eq!(retrieve_topk(&model, &[2], 10, true).unwrap(), vec![3, 1]);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let model = SasRec::new(
        ModelConfig {
            embed_dim: 8,
            num_blocks: 2,
            num_heads: 2,
            max_seq_len: 4,
            dropout: 0.1,
            num_items: 30,
        },
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &model, 77).unwrap();
    let ck = load_checkpoint::<f64>(&path).unwrap();
    assert_eq!(ck.seed, 77);
    assert_eq!(ck.model, model);
    for h in [vec![1, 2], vec![30, 4, 5, 6, 7]] {
        assert_eq!(
            retrieve_topk(&ck.model, &h, 10, true).unwrap(),
            retrieve_topk(&model, &h, 10, true).unwrap()
        );
    }
    assert!(load_checkpoint::<f32>(&path).is_err());

    let m32 = negsample::SasRec32::new(model.config.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    save_checkpoint(&path, &m32, 1).unwrap();
    assert_eq!(load_checkpoint::<f32>(&path).unwrap().model, m32);
}

#[test]
fn out_of_range_ids_are_rejected() {
    let model = tiny(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(model.forward(&[vec![1, 11, 2]], false, &mut rng).is_err());
    assert!(model.forward(&[vec![1, 0, 2]], false, &mut rng).is_err());
    assert!(model.forward(&[vec![1, 2, 3, 4]], false, &mut rng).is_err());
}

#[test]
fn dropout_only_in_train_mode() {
    let mut cfg = tiny(0).config;
    cfg.dropout = 0.5;
    let model = SasRec::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = model.forward(&[vec![1, 2, 3]], false, &mut rng).unwrap().dense(0);
    let b = model.forward(&[vec![1, 2, 3]], false, &mut rng).unwrap().dense(0);
    let c = model.forward(&[vec![1, 2, 3]], true, &mut rng).unwrap().dense(0);
    assert_eq!(a, b);
    assert_ne!(a, c);
}
