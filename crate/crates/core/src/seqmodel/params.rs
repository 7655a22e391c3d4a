use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::{Error, Result, Scalar};

/// Weights of one encoder block. Matrices are row-major `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams<T> {
    pub wq: Vec<T>,
    pub bq: Vec<T>,
    pub wk: Vec<T>,
    pub bk: Vec<T>,
    pub wv: Vec<T>,
    pub bv: Vec<T>,
    pub wo: Vec<T>,
    pub bo: Vec<T>,
    pub ln1_gain: Vec<T>,
    pub ln1_bias: Vec<T>,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
    pub ln2_gain: Vec<T>,
    pub ln2_bias: Vec<T>,
}

/// All trainable parameters. Row 0 of `item_emb` is the padding embedding and
/// stays zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub item_emb: Vec<T>,
    pub pos_emb: Vec<T>,
    pub blocks: Vec<BlockParams<T>>,
}

const BLOCK_TENSORS: [&str; 16] = [
    "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln1_gain", "ln1_bias", "w1", "b1", "w2", "b2", "ln2_gain",
    "ln2_bias",
];

impl<T: Scalar> BlockParams<T> {
    fn filled(d: usize, f: usize, value: T, gain: T) -> Self {
        Self {
            wq: vec![value; d * d],
            bq: vec![value; d],
            wk: vec![value; d * d],
            bk: vec![value; d],
            wv: vec![value; d * d],
            bv: vec![value; d],
            wo: vec![value; d * d],
            bo: vec![value; d],
            ln1_gain: vec![gain; d],
            ln1_bias: vec![value; d],
            w1: vec![value; d * f],
            b1: vec![value; f],
            w2: vec![value; f * d],
            b2: vec![value; d],
            ln2_gain: vec![gain; d],
            ln2_bias: vec![value; d],
        }
    }

    fn tensors(&self) -> [&Vec<T>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<T>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }
}

impl<T: Scalar> Params<T> {
    /// Every parameter zero, layer-norm gains included.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::filled(config, T::zero(), T::zero())
    }

    /// Same layout as `config`, zero everywhere; used for gradients and
    /// optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.fill_zero();
        out
    }

    fn filled(config: &ModelConfig, value: T, gain: T) -> Self {
        let d = config.embed_dim;
        let f = config.ffn_hidden();
        Self {
            item_emb: vec![value; (config.num_items + 1) * d],
            pos_emb: vec![value; config.max_seq_len * d],
            blocks: (0..config.num_blocks)
                .map(|_| BlockParams::filled(d, f, value, gain))
                .collect(),
        }
    }

    /// Embeddings ~ N(0, 1/d), projections Glorot-uniform, biases zero,
    /// layer-norm gains one.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Self {
        let d = config.embed_dim;
        let f = config.ffn_hidden();
        let mut p = Self::filled(config, T::zero(), T::one());
        let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("valid std");
        for x in p.item_emb.iter_mut().skip(d) {
            *x = T::of(normal.sample(rng));
        }
        for x in p.pos_emb.iter_mut() {
            *x = T::of(normal.sample(rng));
        }
        let glorot = |fan_in: usize, fan_out: usize, w: &mut Vec<T>, rng: &mut R| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).expect("valid bounds");
            for x in w.iter_mut() {
                *x = T::of(u.sample(rng));
            }
        };
        for b in &mut p.blocks {
            glorot(d, d, &mut b.wq, rng);
            glorot(d, d, &mut b.wk, rng);
            glorot(d, d, &mut b.wv, rng);
            glorot(d, d, &mut b.wo, rng);
            glorot(d, f, &mut b.w1, rng);
            glorot(f, d, &mut b.w2, rng);
        }
        p
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// `(name, tensor)` in a fixed order: embeddings, then blocks in order.
    pub fn tensors(&self) -> Vec<(String, &Vec<T>)> {
        let mut out = vec![
            ("item_emb".to_string(), &self.item_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in BLOCK_TENSORS.iter().zip(b.tensors()) {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = vec![
            ("item_emb".to_string(), &mut self.item_emb),
            ("pos_emb".to_string(), &mut self.pos_emb),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in BLOCK_TENSORS.iter().zip(b.tensors_mut()) {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// First tensor holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.tensors() {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params<T>, scale: T) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.iter_mut().zip(b.iter()) {
                *x += scale * y;
            }
        }
    }
}
