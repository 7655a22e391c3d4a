//! Causal self-attention encoder: forward pass with cached activations and the
//! matching hand-derived backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{layer_norm, layer_norm_backward, linear, linear_backward, LnCache};
use super::{ModelConfig, Params};
use crate::{Error, ItemId, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SasRecModel<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

struct BlockCache<T> {
    input: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads x n x n`, zero above the diagonal.
    probs: Vec<T>,
    ctx: Vec<T>,
    attn_mask: Option<Vec<T>>,
    ln1: LnCache<T>,
    h1: Vec<T>,
    pre: Vec<T>,
    hidden: Vec<T>,
    hid_mask: Option<Vec<T>>,
    out_mask: Option<Vec<T>>,
    ln2: LnCache<T>,
}

/// Activations of one sequence. Only the non-padded suffix of the window is
/// materialised; padded positions have all-zero embeddings.
pub struct SeqCache<T> {
    items: Vec<ItemId>,
    /// Window length as given (padding included).
    window: usize,
    /// Positional index of the first real item.
    pos_offset: usize,
    emb_mask: Option<Vec<T>>,
    blocks: Vec<BlockCache<T>>,
    output: Vec<T>,
}

impl<T: Scalar> SeqCache<T> {
    /// Number of real (non-padded) positions.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Window index of the first real position.
    pub fn start(&self) -> usize {
        self.window - self.items.len()
    }

    /// Causal embedding at window position `t`, `None` for padding.
    pub fn embedding(&self, t: usize, d: usize) -> Option<&[T]> {
        let r = t.checked_sub(self.start())?;
        (r < self.items.len()).then(|| &self.output[r * d..(r + 1) * d])
    }

    /// Output rows of the real positions, `len() x d`.
    pub fn real_output(&self) -> &[T] {
        &self.output
    }
}

/// Per-user causal embeddings with the cached activations for backward.
pub struct ForwardOutput<T> {
    pub seq_len: usize,
    pub embed_dim: usize,
    pub caches: Vec<SeqCache<T>>,
}

impl<T: Scalar> ForwardOutput<T> {
    /// `e_u^t` for user `b` at window position `t`.
    pub fn embedding(&self, b: usize, t: usize) -> Option<&[T]> {
        self.caches[b].embedding(t, self.embed_dim)
    }

    /// Padded `S x d` matrix for user `b` (zeros at padded rows).
    pub fn dense(&self, b: usize) -> Vec<T> {
        let d = self.embed_dim;
        let c = &self.caches[b];
        let mut out = vec![T::zero(); c.window * d];
        out[c.start() * d..].copy_from_slice(&c.output);
        out
    }
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (xi, &mi) in x.iter_mut().zip(m) {
            *xi *= mi;
        }
    }
}

impl<T: Scalar> SasRecModel<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, rng);
        Ok(Self { config, params })
    }

    /// All-zero weights (layer-norm gains included).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::zeros(&config);
        Ok(Self { config, params })
    }

    /// Splits a left-padded window into its real suffix.
    fn real_suffix<'a>(&self, window: &'a [ItemId]) -> Result<&'a [ItemId]> {
        let s = self.config.max_seq_len;
        if window.len() > s {
            return Err(Error::Input(format!(
                "window of length {} exceeds max_seq_len {s}",
                window.len()
            )));
        }
        let start = window.iter().position(|&i| i != 0).unwrap_or(window.len());
        let real = &window[start..];
        if let Some(&bad) = real.iter().find(|&&i| i == 0 || i as usize > self.config.num_items) {
            return Err(Error::Input(if bad == 0 {
                "padding id 0 after the first real item".to_string()
            } else {
                format!("item id {bad} out of range 1..={}", self.config.num_items)
            }));
        }
        Ok(real)
    }

    /// Forward pass over one left-padded window of length `<= max_seq_len`.
    /// Positions are right-aligned, so extra left padding leaves the real
    /// positions untouched.
    pub fn forward_one<R: Rng + ?Sized>(
        &self,
        window: &[ItemId],
        train_mode: bool,
        rng: &mut R,
    ) -> Result<SeqCache<T>> {
        let real = self.real_suffix(window)?;
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let n = real.len();
        let pos_offset = cfg.max_seq_len - n;
        let p = cfg.dropout;
        let drop = |len: usize, rng: &mut R| (train_mode && p > 0.0).then(|| dropout_mask::<T, R>(len, p, rng));

        let scale = T::of((d as f64).sqrt());
        let mut x = vec![T::zero(); n * d];
        for (r, &item) in real.iter().enumerate() {
            let e = &self.params.item_emb[item as usize * d..(item as usize + 1) * d];
            let pe = &self.params.pos_emb[(pos_offset + r) * d..(pos_offset + r + 1) * d];
            for j in 0..d {
                x[r * d + j] = e[j] * scale + pe[j];
            }
        }
        let emb_mask = drop(n * d, rng);
        apply_mask(&mut x, &emb_mask);

        let heads = cfg.num_heads;
        let dh = d / heads;
        let f = cfg.ffn_hidden();
        let att_scale = T::of(1.0 / (dh as f64).sqrt());
        let mut blocks = Vec::with_capacity(cfg.num_blocks);

        for bp in &self.params.blocks {
            let q = linear(&x, n, &bp.wq, &bp.bq, d, d);
            let k = linear(&x, n, &bp.wk, &bp.bk, d, d);
            let v = linear(&x, n, &bp.wv, &bp.bv, d, d);
            let mut probs = vec![T::zero(); heads * n * n];
            let mut ctx = vec![T::zero(); n * d];
            for h in 0..heads {
                let hs = h * dh..(h + 1) * dh;
                for i in 0..n {
                    let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let qi = &q[i * d..(i + 1) * d][hs.clone()];
                    let mut max = T::neg_infinity();
                    for j in 0..=i {
                        let s = super::ops::dot(qi, &k[j * d..(j + 1) * d][hs.clone()]) * att_scale;
                        row[j] = s;
                        max = max.max(s);
                    }
                    let mut sum = T::zero();
                    for pj in row[..=i].iter_mut() {
                        *pj = (*pj - max).exp();
                        sum += *pj;
                    }
                    let ci = &mut ctx[i * d..(i + 1) * d][hs.clone()];
                    for j in 0..=i {
                        row[j] /= sum;
                        super::ops::axpy(row[j], &v[j * d..(j + 1) * d][hs.clone()], ci);
                    }
                }
            }
            let mut attn_out = linear(&ctx, n, &bp.wo, &bp.bo, d, d);
            let attn_mask = drop(n * d, rng);
            apply_mask(&mut attn_out, &attn_mask);
            for (a, &xi) in attn_out.iter_mut().zip(&x) {
                *a += xi;
            }
            let (h1, ln1) = layer_norm(&attn_out, n, d, &bp.ln1_gain, &bp.ln1_bias);

            let pre = linear(&h1, n, &bp.w1, &bp.b1, d, f);
            let mut hidden: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
            let hid_mask = drop(n * f, rng);
            apply_mask(&mut hidden, &hid_mask);
            let mut ffn_out = linear(&hidden, n, &bp.w2, &bp.b2, f, d);
            let out_mask = drop(n * d, rng);
            apply_mask(&mut ffn_out, &out_mask);
            for (o, &hi) in ffn_out.iter_mut().zip(&h1) {
                *o += hi;
            }
            let (y, ln2) = layer_norm(&ffn_out, n, d, &bp.ln2_gain, &bp.ln2_bias);

            let input = std::mem::replace(&mut x, y);
            blocks.push(BlockCache {
                input,
                q,
                k,
                v,
                probs,
                ctx,
                attn_mask,
                ln1,
                h1,
                pre,
                hidden,
                hid_mask,
                out_mask,
                ln2,
            });
        }

        Ok(SeqCache {
            items: real.to_vec(),
            window: window.len(),
            pos_offset,
            emb_mask,
            blocks,
            output: x,
        })
    }

    /// Forward pass over a batch of left-padded windows `[B, S]`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        sequences: &[Vec<ItemId>],
        train_mode: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput<T>> {
        let seq_len = sequences.first().map_or(0, Vec::len);
        let caches = sequences
            .iter()
            .map(|w| self.forward_one(w, train_mode, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardOutput {
            seq_len,
            embed_dim: self.config.embed_dim,
            caches,
        })
    }

    /// Accumulates parameter gradients given `d_output` (`len() x d`, real
    /// rows only) for one cached sequence.
    pub fn backward_one(&self, cache: &SeqCache<T>, d_output: &[T], grads: &mut Params<T>) {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let n = cache.items.len();
        if n == 0 {
            return;
        }
        let heads = cfg.num_heads;
        let dh = d / heads;
        let f = cfg.ffn_hidden();
        let att_scale = T::of(1.0 / (dh as f64).sqrt());
        let mut dy = d_output.to_vec();

        for (bi, bc) in cache.blocks.iter().enumerate().rev() {
            let bp = &self.params.blocks[bi];
            let g = &mut grads.blocks[bi];

            // y = LN2(h1 + ffn)
            let dr2 = layer_norm_backward(&dy, &bc.ln2, n, d, &bp.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
            let mut dffn = dr2.clone();
            apply_mask(&mut dffn, &bc.out_mask);
            let mut dhidden = vec![T::zero(); n * f];
            linear_backward(
                &bc.hidden,
                &dffn,
                n,
                &bp.w2,
                f,
                d,
                &mut g.w2,
                &mut g.b2,
                Some(&mut dhidden),
            );
            apply_mask(&mut dhidden, &bc.hid_mask);
            for (dz, &z) in dhidden.iter_mut().zip(&bc.pre) {
                if z <= T::zero() {
                    *dz = T::zero();
                }
            }
            let mut dh1 = dr2;
            linear_backward(&bc.h1, &dhidden, n, &bp.w1, d, f, &mut g.w1, &mut g.b1, Some(&mut dh1));

            // h1 = LN1(x + attn)
            let dr1 = layer_norm_backward(&dh1, &bc.ln1, n, d, &bp.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
            let mut dattn = dr1.clone();
            apply_mask(&mut dattn, &bc.attn_mask);
            let mut dctx = vec![T::zero(); n * d];
            linear_backward(&bc.ctx, &dattn, n, &bp.wo, d, d, &mut g.wo, &mut g.bo, Some(&mut dctx));

            let mut dq = vec![T::zero(); n * d];
            let mut dk = vec![T::zero(); n * d];
            let mut dv = vec![T::zero(); n * d];
            let mut dp = vec![T::zero(); n];
            for h in 0..heads {
                let hs = h * dh..(h + 1) * dh;
                for i in 0..n {
                    let row = &bc.probs[(h * n + i) * n..(h * n + i + 1) * n];
                    let dci = &dctx[i * d..(i + 1) * d][hs.clone()];
                    let mut weighted = T::zero();
                    for j in 0..=i {
                        dp[j] = super::ops::dot(dci, &bc.v[j * d..(j + 1) * d][hs.clone()]);
                        weighted += row[j] * dp[j];
                        super::ops::axpy(row[j], dci, &mut dv[j * d..(j + 1) * d][hs.clone()]);
                    }
                    for j in 0..=i {
                        let ds = row[j] * (dp[j] - weighted) * att_scale;
                        if ds == T::zero() {
                            continue;
                        }
                        super::ops::axpy(
                            ds,
                            &bc.k[j * d..(j + 1) * d][hs.clone()],
                            &mut dq[i * d..(i + 1) * d][hs.clone()],
                        );
                        super::ops::axpy(
                            ds,
                            &bc.q[i * d..(i + 1) * d][hs.clone()],
                            &mut dk[j * d..(j + 1) * d][hs.clone()],
                        );
                    }
                }
            }

            let mut dx = dr1;
            linear_backward(&bc.input, &dq, n, &bp.wq, d, d, &mut g.wq, &mut g.bq, Some(&mut dx));
            linear_backward(&bc.input, &dk, n, &bp.wk, d, d, &mut g.wk, &mut g.bk, Some(&mut dx));
            linear_backward(&bc.input, &dv, n, &bp.wv, d, d, &mut g.wv, &mut g.bv, Some(&mut dx));
            dy = dx;
        }

        apply_mask(&mut dy, &cache.emb_mask);
        let scale = T::of((d as f64).sqrt());
        for (r, &item) in cache.items.iter().enumerate() {
            let dyr = &dy[r * d..(r + 1) * d];
            super::ops::axpy(
                scale,
                dyr,
                &mut grads.item_emb[item as usize * d..(item as usize + 1) * d],
            );
            let pos = cache.pos_offset + r;
            super::ops::axpy(T::one(), dyr, &mut grads.pos_emb[pos * d..(pos + 1) * d]);
        }
    }

    /// Causal embedding after the last real position of `history` (most
    /// recent `max_seq_len` items), dropout off.
    pub fn user_embedding(&self, history: &[ItemId]) -> Result<Vec<T>> {
        let s = self.config.max_seq_len;
        let window = &history[history.len().saturating_sub(s)..];
        if window.is_empty() {
            return Err(Error::Input("empty history".into()));
        }
        let cache = self.forward_one(window, false, &mut NoRng)?;
        let d = self.config.embed_dim;
        Ok(cache.output[(cache.len() - 1) * d..].to_vec())
    }

    /// Embedding row of an item.
    #[inline]
    pub fn item_embedding(&self, item: ItemId) -> &[T] {
        let d = self.config.embed_dim;
        &self.params.item_emb[item as usize * d..(item as usize + 1) * d]
    }
}

/// Entropy source for eval-mode passes, which never draw.
pub(crate) struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode forward does not sample")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode forward does not sample")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("eval-mode forward does not sample")
    }
}
