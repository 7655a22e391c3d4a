//! Self-attentive next-item model: causal encoder, dot-product scoring,
//! sampled BCE, Adam and full-corpus retrieval.

mod checkpoint;
mod encoder;
mod loss;
mod ops;
mod optim;
mod params;
mod retrieve;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoder::{ForwardOutput, SasRecModel, SeqCache};
pub use loss::{bce_loss, bce_loss_grad, LossCounts, LossGrad};
pub use ops::{sigmoid, softplus};
pub use optim::{backward_and_step, Adam, AdamConfig};
pub use params::{BlockParams, Params};
pub use retrieve::{retrieve_scored, retrieve_topk, Retriever};
pub use train::{LossReport, TrainBatch};

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    /// Corpus size `|I|`; ids run `1..=num_items`.
    pub num_items: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            num_blocks: 2,
            num_heads: 1,
            max_seq_len: 50,
            dropout: 0.2,
            num_items: 0,
        }
    }
}

impl ModelConfig {
    pub fn ffn_hidden(&self) -> usize {
        self.embed_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return bad(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.max_seq_len == 0 {
            return bad("max_seq_len must be at least 1".into());
        }
        if self.num_blocks == 0 {
            return bad("num_blocks must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.num_items == 0 {
            return bad("corpus is empty".into());
        }
        Ok(())
    }
}

/// `uᵀ·v`.
pub fn score<T: Scalar>(user_emb: &[T], item_emb: &[T]) -> Result<T> {
    if user_emb.len() != item_emb.len() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            user_emb.len(),
            item_emb.len()
        )));
    }
    Ok(ops::dot(user_emb, item_emb))
}

/// `σ(s)`, saturating without overflow.
pub fn predict_proba<T: Scalar>(score: T) -> T {
    sigmoid(score)
}
