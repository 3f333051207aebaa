//! Token-to-vector embedding: one-hot indicator rows or a learned table.

use crate::langgen::{TokenSeq, PAD_ID};
use crate::neural::{ops, NeuralError, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedMode {
    OneHot,
    Learned,
}

/// Vocabulary-sized embedding table. The PAD row is all-zero in both modes
/// and receives no gradient, so padded positions are exact no-ops.
pub struct EmbeddingTable {
    mode: EmbedMode,
    vocab_size: usize,
    dim: usize,
    weights: Tensor,
}

pub const DEFAULT_LEARNED_DIM: usize = 16;

impl EmbeddingTable {
    /// Indicator rows: d = |D|, row w = e_w, PAD row zero. Not trainable.
    pub fn one_hot(vocab_size: usize) -> EmbeddingTable {
        let mut data = vec![0.0; vocab_size * vocab_size];
        for w in 0..vocab_size {
            if w as u32 != PAD_ID {
                data[w * vocab_size + w] = 1.0;
            }
        }
        EmbeddingTable {
            mode: EmbedMode::OneHot,
            vocab_size,
            dim: vocab_size,
            weights: Tensor::constant(&[vocab_size, vocab_size], data),
        }
    }

    /// Trainable table with seeded uniform init in [-0.05, 0.05]; PAD row
    /// starts at zero and stays frozen.
    pub fn learned(vocab_size: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
        let mut data = vec![0.0; vocab_size * dim];
        for (w, chunk) in data.chunks_mut(dim).enumerate() {
            for v in chunk.iter_mut() {
                let sample = rng.gen_range(-0.05..0.05);
                if w as u32 != PAD_ID {
                    *v = sample;
                }
            }
        }
        EmbeddingTable {
            mode: EmbedMode::Learned,
            vocab_size,
            dim,
            weights: Tensor::param("embed.weights", &[vocab_size, dim], data),
        }
    }

    pub fn mode(&self) -> EmbedMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        match self.mode {
            EmbedMode::OneHot => Vec::new(),
            EmbedMode::Learned => vec![self.weights.clone()],
        }
    }

    /// Embed a batch of token sequences into (B, L_max, d).
    pub fn embed(&self, seqs: &[TokenSeq]) -> Result<Tensor, NeuralError> {
        let ids: Vec<Vec<u32>> = seqs.iter().map(|s| s.ids.clone()).collect();
        ops::embedding_lookup(&self.weights, &ids, Some(PAD_ID))
    }
}
