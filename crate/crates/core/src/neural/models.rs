//! Encoders and the shared fully-connected head.
//!
//! `TextCnn` and `ImageCnn` map observations to fixed-width feature rows;
//! task heads (`Dense`) are attached by the agents so that DQN can use one
//! head and PPO two over the same encoder.

use super::ops;
use super::tensor::Tensor;
use super::NeuralError;
use crate::embed::EmbeddingTable;
use crate::langgen::TokenSeq;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub trait Model {
    fn parameters(&self) -> Vec<Tensor>;

    fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Fully connected layer: (B, in) -> (B, out).
pub struct Dense {
    w: Tensor,
    b: Tensor,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            w: Tensor::param(&format!("{name}.w"), &[in_dim, out_dim], glorot(rng, in_dim, out_dim, in_dim * out_dim)),
            b: Tensor::param(&format!("{name}.b"), &[out_dim], vec![0.0; out_dim]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        ops::add_bias(&ops::matmul(x, &self.w)?, &self.b)
    }

    pub fn out_dim(&self) -> usize {
        self.b.len()
    }
}

impl Model for Dense {
    fn parameters(&self) -> Vec<Tensor> {
        vec![self.w.clone(), self.b.clone()]
    }
}

pub const TEXT_CNN_WIDTHS: [usize; 3] = [3, 4, 5];
pub const TEXT_CNN_FILTERS: usize = 32;

/// Sentence encoder: embedding, parallel conv widths {3,4,5} x 32 filters,
/// ReLU, max-over-time restricted to real-token windows, concat to 96.
pub struct TextCnn {
    embedding: EmbeddingTable,
    convs: Vec<(Tensor, Tensor)>, // (filters (F, W, d), bias (F)) per width
    l_max: usize,
}

impl TextCnn {
    pub fn new(embedding: EmbeddingTable, l_max: usize, rng: &mut ChaCha8Rng) -> TextCnn {
        assert!(l_max >= *TEXT_CNN_WIDTHS.iter().max().unwrap(), "l_max shorter than widest filter");
        let d = embedding.dim();
        let convs = TEXT_CNN_WIDTHS
            .iter()
            .map(|&w| {
                let fan_in = w * d;
                let weights = Tensor::param(
                    &format!("textcnn.conv{w}.w"),
                    &[TEXT_CNN_FILTERS, w, d],
                    glorot(rng, fan_in, TEXT_CNN_FILTERS, TEXT_CNN_FILTERS * w * d),
                );
                let bias = Tensor::param(&format!("textcnn.conv{w}.b"), &[TEXT_CNN_FILTERS], vec![0.0; TEXT_CNN_FILTERS]);
                (weights, bias)
            })
            .collect();
        TextCnn { embedding, convs, l_max }
    }

    pub fn feature_dim(&self) -> usize {
        TEXT_CNN_WIDTHS.len() * TEXT_CNN_FILTERS
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    /// (batch of token sequences) -> (B, 96) feature rows.
    pub fn encode(&self, seqs: &[TokenSeq]) -> Result<Tensor, NeuralError> {
        if seqs.iter().any(|s| s.ids.len() != self.l_max) {
            return Err(NeuralError::ShapeMismatch {
                op: "textcnn.encode".into(),
                expected: format!("sequences of length {}", self.l_max),
                got: format!("{:?}", seqs.iter().map(|s| s.ids.len()).collect::<Vec<_>>()),
            });
        }
        let x = self.embedding.embed(seqs)?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for (&w, (filters, bias)) in TEXT_CNN_WIDTHS.iter().zip(&self.convs) {
            let conv = ops::relu(&ops::conv1d(&x, filters, bias)?)?;
            // pool only over windows that start inside the real tokens; an
            // all-PAD sentence keeps window 0 and yields the bias response
            let valid: Vec<usize> = seqs
                .iter()
                .map(|s| s.true_length.saturating_sub(w - 1).clamp(1, self.l_max - w + 1))
                .collect();
            pooled.push(ops::max_over_time(&conv, &valid)?);
        }
        ops::concat_cols(&pooled)
    }
}

impl Model for TextCnn {
    fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.embedding.parameters();
        for (w, b) in &self.convs {
            p.push(w.clone());
            p.push(b.clone());
        }
        p
    }
}

pub const IMAGE_CNN_KERNEL: usize = 3;
pub const IMAGE_CNN_STRIDE: usize = 2;
pub const IMAGE_CNN_C1: usize = 16;
pub const IMAGE_CNN_C2: usize = 32;

/// Frame encoder: two 3x3 stride-2 conv layers (16 then 32 filters) with
/// ReLU, flattened to one feature row per sample.
pub struct ImageCnn {
    conv1: (Tensor, Tensor),
    conv2: (Tensor, Tensor),
    in_channels: usize,
    height: usize,
    width: usize,
}

fn conv_out(n: usize) -> usize {
    (n - IMAGE_CNN_KERNEL) / IMAGE_CNN_STRIDE + 1
}

impl ImageCnn {
    pub fn new(in_channels: usize, height: usize, width: usize, rng: &mut ChaCha8Rng) -> ImageCnn {
        let k = IMAGE_CNN_KERNEL;
        let make = |rng: &mut ChaCha8Rng, name: &str, cin: usize, cout: usize| {
            let w = Tensor::param(
                &format!("imagecnn.{name}.w"),
                &[cout, cin, k, k],
                glorot(rng, cin * k * k, cout * k * k, cout * cin * k * k),
            );
            let b = Tensor::param(&format!("imagecnn.{name}.b"), &[cout], vec![0.0; cout]);
            (w, b)
        };
        let conv1 = make(rng, "conv1", in_channels, IMAGE_CNN_C1);
        let conv2 = make(rng, "conv2", IMAGE_CNN_C1, IMAGE_CNN_C2);
        ImageCnn { conv1, conv2, in_channels, height, width }
    }

    pub fn feature_dim(&self) -> usize {
        IMAGE_CNN_C2 * conv_out(conv_out(self.height)) * conv_out(conv_out(self.width))
    }

    /// (B, C, H, W) pixel tensor -> (B, feature_dim) rows.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels || s[2] != self.height || s[3] != self.width {
            return Err(NeuralError::ShapeMismatch {
                op: "imagecnn.encode".into(),
                expected: format!("(B, {}, {}, {})", self.in_channels, self.height, self.width),
                got: format!("{s:?}"),
            });
        }
        let h1 = ops::relu(&ops::conv2d(x, &self.conv1.0, &self.conv1.1, IMAGE_CNN_STRIDE)?)?;
        let h2 = ops::relu(&ops::conv2d(&h1, &self.conv2.0, &self.conv2.1, IMAGE_CNN_STRIDE)?)?;
        ops::flatten_rows(&h2)
    }
}

impl Model for ImageCnn {
    fn parameters(&self) -> Vec<Tensor> {
        vec![
            self.conv1.0.clone(),
            self.conv1.1.clone(),
            self.conv2.0.clone(),
            self.conv2.1.clone(),
        ]
    }
}
