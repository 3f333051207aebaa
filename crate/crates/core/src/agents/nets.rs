//! Networks: a shared encoder abstraction plus the Q-network and the
//! PPO policy/value network.

use super::env::Obs;
use crate::embed::EmbeddingTable;
use crate::langgen::TokenSeq;
use crate::neural::{ops, Dense, ImageCnn, Model, NeuralError, Tensor, TextCnn};
use rand_chacha::ChaCha8Rng;

/// Observation encoder. `Tabular` feeds flat vectors straight through and
/// exists for toy MDPs where the heads do all the work.
pub enum Encoder {
    Text(TextCnn),
    Image(ImageCnn),
    Tabular { dim: usize },
}

impl Encoder {
    pub fn feature_dim(&self) -> usize {
        match self {
            Encoder::Text(net) => net.feature_dim(),
            Encoder::Image(net) => net.feature_dim(),
            Encoder::Tabular { dim } => *dim,
        }
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        match self {
            Encoder::Text(net) => net.parameters(),
            Encoder::Image(net) => net.parameters(),
            Encoder::Tabular { .. } => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Encode a batch of observations into (B, feature_dim) rows.
    pub fn encode(&self, batch: &[&Obs]) -> Result<Tensor, NeuralError> {
        match self {
            Encoder::Text(net) => {
                let seqs: Vec<TokenSeq> = batch
                    .iter()
                    .map(|o| match o {
                        Obs::Text(seq) => Ok(seq.clone()),
                        _ => Err(NeuralError::ShapeMismatch {
                            op: "encode".into(),
                            expected: "text observation".into(),
                            got: "image observation".into(),
                        }),
                    })
                    .collect::<Result<_, _>>()?;
                net.encode(&seqs)
            }
            Encoder::Image(net) => {
                let x = image_batch(batch)?;
                net.encode(&x)
            }
            Encoder::Tabular { dim } => {
                let mut data = Vec::with_capacity(batch.len() * dim);
                for o in batch {
                    match o {
                        Obs::Image { data: d, .. } if d.len() == *dim => {
                            data.extend(d.iter().map(|&v| v as f64))
                        }
                        _ => {
                            return Err(NeuralError::ShapeMismatch {
                                op: "encode".into(),
                                expected: format!("flat vector of length {dim}"),
                                got: "other observation".into(),
                            })
                        }
                    }
                }
                Ok(Tensor::constant(&[batch.len(), *dim], data))
            }
        }
    }
}

fn image_batch(batch: &[&Obs]) -> Result<Tensor, NeuralError> {
    let (c, h, w) = match batch.first() {
        Some(Obs::Image { channels, height, width, .. }) => (*channels, *height, *width),
        _ => {
            return Err(NeuralError::ShapeMismatch {
                op: "encode".into(),
                expected: "non-empty image batch".into(),
                got: "empty or text".into(),
            })
        }
    };
    let mut data = Vec::with_capacity(batch.len() * c * h * w);
    for o in batch {
        match o {
            Obs::Image { channels, height, width, data: d }
                if (*channels, *height, *width) == (c, h, w) =>
            {
                data.extend(d.iter().map(|&v| v as f64));
            }
            _ => {
                return Err(NeuralError::ShapeMismatch {
                    op: "encode".into(),
                    expected: format!("image ({c}, {h}, {w})"),
                    got: "mixed batch".into(),
                })
            }
        }
    }
    Ok(Tensor::constant(&[batch.len(), c, h, w], data))
}

/// Encoder plus one linear head: Q(s, ·).
pub struct QNet {
    pub encoder: Encoder,
    pub head: Dense,
}

impl QNet {
    pub fn new(encoder: Encoder, n_actions: usize, rng: &mut ChaCha8Rng) -> QNet {
        let head = Dense::new("q_head", encoder.feature_dim(), n_actions, rng);
        QNet { encoder, head }
    }

    pub fn n_actions(&self) -> usize {
        self.head.out_dim()
    }

    pub fn forward(&self, batch: &[&Obs]) -> Result<Tensor, NeuralError> {
        self.head.forward(&self.encoder.encode(batch)?)
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.encoder.parameters();
        p.extend(self.head.parameters());
        p
    }

    /// Copy all parameter values from another identically-shaped net.
    pub fn sync_from(&mut self, other: &QNet) {
        for (dst, src) in self.parameters().iter().zip(other.parameters().iter()) {
            debug_assert_eq!(dst.shape(), src.shape());
            dst.set_data(&src.data());
        }
    }

    /// Greedy Q values without building a tape (batch of one).
    pub fn q_values(&self, obs: &Obs) -> Result<Vec<f64>, NeuralError> {
        Ok(self.forward(&[obs])?.data().clone())
    }
}

/// Shared encoder with separate policy and value heads (PPO default).
pub struct PolicyValueNet {
    pub encoder: Encoder,
    pub policy_head: Dense,
    pub value_head: Dense,
}

impl PolicyValueNet {
    pub fn new(encoder: Encoder, n_actions: usize, rng: &mut ChaCha8Rng) -> PolicyValueNet {
        let policy_head = Dense::new("policy_head", encoder.feature_dim(), n_actions, rng);
        let value_head = Dense::new("value_head", encoder.feature_dim(), 1, rng);
        PolicyValueNet { encoder, policy_head, value_head }
    }

    pub fn n_actions(&self) -> usize {
        self.policy_head.out_dim()
    }

    /// Returns (logits (B, A), values (B,)).
    pub fn forward(&self, batch: &[&Obs]) -> Result<(Tensor, Tensor), NeuralError> {
        let feats = self.encoder.encode(batch)?;
        let logits = self.policy_head.forward(&feats)?;
        let values = self.value_head.forward(&feats)?;
        let b = batch.len();
        let values = ops::gather_rows(&values, &vec![0; b])?;
        Ok((logits, values))
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        let mut p = self.encoder.parameters();
        p.extend(self.policy_head.parameters());
        p.extend(self.value_head.parameters());
        p
    }

    /// Log-probabilities and value for one observation, tape-free use.
    pub fn policy(&self, obs: &Obs) -> Result<(Vec<f64>, f64), NeuralError> {
        let (logits, values) = self.forward(&[obs])?;
        let logp = ops::log_softmax(&logits)?;
        let out = logp.data().clone();
        let v = values.data()[0];
        Ok((out, v))
    }
}

/// Build the encoder that matches a representation for the standard arena.
pub fn encoder_for(
    representation: super::env::Representation,
    vocab_size: usize,
    l_max: usize,
    embed_dim: usize,
    height: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Encoder {
    use super::env::Representation;
    match representation {
        Representation::Raw => Encoder::Image(ImageCnn::new(3, height, width, rng)),
        Representation::Seg => {
            Encoder::Image(ImageCnn::new(crate::observe::SEG_CHANNELS, height, width, rng))
        }
        Representation::Nl => {
            let table = EmbeddingTable::learned(vocab_size, embed_dim, rng);
            Encoder::Text(TextCnn::new(table, l_max, rng))
        }
    }
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            Encoder::Text(_) => "Text",
            Encoder::Image(_) => "Image",
            Encoder::Tabular { .. } => "Tabular",
        };
        write!(f, "Encoder::{kind}({} params)", self.param_count())
    }
}
