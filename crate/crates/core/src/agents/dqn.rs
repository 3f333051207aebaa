//! DQN: squared TD error against a periodically-copied target network,
//! epsilon-greedy behavior policy, uniform replay.

use super::env::Obs;
use super::nets::QNet;
use super::replay::{ReplayBuffer, Transition};
use super::AgentError;
use crate::neural::{ops, Adam, AdamConfig, NeuralError, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct DqnConfig {
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_update: u64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub train_freq: u64,
    pub lr: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_update: 500,
            batch: 32,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            train_freq: 4,
            lr: 1e-3,
        }
    }
}

impl DqnConfig {
    pub fn epsilon(&self, step: u64) -> f64 {
        let frac = (step as f64 / self.eps_decay_steps as f64).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Greedy argmax with lowest-index tie-breaking, or a uniform draw with
/// probability epsilon.
pub fn dqn_act(
    obs: &Obs,
    net: &QNet,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize, NeuralError> {
    if rng.gen_range(0.0..1.0) < epsilon {
        return Ok(rng.gen_range(0..net.n_actions()));
    }
    let q = net.q_values(obs)?;
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Mean squared TD error over a batch. Targets come from the target net
/// and are detached, so gradients flow through the online net only.
pub fn dqn_td_loss(
    batch: &[&Transition],
    online: &QNet,
    target: &QNet,
    gamma: f64,
) -> Result<Tensor, NeuralError> {
    assert!(!batch.is_empty(), "empty TD batch");
    let obs: Vec<&Obs> = batch.iter().map(|t| &t.obs).collect();
    let next_obs: Vec<&Obs> = batch.iter().map(|t| &t.next_obs).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();

    let q_next = target.forward(&next_obs)?;
    let q_next = q_next.data();
    let n = target.n_actions();
    let targets: Vec<f64> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward
            } else {
                let max_q = q_next[i * n..(i + 1) * n].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                t.reward + gamma * max_q
            }
        })
        .collect();
    let target_t = Tensor::constant(&[batch.len()], targets);

    let q = online.forward(&obs)?;
    let q_sa = ops::gather_rows(&q, &actions)?;
    let diff = ops::sub(&q_sa, &target_t)?;
    ops::mean(&ops::mul(&diff, &diff)?)
}

pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: QNet,
    pub target: QNet,
    pub buffer: ReplayBuffer,
    optimizer: Adam,
    pub env_steps: u64,
    pub last_loss: f64,
}

impl DqnAgent {
    /// `make_net` is called twice so online and target share architecture
    /// but own separate tensors; the target is synced to the online init.
    pub fn new(config: DqnConfig, mut make_net: impl FnMut() -> QNet) -> DqnAgent {
        let online = make_net();
        let mut target = make_net();
        target.sync_from(&online);
        let optimizer = Adam::new(online.parameters(), AdamConfig { lr: config.lr, ..Default::default() });
        DqnAgent {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
            online,
            target,
            optimizer,
            env_steps: 0,
            last_loss: 0.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon(self.env_steps)
    }

    pub fn act(&self, obs: &Obs, rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        Ok(dqn_act(obs, &self.online, self.epsilon(), rng)?)
    }

    /// Store a transition and, on schedule, run one optimization step and
    /// any due target-network copy.
    pub fn observe(&mut self, t: Transition, rng: &mut ChaCha8Rng) -> Result<(), AgentError> {
        self.buffer.push(t);
        self.env_steps += 1;
        if self.env_steps % self.config.train_freq == 0 {
            if let Some(batch) = self.buffer.sample(self.config.batch, rng) {
                let loss = dqn_td_loss(&batch, &self.online, &self.target, self.config.gamma)?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(AgentError::Diverged {
                        step: self.env_steps,
                        msg: format!("TD loss {value}"),
                    });
                }
                self.last_loss = value;
                loss.backward()?;
                self.optimizer.step()?;
            }
        }
        if self.env_steps % self.config.target_update == 0 {
            self.target.sync_from(&self.online);
        }
        Ok(())
    }
}
