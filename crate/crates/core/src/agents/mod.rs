//! DQN and PPO over any observation representation.

pub mod corridor;

mod dqn;
mod env;
mod nets;
mod ppo;
mod replay;
mod train;

pub use dqn::{dqn_act, dqn_td_loss, DqnAgent, DqnConfig};
pub use env::{ArenaEnv, Environment, Obs, Representation};
pub use nets::{encoder_for, Encoder, PolicyValueNet, QNet};
pub use ppo::{gae, ppo_loss, PpoAgent, PpoConfig, PpoTransition};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, train, Agent, CurvePoint, TrainConfig, TrainResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error(transparent)]
    World(#[from] crate::world::WorldError),
    #[error(transparent)]
    Lang(#[from] crate::langgen::LangError),
    #[error("training diverged at step {step}: {msg}")]
    Diverged { step: u64, msg: String },
    #[error("bad agent configuration: {0}")]
    Config(String),
}
