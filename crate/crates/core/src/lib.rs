//! Core library for comparing state representations in reinforcement learning.
//!
//! The crate is organized around a single source of truth, [`world::WorldState`],
//! from which three observation types are derived: raw RGB frames, per-class
//! segmentation maps, and natural-language descriptions produced by a
//! patch-based template generator. DQN and PPO agents train on any of the
//! three through matching encoders built on a small reverse-mode
//! differentiation core.

pub mod agents;
pub mod embed;
pub mod harness;
pub mod langgen;
pub mod neural;
pub mod observe;
pub mod rng;
pub mod world;

pub use observe::{ObjectList, RawFrame, SegMap};
pub use world::{Action, ArenaConfig, Scenario, WorldState};
