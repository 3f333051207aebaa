//! Observation construction and the arena environment wrapper.

use super::AgentError;
use crate::langgen::{tokenize, PatchGrid, TemplateBank, TokenSeq, Vocabulary};
use crate::observe::{render_raw, render_seg, SEG_CHANNELS};
use crate::rng::{episode_seed, stream_rng, Stream};
use crate::world::{self, Action, ArenaConfig, WorldState};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Representation {
    Raw,
    Seg,
    Nl,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Raw, Representation::Seg, Representation::Nl];

    pub fn name(&self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Seg => "seg",
            Representation::Nl => "nl",
        }
    }

    pub fn from_name(s: &str) -> Option<Representation> {
        match s {
            "raw" => Some(Representation::Raw),
            "seg" => Some(Representation::Seg),
            "nl" => Some(Representation::Nl),
            _ => None,
        }
    }
}

/// One observation as fed to an encoder. Image data is stored compactly
/// (f32, already normalized) because the replay buffer holds thousands.
#[derive(Clone, Debug)]
pub enum Obs {
    Image { channels: usize, height: usize, width: usize, data: Vec<f32> },
    Text(TokenSeq),
}

pub trait Environment {
    fn n_actions(&self) -> usize;
    fn reset(&mut self) -> Result<Obs, AgentError>;
    /// Returns (next observation, reward, terminal).
    fn step(&mut self, action: usize) -> Result<(Obs, f64, bool), AgentError>;
}

/// Arena + chosen representation as a step-able RL environment.
pub struct ArenaEnv {
    config: ArenaConfig,
    representation: Representation,
    grid: PatchGrid,
    bank: TemplateBank,
    vocab: Vocabulary,
    l_max: usize,
    master_seed: u64,
    episode: u64,
    texture_seed: u64,
    ambiguity_rng: ChaCha8Rng,
    state: Option<WorldState>,
    /// Sentences that exceeded l_max (must stay 0 in accepted runs).
    pub truncations: u64,
}

impl ArenaEnv {
    pub fn new(
        config: ArenaConfig,
        representation: Representation,
        grid: PatchGrid,
        master_seed: u64,
    ) -> Result<ArenaEnv, AgentError> {
        config.validate()?;
        let bank = TemplateBank::default_bank();
        let vocab = Vocabulary::from_bank(&bank);
        let l_max = grid.l_max();
        Ok(ArenaEnv {
            config,
            representation,
            grid,
            bank,
            vocab,
            l_max,
            master_seed,
            episode: 0,
            texture_seed: master_seed,
            ambiguity_rng: stream_rng(master_seed, Stream::Ambiguity),
            state: None,
            truncations: 0,
        })
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn episode_count(&self) -> u64 {
        self.episode
    }

    fn observe(&mut self, state: &WorldState) -> Result<Obs, AgentError> {
        match self.representation {
            Representation::Raw => {
                let frame = render_raw(state, &self.config, self.texture_seed);
                // HWC bytes -> CHW floats in [0, 1]
                let (h, w) = (frame.height as usize, frame.width as usize);
                let mut data = vec![0.0f32; 3 * h * w];
                for r in 0..h {
                    for c in 0..w {
                        let px = frame.pixel(c as u16, r as u16);
                        for ch in 0..3 {
                            data[ch * h * w + r * w + c] = px[ch] as f32 / 255.0;
                        }
                    }
                }
                Ok(Obs::Image { channels: 3, height: h, width: w, data })
            }
            Representation::Seg => {
                let seg = render_seg(state, &self.config);
                let (h, w) = (self.config.height as usize, self.config.width as usize);
                let mut data = vec![0.0f32; SEG_CHANNELS * h * w];
                for ch in 0..SEG_CHANNELS {
                    for r in 0..h {
                        for c in 0..w {
                            data[ch * h * w + r * w + c] = seg.get(ch, c as u16, r as u16) as f32;
                        }
                    }
                }
                Ok(Obs::Image { channels: SEG_CHANNELS, height: h, width: w, data })
            }
            Representation::Nl => {
                let words = crate::langgen::sentence_for_state(
                    state,
                    &self.config,
                    self.grid,
                    &self.bank,
                    &mut self.ambiguity_rng,
                );
                let (seq, truncated) = tokenize(&words, &self.vocab, self.l_max);
                if truncated {
                    self.truncations += 1;
                }
                Ok(Obs::Text(seq))
            }
        }
    }
}

impl Environment for ArenaEnv {
    fn n_actions(&self) -> usize {
        Action::COUNT
    }

    fn reset(&mut self) -> Result<Obs, AgentError> {
        let seed = episode_seed(self.master_seed, self.episode);
        self.texture_seed = seed;
        self.episode += 1;
        let state = world::reset(&self.config, seed)?;
        let obs = self.observe(&state)?;
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: usize) -> Result<(Obs, f64, bool), AgentError> {
        let state = self
            .state
            .take()
            .ok_or_else(|| AgentError::Config("step before reset".into()))?;
        let action = Action::from_index(action)
            .ok_or_else(|| AgentError::Config(format!("action index {action} out of range")))?;
        let outcome = world::step(&state, &self.config, action)?;
        let terminal = outcome.state.terminal(&self.config);
        let obs = self.observe(&outcome.state)?;
        let reward = outcome.reward;
        self.state = Some(outcome.state);
        Ok((obs, reward, terminal))
    }
}
