//! Experiment specification, key=value loading, and run records.

use super::HarnessError;
use crate::agents::{DqnConfig, PpoConfig, Representation};
use crate::langgen::DEFAULT_BANK_TEXT;
use crate::world::{ArenaConfig, Scenario};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Algorithm {
    Dqn,
    Ppo,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
        }
    }

    pub fn from_name(s: &str) -> Option<Algorithm> {
        match s {
            "dqn" => Some(Algorithm::Dqn),
            "ppo" => Some(Algorithm::Ppo),
            _ => None,
        }
    }
}

/// Arena preset by name; `_mini` variants are short-episode versions for
/// desk-scale budgets.
pub fn arena_for(name: &str) -> Option<ArenaConfig> {
    match name {
        "defend_line" => Some(ArenaConfig::defaults(Scenario::DefendLine)),
        "defend_center" => Some(ArenaConfig::defaults(Scenario::DefendCenter)),
        "super" => Some(ArenaConfig::defaults(Scenario::Super)),
        "defend_line_mini" => Some(ArenaConfig::defend_line_mini()),
        "super_mini" => Some(ArenaConfig::super_mini()),
        _ => None,
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    /// Arena preset name (see [`arena_for`]).
    pub scenario: String,
    pub algorithm: Algorithm,
    pub representations: Vec<Representation>,
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    /// Overrides the preset's nuisance object count when set.
    pub nuisance: Option<u16>,
    pub nuisance_levels: Vec<u16>,
    pub patch_counts: Vec<usize>,
    pub n_dir: usize,
    pub n_dist: usize,
    pub embed_dim: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Stop a run early once the 100-episode moving average reaches this
    /// fraction of the scripted-expert mean (None = run the full budget).
    pub early_stop_expert_frac: Option<f64>,
    pub dqn: DqnConfig,
    pub ppo: PpoConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scenario: "defend_line_mini".into(),
            algorithm: Algorithm::Ppo,
            representations: vec![Representation::Nl, Representation::Seg, Representation::Raw],
            seeds: vec![0, 1, 2, 3, 4],
            total_steps: 200_000,
            nuisance: None,
            nuisance_levels: vec![0, 20, 60],
            patch_counts: vec![3, 7, 15, 31],
            n_dir: 3,
            n_dist: 3,
            embed_dim: 16,
            out_dir: PathBuf::from("out"),
            workers: 1,
            early_stop_expert_frac: None,
            dqn: DqnConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| format!("bad list item `{s}`")))
        .collect()
}

impl ExperimentSpec {
    /// Load from the flat key=value format (# comments allowed). Unknown
    /// keys are errors so typos cannot silently fall back to defaults.
    pub fn parse(text: &str) -> Result<ExperimentSpec, HarnessError> {
        let mut spec = ExperimentSpec::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(HarnessError::SpecParse {
                line,
                msg: "expected key=value".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |msg: String| HarnessError::SpecParse { line, msg };
            match key {
                "scenario" => {
                    arena_for(value).ok_or_else(|| bad(format!("unknown scenario `{value}`")))?;
                    spec.scenario = value.to_string();
                }
                "algorithm" => {
                    spec.algorithm = Algorithm::from_name(value)
                        .ok_or_else(|| bad(format!("unknown algorithm `{value}`")))?;
                }
                "representations" => {
                    spec.representations = value
                        .split(',')
                        .map(|s| {
                            Representation::from_name(s.trim())
                                .ok_or_else(|| bad(format!("unknown representation `{s}`")))
                        })
                        .collect::<Result<_, _>>()?;
                }
                "seeds" => spec.seeds = parse_list(value).map_err(bad)?,
                "total_steps" => spec.total_steps = value.parse().map_err(|_| bad("bad integer".into()))?,
                "nuisance" => spec.nuisance = Some(value.parse().map_err(|_| bad("bad integer".into()))?),
                "nuisance_levels" => spec.nuisance_levels = parse_list(value).map_err(bad)?,
                "patch_counts" => spec.patch_counts = parse_list(value).map_err(bad)?,
                "n_dir" => spec.n_dir = value.parse().map_err(|_| bad("bad integer".into()))?,
                "n_dist" => spec.n_dist = value.parse().map_err(|_| bad("bad integer".into()))?,
                "embed_dim" => spec.embed_dim = value.parse().map_err(|_| bad("bad integer".into()))?,
                "out_dir" => spec.out_dir = PathBuf::from(value),
                "workers" => spec.workers = value.parse().map_err(|_| bad("bad integer".into()))?,
                "early_stop_expert_frac" => {
                    spec.early_stop_expert_frac = Some(value.parse().map_err(|_| bad("bad float".into()))?)
                }
                "dqn.lr" => spec.dqn.lr = value.parse().map_err(|_| bad("bad float".into()))?,
                "dqn.gamma" => spec.dqn.gamma = value.parse().map_err(|_| bad("bad float".into()))?,
                "dqn.batch" => spec.dqn.batch = value.parse().map_err(|_| bad("bad integer".into()))?,
                "dqn.target_update" => spec.dqn.target_update = value.parse().map_err(|_| bad("bad integer".into()))?,
                "dqn.eps_decay_steps" => spec.dqn.eps_decay_steps = value.parse().map_err(|_| bad("bad integer".into()))?,
                "dqn.eps_end" => spec.dqn.eps_end = value.parse().map_err(|_| bad("bad float".into()))?,
                "dqn.train_freq" => spec.dqn.train_freq = value.parse().map_err(|_| bad("bad integer".into()))?,
                "dqn.buffer_capacity" => spec.dqn.buffer_capacity = value.parse().map_err(|_| bad("bad integer".into()))?,
                "ppo.lr" => spec.ppo.lr = value.parse().map_err(|_| bad("bad float".into()))?,
                "ppo.gamma" => spec.ppo.gamma = value.parse().map_err(|_| bad("bad float".into()))?,
                "ppo.clip" => spec.ppo.clip = value.parse().map_err(|_| bad("bad float".into()))?,
                "ppo.rollout_len" => spec.ppo.rollout_len = value.parse().map_err(|_| bad("bad integer".into()))?,
                "ppo.epochs" => spec.ppo.epochs = value.parse().map_err(|_| bad("bad integer".into()))?,
                "ppo.minibatch" => spec.ppo.minibatch = value.parse().map_err(|_| bad("bad integer".into()))?,
                "ppo.entropy_coeff" => spec.ppo.entropy_coeff = value.parse().map_err(|_| bad("bad float".into()))?,
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec, HarnessError> {
        ExperimentSpec::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Spec("no seeds".into()));
        }
        if self.representations.is_empty() {
            return Err(HarnessError::Spec("no representations".into()));
        }
        if self.patch_counts.is_empty() {
            return Err(HarnessError::Spec("empty patch list".into()));
        }
        if self.workers == 0 {
            return Err(HarnessError::Spec("workers must be at least 1".into()));
        }
        arena_for(&self.scenario)
            .ok_or_else(|| HarnessError::Spec(format!("unknown scenario `{}`", self.scenario)))?;
        crate::langgen::PatchGrid::new(self.n_dir, self.n_dist)?;
        Ok(())
    }

    /// Output root, overridable through the `SEMRL_OUT` variable.
    pub fn out_root(&self) -> PathBuf {
        match std::env::var(super::OUT_ROOT_ENV) {
            Ok(v) if !v.is_empty() => PathBuf::from(v).join(&self.out_dir),
            _ => self.out_dir.clone(),
        }
    }

    /// Content hash binding records to config, template bank, and version.
    pub fn hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("spec serializes"));
        h.update(DEFAULT_BANK_TEXT.as_bytes());
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunRecord {
    pub spec_hash: u64,
    pub scenario: String,
    pub algorithm: Algorithm,
    pub representation: Representation,
    pub seed: u64,
    pub nuisance: u16,
    pub n_dir: usize,
    pub episodes: u64,
    pub steps_done: u64,
    pub final_mean_100: f64,
    pub wall_time_s: f64,
    pub checkpoint: Option<PathBuf>,
    pub truncations: u64,
    pub encoder_params: usize,
    pub early_stopped: bool,
    pub diverged: Option<String>,
}
