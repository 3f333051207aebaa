//! Deterministic 2D arena with three scenario archetypes.
//!
//! Dynamics use integer arithmetic only (health is tracked in half-points)
//! so that traces are identical across platforms. Nuisance entities are
//! placed from a dedicated RNG stream and never touch reward or health.

mod config;
mod trace;

pub use config::{parse_config_file, parse_config_str};
pub use trace::{read_trace, write_trace, TraceRecord};

use crate::rng::{stream_rng, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid arena config: {0}")]
    InvalidConfig(String),
    #[error("step called on a terminal state (tick {0})")]
    TerminalStep(u32),
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    DefendLine,
    DefendCenter,
    Super,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::DefendLine => "defend_line",
            Scenario::DefendCenter => "defend_center",
            Scenario::Super => "super",
        }
    }

    pub fn from_name(s: &str) -> Option<Scenario> {
        match s {
            "defend_line" => Some(Scenario::DefendLine),
            "defend_center" => Some(Scenario::DefendCenter),
            "super" => Some(Scenario::Super),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityClass {
    Enemy,
    Fireball,
    Medipack,
    Ammo,
    Nuisance,
}

impl EntityClass {
    pub const ALL: [EntityClass; 5] = [
        EntityClass::Enemy,
        EntityClass::Fireball,
        EntityClass::Medipack,
        EntityClass::Ammo,
        EntityClass::Nuisance,
    ];

    pub fn index(&self) -> usize {
        match self {
            EntityClass::Enemy => 0,
            EntityClass::Fireball => 1,
            EntityClass::Medipack => 2,
            EntityClass::Ammo => 3,
            EntityClass::Nuisance => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EntityClass::Enemy => "enemy",
            EntityClass::Fireball => "fireball",
            EntityClass::Medipack => "medipack",
            EntityClass::Ammo => "ammo",
            EntityClass::Nuisance => "nuisance",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Noop,
    MoveLeft,
    MoveRight,
    Shoot,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Noop, Action::MoveLeft, Action::MoveRight, Action::Shoot];

    pub fn index(&self) -> usize {
        match self {
            Action::Noop => 0,
            Action::MoveLeft => 1,
            Action::MoveRight => 2,
            Action::Shoot => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Noop => "noop",
            Action::MoveLeft => "left",
            Action::MoveRight => "right",
            Action::Shoot => "shoot",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: u32,
    pub class: EntityClass,
    pub col: u16,
    pub row: u16,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub width: u16,
    pub height: u16,
    pub scenario: Scenario,
    pub max_ticks: u32,
    pub nuisance_count: u32,
    /// Permits nuisance_count > 0 outside the Super scenario (nuisance sweep).
    pub allow_nuisance: bool,
    pub enemy_spawn_period: u32,
    /// Fireball emission cadence; 0 disables fireballs.
    pub enemy_fire_period: u32,
    /// Item spawn cadence (Super only); 0 disables items.
    pub item_spawn_period: u32,
    pub start_ammo: u32,
    /// Maximum row distance a shot reaches; 0 means unlimited. Scenarios
    /// with charging enemies use a short range so firing is only useful
    /// once a threat is close.
    pub shot_range_rows: u16,
    pub rng_seed: u64,
}

impl ArenaConfig {
    pub fn defaults(scenario: Scenario) -> ArenaConfig {
        let base = ArenaConfig {
            width: 21,
            height: 15,
            scenario,
            max_ticks: 500,
            nuisance_count: 0,
            allow_nuisance: false,
            enemy_spawn_period: 10,
            enemy_fire_period: 0,
            item_spawn_period: 0,
            start_ammo: 40,
            // one distance band of a 3-band split over the default height
            shot_range_rows: 5,
            rng_seed: 0,
        };
        match scenario {
            Scenario::DefendLine => base,
            Scenario::DefendCenter => ArenaConfig {
                enemy_spawn_period: 20,
                enemy_fire_period: 12,
                start_ammo: 30,
                // enemies hold their distance here, so shots reach any row
                shot_range_rows: 0,
                ..base
            },
            Scenario::Super => ArenaConfig {
                max_ticks: 300,
                enemy_spawn_period: 12,
                enemy_fire_period: 20,
                item_spawn_period: 25,
                start_ammo: 20,
                ..base
            },
        }
    }

    /// Short-episode preset used for fast training runs.
    pub fn defend_line_mini() -> ArenaConfig {
        ArenaConfig {
            max_ticks: 160,
            enemy_spawn_period: 8,
            ..ArenaConfig::defaults(Scenario::DefendLine)
        }
    }

    /// Short-episode Super preset; nuisance level left at 0 for the caller.
    pub fn super_mini() -> ArenaConfig {
        ArenaConfig {
            max_ticks: 150,
            ..ArenaConfig::defaults(Scenario::Super)
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.width < 3 || self.height < 3 {
            return Err(WorldError::InvalidConfig(format!(
                "arena {}x{} too small",
                self.width, self.height
            )));
        }
        if self.width % 2 == 0 || self.height % 2 == 0 {
            return Err(WorldError::InvalidConfig(format!(
                "arena dimensions must be odd, got {}x{}",
                self.width, self.height
            )));
        }
        if self.max_ticks == 0 {
            return Err(WorldError::InvalidConfig("max_ticks must be positive".into()));
        }
        if self.nuisance_count > 0 && self.scenario != Scenario::Super && !self.allow_nuisance {
            return Err(WorldError::InvalidConfig(
                "nuisance_count > 0 requires the super scenario or allow_nuisance".into(),
            ));
        }
        let cells = self.width as u32 * self.height as u32;
        if self.nuisance_count >= cells {
            return Err(WorldError::InvalidConfig(format!(
                "nuisance_count {} does not fit a {}x{} arena",
                self.nuisance_count, self.width, self.height
            )));
        }
        Ok(())
    }
}

pub const MAX_HEALTH_HALVES: i32 = 200;
const ENEMY_HIT_HALVES: i32 = 40; // -20 health
const FIREBALL_HIT_HALVES: i32 = 30; // -15 health
const MEDIPACK_HALVES: i32 = 50; // +25 health
const DEGEN_HALVES: i32 = 1; // -0.5 health per tick (Super)
const AMMO_PICKUP: u32 = 5;
/// Penalty for a shot that kills nothing. Symmetric with the kill reward
/// so that undiscriminating fire nets roughly zero: trigger discipline is
/// the skill the reward measures, not shot volume.
pub const MISS_PENALTY: f64 = 1.0;
/// A shot hits the nearest enemy within this many columns of the agent.
pub const SHOT_HALF_WIDTH: i32 = 2;

#[derive(Clone, Debug)]
pub struct WorldState {
    pub tick: u32,
    pub agent_col: u16,
    pub agent_row: u16,
    /// Health in half-points, 0..=200. Exposed as points via [`WorldState::health`].
    pub health_halves: i32,
    pub ammo: u32,
    pub entities: Vec<Entity>,
    pub kills: u32,
    pub cumulative_reward: f64,
    next_entity_id: u32,
    dynamics_rng: ChaCha8Rng,
}

impl WorldState {
    pub fn health(&self) -> f64 {
        self.health_halves as f64 / 2.0
    }

    pub fn terminal(&self, config: &ArenaConfig) -> bool {
        self.health_halves <= 0 || self.tick >= config.max_ticks
    }

    pub fn alive_entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(|e| e.alive)
    }

    pub fn alive_count(&self) -> usize {
        self.alive_entities().count()
    }

    pub fn alive_count_of(&self, class: EntityClass) -> usize {
        self.alive_entities().filter(|e| e.class == class).count()
    }

    fn spawn(&mut self, class: EntityClass, col: u16, row: u16) {
        let id = self.next_entity_id;
        self.next_entity_id += 1;
        self.entities.push(Entity { id, class, col, row, alive: true });
    }
}

/// Build the initial state for a config. `seed` overrides `config.rng_seed`.
pub fn reset(config: &ArenaConfig, seed: u64) -> Result<WorldState, WorldError> {
    config.validate()?;
    let agent_col = config.width / 2;
    let agent_row = match config.scenario {
        Scenario::DefendCenter => config.height / 2,
        _ => config.height - 1,
    };
    let mut state = WorldState {
        tick: 0,
        agent_col,
        agent_row,
        health_halves: MAX_HEALTH_HALVES,
        ammo: config.start_ammo,
        entities: Vec::new(),
        kills: 0,
        cumulative_reward: 0.0,
        next_entity_id: 0,
        dynamics_rng: stream_rng(seed, Stream::Dynamics),
    };
    if config.nuisance_count > 0 {
        let mut nuisance_rng = stream_rng(seed, Stream::Nuisance);
        let mut taken = vec![false; config.width as usize * config.height as usize];
        taken[agent_row as usize * config.width as usize + agent_col as usize] = true;
        let mut placed = 0;
        while placed < config.nuisance_count {
            let col = nuisance_rng.gen_range(0..config.width);
            let row = nuisance_rng.gen_range(0..config.height);
            let idx = row as usize * config.width as usize + col as usize;
            if !taken[idx] {
                taken[idx] = true;
                state.spawn(EntityClass::Nuisance, col, row);
                placed += 1;
            }
        }
    }
    Ok(state)
}

pub struct StepOutcome {
    pub state: WorldState,
    pub reward: f64,
    pub terminal: bool,
}

/// Advance one tick. Phases: action, entity movement, collisions,
/// degeneration, spawns, tick increment.
pub fn step(state: &WorldState, config: &ArenaConfig, action: Action) -> Result<StepOutcome, WorldError> {
    if state.terminal(config) {
        return Err(WorldError::TerminalStep(state.tick));
    }
    let mut s = state.clone();
    let mut reward = 0.0_f64;

    // (1) action
    match action {
        Action::Noop => {}
        Action::MoveLeft => {
            if s.agent_col > 0 {
                s.agent_col -= 1;
            }
        }
        Action::MoveRight => {
            if s.agent_col + 1 < config.width {
                s.agent_col += 1;
            }
        }
        Action::Shoot => {
            let mut hit = false;
            if s.ammo > 0 {
                s.ammo -= 1;
                let agent_row = s.agent_row;
                let agent_col = s.agent_col;
                // the shot covers the agent's column plus one to each side,
                // matching the coarse aim available from patch observations
                let target = s
                    .entities
                    .iter_mut()
                    .filter(|e| {
                        e.alive
                            && e.class == EntityClass::Enemy
                            && (e.col as i32 - agent_col as i32).abs() <= SHOT_HALF_WIDTH
                            && (config.shot_range_rows == 0
                                || (agent_row as i32 - e.row as i32).unsigned_abs()
                                    <= config.shot_range_rows as u32)
                    })
                    .min_by_key(|e| {
                        ((e.row as i32 - agent_row as i32).abs(), (e.col as i32 - agent_col as i32).abs())
                    });
                if let Some(enemy) = target {
                    enemy.alive = false;
                    s.kills += 1;
                    reward += 1.0;
                    hit = true;
                }
            }
            if !hit {
                reward -= MISS_PENALTY;
            }
        }
    }

    // (2) movement: enemies charge in DefendLine/Super, fireballs fall everywhere
    let advance_enemies = matches!(config.scenario, Scenario::DefendLine | Scenario::Super);
    let agent_row = s.agent_row;
    let agent_col = s.agent_col;
    if advance_enemies && s.tick % 2 == 0 {
        for e in s.entities.iter_mut().filter(|e| e.alive && e.class == EntityClass::Enemy) {
            if e.row < agent_row {
                e.row += 1;
            }
            // charging enemies also home in on the agent's column
            if e.col < agent_col {
                e.col += 1;
            } else if e.col > agent_col {
                e.col -= 1;
            }
        }
    }
    for e in s.entities.iter_mut().filter(|e| e.alive && e.class == EntityClass::Fireball) {
        if e.row < agent_row {
            e.row += 1;
        } else {
            // passed the agent's row without a hit last tick
            e.alive = false;
        }
    }
    if config.enemy_fire_period > 0 && s.tick % config.enemy_fire_period == 0 {
        let emitters: Vec<(u16, u16)> = s
            .alive_entities()
            .filter(|e| e.class == EntityClass::Enemy && e.row < agent_row)
            .map(|e| (e.col, e.row))
            .collect();
        for (col, row) in emitters {
            s.spawn(EntityClass::Fireball, col, row);
        }
    }

    // (3) collisions
    let mut health_delta = 0_i32;
    let mut ammo_delta = 0_u32;
    for e in s.entities.iter_mut().filter(|e| e.alive) {
        match e.class {
            EntityClass::Enemy => {
                if e.row == agent_row && (e.col as i32 - agent_col as i32).abs() <= 1 {
                    health_delta -= ENEMY_HIT_HALVES;
                    e.alive = false;
                }
            }
            EntityClass::Fireball => {
                if e.row == agent_row {
                    if e.col == agent_col {
                        health_delta -= FIREBALL_HIT_HALVES;
                    }
                    e.alive = false;
                }
            }
            EntityClass::Medipack => {
                if e.row == agent_row && e.col == agent_col {
                    health_delta += MEDIPACK_HALVES;
                    e.alive = false;
                }
            }
            EntityClass::Ammo => {
                if e.row == agent_row && e.col == agent_col {
                    ammo_delta += AMMO_PICKUP;
                    e.alive = false;
                }
            }
            EntityClass::Nuisance => {}
        }
    }
    s.ammo += ammo_delta;

    // (4) degeneration
    if config.scenario == Scenario::Super {
        health_delta -= DEGEN_HALVES;
    }
    s.health_halves = (s.health_halves + health_delta).clamp(0, MAX_HEALTH_HALVES);

    // (5) spawns
    if config.enemy_spawn_period > 0 && s.tick % config.enemy_spawn_period == 0 {
        let col = s.dynamics_rng.gen_range(0..config.width);
        s.spawn(EntityClass::Enemy, col, 0);
    }
    if config.scenario == Scenario::Super
        && config.item_spawn_period > 0
        && s.tick % config.item_spawn_period == 0
        && s.tick > 0
    {
        let col = s.dynamics_rng.gen_range(0..config.width);
        let kind = if s.dynamics_rng.gen_bool(0.5) {
            EntityClass::Medipack
        } else {
            EntityClass::Ammo
        };
        s.spawn(kind, col, agent_row);
    }

    // (6) advance time
    s.tick += 1;
    s.entities.retain(|e| e.alive);
    s.cumulative_reward += reward;
    let terminal = s.terminal(config);
    Ok(StepOutcome { state: s, reward, terminal })
}

/// Hand-written reference policy: hold position, shoot whenever an enemy is
/// inside the shot's aim cone and range and ammo remains. Used as the
/// learnability bound.
pub fn scripted_expert_action(state: &WorldState, config: &ArenaConfig) -> Action {
    let aligned = state
        .alive_entities()
        .any(|e| {
            e.class == EntityClass::Enemy
                && (e.col as i32 - state.agent_col as i32).abs() <= SHOT_HALF_WIDTH
                && (config.shot_range_rows == 0
                    || (state.agent_row as i32 - e.row as i32).unsigned_abs()
                        <= config.shot_range_rows as u32)
        });
    if aligned && state.ammo > 0 {
        Action::Shoot
    } else {
        // drift toward the nearest threat's column so fireball scenarios
        // still see some movement
        let nearest = state
            .alive_entities()
            .filter(|e| e.class == EntityClass::Enemy)
            .min_by_key(|e| {
                ((e.row as i32 - state.agent_row as i32).abs(), (e.col as i32 - state.agent_col as i32).abs())
            });
        match nearest {
            Some(e) if e.col < state.agent_col => Action::MoveLeft,
            Some(e) if e.col > state.agent_col => Action::MoveRight,
            _ => Action::Noop,
        }
    }
}

/// Mean episode reward of the scripted expert over `episodes` seeded episodes.
pub fn scripted_expert_mean(config: &ArenaConfig, base_seed: u64, episodes: u32) -> f64 {
    let mut total = 0.0;
    for ep in 0..episodes {
        let mut state = reset(config, crate::rng::episode_seed(base_seed, ep as u64)).expect("valid config");
        loop {
            let action = scripted_expert_action(&state, config);
            let out = step(&state, config, action).expect("non-terminal");
            state = out.state;
            if out.terminal {
                break;
            }
        }
        total += state.cumulative_reward;
    }
    total / episodes as f64
}
