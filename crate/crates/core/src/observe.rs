//! Observation derivation: raw frames, segmentation maps, object lists.
//!
//! All three views are pure functions of the same `WorldState`, so they
//! always describe identical entity sets. The raw frame adds per-episode
//! texture noise at unoccupied cells; the segmentation map is texture-free.

use crate::rng::{stream_rng, Stream};
use crate::world::{ArenaConfig, EntityClass, WorldState};
use rand::Rng;
use std::io::Write;

/// Fixed class palette: one saturated color per class, plus the agent.
pub const COLOR_ENEMY: [u8; 3] = [200, 40, 40];
pub const COLOR_FIREBALL: [u8; 3] = [240, 150, 20];
pub const COLOR_MEDIPACK: [u8; 3] = [40, 200, 80];
pub const COLOR_AMMO: [u8; 3] = [60, 120, 220];
pub const COLOR_NUISANCE: [u8; 3] = [160, 60, 200];
pub const COLOR_AGENT: [u8; 3] = [240, 240, 240];
pub const BACKGROUND_BASE: u8 = 110;

pub fn class_color(class: EntityClass) -> [u8; 3] {
    match class {
        EntityClass::Enemy => COLOR_ENEMY,
        EntityClass::Fireball => COLOR_FIREBALL,
        EntityClass::Medipack => COLOR_MEDIPACK,
        EntityClass::Ammo => COLOR_AMMO,
        EntityClass::Nuisance => COLOR_NUISANCE,
    }
}

/// HxWx3 image, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawFrame {
    pub width: u16,
    pub height: u16,
    pub pixels: Vec<u8>,
}

impl RawFrame {
    pub fn pixel(&self, col: u16, row: u16) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Plain-text PPM (P3) dump.
    pub fn to_ppm(&self) -> String {
        let mut s = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in 0..self.height {
            let mut parts = Vec::with_capacity(self.width as usize);
            for col in 0..self.width {
                let p = self.pixel(col, row);
                parts.push(format!("{} {} {}", p[0], p[1], p[2]));
            }
            s.push_str(&parts.join("  "));
            s.push('\n');
        }
        s
    }

    pub fn write_ppm(&self, path: &std::path::Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_ppm().as_bytes())
    }
}

/// Channel layout of the segmentation map: agent first, then entity classes.
pub const SEG_CHANNELS: usize = 6;

/// C x H x W binary map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMap {
    pub width: u16,
    pub height: u16,
    pub channels: Vec<u8>,
}

impl SegMap {
    pub fn get(&self, channel: usize, col: u16, row: u16) -> u8 {
        let hw = self.height as usize * self.width as usize;
        self.channels[channel * hw + row as usize * self.width as usize + col as usize]
    }

    pub fn channel_sum(&self, channel: usize) -> usize {
        let hw = self.height as usize * self.width as usize;
        self.channels[channel * hw..(channel + 1) * hw]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }

    /// One line per channel: channel name then the 0/1 grid flattened row-major.
    pub fn to_text(&self) -> String {
        let names = ["agent", "enemy", "fireball", "medipack", "ammo", "nuisance"];
        let hw = self.height as usize * self.width as usize;
        let mut s = String::new();
        for (c, name) in names.iter().enumerate() {
            let bits: String = self.channels[c * hw..(c + 1) * hw]
                .iter()
                .map(|&b| if b == 1 { '1' } else { '0' })
                .collect();
            s.push_str(&format!("{name} {bits}\n"));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectRecord {
    pub class: EntityClass,
    pub col: u16,
    pub row: u16,
}

/// Alive entities in stable order, plus the agent's position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectList {
    pub records: Vec<ObjectRecord>,
    pub agent_col: u16,
    pub agent_row: u16,
}

/// Paint class colors over a seeded background texture. The texture varies
/// in a +-12% brightness band around the base gray, uniform per cell, and is
/// a function of `texture_seed` only.
pub fn render_raw(state: &WorldState, config: &ArenaConfig, texture_seed: u64) -> RawFrame {
    let (w, h) = (config.width as usize, config.height as usize);
    let mut rng = stream_rng(texture_seed, Stream::Texture);
    let mut pixels = vec![0u8; w * h * 3];
    for i in 0..w * h {
        // 88..=112 percent of the base shade
        let pct = rng.gen_range(88..=112u32);
        let shade = (BACKGROUND_BASE as u32 * pct / 100).min(255) as u8;
        pixels[i * 3] = shade;
        pixels[i * 3 + 1] = shade;
        pixels[i * 3 + 2] = shade;
    }
    let mut paint = |col: u16, row: u16, color: [u8; 3]| {
        let i = (row as usize * w + col as usize) * 3;
        pixels[i..i + 3].copy_from_slice(&color);
    };
    // entities in id order so later spawns overdraw on shared cells
    for e in state.alive_entities() {
        paint(e.col, e.row, class_color(e.class));
    }
    paint(state.agent_col, state.agent_row, COLOR_AGENT);
    RawFrame {
        width: config.width,
        height: config.height,
        pixels,
    }
}

/// Binary per-class channels; deterministic and texture-free.
pub fn render_seg(state: &WorldState, config: &ArenaConfig) -> SegMap {
    let (w, h) = (config.width as usize, config.height as usize);
    let hw = w * h;
    let mut channels = vec![0u8; SEG_CHANNELS * hw];
    channels[state.agent_row as usize * w + state.agent_col as usize] = 1;
    for e in state.alive_entities() {
        let c = 1 + e.class.index();
        channels[c * hw + e.row as usize * w + e.col as usize] = 1;
    }
    SegMap {
        width: config.width,
        height: config.height,
        channels,
    }
}

/// One record per alive entity, ordered by (class, row, col, id).
pub fn extract_objects(state: &WorldState) -> ObjectList {
    let mut with_ids: Vec<(&crate::world::Entity, u32)> =
        state.alive_entities().map(|e| (e, e.id)).collect();
    with_ids.sort_by_key(|(e, id)| (e.class, e.row, e.col, *id));
    ObjectList {
        records: with_ids
            .into_iter()
            .map(|(e, _)| ObjectRecord {
                class: e.class,
                col: e.col,
                row: e.row,
            })
            .collect(),
        agent_col: state.agent_col,
        agent_row: state.agent_row,
    }
}
