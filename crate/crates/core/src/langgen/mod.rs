//! Natural-language state descriptions.
//!
//! The arena is divided into direction slices and distance bands; objects
//! are counted per patch and each patch is verbalized by one of ten template
//! variants sampled from the ambiguity RNG. Sentences are then tokenized
//! against the vocabulary closed over the template bank.

mod bank;
mod inverse;
mod vocab;

pub use bank::{Pattern, PatternTok, TemplateBank, Variant, DEFAULT_BANK_TEXT, DIR_LEXICON_SIZE, DIST_LEXICON_SIZE, VARIANT_COUNT};
pub use inverse::{parse_sentence, ParsedContent};
pub use vocab::{detokenize, tokenize, TokenSeq, Vocabulary, OOV_ID, PAD_ID};

use crate::observe::ObjectList;
use crate::world::EntityClass;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LangError {
    #[error("template bank parse error at line {line}: {msg}")]
    BankParse { line: usize, msg: String },
    #[error("invalid patch grid: {0}")]
    InvalidGrid(String),
    #[error("sentence parse failed at word {at}: {msg}")]
    SentenceParse { at: usize, msg: String },
}

/// Direction x distance partition of the arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    /// Vertical slices along the width (direction axis). Odd, 1..=31.
    pub n_dir: usize,
    /// Horizontal bands along the height (distance axis). 1..=7.
    pub n_dist: usize,
}

impl PatchGrid {
    pub const DEFAULT: PatchGrid = PatchGrid { n_dir: 3, n_dist: 3 };

    pub fn new(n_dir: usize, n_dist: usize) -> Result<PatchGrid, LangError> {
        if n_dir == 0 || n_dir % 2 == 0 || n_dir > DIR_LEXICON_SIZE {
            return Err(LangError::InvalidGrid(format!(
                "n_dir must be odd and in 1..={DIR_LEXICON_SIZE}, got {n_dir}"
            )));
        }
        if n_dist == 0 || n_dist > DIST_LEXICON_SIZE {
            return Err(LangError::InvalidGrid(format!(
                "n_dist must be in 1..={DIST_LEXICON_SIZE}, got {n_dist}"
            )));
        }
        Ok(PatchGrid { n_dir, n_dist })
    }

    pub fn patch_count(&self) -> usize {
        self.n_dir * self.n_dist
    }

    /// Which direction slice a column falls in; remainder cells go to the
    /// last slice.
    pub fn dir_of_col(&self, col: u16, width: u16) -> usize {
        let base = (width as usize / self.n_dir).max(1);
        ((col as usize) / base).min(self.n_dir - 1)
    }

    /// Which distance band a row falls in; 0 is the farthest (top) band.
    pub fn dist_of_row(&self, row: u16, height: u16) -> usize {
        let base = (height as usize / self.n_dist).max(1);
        ((row as usize) / base).min(self.n_dist - 1)
    }

    /// Absolute lexicon entry for a direction index, spreading the n_dir
    /// slices evenly across the 31-entry lexicon. Injective for n_dir <= 31.
    pub fn dir_lexicon_entry(&self, dir_index: usize) -> usize {
        spread_index(dir_index, self.n_dir, DIR_LEXICON_SIZE)
    }

    pub fn dist_lexicon_entry(&self, dist_index: usize) -> usize {
        spread_index(dist_index, self.n_dist, DIST_LEXICON_SIZE)
    }

    /// Inverse of `dir_lexicon_entry`; `None` if the entry is unused at this
    /// grid size.
    pub fn dir_from_lexicon_entry(&self, entry: usize) -> Option<usize> {
        (0..self.n_dir).find(|&i| self.dir_lexicon_entry(i) == entry)
    }

    pub fn dist_from_lexicon_entry(&self, entry: usize) -> Option<usize> {
        (0..self.n_dist).find(|&i| self.dist_lexicon_entry(i) == entry)
    }

    /// Token budget for fixed-length sequences at this grid size: 96 tokens
    /// for the default 3x3 grid, scaled by patch count.
    pub fn l_max(&self) -> usize {
        (96 * self.patch_count()).div_ceil(9)
    }
}

fn spread_index(i: usize, n: usize, lexicon: usize) -> usize {
    debug_assert!(i < n && n <= lexicon);
    if n == 1 {
        return (lexicon - 1) / 2;
    }
    // round(i * (lexicon-1) / (n-1))
    (i * (lexicon - 1) + (n - 1) / 2) / (n - 1)
}

/// Per-class occupancy counts for one patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchSummary {
    pub dir_index: usize,
    pub dist_index: usize,
    pub counts: [u32; 5],
}

impl PatchSummary {
    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

/// All patch summaries in scan order (distance-major far-to-near, then
/// direction left-to-right) plus the agent's own direction slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSummary {
    pub grid: PatchGrid,
    pub patches: Vec<PatchSummary>,
    pub agent_dir: usize,
}

/// Count alive objects per patch.
pub fn summarize(objects: &ObjectList, grid: PatchGrid, width: u16, height: u16) -> StateSummary {
    let mut patches: Vec<PatchSummary> = (0..grid.n_dist)
        .flat_map(|dist| {
            (0..grid.n_dir).map(move |dir| PatchSummary {
                dir_index: dir,
                dist_index: dist,
                counts: [0; 5],
            })
        })
        .collect();
    for r in &objects.records {
        let dir = grid.dir_of_col(r.col, width);
        let dist = grid.dist_of_row(r.row, height);
        patches[dist * grid.n_dir + dir].counts[r.class.index()] += 1;
    }
    StateSummary {
        grid,
        patches,
        agent_dir: grid.dir_of_col(objects.agent_col, width),
    }
}

fn instantiate(
    pattern: &Pattern,
    bank: &TemplateBank,
    grid: PatchGrid,
    count: u32,
    class: Option<EntityClass>,
    dir_index: usize,
    dist_index: usize,
    out: &mut Vec<String>,
) {
    for tok in pattern {
        match tok {
            PatternTok::Word(w) => out.push(w.clone()),
            PatternTok::Count => out.push(count.min(99).to_string()),
            PatternTok::Class => {
                let class = class.expect("class slot only in patch clauses");
                out.push(bank.class_word(class, count.min(99)).to_string());
            }
            PatternTok::Dir => {
                out.extend(bank.dir_lexicon[grid.dir_lexicon_entry(dir_index)].iter().cloned())
            }
            PatternTok::Dist => {
                out.extend(bank.dist_lexicon[grid.dist_lexicon_entry(dist_index)].iter().cloned())
            }
        }
    }
}

/// Generate the sentence for a state summary. One variant draw for the
/// status clause, then one per patch in scan order. `pinned_variant`
/// bypasses sampling for golden tests and inspection.
pub fn describe<R: Rng>(
    summary: &StateSummary,
    bank: &TemplateBank,
    ambiguity_rng: &mut R,
    pinned_variant: Option<usize>,
) -> Vec<String> {
    let draw = |rng: &mut R| pinned_variant.unwrap_or_else(|| rng.gen_range(0..bank.variants.len()));
    let mut words = Vec::new();
    let grid = summary.grid;
    let status_variant = draw(ambiguity_rng);
    instantiate(
        &bank.variants[status_variant].status,
        bank,
        grid,
        0,
        None,
        summary.agent_dir,
        0,
        &mut words,
    );
    for patch in &summary.patches {
        let variant = &bank.variants[draw(ambiguity_rng)];
        if patch.is_empty() {
            if let Some(empty) = &variant.empty {
                instantiate(empty, bank, grid, 0, None, patch.dir_index, patch.dist_index, &mut words);
            }
        } else {
            for class in EntityClass::ALL {
                let count = patch.counts[class.index()];
                if count > 0 {
                    instantiate(
                        &variant.patch,
                        bank,
                        grid,
                        count,
                        Some(class),
                        patch.dir_index,
                        patch.dist_index,
                        &mut words,
                    );
                }
            }
        }
    }
    words
}

/// Convenience pipeline: world state -> sentence words.
pub fn sentence_for_state<R: Rng>(
    state: &crate::world::WorldState,
    config: &crate::world::ArenaConfig,
    grid: PatchGrid,
    bank: &TemplateBank,
    ambiguity_rng: &mut R,
) -> Vec<String> {
    let objects = crate::observe::extract_objects(state);
    let summary = summarize(&objects, grid, config.width, config.height);
    describe(&summary, bank, ambiguity_rng, None)
}

/// Mean words-per-state over seeded random-policy episodes.
pub fn measure_length(
    config: &crate::world::ArenaConfig,
    grid: PatchGrid,
    bank: &TemplateBank,
    episodes: u32,
    base_seed: u64,
) -> f64 {
    use crate::rng::{episode_seed, stream_rng, Stream};
    let mut total_words = 0usize;
    let mut total_states = 0usize;
    for ep in 0..episodes {
        let seed = episode_seed(base_seed, ep as u64);
        let mut policy_rng = stream_rng(seed, Stream::Exploration);
        let mut ambiguity_rng = stream_rng(seed, Stream::Ambiguity);
        let mut state = crate::world::reset(config, seed).expect("valid config");
        loop {
            let words = sentence_for_state(&state, config, grid, bank, &mut ambiguity_rng);
            total_words += words.len();
            total_states += 1;
            if state.terminal(config) {
                break;
            }
            let a = crate::world::Action::from_index(policy_rng.gen_range(0..4)).unwrap();
            state = crate::world::step(&state, config, a).expect("non-terminal").state;
        }
    }
    total_words as f64 / total_states as f64
}

#[cfg(test)]
mod tests;
