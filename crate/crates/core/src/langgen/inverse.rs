//! Inverse grammar: recover patch content from a generated sentence.
//!
//! Every clause of every variant carries its slot values verbatim (digits,
//! class words, lexicon phrases); filler words are disjoint from slot words,
//! so a sentence parses back to exactly the (class, count, patch) content it
//! was generated from, regardless of which variants were sampled.

use super::bank::{Pattern, PatternTok, TemplateBank};
use super::{LangError, PatchGrid, StateSummary};
use crate::world::EntityClass;
use std::collections::BTreeMap;

/// Content recovered from a sentence: counts keyed by
/// (dist_index, dir_index, class), plus the agent's direction slice.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ParsedContent {
    pub counts: BTreeMap<(usize, usize, EntityClass), u32>,
    pub agent_dir: Option<usize>,
}

impl ParsedContent {
    /// The parse-back content a summary should produce.
    pub fn of_summary(summary: &StateSummary) -> ParsedContent {
        let mut counts = BTreeMap::new();
        for p in &summary.patches {
            for class in EntityClass::ALL {
                let c = p.counts[class.index()].min(99);
                if c > 0 {
                    counts.insert((p.dist_index, p.dir_index, class), c);
                }
            }
        }
        ParsedContent {
            counts,
            agent_dir: Some(summary.agent_dir),
        }
    }
}

#[derive(Default)]
struct SlotValues {
    count: Option<u32>,
    class: Option<(EntityClass, bool)>, // (class, plural)
    dir: Option<usize>,                 // dir_index under the grid
    dist: Option<usize>,
}

fn match_phrase(words: &[String], pos: usize, phrase: &[String]) -> bool {
    words.len() >= pos + phrase.len() && words[pos..pos + phrase.len()] == phrase[..]
}

/// Match a clause pattern at `pos`; returns the new position and slot values.
fn match_pattern(
    pattern: &Pattern,
    words: &[String],
    mut pos: usize,
    bank: &TemplateBank,
    grid: PatchGrid,
) -> Option<(usize, SlotValues)> {
    let mut slots = SlotValues::default();
    for tok in pattern {
        match tok {
            PatternTok::Word(w) => {
                if pos < words.len() && &words[pos] == w {
                    pos += 1;
                } else {
                    return None;
                }
            }
            PatternTok::Count => {
                let w = words.get(pos)?;
                if !w.bytes().all(|b| b.is_ascii_digit()) || w.len() > 2 {
                    return None;
                }
                slots.count = Some(w.parse().ok()?);
                pos += 1;
            }
            PatternTok::Class => {
                let w = words.get(pos)?;
                let found = EntityClass::ALL.iter().find_map(|&c| {
                    let (sg, pl) = &bank.class_words[c.index()];
                    if w == sg {
                        Some((c, false))
                    } else if w == pl {
                        Some((c, true))
                    } else {
                        None
                    }
                })?;
                slots.class = Some(found);
                pos += 1;
            }
            PatternTok::Dir => {
                // longest matching lexicon phrase valid for this grid size
                let hit = bank
                    .dir_lexicon
                    .iter()
                    .enumerate()
                    .filter(|(entry, phrase)| {
                        grid.dir_from_lexicon_entry(*entry).is_some() && match_phrase(words, pos, phrase)
                    })
                    .max_by_key(|(_, phrase)| phrase.len())?;
                slots.dir = grid.dir_from_lexicon_entry(hit.0);
                pos += hit.1.len();
            }
            PatternTok::Dist => {
                let hit = bank
                    .dist_lexicon
                    .iter()
                    .enumerate()
                    .filter(|(entry, phrase)| {
                        grid.dist_from_lexicon_entry(*entry).is_some() && match_phrase(words, pos, phrase)
                    })
                    .max_by_key(|(_, phrase)| phrase.len())?;
                slots.dist = grid.dist_from_lexicon_entry(hit.0);
                pos += hit.1.len();
            }
        }
    }
    Some((pos, slots))
}

enum ClauseKind {
    Status,
    Patch,
    Empty,
}

/// Parse a full sentence back to its content. Errors if any clause is
/// unrecognizable or slot values are inconsistent.
pub fn parse_sentence(
    words: &[String],
    bank: &TemplateBank,
    grid: PatchGrid,
) -> Result<ParsedContent, LangError> {
    let mut content = ParsedContent::default();
    let mut pos = 0;
    while pos < words.len() {
        let mut matched = false;
        'variants: for v in &bank.variants {
            let candidates: [(ClauseKind, Option<&Pattern>); 3] = [
                (ClauseKind::Status, Some(&v.status)),
                (ClauseKind::Patch, Some(&v.patch)),
                (ClauseKind::Empty, v.empty.as_ref()),
            ];
            for (kind, pattern) in candidates {
                let Some(pattern) = pattern else { continue };
                if let Some((new_pos, slots)) = match_pattern(pattern, words, pos, bank, grid) {
                    match kind {
                        ClauseKind::Status => {
                            let dir = slots.dir.ok_or(LangError::SentenceParse {
                                at: pos,
                                msg: "status clause without direction".into(),
                            })?;
                            content.agent_dir = Some(dir);
                        }
                        ClauseKind::Patch => {
                            let (count, (class, plural), dir, dist) =
                                match (slots.count, slots.class, slots.dir, slots.dist) {
                                    (Some(c), Some(cl), Some(d), Some(ds)) => (c, cl, d, ds),
                                    _ => {
                                        return Err(LangError::SentenceParse {
                                            at: pos,
                                            msg: "patch clause missing slots".into(),
                                        })
                                    }
                                };
                            if count == 0 || (count == 1) == plural {
                                return Err(LangError::SentenceParse {
                                    at: pos,
                                    msg: format!("count {count} inconsistent with plurality"),
                                });
                            }
                            *content.counts.entry((dist, dir, class)).or_insert(0) += count;
                        }
                        ClauseKind::Empty => {}
                    }
                    pos = new_pos;
                    matched = true;
                    break 'variants;
                }
            }
        }
        if !matched {
            return Err(LangError::SentenceParse {
                at: pos,
                msg: format!("no clause pattern matches at `{}`", words[pos]),
            });
        }
    }
    Ok(content)
}
