//! Template bank: the ten sentence-generator variants and their lexicons.

use super::LangError;
use crate::world::EntityClass;
use std::path::Path;

pub const VARIANT_COUNT: usize = 10;
pub const DIR_LEXICON_SIZE: usize = 31;
pub const DIST_LEXICON_SIZE: usize = 7;

/// A clause pattern token: literal word or slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PatternTok {
    Word(String),
    Count,
    Class,
    Dir,
    Dist,
}

pub type Pattern = Vec<PatternTok>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub status: Pattern,
    pub patch: Pattern,
    /// `None` means this variant skips empty patches.
    pub empty: Option<Pattern>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateBank {
    /// (singular, plural) per entity class, indexed by `EntityClass::index`.
    pub class_words: Vec<(String, String)>,
    /// Direction phrases by absolute lexicon index, left to right.
    pub dir_lexicon: Vec<Vec<String>>,
    /// Distance phrases, farthest to nearest.
    pub dist_lexicon: Vec<Vec<String>>,
    pub variants: Vec<Variant>,
}

/// The bank shipped with the crate.
pub const DEFAULT_BANK_TEXT: &str = include_str!("../../data/templates.txt");

impl TemplateBank {
    pub fn default_bank() -> TemplateBank {
        TemplateBank::parse(DEFAULT_BANK_TEXT).expect("bundled template bank is valid")
    }

    pub fn load(path: &Path) -> Result<TemplateBank, LangError> {
        let text = std::fs::read_to_string(path).map_err(|e| LangError::BankParse {
            line: 0,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        TemplateBank::parse(&text)
    }

    pub fn parse(text: &str) -> Result<TemplateBank, LangError> {
        let mut class_words: Vec<Option<(String, String)>> = vec![None; EntityClass::ALL.len()];
        let mut dir_lexicon: Vec<Option<Vec<String>>> = vec![None; DIR_LEXICON_SIZE];
        let mut dist_lexicon: Vec<Option<Vec<String>>> = vec![None; DIST_LEXICON_SIZE];
        let mut variants: Vec<Variant> = Vec::new();
        let mut current: Option<(Option<Pattern>, Option<Pattern>, Option<Option<Pattern>>)> = None;

        let flush = |current: &mut Option<(Option<Pattern>, Option<Pattern>, Option<Option<Pattern>>)>,
                     variants: &mut Vec<Variant>,
                     line: usize|
         -> Result<(), LangError> {
            if let Some((status, patch, empty)) = current.take() {
                let status = status.ok_or(LangError::BankParse {
                    line,
                    msg: format!("variant {} is missing STATUS", variants.len()),
                })?;
                let patch = patch.ok_or(LangError::BankParse {
                    line,
                    msg: format!("variant {} is missing PATCH", variants.len()),
                })?;
                let empty = empty.unwrap_or(None);
                variants.push(Variant { status, patch, empty });
            }
            Ok(())
        };

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| LangError::BankParse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix("CLASS ") {
                let (name, words) = rest.split_once(':').ok_or_else(|| err("expected CLASS name: sg pl".into()))?;
                let class = EntityClass::ALL
                    .iter()
                    .find(|c| c.name() == name.trim())
                    .ok_or_else(|| err(format!("unknown class `{}`", name.trim())))?;
                let mut it = words.split_whitespace();
                let sg = it.next().ok_or_else(|| err("missing singular".into()))?;
                let pl = it.next().ok_or_else(|| err("missing plural".into()))?;
                class_words[class.index()] = Some((sg.to_string(), pl.to_string()));
            } else if let Some(rest) = line.strip_prefix("DIR ") {
                let (idx, phrase) = parse_lexicon_line(rest).map_err(&err)?;
                if idx >= DIR_LEXICON_SIZE {
                    return Err(err(format!("DIR index {idx} out of range")));
                }
                dir_lexicon[idx] = Some(phrase);
            } else if let Some(rest) = line.strip_prefix("DIST ") {
                let (idx, phrase) = parse_lexicon_line(rest).map_err(&err)?;
                if idx >= DIST_LEXICON_SIZE {
                    return Err(err(format!("DIST index {idx} out of range")));
                }
                dist_lexicon[idx] = Some(phrase);
            } else if let Some(rest) = line.strip_prefix("VARIANT ") {
                flush(&mut current, &mut variants, line_no)?;
                let k: usize = rest.trim().parse().map_err(|_| err(format!("bad variant id `{rest}`")))?;
                if k != variants.len() {
                    return Err(err(format!("variant ids must be sequential, expected {}", variants.len())));
                }
                current = Some((None, None, None));
            } else if let Some(rest) = line.strip_prefix("STATUS") {
                let slot = current.as_mut().ok_or_else(|| err("STATUS outside VARIANT".into()))?;
                slot.0 = Some(parse_pattern(rest.trim()).map_err(&err)?);
            } else if let Some(rest) = line.strip_prefix("PATCH") {
                let slot = current.as_mut().ok_or_else(|| err("PATCH outside VARIANT".into()))?;
                slot.1 = Some(parse_pattern(rest.trim()).map_err(&err)?);
            } else if let Some(rest) = line.strip_prefix("EMPTY") {
                let slot = current.as_mut().ok_or_else(|| err("EMPTY outside VARIANT".into()))?;
                let rest = rest.trim();
                slot.2 = Some(if rest.is_empty() {
                    None
                } else {
                    Some(parse_pattern(rest).map_err(&err)?)
                });
            } else {
                return Err(err(format!("unrecognized line `{line}`")));
            }
        }
        flush(&mut current, &mut variants, text.lines().count())?;

        let bank = TemplateBank {
            class_words: class_words
                .into_iter()
                .enumerate()
                .map(|(i, w)| {
                    w.ok_or(LangError::BankParse {
                        line: 0,
                        msg: format!("missing CLASS entry for {}", EntityClass::ALL[i].name()),
                    })
                })
                .collect::<Result<_, _>>()?,
            dir_lexicon: dir_lexicon
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    p.ok_or(LangError::BankParse {
                        line: 0,
                        msg: format!("missing DIR {i}"),
                    })
                })
                .collect::<Result<_, _>>()?,
            dist_lexicon: dist_lexicon
                .into_iter()
                .enumerate()
                .map(|(i, p)| {
                    p.ok_or(LangError::BankParse {
                        line: 0,
                        msg: format!("missing DIST {i}"),
                    })
                })
                .collect::<Result<_, _>>()?,
            variants,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<(), LangError> {
        if self.variants.len() != VARIANT_COUNT {
            return Err(LangError::BankParse {
                line: 0,
                msg: format!("expected {} variants, found {}", VARIANT_COUNT, self.variants.len()),
            });
        }
        for v in &self.variants {
            let has = |tok: &PatternTok| v.patch.contains(tok);
            if !(has(&PatternTok::Count)
                && has(&PatternTok::Class)
                && has(&PatternTok::Dir)
                && has(&PatternTok::Dist))
            {
                return Err(LangError::BankParse {
                    line: 0,
                    msg: "PATCH pattern must use all four slots".into(),
                });
            }
        }
        Ok(())
    }

    pub fn class_word(&self, class: EntityClass, count: u32) -> &str {
        let (sg, pl) = &self.class_words[class.index()];
        if count == 1 {
            sg
        } else {
            pl
        }
    }
}

fn parse_lexicon_line(rest: &str) -> Result<(usize, Vec<String>), String> {
    let (idx, phrase) = rest.split_once(':').ok_or("expected `index: phrase`".to_string())?;
    let idx: usize = idx.trim().parse().map_err(|_| format!("bad index `{}`", idx.trim()))?;
    let words: Vec<String> = phrase.split_whitespace().map(|w| w.to_lowercase()).collect();
    if words.is_empty() {
        return Err("empty phrase".into());
    }
    Ok((idx, words))
}

fn parse_pattern(s: &str) -> Result<Pattern, String> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        out.push(match tok {
            "{count}" => PatternTok::Count,
            "{class}" => PatternTok::Class,
            "{dir}" => PatternTok::Dir,
            "{dist}" => PatternTok::Dist,
            w if w.starts_with('{') => return Err(format!("unknown slot `{w}`")),
            w => PatternTok::Word(w.to_lowercase()),
        });
    }
    if out.is_empty() {
        return Err("empty pattern".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_loads() {
        let bank = TemplateBank::default_bank();
        assert_eq!(bank.variants.len(), VARIANT_COUNT);
        assert_eq!(bank.dir_lexicon.len(), DIR_LEXICON_SIZE);
        assert_eq!(bank.dist_lexicon.len(), DIST_LEXICON_SIZE);
        assert_eq!(bank.class_word(EntityClass::Enemy, 1), "demon");
        assert_eq!(bank.class_word(EntityClass::Enemy, 3), "demons");
    }

    #[test]
    fn some_variants_skip_empty_patches() {
        let bank = TemplateBank::default_bank();
        assert!(bank.variants.iter().any(|v| v.empty.is_none()));
        assert!(bank.variants.iter().any(|v| v.empty.is_some()));
    }

    #[test]
    fn rejects_wrong_variant_count() {
        let text = "CLASS enemy: a b\nVARIANT 0\nSTATUS x {dir}\nPATCH {count} {class} {dir} {dist}\n";
        assert!(TemplateBank::parse(text).is_err());
    }

    #[test]
    fn rejects_patch_missing_slots() {
        let mut text = String::new();
        for c in crate::world::EntityClass::ALL {
            text.push_str(&format!("CLASS {}: a{} b{}\n", c.name(), c.index(), c.index()));
        }
        for i in 0..DIR_LEXICON_SIZE {
            text.push_str(&format!("DIR {i}: d{i}\n"));
        }
        for i in 0..DIST_LEXICON_SIZE {
            text.push_str(&format!("DIST {i}: e{i}\n"));
        }
        for k in 0..VARIANT_COUNT {
            text.push_str(&format!("VARIANT {k}\nSTATUS s{k} {{dir}}\nPATCH {{count}} {{class}} {{dir}}\n"));
        }
        let err = TemplateBank::parse(&text);
        assert!(err.is_err());
    }
}
