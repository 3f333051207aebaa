use super::*;
use crate::observe::{extract_objects, ObjectList, ObjectRecord};
use crate::rng::{stream_rng, Stream};
use crate::world::{ArenaConfig, EntityClass, Scenario};
use proptest::prelude::*;

fn bank() -> TemplateBank {
    TemplateBank::default_bank()
}

fn empty_objects() -> ObjectList {
    ObjectList {
        records: vec![],
        agent_col: 10,
        agent_row: 14,
    }
}

#[test]
fn grid_partitions_exactly() {
    let grid = PatchGrid::new(3, 3).unwrap();
    // 21 columns -> slices of 7
    assert_eq!(grid.dir_of_col(0, 21), 0);
    assert_eq!(grid.dir_of_col(6, 21), 0);
    assert_eq!(grid.dir_of_col(7, 21), 1);
    assert_eq!(grid.dir_of_col(14, 21), 2);
    assert_eq!(grid.dir_of_col(20, 21), 2);
    // 15 rows -> bands of 5
    assert_eq!(grid.dist_of_row(0, 15), 0);
    assert_eq!(grid.dist_of_row(7, 15), 1);
    assert_eq!(grid.dist_of_row(14, 15), 2);
}

#[test]
fn grid_remainder_goes_to_last_slice() {
    let grid = PatchGrid::new(5, 3).unwrap();
    // 21 / 5 = 4 per slice, last slice takes cols 16..=20
    assert_eq!(grid.dir_of_col(15, 21), 3);
    assert_eq!(grid.dir_of_col(16, 21), 4);
    assert_eq!(grid.dir_of_col(20, 21), 4);
}

#[test]
fn grid_rejects_bad_sizes() {
    assert!(PatchGrid::new(4, 3).is_err());
    assert!(PatchGrid::new(0, 3).is_err());
    assert!(PatchGrid::new(33, 3).is_err());
    assert!(PatchGrid::new(3, 0).is_err());
    assert!(PatchGrid::new(3, 8).is_err());
}

#[test]
fn lexicon_mapping_is_injective() {
    for n in [1usize, 3, 7, 15, 31] {
        let grid = PatchGrid::new(n, 3).unwrap();
        let mut entries: Vec<usize> = (0..n).map(|i| grid.dir_lexicon_entry(i)).collect();
        entries.dedup();
        assert_eq!(entries.len(), n, "n_dir={n}");
        for (i, &e) in entries.iter().enumerate() {
            assert_eq!(grid.dir_from_lexicon_entry(e), Some(i));
        }
    }
    let grid = PatchGrid::new(3, 3).unwrap();
    assert_eq!(grid.dir_lexicon_entry(0), 0);
    assert_eq!(grid.dir_lexicon_entry(1), 15);
    assert_eq!(grid.dir_lexicon_entry(2), 30);
}

#[test]
fn summarize_empty_arena() {
    let grid = PatchGrid::DEFAULT;
    let s = summarize(&empty_objects(), grid, 21, 15);
    assert_eq!(s.patches.len(), 9);
    assert!(s.patches.iter().all(|p| p.is_empty()));
    assert_eq!(s.agent_dir, 1);
}

#[test]
fn summarize_single_enemy_top_left() {
    let grid = PatchGrid::DEFAULT;
    let mut objects = empty_objects();
    objects.records.push(ObjectRecord {
        class: EntityClass::Enemy,
        col: 0,
        row: 0,
    });
    let s = summarize(&objects, grid, 21, 15);
    for p in &s.patches {
        let expect = if (p.dir_index, p.dist_index) == (0, 0) { 1 } else { 0 };
        assert_eq!(p.counts[EntityClass::Enemy.index()], expect);
    }
}

#[test]
fn scan_order_is_dist_major() {
    let grid = PatchGrid::DEFAULT;
    let s = summarize(&empty_objects(), grid, 21, 15);
    let order: Vec<(usize, usize)> = s.patches.iter().map(|p| (p.dist_index, p.dir_index)).collect();
    assert_eq!(
        order,
        vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
    );
}

#[test]
fn describe_empty_with_skip_variant_is_status_only() {
    let bank = bank();
    let grid = PatchGrid::DEFAULT;
    let s = summarize(&empty_objects(), grid, 21, 15);
    let mut rng = stream_rng(0, Stream::Ambiguity);
    let words = describe(&s, &bank, &mut rng, Some(0));
    assert_eq!(words, vec!["you", "stand", "center"]);
}

#[test]
fn golden_sentence_variant_zero() {
    // frozen from the bundled template bank: one enemy in the far-left,
    // farthest patch, agent in the center slice
    let bank = bank();
    let grid = PatchGrid::DEFAULT;
    let mut objects = empty_objects();
    objects.records.push(ObjectRecord {
        class: EntityClass::Enemy,
        col: 0,
        row: 0,
    });
    let s = summarize(&objects, grid, 21, 15);
    let mut rng = stream_rng(0, Stream::Ambiguity);
    let words = describe(&s, &bank, &mut rng, Some(0));
    assert_eq!(
        words,
        vec!["you", "stand", "center", "1", "demon", "far", "left", "very", "far"]
    );
}

#[test]
fn golden_sentence_variant_one_verbalizes_empties() {
    let bank = bank();
    let grid = PatchGrid::new(1, 1).unwrap();
    let mut objects = empty_objects();
    objects.records.push(ObjectRecord {
        class: EntityClass::Ammo,
        col: 3,
        row: 3,
    });
    objects.records.push(ObjectRecord {
        class: EntityClass::Ammo,
        col: 5,
        row: 3,
    });
    let s = summarize(&objects, grid, 21, 15);
    let mut rng = stream_rng(0, Stream::Ambiguity);
    let words = describe(&s, &bank, &mut rng, Some(1));
    assert_eq!(
        words,
        vec!["position", "center", "there", "are", "2", "clips", "at", "center", "near"]
    );
}

#[test]
fn different_seeds_same_content() {
    let bank = bank();
    let grid = PatchGrid::DEFAULT;
    let mut objects = empty_objects();
    for (col, row, class) in [
        (0u16, 0u16, EntityClass::Enemy),
        (10, 3, EntityClass::Enemy),
        (20, 14, EntityClass::Medipack),
        (4, 8, EntityClass::Nuisance),
    ] {
        objects.records.push(ObjectRecord { class, col, row });
    }
    let s = summarize(&objects, grid, 21, 15);
    let mut rng_a = stream_rng(1, Stream::Ambiguity);
    let mut rng_b = stream_rng(2, Stream::Ambiguity);
    let words_a = describe(&s, &bank, &mut rng_a, None);
    let words_b = describe(&s, &bank, &mut rng_b, None);
    assert_ne!(words_a, words_b, "ambiguity seeds should vary surface form");
    let parsed_a = parse_sentence(&words_a, &bank, grid).unwrap();
    let parsed_b = parse_sentence(&words_b, &bank, grid).unwrap();
    assert_eq!(parsed_a, parsed_b);
    assert_eq!(parsed_a, ParsedContent::of_summary(&s));
}

#[test]
fn all_ten_variants_information_equivalent() {
    let bank = bank();
    let grid = PatchGrid::DEFAULT;
    let mut objects = empty_objects();
    for (col, row, class) in [
        (2u16, 1u16, EntityClass::Enemy),
        (3, 1, EntityClass::Enemy),
        (10, 7, EntityClass::Fireball),
        (18, 13, EntityClass::Ammo),
    ] {
        objects.records.push(ObjectRecord { class, col, row });
    }
    let s = summarize(&objects, grid, 21, 15);
    let expect = ParsedContent::of_summary(&s);
    for variant in 0..VARIANT_COUNT {
        let mut rng = stream_rng(0, Stream::Ambiguity);
        let words = describe(&s, &bank, &mut rng, Some(variant));
        let parsed = parse_sentence(&words, &bank, grid)
            .unwrap_or_else(|e| panic!("variant {variant} failed to parse: {e}"));
        assert_eq!(parsed.counts, expect.counts, "variant {variant}");
        assert_eq!(parsed.agent_dir, expect.agent_dir, "variant {variant}");
    }
}

#[test]
fn tokenize_empty_is_all_pad() {
    let vocab = Vocabulary::from_bank(&bank());
    let (seq, truncated) = tokenize(&[], &vocab, 8);
    assert_eq!(seq.true_length, 0);
    assert!(!truncated);
    assert!(seq.ids.iter().all(|&id| id == PAD_ID));
}

#[test]
fn tokenize_pads_to_length() {
    let vocab = Vocabulary::from_bank(&bank());
    let words: Vec<String> = ["you", "stand", "center", "1", "demon"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (seq, truncated) = tokenize(&words, &vocab, 8);
    assert!(!truncated);
    assert_eq!(seq.true_length, 5);
    assert!(seq.ids[..5].iter().all(|&id| id != PAD_ID && id != OOV_ID));
    assert_eq!(&seq.ids[5..], &[PAD_ID, PAD_ID, PAD_ID]);
}

#[test]
fn tokenize_truncates_and_reports() {
    let vocab = Vocabulary::from_bank(&bank());
    let words: Vec<String> = vec!["demon".to_string(); 10];
    let (seq, truncated) = tokenize(&words, &vocab, 4);
    assert!(truncated);
    assert_eq!(seq.true_length, 4);
}

#[test]
fn unknown_words_map_to_oov() {
    let vocab = Vocabulary::from_bank(&bank());
    let words: Vec<String> = vec!["zorp".to_string()];
    let (seq, _) = tokenize(&words, &vocab, 2);
    assert_eq!(seq.ids[0], OOV_ID);
}

#[test]
fn vocabulary_has_pad_oov_and_digits() {
    let vocab = Vocabulary::from_bank(&bank());
    assert_eq!(vocab.word_of(PAD_ID), Some("<pad>"));
    assert_eq!(vocab.word_of(OOV_ID), Some("<oov>"));
    for n in 0..100 {
        assert!(vocab.id_of(&n.to_string()).is_some(), "digit {n} missing");
    }
    // small synthetic vocabulary, bounded as documented
    assert!(vocab.len() < 300, "vocab unexpectedly large: {}", vocab.len());
}

#[test]
fn l_max_scales_with_patch_count() {
    assert_eq!(PatchGrid::DEFAULT.l_max(), 96);
    assert_eq!(PatchGrid::new(31, 3).unwrap().l_max(), 992);
    assert!(PatchGrid::new(7, 3).unwrap().l_max() > PatchGrid::DEFAULT.l_max());
}

#[test]
fn measure_length_empty_arena_is_short() {
    let cfg = ArenaConfig {
        enemy_spawn_period: 0,
        max_ticks: 30,
        ..ArenaConfig::defaults(Scenario::DefendLine)
    };
    let mean = measure_length(&cfg, PatchGrid::DEFAULT, &bank(), 3, 5);
    assert!(mean >= 2.0 && mean < 30.0, "mean {mean}");
}

#[test]
fn longer_grids_give_longer_sentences() {
    let cfg = ArenaConfig {
        nuisance_count: 40,
        ..ArenaConfig::super_mini()
    };
    let b = bank();
    let short = measure_length(&cfg, PatchGrid::new(3, 3).unwrap(), &b, 2, 9);
    let long = measure_length(&cfg, PatchGrid::new(31, 3).unwrap(), &b, 2, 9);
    assert!(long > short, "31-patch mean {long} should exceed 3-patch mean {short}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Per-class totals across patches equal the entity totals.
    #[test]
    fn summarize_preserves_totals(seed in 0u64..500, n_dir in prop::sample::select(vec![1usize,3,5,7,15,31]), n_dist in 1usize..=7) {
        let cfg = ArenaConfig { nuisance_count: 25, ..ArenaConfig::super_mini() };
        let state = crate::world::reset(&cfg, seed).unwrap();
        let objects = extract_objects(&state);
        let grid = PatchGrid::new(n_dir, n_dist).unwrap();
        let s = summarize(&objects, grid, cfg.width, cfg.height);
        for class in EntityClass::ALL {
            let total: u32 = s.patches.iter().map(|p| p.counts[class.index()]).sum();
            prop_assert_eq!(total as usize, objects.records.iter().filter(|r| r.class == class).count());
        }
    }

    /// Round trip through the inverse grammar over random states and seeds.
    #[test]
    fn inverse_grammar_roundtrip(seed in 0u64..500, ambiguity in 0u64..500) {
        let bank = bank();
        let cfg = ArenaConfig { nuisance_count: 30, ..ArenaConfig::super_mini() };
        let state = crate::world::reset(&cfg, seed).unwrap();
        let objects = extract_objects(&state);
        let grid = PatchGrid::DEFAULT;
        let s = summarize(&objects, grid, cfg.width, cfg.height);
        let mut rng = stream_rng(ambiguity, Stream::Ambiguity);
        let words = describe(&s, &bank, &mut rng, None);
        let parsed = parse_sentence(&words, &bank, grid).unwrap();
        prop_assert_eq!(parsed, ParsedContent::of_summary(&s));
    }

    /// Generation never emits out-of-vocabulary tokens.
    #[test]
    fn vocabulary_closure(seed in 0u64..500) {
        let bank = bank();
        let vocab = Vocabulary::from_bank(&bank);
        let cfg = ArenaConfig { nuisance_count: 30, ..ArenaConfig::super_mini() };
        let state = crate::world::reset(&cfg, seed).unwrap();
        let mut rng = stream_rng(seed, Stream::Ambiguity);
        let words = sentence_for_state(&state, &cfg, PatchGrid::DEFAULT, &bank, &mut rng);
        let (seq, _) = tokenize(&words, &vocab, words.len().max(1));
        prop_assert!(seq.ids[..seq.true_length].iter().all(|&id| id != OOV_ID));
        // round trip for in-vocabulary words without truncation
        let back = detokenize(&seq, &vocab);
        prop_assert_eq!(back, words);
    }

    /// Adding an entity never shortens the sentence (same ambiguity seed).
    #[test]
    fn monotonic_in_entities(seed in 0u64..500, col in 0u16..21, row in 0u16..15, class_i in 0usize..5) {
        let bank = bank();
        let cfg = ArenaConfig { nuisance_count: 10, ..ArenaConfig::super_mini() };
        let state = crate::world::reset(&cfg, seed).unwrap();
        let mut objects = extract_objects(&state);
        let grid = PatchGrid::DEFAULT;
        let base = summarize(&objects, grid, cfg.width, cfg.height);
        objects.records.push(ObjectRecord { class: EntityClass::ALL[class_i], col, row });
        let grown = summarize(&objects, grid, cfg.width, cfg.height);
        let mut rng_a = stream_rng(seed, Stream::Ambiguity);
        let mut rng_b = stream_rng(seed, Stream::Ambiguity);
        let words_a = describe(&base, &bank, &mut rng_a, None);
        let words_b = describe(&grown, &bank, &mut rng_b, None);
        prop_assert!(words_b.len() >= words_a.len());
    }
}
