use proptest::prelude::*;

use vln_core::corpus::{build_vocab_from_texts, content_words, parse_corpus, InstructionRecord, Vocab, UNK};
use vln_core::segment::{
    clean_instruction, coarse_split, corpus_stats, need_refine, pos_tag, segment_corpus, segment_instruction,
    segment_record, RefineRuleSet,
};

const WORDS: &[&str] = &[
    "walk", "turn", "left", "right", "and", "then", "go", "past", "the", "table", "stop", "at", "door", "you're",
    "wait", "into", "hallway", "kitchen", "forward", "until", "reach", "2.5", "meters", "stairs", "exit", "room",
    "once", "after", "continue", "bedroom", "straight", "take", "a", "of",
];
const PUNCT: &[&str] = &[",", ".", ";", "!", "?", ":"];

fn instruction() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            6 => prop::sample::select(WORDS).prop_map(str::to_string),
            1 => prop::sample::select(PUNCT).prop_map(str::to_string),
        ],
        0..40,
    )
    .prop_map(|toks| {
        let mut s = String::new();
        for t in toks {
            if !s.is_empty() && !PUNCT.contains(&t.as_str()) {
                s.push(' ');
            }
            s.push_str(&t);
        }
        s
    })
}

fn lower_words(s: &str) -> Vec<String> {
    content_words(s).into_iter().map(|w| w.to_lowercase()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn words_are_conserved(raw in instruction()) {
        let seg = segment_instruction(&raw, &RefineRuleSet::default(), &Vocab::default()).unwrap();
        let joined: Vec<String> = seg.sub_instructions.iter().flat_map(|s| lower_words(s)).collect();
        prop_assert_eq!(joined, lower_words(&clean_instruction(&raw)));
    }

    #[test]
    fn subs_are_non_empty_and_present(raw in instruction()) {
        let seg = segment_instruction(&raw, &RefineRuleSet::default(), &Vocab::default()).unwrap();
        prop_assert!(seg.sub_instructions.iter().all(|s| !lower_words(s).is_empty()));
        prop_assert_eq!(seg.sub_instructions.len(), seg.tokens.len());
        if !lower_words(&raw).is_empty() {
            prop_assert!(!seg.sub_instructions.is_empty());
        }
    }

    #[test]
    fn segmentation_is_deterministic(raw in instruction()) {
        let rules = RefineRuleSet::default();
        let vocab = build_vocab_from_texts([raw.as_str()], 1);
        let a = segment_instruction(&raw, &rules, &vocab).unwrap();
        let b = segment_instruction(&raw, &rules, &vocab).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.tokens.iter().flatten().all(|&t| t != UNK));
    }

    #[test]
    fn need_refine_defined_everywhere(raw in instruction()) {
        let rules = RefineRuleSet::default();
        for sentence in coarse_split(&clean_instruction(&raw)) {
            let tags = pos_tag(&sentence);
            for i in 0..tags.len() {
                prop_assert!(need_refine(i, &tags, &rules).is_ok());
            }
            if !tags.is_empty() {
                prop_assert!(!need_refine(0, &tags, &rules).unwrap());
            }
            prop_assert!(need_refine(tags.len(), &tags, &rules).is_err());
        }
    }

    #[test]
    fn segmented_records_validate(raw in instruction()) {
        prop_assume!(!lower_words(&raw).is_empty());
        let rec = InstructionRecord::new("p", raw.clone());
        let vocab = build_vocab_from_texts([raw.as_str()], 1);
        let seg = segment_record(&rec, &RefineRuleSet::default(), &vocab).unwrap();
        prop_assert!(seg.validate().is_ok());
    }
}

#[test]
fn bundled_sample_segments_cleanly() {
    let text = include_str!("../data/sample_instructions.jsonl");
    let records = parse_corpus(text).unwrap();
    assert_eq!(records.len(), 50);
    let vocab = build_vocab_from_texts(records.iter().map(|r| r.instruction.as_str()), 1);
    let seg = segment_corpus(&records, &RefineRuleSet::default(), &vocab).unwrap();
    for (raw, s) in records.iter().zip(&seg) {
        s.validate().unwrap();
        assert!(!s.sub_instructions.is_empty(), "{}", raw.id);
        let joined: Vec<String> = s.sub_instructions.iter().flat_map(|x| lower_words(x)).collect();
        assert_eq!(joined, lower_words(&raw.instruction), "{}", raw.id);
    }
    let stats = corpus_stats(&seg).unwrap();
    assert_eq!(stats.records, 50);
    assert_eq!(stats.histogram.values().sum::<usize>(), 50);
}

#[test]
fn parallel_matches_sequential() {
    let text = include_str!("../data/sample_instructions.jsonl");
    let records = parse_corpus(text).unwrap();
    let vocab = build_vocab_from_texts(records.iter().map(|r| r.instruction.as_str()), 1);
    let rules = RefineRuleSet::default();
    let par = segment_corpus(&records, &rules, &vocab).unwrap();
    let seq: Vec<_> = records.iter().map(|r| segment_record(r, &rules, &vocab).unwrap()).collect();
    assert_eq!(par, seq);
}
