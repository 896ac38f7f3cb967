//! Rule-based segmentation of navigation instructions into sub-instructions.
//!
//! The pipeline per instruction: clean the raw text, split it into
//! sentences, tag each sentence, walk the tags accumulating the current
//! sub-instruction and closing it wherever [`need_refine`] fires, merge
//! fragments that are too short, and map every sub-instruction to token ids.

mod clean;
mod rules;
mod stats;
mod tagger;

use rayon::prelude::*;

pub use clean::{clean_instruction, coarse_split};
pub use rules::{need_refine, RefineRuleSet, DEFAULT_CONJUNCTIONS, DEFAULT_MIN_WORDS, DEFAULT_NAV_VERBS};
pub use stats::{bench_throughput, corpus_stats, write_histogram_csv, CorpusStats, Throughput};
pub use tagger::{pos_tag, tag_words, PosTag, TaggedToken};

use crate::corpus::{is_punctuation, join_words, InstructionRecord, Vocab};
use crate::error::Result;

/// Sub-instructions of one instruction and their token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub sub_instructions: Vec<String>,
    pub tokens: Vec<Vec<u32>>,
}

fn word_count(words: &[String]) -> usize {
    words.iter().filter(|w| !is_punctuation(w)).count()
}

fn close(subs: &mut Vec<Vec<String>>, mut current: Vec<String>) {
    while current
        .last()
        .is_some_and(|w| matches!(w.as_str(), "," | ";" | ":"))
    {
        current.pop();
    }
    if word_count(&current) > 0 {
        subs.push(current);
    }
}

/// Sub-instruction word lists for one sentence.
fn refine_sentence(sentence: &str, rules: &RefineRuleSet) -> Result<Vec<Vec<String>>> {
    let tokens = pos_tag(sentence);
    let mut subs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for (i, tok) in tokens.iter().enumerate() {
        if need_refine(i, &tokens, rules)? {
            close(&mut subs, std::mem::take(&mut current));
            if !tok.is_punct() {
                current.push(tok.word.clone());
            }
        } else if !(current.is_empty() && tok.is_punct()) {
            current.push(tok.word.clone());
        }
    }
    close(&mut subs, current);

    // Short trailing fragments ("and stop") belong to the motion before them.
    let mut merged: Vec<Vec<String>> = Vec::with_capacity(subs.len());
    for sub in subs {
        match merged.last_mut() {
            Some(prev) if word_count(&sub) < rules.min_words => prev.extend(sub),
            _ => merged.push(sub),
        }
    }
    Ok(merged)
}

/// Segments one raw instruction. Empty or punctuation-only input yields no
/// sub-instructions.
pub fn segment_instruction(raw: &str, rules: &RefineRuleSet, vocab: &Vocab) -> Result<Segmentation> {
    let cleaned = clean_instruction(raw);
    let mut out = Segmentation::default();
    for sentence in coarse_split(&cleaned) {
        for words in refine_sentence(&sentence, rules)? {
            out.tokens.push(words.iter().map(|w| vocab.id(w)).collect());
            out.sub_instructions.push(join_words(&words));
        }
    }
    Ok(out)
}

/// Copy of `record` with sub-instructions and tokens filled in.
pub fn segment_record(record: &InstructionRecord, rules: &RefineRuleSet, vocab: &Vocab) -> Result<InstructionRecord> {
    let seg = segment_instruction(&record.instruction, rules, vocab)?;
    Ok(InstructionRecord {
        id: record.id.clone(),
        instruction: record.instruction.clone(),
        sub_instructions: seg.sub_instructions,
        tokens: seg.tokens,
    })
}

/// Segments a corpus across threads; output order and content equal the
/// sequential run.
pub fn segment_corpus(records: &[InstructionRecord], rules: &RefineRuleSet, vocab: &Vocab) -> Result<Vec<InstructionRecord>> {
    rules.validate()?;
    records
        .par_iter()
        .map(|r| segment_record(r, rules, vocab))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_EXAMPLE: &str = "Turn to the right, go past the refrigerator. Turn left and walk to the point where you 're to the hallway by the entry and dining room area.";

    fn subs(raw: &str) -> Vec<String> {
        segment_instruction(raw, &RefineRuleSet::default(), &Vocab::default())
            .unwrap()
            .sub_instructions
    }

    #[test]
    fn reference_example() {
        assert_eq!(
            subs(PAPER_EXAMPLE),
            [
                "Turn to the right",
                "go past the refrigerator",
                "Turn left",
                "and walk to the point where you 're to the hallway by the entry and dining room area"
            ]
        );
    }

    #[test]
    fn degenerate_and_repeated() {
        assert_eq!(subs("Stop."), ["Stop"]);
        assert_eq!(subs("Walk forward. Walk forward."), ["Walk forward", "Walk forward"]);
        assert!(subs("").is_empty());
        assert!(subs(" ... ").is_empty());
    }

    #[test]
    fn short_trailing_fragment_merges_back() {
        assert_eq!(subs("Walk to the door and stop."), ["Walk to the door and stop"]);
        assert_eq!(
            subs("Walk past the table, and then turn left into the kitchen."),
            ["Walk past the table", "and then turn left into the kitchen"]
        );
    }

    #[test]
    fn tokens_follow_vocab() {
        let vocab = Vocab::from_tokens(["turn", "left", "and", "walk"]);
        let seg = segment_instruction("Turn left and walk forward quickly.", &RefineRuleSet::default(), &vocab).unwrap();
        assert_eq!(seg.sub_instructions, ["Turn left", "and walk forward quickly"]);
        assert_eq!(seg.tokens, [vec![4, 5], vec![6, 7, 1, 1]]);
    }
}
