//! Refining rules that decide where a new sub-instruction starts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::tagger::{strip_s, PosTag, TaggedToken};

pub const DEFAULT_NAV_VERBS: &[&str] = &[
    "walk", "turn", "go", "stop", "exit", "enter", "continue", "pass", "climb", "wait", "take",
    "head", "proceed", "move", "make", "follow", "cross", "leave", "veer", "keep", "step",
    "descend", "ascend", "approach", "face", "bear",
];

pub const DEFAULT_CONJUNCTIONS: &[&str] = &["and", "then", "after", "once", "until"];

pub const DEFAULT_MIN_WORDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineRuleSet {
    pub nav_verbs: BTreeSet<String>,
    pub conjunctions: BTreeSet<String>,
    /// Sub-instructions with fewer words merge into the preceding one.
    pub min_words: usize,
}

impl Default for RefineRuleSet {
    fn default() -> Self {
        Self {
            nav_verbs: DEFAULT_NAV_VERBS.iter().map(|s| s.to_string()).collect(),
            conjunctions: DEFAULT_CONJUNCTIONS.iter().map(|s| s.to_string()).collect(),
            min_words: DEFAULT_MIN_WORDS,
        }
    }
}

impl RefineRuleSet {
    pub fn validate(&self) -> Result<()> {
        if self.nav_verbs.is_empty() || self.conjunctions.is_empty() {
            return Err(Error::invalid("refine lexicons must be non-empty"));
        }
        if self.min_words == 0 {
            return Err(Error::invalid("minimum sub-instruction length must be at least 1"));
        }
        Ok(())
    }

    /// Verb-tagged token whose lowercase form (or `-s` stem) is in the
    /// navigation lexicon.
    pub fn is_nav_verb(&self, token: &TaggedToken) -> bool {
        if token.tag != PosTag::Verb {
            return false;
        }
        let lower = token.word.to_lowercase();
        self.nav_verbs.contains(&lower)
            || strip_s(&lower).is_some_and(|stem| self.nav_verbs.contains(stem))
    }

    pub fn is_conjunction(&self, token: &TaggedToken) -> bool {
        self.conjunctions.contains(&token.word.to_lowercase())
    }
}

fn is_terminal(word: &str) -> bool {
    matches!(word, "." | "!" | "?")
}

fn is_clause_break(word: &str) -> bool {
    matches!(word, "," | ";" | ":")
}

/// Whether a new sub-instruction starts at token `i` of one sentence.
///
/// - position 0 never splits
/// - sentence-final punctuation (`.`, `!`, `?` followed only by punctuation) closes the sub
/// - R1: a clause break (`,` `;` `:`) closes the sub when the clause before it
///   has at least `min_words` words and a navigation verb
/// - R2: a conjunction opens a new sub when one of the next two tokens is a
///   navigation verb; the conjunction stays with the new sub, and a
///   conjunction directly after another conjunction does not split again
/// - R3: a navigation verb right after a clause break that closed a sub
///   opens a new one
pub fn need_refine(i: usize, tokens: &[TaggedToken], rules: &RefineRuleSet) -> Result<bool> {
    if i >= tokens.len() {
        return Err(Error::Index {
            index: i,
            len: tokens.len(),
        });
    }
    if i == 0 {
        return Ok(false);
    }
    let tok = &tokens[i];

    if is_terminal(&tok.word) && tokens[i..].iter().all(TaggedToken::is_punct) {
        return Ok(true);
    }

    if is_clause_break(&tok.word) {
        let clause_start = tokens[..i]
            .iter()
            .rposition(|t| is_clause_break(&t.word) || is_terminal(&t.word))
            .map_or(0, |p| p + 1);
        let clause = &tokens[clause_start..i];
        let words = clause.iter().filter(|t| !t.is_punct()).count();
        return Ok(words >= rules.min_words && clause.iter().any(|t| rules.is_nav_verb(t)));
    }

    if rules.is_conjunction(tok) {
        if rules.is_conjunction(&tokens[i - 1]) {
            return Ok(false);
        }
        return Ok(tokens[i + 1..]
            .iter()
            .take(2)
            .any(|t| rules.is_nav_verb(t)));
    }

    if rules.is_nav_verb(tok) && is_clause_break(&tokens[i - 1].word) {
        return need_refine(i - 1, tokens, rules);
    }

    Ok(false)
}
