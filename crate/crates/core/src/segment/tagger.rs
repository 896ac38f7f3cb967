//! Lexicon-first part-of-speech tagger with suffix fallbacks.
//!
//! Only the distinctions the refining rules depend on (verbs, conjunctions,
//! punctuation) need to be reliable; the rest is best effort.

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, split_words};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Verb,
    Noun,
    Adj,
    Adv,
    Conj,
    Prep,
    Det,
    Pron,
    Num,
    Punct,
    Other,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Verb => "VERB",
            PosTag::Noun => "NOUN",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Conj => "CONJ",
            PosTag::Prep => "PREP",
            PosTag::Det => "DET",
            PosTag::Pron => "PRON",
            PosTag::Num => "NUM",
            PosTag::Punct => "PUNCT",
            PosTag::Other => "OTHER",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedToken {
    pub word: String,
    pub tag: PosTag,
}

impl TaggedToken {
    pub fn is_punct(&self) -> bool {
        self.tag == PosTag::Punct
    }
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "each", "every", "another", "any", "some",
    "both", "either", "neither", "no",
];

const POSSESSIVES: &[&str] = &["your", "its", "their", "his", "her", "my", "our"];

const PRONOUNS: &[&str] = &[
    "you", "it", "i", "we", "they", "them", "he", "she", "him", "me", "us", "yourself", "itself",
    "one", "where", "which", "who", "what", "there", "here",
];

const PREPOSITIONS: &[&str] = &[
    "to", "past", "by", "in", "on", "at", "into", "onto", "through", "toward", "towards", "from",
    "of", "with", "without", "up", "down", "across", "around", "along", "between", "behind",
    "beside", "besides", "near", "under", "over", "inside", "outside", "out", "off", "beyond",
    "against", "via", "for", "above", "below", "beneath", "next", "opposite", "throughout",
    "within", "like", "about", "among", "underneath", "upon",
];

const CONJUNCTIONS: &[&str] = &[
    "and", "then", "or", "but", "so", "once", "until", "till", "after", "before", "while", "when",
    "as", "if", "because", "nor", "unless",
];

/// Verbs common in route instructions; the default navigation lexicon is a
/// subset of this list.
const VERBS: &[&str] = &[
    "walk", "turn", "go", "stop", "exit", "enter", "continue", "pass", "climb", "wait", "take",
    "head", "proceed", "move", "make", "follow", "cross", "leave", "veer", "keep", "stand",
    "step", "descend", "ascend", "approach", "travel", "face", "bear", "reach", "see", "find",
    "get", "come", "is", "are", "be", "am", "was", "were", "'re", "'s", "'m", "have", "has",
    "will", "'ll", "can", "should", "must", "look", "stay", "hang", "curve", "circle", "jog",
    "use", "open", "arrive", "end", "finish", "start", "begin", "round", "navigate", "exit",
    "do", "does", "want", "need", "ascend", "descend", "back", "pause", "halt",
];

const ADVERBS: &[&str] = &[
    "left", "right", "straight", "forward", "forwards", "ahead", "back", "backward", "slightly",
    "again", "just", "immediately", "directly", "then", "away", "all", "almost", "only", "very",
    "not", "once", "twice", "halfway", "upstairs", "downstairs", "inside", "outside", "there",
    "here", "sharp", "sharply", "around",
];

const ADJECTIVES: &[&str] = &[
    "open", "closed", "large", "small", "big", "white", "black", "wooden", "first", "second",
    "third", "fourth", "last", "final", "other", "same", "long", "short", "red", "blue", "green",
    "brown", "glass", "double", "main", "far", "near", "nearest", "front", "little", "grey",
    "gray", "yellow", "dark", "tall", "narrow", "wide", "bottom", "top", "middle", "new",
];

const NUMBER_WORDS: &[&str] = &[
    "zero", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "twenty", "hundred",
];

fn in_list(list: &[&str], word: &str) -> bool {
    list.contains(&word)
}

/// Removes a plural or third-person `-s`/`-es` suffix.
pub(crate) fn strip_s(word: &str) -> Option<&str> {
    word.strip_suffix("es")
        .filter(|stem| in_list(VERBS, stem))
        .or_else(|| word.strip_suffix('s'))
}

fn is_number(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
        && word.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ','))
        || in_list(NUMBER_WORDS, word)
}

/// Context-free tag for a single lowercased word.
fn lexical_tag(lower: &str) -> PosTag {
    if is_punctuation(lower) {
        return PosTag::Punct;
    }
    if is_number(lower) {
        return PosTag::Num;
    }
    // closed classes first
    if in_list(DETERMINERS, lower) || in_list(POSSESSIVES, lower) {
        return PosTag::Det;
    }
    if in_list(CONJUNCTIONS, lower) {
        return PosTag::Conj;
    }
    if in_list(PREPOSITIONS, lower) {
        return PosTag::Prep;
    }
    if in_list(PRONOUNS, lower) {
        return PosTag::Pron;
    }
    if in_list(ADVERBS, lower) {
        return PosTag::Adv;
    }
    if in_list(VERBS, lower) {
        return PosTag::Verb;
    }
    if in_list(ADJECTIVES, lower) {
        return PosTag::Adj;
    }
    if lower.len() > 3 && lower.ends_with("ly") {
        return PosTag::Adv;
    }
    if lower.len() > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
        return PosTag::Verb;
    }
    if strip_s(lower).is_some_and(|stem| in_list(VERBS, stem)) {
        return PosTag::Verb;
    }
    if lower.starts_with('\'') {
        return PosTag::Other;
    }
    PosTag::Noun
}

/// Tags an already split token sequence. A verb reading directly after a
/// determiner or adjective is demoted to a noun ("the exit", "the top
/// landing").
pub fn tag_words<S: AsRef<str>>(words: &[S]) -> Vec<TaggedToken> {
    let mut out: Vec<TaggedToken> = Vec::with_capacity(words.len());
    for w in words {
        let word = w.as_ref();
        let lower = word.to_lowercase();
        let mut tag = lexical_tag(&lower);
        if tag == PosTag::Verb {
            if let Some(prev) = out.last() {
                if matches!(prev.tag, PosTag::Det | PosTag::Adj) {
                    tag = PosTag::Noun;
                }
            }
        }
        out.push(TaggedToken {
            word: word.to_string(),
            tag,
        });
    }
    out
}

/// Splits a sentence into words and tags each one.
pub fn pos_tag(sentence: &str) -> Vec<TaggedToken> {
    tag_words(&split_words(sentence))
}
