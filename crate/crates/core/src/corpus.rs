//! Instruction records, the segmented JSON-lines format, word splitting and
//! vocabularies.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::clean_instruction;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const START: u32 = 2;
pub const END: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<start>", "<end>"];

/// One instruction and, once segmented, its sub-instructions with token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub instruction: String,
    #[serde(default)]
    pub sub_instructions: Vec<String>,
    #[serde(default)]
    pub tokens: Vec<Vec<u32>>,
}

impl InstructionRecord {
    pub fn new(id: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            instruction: instruction.into(),
            ..Self::default()
        }
    }

    pub fn is_segmented(&self) -> bool {
        !self.sub_instructions.is_empty()
    }

    /// Checks the structural invariants of a segmented record: at least one
    /// sub-instruction, none blank, one token list per sub-instruction, and
    /// the sub-instructions' words reproduce the cleaned instruction's words.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("record {:?}: {msg}", self.id)));
        if self.sub_instructions.is_empty() {
            return fail("no sub-instructions".into());
        }
        if let Some(i) = self.sub_instructions.iter().position(|s| s.trim().is_empty()) {
            return fail(format!("sub-instruction {i} is blank"));
        }
        if self.tokens.len() != self.sub_instructions.len() {
            return fail(format!(
                "{} token lists for {} sub-instructions",
                self.tokens.len(),
                self.sub_instructions.len()
            ));
        }
        let expected = content_words(&clean_instruction(&self.instruction));
        let actual: Vec<String> = self
            .sub_instructions
            .iter()
            .flat_map(|s| content_words(s))
            .collect();
        if expected != actual {
            return fail("sub-instruction words do not reproduce the instruction".into());
        }
        Ok(())
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped; an empty file yields
/// an empty list.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    parse_corpus(&text)
}

pub fn parse_corpus(text: &str) -> Result<Vec<InstructionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|source| Error::Parse { line: i + 1, source })
        })
        .collect()
}

/// Writes segmented records as JSON lines after validating each one.
pub fn write_fsasub(records: &[InstructionRecord], path: impl AsRef<Path>) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    let file = fs::File::create(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::Validation(format!("record {:?}: {e}", r.id)))?;
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

fn is_clitic(s: &str) -> bool {
    matches!(s, "s" | "re" | "ll" | "ve" | "d" | "m" | "t")
}

/// True when the token contains no alphanumeric character.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && !token.chars().any(char::is_alphanumeric)
}

/// Splits text into word tokens, preserving case. Punctuation characters
/// become separate tokens, apostrophe clitics are split off (`you're` →
/// `you`, `'re`), decimals and hyphenated words stay whole.
pub fn split_words(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let prev = i.checked_sub(1).map(|p| chars[p]);
            let next = chars.get(i + 1).copied();
            let decimal = matches!(c, '.' | ',')
                && prev.is_some_and(|p| p.is_ascii_digit())
                && next.is_some_and(|n| n.is_ascii_digit());
            let hyphen = c == '-' && prev.is_some_and(char::is_alphanumeric) && next.is_some_and(char::is_alphanumeric);
            if c.is_alphanumeric() || (!word.is_empty() && (decimal || hyphen)) {
                word.push(c);
            } else if c == '\'' {
                let rest: String = chars[i + 1..]
                    .iter()
                    .take_while(|ch| ch.is_alphabetic())
                    .collect();
                if !rest.is_empty() && is_clitic(&rest.to_lowercase()) {
                    if !word.is_empty() {
                        tokens.push(std::mem::take(&mut word));
                    }
                    tokens.push(format!("'{rest}"));
                    i += 1 + rest.chars().count();
                    continue;
                }
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(c.to_string());
            }
            i += 1;
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

/// Lowercased non-punctuation words, the unit compared by coverage checks.
pub fn content_words(text: &str) -> Vec<String> {
    split_words(text)
        .into_iter()
        .filter(|t| !is_punctuation(t))
        .map(|t| t.to_lowercase())
        .collect()
}

/// Joins tokens back into display text: words are space separated and
/// closing punctuation attaches to the preceding word.
pub fn join_words<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for t in tokens {
        let t = t.as_ref();
        let attach = is_punctuation(t) && !matches!(t, "(" | "[" | "{" | "\"" | "<");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

/// Token to id mapping. Ids 0..4 are reserved; lookups are case-insensitive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Builds a vocabulary whose non-reserved ids follow the given order.
    /// Duplicates and reserved names are ignored.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            vocab.push(r.to_string());
        }
        for t in tokens {
            let t: String = t.into().to_lowercase();
            if !vocab.index.contains_key(&t) {
                vocab.push(t);
            }
        }
        vocab
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line index is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < RESERVED.len() || lines[..RESERVED.len()] != RESERVED {
            return Err(Error::Validation(format!(
                "{}: vocabulary must start with {RESERVED:?}",
                path.as_ref().display()
            )));
        }
        let vocab = Self::from_tokens(lines[RESERVED.len()..].iter().copied());
        if vocab.len() != lines.len() {
            return Err(Error::Validation(format!(
                "{}: duplicate tokens in vocabulary",
                path.as_ref().display()
            )));
        }
        Ok(vocab)
    }
}

/// Maps each word of `text` to its id; unknown words map to [`UNK`].
pub fn vocab_tokenize(text: &str, vocab: &Vocab) -> Vec<u32> {
    split_words(text).iter().map(|w| vocab.id(w)).collect()
}

/// Counts words over the cleaned instructions and assigns ids, in order of
/// first occurrence, to every word seen at least `min_freq` times.
pub fn build_vocab(corpus: &[InstructionRecord], min_freq: usize) -> Vocab {
    build_vocab_from_texts(corpus.iter().map(|r| r.instruction.as_str()), min_freq)
}

pub fn build_vocab_from_texts<'a>(texts: impl IntoIterator<Item = &'a str>, min_freq: usize) -> Vocab {
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for w in split_words(&clean_instruction(text)) {
            let w = w.to_lowercase();
            let c = counts.entry(w.clone()).or_insert(0);
            if *c == 0 {
                order.push(w);
            }
            *c += 1;
        }
    }
    Vocab::from_tokens(
        order
            .into_iter()
            .filter(|w| counts[w] >= min_freq.max(1)),
    )
}
