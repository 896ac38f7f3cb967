//! Instruction cleaning and coarse sentence splitting.

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "etc", "approx", "e.g", "i.e", "ft", "no",
    "rd", "ave", "appt",
];

/// Replaces escape characters with spaces, strips `<...>` markup, collapses
/// whitespace runs and trims.
pub fn clean_instruction(raw: &str) -> String {
    let mut text = String::with_capacity(raw.len());
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            // literal escape sequences left behind by double-encoded data
            '\\' if matches!(chars.peek(), Some('r' | 'n' | 't')) => {
                chars.next();
                text.push(' ');
            }
            '\u{2018}' | '\u{2019}' => text.push('\''),
            '\u{201C}' | '\u{201D}' => text.push('"'),
            c if c.is_control() => text.push(' '),
            c => text.push(c),
        }
    }
    let text = strip_markup(&text);
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let Some(close) = rest[open..].find('>') else {
            break;
        };
        let inner = &rest[open + 1..open + close];
        if inner.contains('<') {
            // unmatched '<' before a later tag: keep it as text
            out.push_str(&rest[..=open]);
            rest = &rest[open + 1..];
            continue;
        }
        out.push_str(&rest[..open]);
        out.push(' ');
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    out
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']')
}

/// Splits cleaned text into sentences at `.`, `!` or `?` followed by
/// whitespace or the end of the text. Decimal points and known
/// abbreviations never end a sentence. Punctuation stays with its sentence.
pub fn coarse_split(cleaned: &str) -> Vec<String> {
    let chars: Vec<char> = cleaned.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminal(chars[i]) {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && (is_terminal(chars[end]) || is_closer(chars[end])) {
            end += 1;
        }
        let at_break = end == chars.len() || chars[end].is_whitespace();
        if at_break && !(chars[i] == '.' && ends_with_abbreviation(&chars[start..i])) {
            push_trimmed(&mut sentences, &chars[start..end]);
            start = end;
        }
        i = end;
    }
    push_trimmed(&mut sentences, &chars[start..]);
    sentences
}

fn ends_with_abbreviation(before: &[char]) -> bool {
    let word: String = before
        .iter()
        .rev()
        .take_while(|c| c.is_alphanumeric() || **c == '.')
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let word = word.to_lowercase();
    !word.is_empty() && ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(out: &mut Vec<String>, chars: &[char]) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
