//! Text normalization, word tokenization and sentence splitting.
//!
//! Everything here is a pure function of its inputs so documents can be
//! processed in parallel. The tokenizer is deliberately simple: whitespace
//! split, then leading and trailing ASCII punctuation detached one character
//! at a time. There is no stemming and no subword segmentation, so token
//! counts are word counts, not model (WordPiece) counts.

use serde::{Deserialize, Serialize};

/// Which normalization steps to apply. Steps always run in the order
/// lowercase, censoring removal, whitespace collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// Replace runs of three or more underscores (de-identification marks)
    /// with a single space.
    pub strip_censoring: bool,
    /// Collapse whitespace runs to one space and trim both ends.
    pub collapse_whitespace: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_censoring: true,
            collapse_whitespace: true,
        }
    }
}

impl NormalizationConfig {
    /// All steps disabled.
    pub fn none() -> Self {
        Self {
            lowercase: false,
            strip_censoring: false,
            collapse_whitespace: false,
        }
    }
}

pub fn normalize(text: &str, cfg: &NormalizationConfig) -> String {
    let mut out = if cfg.lowercase {
        text.to_lowercase()
    } else {
        text.to_owned()
    };
    if cfg.strip_censoring {
        out = strip_censoring(&out);
    }
    if cfg.collapse_whitespace {
        out = out.split_whitespace().collect::<Vec<_>>().join(" ");
    }
    out
}

fn strip_censoring(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut run = 0usize;
    for c in text.chars() {
        if c == '_' {
            run += 1;
            continue;
        }
        flush_underscores(&mut out, run);
        run = 0;
        out.push(c);
    }
    flush_underscores(&mut out, run);
    out
}

fn flush_underscores(out: &mut String, run: usize) {
    if run >= 3 {
        out.push(' ');
    } else {
        out.extend(std::iter::repeat_n('_', run));
    }
}

/// Tokens plus their `(start, end)` character offsets in the text they were
/// cut from. Offsets count `char`s, not bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<String>,
    offsets: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn offsets(&self) -> &[(usize, usize)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    /// Drops tokens made only of punctuation, keeping offsets aligned.
    pub fn without_punctuation(self) -> Self {
        let (tokens, offsets) = self
            .tokens
            .into_iter()
            .zip(self.offsets)
            .filter(|(t, _)| !is_punctuation_token(t))
            .unzip();
        Self { tokens, offsets }
    }

    fn push(&mut self, chars: &[char], start: usize, end: usize) {
        self.tokens.push(chars[start..end].iter().collect());
        self.offsets.push((start, end));
    }
}

pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation())
}

/// Splits `text` on whitespace and detaches leading/trailing punctuation.
///
/// A leading `+`, `-` or `.` directly before a digit stays attached so signed
/// and decimal numbers remain whole ("-1", ".5"). Internal punctuation is
/// never split ("r/o", "1.5", "t-spine").
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<char> = text.chars().collect();
    let mut seq = TokenSequence::default();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_word(&chars, start, i, &mut seq);
    }
    seq
}

fn split_word(chars: &[char], mut start: usize, end: usize, seq: &mut TokenSequence) {
    while start < end && chars[start].is_ascii_punctuation() && !starts_number(chars, start, end) {
        seq.push(chars, start, start + 1);
        start += 1;
    }
    let mut core_end = end;
    while core_end > start && chars[core_end - 1].is_ascii_punctuation() {
        core_end -= 1;
    }
    if core_end > start {
        seq.push(chars, start, core_end);
    }
    for k in core_end..end {
        seq.push(chars, k, k + 1);
    }
}

fn starts_number(chars: &[char], at: usize, end: usize) -> bool {
    matches!(chars[at], '+' | '-' | '.') && at + 1 < end && chars[at + 1].is_ascii_digit()
}

/// Sentence splitter settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentenceConfig {
    /// Lowercase words (without the final period) that do not end a sentence.
    pub abbreviations: Vec<String>,
}

impl Default for SentenceConfig {
    fn default() -> Self {
        let abbreviations = [
            "dr", "mr", "mrs", "ms", "st", "vs", "e.g", "i.e", "approx", "cf", "fig", "etc",
        ];
        Self {
            abbreviations: abbreviations.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Byte ranges partitioning `text` into sentences.
///
/// A sentence ends after a run of `.`, `!` or `?` that is followed by
/// whitespace or the end of input, unless the word before a period is a
/// configured abbreviation. Each range extends over the whitespace that
/// follows its terminator, so the ranges tile the whole input.
pub fn sentence_spans(text: &str, cfg: &SentenceConfig) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if !matches!(bytes[i], b'.' | b'!' | b'?') {
            i += 1;
            continue;
        }
        let term_start = i;
        while i < bytes.len() && matches!(bytes[i], b'.' | b'!' | b'?') {
            i += 1;
        }
        let at_boundary = i == bytes.len() || text[i..].starts_with(char::is_whitespace);
        if !at_boundary || is_abbreviation(&text[start..term_start], &bytes[term_start..i], cfg) {
            continue;
        }
        let rest = &text[i..];
        let ws = rest.len() - rest.trim_start().len();
        i += ws;
        spans.push((start, i));
        start = i;
    }
    if start < bytes.len() {
        spans.push((start, bytes.len()));
    }
    spans
}

fn is_abbreviation(before: &str, terminator: &[u8], cfg: &SentenceConfig) -> bool {
    if terminator != b"." {
        return false;
    }
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| c.is_ascii_punctuation() && c != '.');
    !word.is_empty()
        && cfg
            .abbreviations
            .iter()
            .any(|a| a.eq_ignore_ascii_case(word))
}

/// Sentences of `text`, trimmed, with whitespace-only pieces dropped.
pub fn split_sentences(text: &str, cfg: &SentenceConfig) -> Vec<String> {
    sentence_spans(text, cfg)
        .into_iter()
        .map(|(s, e)| text[s..e].trim())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}
