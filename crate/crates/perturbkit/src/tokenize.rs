//! Tokenizers that carve a text into the units the perturbation operators
//! permute. All of them keep whitespace: every byte of the input belongs to
//! exactly one token, so any token order still concatenates to a real string.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{
    decode_utf8, is_whitespace_unit, segment, CharUnit, Granularity, Token, TokenSequence,
};

/// A subword inventory for greedy longest-match tokenization.
///
/// File format: one entry per line, taken literally (entries may be or contain
/// whitespace). Empty lines are skipped. Lines starting with `#!` are
/// directives:
///
/// ```text
/// #! special_tokens 2
/// #! continuation_marker ##
/// ```
///
/// `special_tokens` is added to the token count when computing compression.
/// When a continuation marker is set, entries beginning with it are indexed
/// under their stripped surface (`##ing` matches the text `ing`); matching is
/// position-independent. Entries cannot start with `#!`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: HashSet<String>,
    special_token_count: usize,
    continuation_marker: Option<String>,
    max_grapheme_len: usize,
    max_code_point_len: usize,
}

impl Vocabulary {
    pub fn parse(src: &str) -> Result<Vocabulary> {
        let mut raw: Vec<String> = Vec::new();
        let mut special_token_count = 0usize;
        let mut continuation_marker: Option<String> = None;
        for (idx, line) in src.lines().enumerate() {
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("#!") {
                let mut parts = rest.split_whitespace();
                let bad = |reason: String| Error::MalformedRecord { line: lineno, reason };
                match parts.next() {
                    Some("special_tokens") => {
                        let arg = parts
                            .next()
                            .ok_or_else(|| bad("special_tokens needs a count".into()))?;
                        special_token_count = arg
                            .parse()
                            .map_err(|_| bad(format!("bad special_tokens count {arg:?}")))?;
                    }
                    Some("continuation_marker") => {
                        let arg = parts
                            .next()
                            .ok_or_else(|| bad("continuation_marker needs a value".into()))?;
                        continuation_marker = Some(arg.to_string());
                    }
                    other => {
                        return Err(bad(format!("unknown directive {:?}", other.unwrap_or(""))));
                    }
                }
            } else if !line.is_empty() {
                raw.push(line.to_string());
            }
        }

        let entries: HashSet<String> = raw
            .into_iter()
            .map(|e| match &continuation_marker {
                Some(m) => e.strip_prefix(m.as_str()).map(str::to_string).unwrap_or(e),
                None => e,
            })
            .filter(|e| !e.is_empty())
            .collect();

        Self::build(entries, special_token_count, continuation_marker)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Vocabulary> {
        let path = path.as_ref();
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Vocabulary::parse(decode_utf8(&bytes)?)
    }

    /// Builds a vocabulary directly from entry strings.
    pub fn from_entries<I, S>(entries: I, special_token_count: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: HashSet<String> =
            entries.into_iter().map(Into::into).filter(|e| !e.is_empty()).collect();
        Self::build(set, special_token_count, None)
    }

    fn build(
        entries: HashSet<String>,
        special_token_count: usize,
        continuation_marker: Option<String>,
    ) -> Result<Vocabulary> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let max_grapheme_len = entries
            .iter()
            .map(|e| crate::text::unit_count(e, CharUnit::Grapheme))
            .max()
            .unwrap_or(1);
        let max_code_point_len = entries
            .iter()
            .map(|e| crate::text::unit_count(e, CharUnit::CodePoint))
            .max()
            .unwrap_or(1);
        Ok(Vocabulary {
            entries,
            special_token_count,
            continuation_marker,
            max_grapheme_len,
            max_code_point_len,
        })
    }

    pub fn contains(&self, candidate: &str) -> bool {
        self.entries.contains(candidate)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn special_token_count(&self) -> usize {
        self.special_token_count
    }

    pub fn continuation_marker(&self) -> Option<&str> {
        self.continuation_marker.as_deref()
    }

    /// Longest entry measured in the given unit.
    pub fn max_units(&self, unit: CharUnit) -> usize {
        match unit {
            CharUnit::Grapheme => self.max_grapheme_len,
            CharUnit::CodePoint => self.max_code_point_len,
        }
    }
}

fn make_token(units: &[&str], range: std::ops::Range<usize>) -> Token {
    Token::new(units[range.clone()].concat(), range)
}

/// One token per character unit.
pub fn tokenize_chars(text: &str, unit: CharUnit) -> TokenSequence {
    let units = segment(text, unit);
    let tokens = units
        .iter()
        .enumerate()
        .map(|(i, u)| Token::new(*u, i..i + 1))
        .collect();
    TokenSequence::new(tokens, text, Granularity::Character, unit)
}

/// Splits at whitespace, attaching each whitespace run to the token before it
/// (leading whitespace sticks to the first token): `" a  b "` becomes
/// `[" a  ", "b "]`.
pub fn tokenize_whitespace(text: &str, unit: CharUnit) -> TokenSequence {
    let units = segment(text, unit);
    let mut tokens = Vec::new();
    let mut start = 0usize;
    let mut has_content = false;
    for i in 0..units.len() {
        let ws = is_whitespace_unit(units[i]);
        if !ws && has_content && is_whitespace_unit(units[i - 1]) {
            tokens.push(make_token(&units, start..i));
            start = i;
            has_content = false;
        }
        if !ws {
            has_content = true;
        }
    }
    if !units.is_empty() {
        tokens.push(make_token(&units, start..units.len()));
    }
    TokenSequence::new(tokens, text, Granularity::Subword, unit)
}

/// Greedy longest-match segmentation against `vocab`, scanning left to right.
/// Matches start and end on unit boundaries. A position where no entry
/// matches yields a single-unit token, so unknown text degrades instead of
/// failing.
pub fn tokenize_vocab_greedy(text: &str, vocab: &Vocabulary, unit: CharUnit) -> TokenSequence {
    let units = segment(text, unit);
    let max_len = vocab.max_units(unit).max(1);
    let mut tokens = Vec::new();
    let mut i = 0usize;
    while i < units.len() {
        let limit = (units.len() - i).min(max_len);
        let mut candidate = String::new();
        let mut matched = 0usize;
        for l in 1..=limit {
            candidate.push_str(units[i + l - 1]);
            if vocab.contains(&candidate) {
                matched = l;
            }
        }
        let take = matched.max(1);
        tokens.push(make_token(&units, i..i + take));
        i += take;
    }
    TokenSequence::new(tokens, text, Granularity::Subword, unit)
}

/// A tokenizer choice plus the character unit it indexes spans in and the
/// special-token count used for compression.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    kind: TokenizerKind,
    unit: CharUnit,
    special_token_count: usize,
}

#[derive(Debug, Clone)]
enum TokenizerKind {
    Characters,
    Whitespace,
    Vocab(Vocabulary),
}

impl Tokenizer {
    pub fn characters() -> Self {
        Tokenizer { kind: TokenizerKind::Characters, unit: CharUnit::default(), special_token_count: 0 }
    }

    pub fn whitespace() -> Self {
        Tokenizer { kind: TokenizerKind::Whitespace, unit: CharUnit::default(), special_token_count: 0 }
    }

    /// A greedy-vocabulary tokenizer; inherits the vocabulary's declared
    /// special-token count.
    pub fn vocab(vocab: Vocabulary) -> Self {
        let special_token_count = vocab.special_token_count();
        Tokenizer { kind: TokenizerKind::Vocab(vocab), unit: CharUnit::default(), special_token_count }
    }

    pub fn with_unit(mut self, unit: CharUnit) -> Self {
        self.unit = unit;
        self
    }

    pub fn with_special_tokens(mut self, n: usize) -> Self {
        self.special_token_count = n;
        self
    }

    pub fn unit(&self) -> CharUnit {
        self.unit
    }

    pub fn special_token_count(&self) -> usize {
        self.special_token_count
    }

    pub fn granularity(&self) -> Granularity {
        match self.kind {
            TokenizerKind::Characters => Granularity::Character,
            _ => Granularity::Subword,
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        match &self.kind {
            TokenizerKind::Characters => tokenize_chars(text, self.unit),
            TokenizerKind::Whitespace => tokenize_whitespace(text, self.unit),
            TokenizerKind::Vocab(v) => tokenize_vocab_greedy(text, v, self.unit),
        }
    }
}
