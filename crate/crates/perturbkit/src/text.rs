//! Text segmentation primitives and the index bookkeeping that perturbation
//! operators and metrics share.
//!
//! Text is never normalized: what comes in is what gets segmented, permuted,
//! and joined back out. The default unit is the extended grapheme cluster;
//! a code-point mode exists for cross-checking.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// What counts as one character position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharUnit {
    /// Extended grapheme clusters (UAX #29). `"e\u{301}"` is one unit.
    #[default]
    Grapheme,
    /// Unicode scalar values. `"e\u{301}"` is two units.
    CodePoint,
}

impl std::str::FromStr for CharUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grapheme" => Ok(CharUnit::Grapheme),
            "codepoint" | "code_point" => Ok(CharUnit::CodePoint),
            other => Err(Error::Usage(format!("unknown character unit {other:?}"))),
        }
    }
}

/// Whether tokens are individual characters or larger pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Character,
    Subword,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Character => write!(f, "character"),
            Granularity::Subword => write!(f, "subword"),
        }
    }
}

/// Splits `text` into extended grapheme clusters. Concatenating the result
/// reproduces `text` byte for byte.
pub fn segment_graphemes(text: &str) -> Vec<&str> {
    text.graphemes(true).collect()
}

/// Splits `text` into the requested units.
pub fn segment(text: &str, unit: CharUnit) -> Vec<&str> {
    match unit {
        CharUnit::Grapheme => segment_graphemes(text),
        CharUnit::CodePoint => text
            .char_indices()
            .map(|(i, c)| &text[i..i + c.len_utf8()])
            .collect(),
    }
}

/// Number of units in `text` without materializing the segmentation.
pub fn unit_count(text: &str, unit: CharUnit) -> usize {
    match unit {
        CharUnit::Grapheme => text.graphemes(true).count(),
        CharUnit::CodePoint => text.chars().count(),
    }
}

/// Validates raw bytes as UTF-8, reporting the byte offset on failure.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::InvalidUtf8 { byte_offset: e.valid_up_to() })
}

/// True when every scalar in the unit is whitespace.
pub fn is_whitespace_unit(unit: &str) -> bool {
    !unit.is_empty() && unit.chars().all(char::is_whitespace)
}

/// One token: its surface text plus the range of original character indices
/// it covers. Spans are contiguous ascending runs; across a [`TokenSequence`]
/// they partition `0..n` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_span: Range<usize>,
}

impl Token {
    pub fn new(surface: impl Into<String>, char_span: Range<usize>) -> Self {
        Token { surface: surface.into(), char_span }
    }
}

/// A tokenization of one source text. Tokens concatenate back to the source
/// exactly (whitespace is owned by tokens, never dropped).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub source_text: String,
    pub granularity: Granularity,
    pub unit: CharUnit,
}

impl TokenSequence {
    pub fn new(
        tokens: Vec<Token>,
        source_text: impl Into<String>,
        granularity: Granularity,
        unit: CharUnit,
    ) -> Self {
        let seq = TokenSequence {
            tokens,
            source_text: source_text.into(),
            granularity,
            unit,
        };
        debug_assert!(seq.spans_partition(), "token spans must partition 0..n in order");
        seq
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Total number of character units covered.
    pub fn unit_len(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.char_span.end)
    }

    /// Checks the span invariant: consecutive, gap-free, starting at 0.
    pub fn spans_partition(&self) -> bool {
        let mut next = 0;
        for t in &self.tokens {
            if t.char_span.start != next || t.char_span.end < t.char_span.start {
                return false;
            }
            next = t.char_span.end;
        }
        next == unit_count(&self.source_text, self.unit)
    }
}

/// Joins token surfaces with the empty string. Works on any token order, so
/// a permuted sequence reconstructs to the perturbed text.
pub fn reconstruct<'a, I>(tokens: I) -> String
where
    I: IntoIterator<Item = &'a Token>,
{
    let mut out = String::new();
    for t in tokens {
        out.push_str(&t.surface);
    }
    out
}

/// Where each character of a perturbed text came from: `trace[i]` is the
/// original index of the character now at position `i`. Always a permutation
/// of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CharIndexTrace(pub Vec<usize>);

impl CharIndexTrace {
    pub fn identity(n: usize) -> Self {
        CharIndexTrace((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// True iff the trace is a permutation of `0..len`.
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        for &v in &self.0 {
            if v >= seen.len() || seen[v] {
                return false;
            }
            seen[v] = true;
        }
        true
    }
}
