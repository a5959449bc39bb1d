//! Writing-script detection, used to group languages when no explicit
//! script override is configured.

use std::collections::BTreeMap;

use unicode_script::{Script, UnicodeScript};

use crate::text::segment_graphemes;

/// Script name reported for text with no script-bearing characters.
pub const UNDETERMINED: &str = "Zyyy";

fn unit_script(unit: &str) -> Script {
    for c in unit.chars() {
        let s = c.script();
        if s != Script::Common && s != Script::Inherited {
            return s;
        }
    }
    Script::Common
}

/// Accumulates script counts over any number of texts, e.g. all records of
/// one language.
#[derive(Debug, Default, Clone)]
pub struct ScriptCounter {
    counts: BTreeMap<&'static str, u64>,
}

impl ScriptCounter {
    pub fn observe(&mut self, text: &str) {
        for unit in segment_graphemes(text) {
            let s = unit_script(unit);
            if s != Script::Common {
                *self.counts.entry(s.full_name()).or_insert(0) += 1;
            }
        }
    }

    /// Majority script; ties break to the lexicographically first name, and
    /// text with no script-bearing units reports [`UNDETERMINED`]. BTreeMap
    /// iteration order makes the tie-break deterministic.
    pub fn dominant(&self) -> String {
        let mut best: Option<(&str, u64)> = None;
        for (&name, &count) in &self.counts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((name, count));
            }
        }
        best.map(|(name, _)| name.to_string()).unwrap_or_else(|| UNDETERMINED.into())
    }
}

/// Majority script of one text, by grapheme. Each grapheme counts as the
/// script of its first non-Common, non-Inherited scalar; graphemes with none
/// (spaces, digits, punctuation) don't vote.
pub fn detect_script(text: &str) -> String {
    let mut counter = ScriptCounter::default();
    counter.observe(text);
    counter.dominant()
}

/// Majority script per language, pooled over all of a language's records.
pub fn language_scripts<'a, I>(records: I) -> BTreeMap<String, String>
where
    I: IntoIterator<Item = &'a crate::analysis::corpus::CorpusRecord>,
{
    let mut counters: BTreeMap<String, ScriptCounter> = BTreeMap::new();
    for record in records {
        counters.entry(record.language.clone()).or_default().observe(&record.text);
    }
    counters.into_iter().map(|(lang, c)| (lang, c.dominant())).collect()
}
