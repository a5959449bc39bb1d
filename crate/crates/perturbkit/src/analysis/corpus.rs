//! Corpus ingestion. Two formats: JSON lines with `id`/`text`/`lang` (and
//! optional `task`), or plain text with one record per line. Malformed
//! records are skipped and reported; a run fails when more than 10% of the
//! records are bad.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub record_id: String,
    pub text: String,
    /// BCP-47-style tag, lowercased on ingest.
    pub language: String,
    pub task: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// Decide per file: a first non-blank line starting with `{` means JSONL.
    #[default]
    Auto,
    Jsonl,
    Plain,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(CorpusFormat::Auto),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "plain" => Ok(CorpusFormat::Plain),
            other => Err(Error::Usage(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub format: CorpusFormat,
    /// Language assigned to plain-text records (JSONL carries its own).
    pub default_language: String,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions { format: CorpusFormat::Auto, default_language: "und".into() }
    }
}

/// Ingestion result: the good records plus one diagnostic per skipped line.
#[derive(Debug, Default)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
    pub skipped: Vec<String>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    lang: String,
    #[serde(default)]
    task: Option<String>,
}

/// Detection rule behind [`CorpusFormat::Auto`]: a corpus whose first
/// non-blank line starts with '{' is JSONL, anything else is plain lines.
pub fn sniff_format<'a>(lines: impl IntoIterator<Item = &'a str>) -> CorpusFormat {
    let jsonl = lines
        .into_iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    if jsonl {
        CorpusFormat::Jsonl
    } else {
        CorpusFormat::Plain
    }
}

pub fn read_corpus<R: BufRead>(reader: R, opts: &CorpusOptions) -> Result<Corpus> {
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        lines.push((idx + 1, line));
    }
    let format = match opts.format {
        CorpusFormat::Auto => sniff_format(lines.iter().map(|(_, l)| l.as_str())),
        f => f,
    };

    let mut corpus = Corpus::default();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut attempted = 0usize;
    for (lineno, line) in &lines {
        let parsed = match format {
            CorpusFormat::Jsonl => {
                if line.trim().is_empty() {
                    continue;
                }
                attempted += 1;
                parse_jsonl_record(line)
            }
            CorpusFormat::Plain => {
                attempted += 1;
                parse_plain_record(line, *lineno, &opts.default_language)
            }
            CorpusFormat::Auto => unreachable!("resolved above"),
        };
        match parsed {
            Ok(rec) => {
                if !seen_ids.insert(rec.record_id.clone()) {
                    corpus
                        .skipped
                        .push(format!("line {lineno}: duplicate record id {:?}", rec.record_id));
                } else {
                    corpus.records.push(rec);
                }
            }
            Err(reason) => corpus.skipped.push(format!("line {lineno}: {reason}")),
        }
    }
    if corpus.skipped.len() * 10 > attempted {
        return Err(Error::TooManySkipped { skipped: corpus.skipped.len(), total: attempted });
    }
    Ok(corpus)
}

fn parse_jsonl_record(line: &str) -> std::result::Result<CorpusRecord, String> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| format!("bad JSON record: {e}"))?;
    if raw.id.is_empty() {
        return Err("empty record id".into());
    }
    if raw.text.is_empty() {
        return Err("empty text".into());
    }
    if raw.lang.is_empty() {
        return Err("empty lang".into());
    }
    Ok(CorpusRecord {
        record_id: raw.id,
        text: raw.text,
        language: raw.lang.to_lowercase(),
        task: raw.task,
    })
}

fn parse_plain_record(
    line: &str,
    lineno: usize,
    language: &str,
) -> std::result::Result<CorpusRecord, String> {
    if line.is_empty() {
        return Err("empty text".into());
    }
    Ok(CorpusRecord {
        record_id: format!("r{lineno:06}"),
        text: line.to_string(),
        language: language.to_lowercase(),
        task: None,
    })
}

pub fn read_corpus_path(path: impl AsRef<Path>, opts: &CorpusOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let text = crate::text::decode_utf8(&bytes)?;
    read_corpus(std::io::Cursor::new(text.as_bytes()), opts)
}
