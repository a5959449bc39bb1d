//! Structure metrics: how much did a perturbation damage the text?
//!
//! * [`chrf`]: character n-gram F-score between original and perturbed text.
//!   Sensitive to local damage, blind to long-range block moves.
//! * [`idc`]: mean absolute index displacement, normalized by length.
//!   Sensitive to absolute position changes, blind to local order.
//! * [`dnd`]: fraction of adjacent pairs that are no longer consecutive.
//! * [`compression_rate`]: characters per token under a tokenizer, a proxy
//!   for how much of the tokenizer's vocabulary the text still exercises.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::perturb::{PerturbationResult, PerturbationSpec};
use crate::text::{is_whitespace_unit, segment, unit_count, CharUnit, TokenSequence};
use crate::tokenize::Tokenizer;

/// chrF parameters. Defaults: orders 1..=2 averaged, β=2 (recall weighted
/// twice as heavily as precision), whitespace units participate in n-grams,
/// units are grapheme clusters.
///
/// For the bigram-only variant set `min_n = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChrfConfig {
    pub min_n: usize,
    pub max_n: usize,
    pub beta: f64,
    pub whitespace_included: bool,
    pub unit: CharUnit,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            min_n: 1,
            max_n: 2,
            beta: 2.0,
            whitespace_included: true,
            unit: CharUnit::Grapheme,
        }
    }
}

impl ChrfConfig {
    pub fn bigram_only() -> Self {
        ChrfConfig { min_n: 2, ..Self::default() }
    }
}

/// Interns units as dense ids so n-grams hash cheaply.
fn unit_ids<'a>(units: &[&'a str], table: &mut HashMap<&'a str, u32>) -> Vec<u32> {
    units
        .iter()
        .map(|u| {
            let next = table.len() as u32;
            *table.entry(u).or_insert(next)
        })
        .collect()
}

fn ngram_counts(ids: &[u32], n: usize) -> HashMap<&[u32], u32> {
    let mut counts: HashMap<&[u32], u32> = HashMap::new();
    if ids.len() >= n {
        for w in ids.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Character n-gram F-score of `perturbed` against `original`, scaled to
/// [0, 100].
///
/// Per order n: multiset n-gram matches give precision (share of perturbed
/// n-grams found in the original) and recall (share of original n-grams
/// found in the perturbed text); F_β combines them, with F = 0 when both are
/// 0. Orders where the original has no n-grams are skipped; the score is 100
/// times the mean F over the remaining orders. If no order qualifies, two
/// empty texts score 100 (identical) and anything else 0.
pub fn chrf(original: &str, perturbed: &str, cfg: &ChrfConfig) -> f64 {
    debug_assert!(cfg.min_n >= 1 && cfg.min_n <= cfg.max_n, "bad chrF order range");
    let keep = |u: &&str| cfg.whitespace_included || !is_whitespace_unit(u);
    let orig_units: Vec<&str> = segment(original, cfg.unit).into_iter().filter(keep).collect();
    let pert_units: Vec<&str> = segment(perturbed, cfg.unit).into_iter().filter(keep).collect();

    let mut table = HashMap::new();
    let orig_ids = unit_ids(&orig_units, &mut table);
    let pert_ids = unit_ids(&pert_units, &mut table);

    let beta_sq = cfg.beta * cfg.beta;
    let mut f_sum = 0.0f64;
    let mut orders = 0usize;
    for n in cfg.min_n..=cfg.max_n {
        if orig_ids.len() < n {
            continue;
        }
        let ref_counts = ngram_counts(&orig_ids, n);
        let hyp_counts = ngram_counts(&pert_ids, n);
        let mut matches = 0u64;
        for (gram, &hc) in &hyp_counts {
            if let Some(&rc) = ref_counts.get(gram) {
                matches += u64::from(hc.min(rc));
            }
        }
        let total_ref = (orig_ids.len() - n + 1) as f64;
        let total_hyp = pert_ids.len().saturating_sub(n - 1) as f64;
        let precision = if total_hyp > 0.0 { matches as f64 / total_hyp } else { 0.0 };
        let recall = matches as f64 / total_ref;
        let denom = beta_sq * precision + recall;
        let f = if denom == 0.0 {
            0.0
        } else {
            (1.0 + beta_sq) * precision * recall / denom
        };
        f_sum += f;
        orders += 1;
    }
    if orders == 0 {
        return if orig_units.is_empty() && pert_units.is_empty() { 100.0 } else { 0.0 };
    }
    100.0 * f_sum / orders as f64
}

/// Index displacement: the mean absolute distance each character moved,
/// normalized by length. `trace[i]` is the original index of the character
/// now at position `i`.
///
/// Identity scores 0; reversing an even-length text scores the maximum 0.5.
/// Symmetric in the direction of the permutation. Empty trace scores 0.
pub fn idc(trace: &[usize]) -> f64 {
    let n = trace.len();
    if n == 0 {
        return 0.0;
    }
    let sum: u64 = trace
        .iter()
        .enumerate()
        .map(|(i, &src)| (i as u64).abs_diff(src as u64))
        .sum();
    sum as f64 / n as f64 / n as f64
}

/// Direct-neighbor distortion: the fraction of adjacent output pairs that
/// were not consecutive (ascending) in the original, so the identity scores
/// 0 and a full reversal scores 1. Traces shorter than 2 score 0.
pub fn dnd(trace: &[usize]) -> f64 {
    let n = trace.len();
    if n < 2 {
        return 0.0;
    }
    let broken = trace
        .windows(2)
        .filter(|w| w[1] as i64 - w[0] as i64 != 1)
        .count();
    broken as f64 / (n - 1) as f64
}

/// Characters per token: `unit_count / (token_count + special_token_count)`.
/// Undefined (None) for empty text. Depends only on the token count, so any
/// reordering of the same tokens leaves it unchanged.
pub fn compression_rate(
    text: &str,
    tokens: &TokenSequence,
    special_token_count: usize,
) -> Option<f64> {
    debug_assert_eq!(tokens.source_text, text, "tokens must come from text");
    compression_ratio(unit_count(text, tokens.unit), tokens.len(), special_token_count)
}

/// [`compression_rate`] on raw counts, for callers that track token counts
/// without a full sequence (e.g. permuted token lists).
pub fn compression_ratio(
    units: usize,
    token_count: usize,
    special_token_count: usize,
) -> Option<f64> {
    if units == 0 || token_count + special_token_count == 0 {
        return None;
    }
    Some(units as f64 / (token_count + special_token_count) as f64)
}

/// All metrics for one perturbed record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub record_id: String,
    pub spec: PerturbationSpec,
    pub chrf: f64,
    pub idc: f64,
    pub dnd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comp: Option<f64>,
}

/// Scores one perturbation result against its original text. `comp` is
/// computed on the original text when a tokenizer is supplied: it measures
/// the text/tokenizer pair and is unaffected by token order.
pub fn measure(
    record_id: impl Into<String>,
    original: &str,
    result: &PerturbationResult,
    tokenizer: Option<&Tokenizer>,
    cfg: &ChrfConfig,
) -> MetricReport {
    let comp = tokenizer.and_then(|t| {
        let seq = t.tokenize(original);
        compression_rate(original, &seq, t.special_token_count())
    });
    MetricReport {
        record_id: record_id.into(),
        spec: result.spec.clone(),
        chrf: chrf(original, &result.perturbed_text, cfg),
        idc: idc(result.trace.as_slice()),
        dnd: dnd(result.trace.as_slice()),
        comp,
    }
}

pub const REPORT_CSV_HEADER: [&str; 6] =
    ["record_id", "setting_id", "chrf", "idc", "dnd", "comp"];

/// Writes reports as CSV with the fixed column set
/// `record_id,setting_id,chrf,idc,dnd,comp` (comp empty when absent).
pub fn write_reports_csv<W: Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        wtr.write_record([
            r.record_id.as_str(),
            r.spec.setting_id.as_str(),
            &r.chrf.to_string(),
            &r.idc.to_string(),
            &r.dnd.to_string(),
            &r.comp.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| crate::Error::io("<csv>", e))?;
    Ok(())
}

/// Writes reports as JSON lines, one object per record.
pub fn write_reports_jsonl<W: Write>(mut out: W, reports: &[MetricReport]) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| crate::Error::io("<jsonl>", e))?;
    }
    Ok(())
}
