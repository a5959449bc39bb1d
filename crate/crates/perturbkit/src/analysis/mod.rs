//! The desk-scale pipeline: run a perturbation sweep over a corpus, aggregate
//! the structure metrics, join them with external task scores, and report
//! rank correlations.

pub mod corpus;
pub mod correlate;
pub mod report;
pub mod scores;
pub mod script;
pub mod stats;

pub use corpus::{
    read_corpus, read_corpus_path, sniff_format, Corpus, CorpusFormat, CorpusOptions, CorpusRecord,
};
pub use correlate::{
    correlate, CorrCell, CorrMethod, CorrelationMatrix, Grouping, LangMeta, Observation,
};
pub use report::{heatmap_svg, scatter_points, scatter_svg, ScatterPoint};
pub use scores::{ingest_scores, ingest_scores_path, ScoreRow, ScoreTable};
pub use script::{detect_script, language_scripts, ScriptCounter};
pub use stats::{kendall_tau_b, spearman};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{chrf, compression_rate, dnd, idc, ChrfConfig};
use crate::perturb::{apply_spec, PerturbationSpec};
use crate::rng::SeedPolicy;
use crate::text::{unit_count, Granularity};
use crate::tokenize::Tokenizer;

/// The tokenizer pair a sweep needs: one per granularity. Compression is
/// always computed with the subword tokenizer.
#[derive(Debug, Clone)]
pub struct Tokenizers {
    pub character: Tokenizer,
    pub subword: Tokenizer,
}

impl Default for Tokenizers {
    fn default() -> Self {
        Tokenizers { character: Tokenizer::characters(), subword: Tokenizer::whitespace() }
    }
}

impl Tokenizers {
    pub fn validate(&self) -> Result<()> {
        if self.character.granularity() != Granularity::Character {
            return Err(Error::Usage("character tokenizer must produce characters".into()));
        }
        if self.subword.granularity() != Granularity::Subword {
            return Err(Error::Usage("subword tokenizer must produce subwords".into()));
        }
        Ok(())
    }
}

/// How rows combine into per-(setting, language) aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every (record, seed) row counts equally; std is the sample standard
    /// deviation.
    #[default]
    Macro,
    /// Rows weigh in by record length in character units; std is the
    /// weighted population standard deviation.
    Length,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Weighting::Macro),
            "length" => Ok(Weighting::Length),
            other => Err(Error::Usage(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Perturbation repeats per (record, setting).
    pub n_seeds: u64,
    /// Carry the perturbed text on each row (large!).
    pub keep_texts: bool,
    pub chrf: ChrfConfig,
    pub weighting: Weighting,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            n_seeds: 5,
            keep_texts: false,
            chrf: ChrfConfig::default(),
            weighting: Weighting::Macro,
        }
    }
}

/// One measurement: one record under one setting with one perturbation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub record_id: String,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    pub setting_id: String,
    pub seed_index: u64,
    pub seed: u64,
    /// Character units in the original record.
    pub units: usize,
    pub chrf: f64,
    pub idc: f64,
    pub dnd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbed: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepAggregate {
    pub setting_id: String,
    pub language: String,
    /// Rows aggregated into this cell.
    pub n: usize,
    pub chrf: MeanStd,
    pub idc: MeanStd,
    pub dnd: MeanStd,
    pub comp: Option<MeanStd>,
}

/// Weighted Welford accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: usize,
    w_sum: f64,
    mean: f64,
    m2: f64,
}

impl Acc {
    fn push(&mut self, x: f64, w: f64) {
        self.n += 1;
        self.w_sum += w;
        let d = x - self.mean;
        self.mean += (w / self.w_sum) * d;
        self.m2 += w * d * (x - self.mean);
    }

    fn finish(&self, weighting: Weighting) -> MeanStd {
        let std = match weighting {
            Weighting::Macro => {
                if self.n >= 2 {
                    (self.m2 / (self.n as f64 - 1.0)).max(0.0).sqrt()
                } else {
                    0.0
                }
            }
            Weighting::Length => {
                if self.w_sum > 0.0 {
                    (self.m2 / self.w_sum).max(0.0).sqrt()
                } else {
                    0.0
                }
            }
        };
        MeanStd { mean: self.mean, std }
    }
}

#[derive(Debug, Clone, Default)]
struct CellAcc {
    n: usize,
    chrf: Acc,
    idc: Acc,
    dnd: Acc,
    comp: Acc,
}

/// Streams rows into per-(setting, language) aggregates.
#[derive(Debug, Default)]
pub struct AggBuilder {
    weighting: Weighting,
    cells: BTreeMap<(String, String), CellAcc>,
}

impl AggBuilder {
    pub fn new(weighting: Weighting) -> Self {
        AggBuilder { weighting, cells: BTreeMap::new() }
    }

    pub fn push(&mut self, row: &SweepRow) {
        let w = match self.weighting {
            Weighting::Macro => 1.0,
            Weighting::Length => row.units as f64,
        };
        let cell = self
            .cells
            .entry((row.setting_id.clone(), row.language.clone()))
            .or_default();
        cell.n += 1;
        cell.chrf.push(row.chrf, w);
        cell.idc.push(row.idc, w);
        cell.dnd.push(row.dnd, w);
        if let Some(c) = row.comp {
            cell.comp.push(c, w);
        }
    }

    pub fn finish(self) -> Vec<SweepAggregate> {
        self.cells
            .into_iter()
            .map(|((setting_id, language), cell)| SweepAggregate {
                setting_id,
                language,
                n: cell.n,
                chrf: cell.chrf.finish(self.weighting),
                idc: cell.idc.finish(self.weighting),
                dnd: cell.dnd.finish(self.weighting),
                comp: (cell.comp.n > 0).then(|| cell.comp.finish(self.weighting)),
            })
            .collect()
    }
}

/// All measurements for one record: every setting crossed with every seed
/// index, rows in (setting, seed) order. `record_index` is the record's
/// 0-based position in the corpus; it feeds seed derivation, so reordering a
/// corpus changes the draws (though not any conclusion downstream).
pub fn sweep_record(
    record: &CorpusRecord,
    record_index: u64,
    specs: &[PerturbationSpec],
    tokenizers: &Tokenizers,
    policy: &SeedPolicy,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    let char_seq = tokenizers.character.tokenize(&record.text);
    let sub_seq = tokenizers.subword.tokenize(&record.text);
    let comp = compression_rate(
        &record.text,
        &sub_seq,
        tokenizers.subword.special_token_count(),
    );
    let units = unit_count(&record.text, tokenizers.character.unit());

    let mut rows = Vec::with_capacity(specs.len() * opts.n_seeds as usize);
    for spec in specs {
        let seq = match spec.granularity {
            Granularity::Character => &char_seq,
            Granularity::Subword => &sub_seq,
        };
        for seed_index in 0..opts.n_seeds {
            let seed = policy.derive(record_index, &spec.setting_id, seed_index);
            let result = apply_spec(spec, seq, seed)?;
            rows.push(SweepRow {
                record_id: record.record_id.clone(),
                language: record.language.clone(),
                task: record.task.clone(),
                setting_id: spec.setting_id.clone(),
                seed_index,
                seed,
                units,
                chrf: chrf(&record.text, &result.perturbed_text, &opts.chrf),
                idc: idc(result.trace.as_slice()),
                dnd: dnd(result.trace.as_slice()),
                comp,
                perturbed: opts.keep_texts.then(|| result.perturbed_text),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

/// Runs the whole sweep in memory. The CLI streams records one at a time
/// instead; this is the library entry point for tests and embedding.
pub fn run_sweep(
    records: &[CorpusRecord],
    specs: &[PerturbationSpec],
    tokenizers: &Tokenizers,
    policy: &SeedPolicy,
    opts: &SweepOptions,
) -> Result<SweepReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("corpus has no records"));
    }
    if specs.is_empty() {
        return Err(Error::EmptyInput("sweep has no settings"));
    }
    tokenizers.validate()?;
    let mut rows = Vec::new();
    let mut builder = AggBuilder::new(opts.weighting);
    for (i, record) in records.iter().enumerate() {
        let record_rows = sweep_record(record, i as u64, specs, tokenizers, policy, opts)?;
        for row in &record_rows {
            builder.push(row);
        }
        rows.extend(record_rows);
    }
    Ok(SweepReport { rows, aggregates: builder.finish() })
}

pub const AGG_CSV_HEADER: [&str; 11] = [
    "setting_id",
    "language",
    "n",
    "chrf_mean",
    "chrf_std",
    "idc_mean",
    "idc_std",
    "dnd_mean",
    "dnd_std",
    "comp_mean",
    "comp_std",
];

pub fn write_agg_csv<W: Write>(out: W, aggs: &[SweepAggregate]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(AGG_CSV_HEADER)?;
    for a in aggs {
        wtr.write_record([
            a.setting_id.as_str(),
            a.language.as_str(),
            &a.n.to_string(),
            &a.chrf.mean.to_string(),
            &a.chrf.std.to_string(),
            &a.idc.mean.to_string(),
            &a.idc.std.to_string(),
            &a.dnd.mean.to_string(),
            &a.dnd.std.to_string(),
            &a.comp.map(|c| c.mean.to_string()).unwrap_or_default(),
            &a.comp.map(|c| c.std.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<agg csv>", e))?;
    Ok(())
}

pub fn read_agg_csv<R: std::io::Read>(reader: R) -> Result<Vec<SweepAggregate>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = AGG_CSV_HEADER.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Usage(format!(
            "aggregate CSV header mismatch: got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut aggs = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let num = |idx: usize| -> Result<f64> {
            field(idx).parse().map_err(|_| Error::MalformedRecord {
                line: row_no,
                reason: format!("bad number {:?} in column {}", field(idx), AGG_CSV_HEADER[idx]),
            })
        };
        let comp = if field(9).is_empty() {
            None
        } else {
            Some(MeanStd { mean: num(9)?, std: num(10)? })
        };
        aggs.push(SweepAggregate {
            setting_id: field(0).to_string(),
            language: field(1).to_string(),
            n: field(2).parse().map_err(|_| Error::MalformedRecord {
                line: row_no,
                reason: format!("bad count {:?}", field(2)),
            })?,
            chrf: MeanStd { mean: num(3)?, std: num(4)? },
            idc: MeanStd { mean: num(5)?, std: num(6)? },
            dnd: MeanStd { mean: num(7)?, std: num(8)? },
            comp,
        });
    }
    Ok(aggs)
}

pub fn write_rows_jsonl<W: Write>(mut out: W, rows: &[SweepRow]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(|e| Error::io("<rows jsonl>", e))?;
    }
    Ok(())
}

pub fn read_rows_jsonl<R: BufRead>(reader: R) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<rows jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SweepRow = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: format!("bad sweep row: {e}"),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::paper_grid;

    fn tiny_corpus() -> Vec<CorpusRecord> {
        vec![
            CorpusRecord {
                record_id: "a".into(),
                text: "the quick brown fox".into(),
                language: "en".into(),
                task: None,
            },
            CorpusRecord {
                record_id: "b".into(),
                text: "你好吗 好的".into(),
                language: "zh".into(),
                task: Some("xnli".into()),
            },
        ]
    }

    #[test]
    fn sweep_produces_expected_row_count() {
        let specs = paper_grid();
        let report = run_sweep(
            &tiny_corpus(),
            &specs,
            &Tokenizers::default(),
            &SeedPolicy::new(7),
            &SweepOptions { n_seeds: 2, ..Default::default() },
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2 * 43 * 2);
        // One aggregate per (setting, language).
        assert_eq!(report.aggregates.len(), 43 * 2);
        for agg in &report.aggregates {
            assert_eq!(agg.n, 2);
        }
    }

    #[test]
    fn benchmark_rows_score_perfect() {
        let specs = vec![PerturbationSpec::new(
            crate::perturb::PerturbKind::None,
            Granularity::Character,
            None,
        )
        .unwrap()];
        let report = run_sweep(
            &tiny_corpus(),
            &specs,
            &Tokenizers::default(),
            &SeedPolicy::new(7),
            &SweepOptions::default(),
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.chrf, 100.0);
            assert_eq!(row.idc, 0.0);
            assert_eq!(row.dnd, 0.0);
        }
        for agg in &report.aggregates {
            assert_eq!(agg.chrf.mean, 100.0);
            assert_eq!(agg.chrf.std, 0.0);
        }
    }

    #[test]
    fn aggregate_means_stay_within_member_range() {
        let specs = paper_grid();
        let report = run_sweep(
            &tiny_corpus(),
            &specs,
            &Tokenizers::default(),
            &SeedPolicy::new(3),
            &SweepOptions { n_seeds: 3, ..Default::default() },
        )
        .unwrap();
        for agg in &report.aggregates {
            let members: Vec<&SweepRow> = report
                .rows
                .iter()
                .filter(|r| r.setting_id == agg.setting_id && r.language == agg.language)
                .collect();
            let lo = members.iter().map(|r| r.chrf).fold(f64::INFINITY, f64::min);
            let hi = members.iter().map(|r| r.chrf).fold(f64::NEG_INFINITY, f64::max);
            assert!(agg.chrf.mean >= lo - 1e-9 && agg.chrf.mean <= hi + 1e-9);
        }
    }

    #[test]
    fn comp_is_identical_across_settings_for_a_record() {
        let specs = paper_grid();
        let report = run_sweep(
            &tiny_corpus(),
            &specs,
            &Tokenizers::default(),
            &SeedPolicy::new(3),
            &SweepOptions { n_seeds: 1, ..Default::default() },
        )
        .unwrap();
        let comp_a: Vec<Option<f64>> = report
            .rows
            .iter()
            .filter(|r| r.record_id == "a")
            .map(|r| r.comp)
            .collect();
        assert!(comp_a.windows(2).all(|w| w[0] == w[1]));
        assert!(comp_a[0].is_some());
    }

    #[test]
    fn length_weighting_changes_the_mean() {
        let rows = [
            SweepRow {
                record_id: "a".into(),
                language: "en".into(),
                task: None,
                setting_id: "s".into(),
                seed_index: 0,
                seed: 0,
                units: 10,
                chrf: 100.0,
                idc: 0.0,
                dnd: 0.0,
                comp: None,
                perturbed: None,
            },
            SweepRow {
                record_id: "b".into(),
                language: "en".into(),
                task: None,
                setting_id: "s".into(),
                seed_index: 0,
                seed: 0,
                units: 30,
                chrf: 50.0,
                idc: 0.0,
                dnd: 0.0,
                comp: None,
                perturbed: None,
            },
        ];
        let mut macro_b = AggBuilder::new(Weighting::Macro);
        let mut len_b = AggBuilder::new(Weighting::Length);
        for r in &rows {
            macro_b.push(r);
            len_b.push(r);
        }
        let m = &macro_b.finish()[0];
        let l = &len_b.finish()[0];
        assert!((m.chrf.mean - 75.0).abs() < 1e-12);
        assert!((l.chrf.mean - 62.5).abs() < 1e-12, "got {}", l.chrf.mean);
    }

    #[test]
    fn agg_csv_round_trips() {
        let specs = paper_grid();
        let report = run_sweep(
            &tiny_corpus(),
            &specs[..5],
            &Tokenizers::default(),
            &SeedPolicy::new(3),
            &SweepOptions { n_seeds: 2, ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_agg_csv(&mut buf, &report.aggregates).unwrap();
        let back = read_agg_csv(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back.len(), report.aggregates.len());
        for (a, b) in back.iter().zip(&report.aggregates) {
            assert_eq!(a.setting_id, b.setting_id);
            assert_eq!(a.n, b.n);
            assert_eq!(a.chrf.mean, b.chrf.mean);
            assert_eq!(a.comp.map(|c| c.mean), b.comp.map(|c| c.mean));
        }
    }

    #[test]
    fn rows_jsonl_round_trips() {
        let specs = paper_grid();
        let report = run_sweep(
            &tiny_corpus(),
            &specs[..3],
            &Tokenizers::default(),
            &SeedPolicy::new(3),
            &SweepOptions { n_seeds: 1, keep_texts: true, ..Default::default() },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_rows_jsonl(&mut buf, &report.rows).unwrap();
        let back = read_rows_jsonl(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, report.rows);
    }
}
