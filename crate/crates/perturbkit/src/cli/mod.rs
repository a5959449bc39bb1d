//! Command-line front end. Every subcommand reads ordinary files, writes
//! ordinary files (or stdout), and derives all randomness from one global
//! seed, so reruns with the same inputs reproduce outputs byte for byte.

mod config;
mod manifest;

pub use config::Config;
pub use manifest::{sha256_hex, RunManifest, SweepStamp};

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlate, heatmap_svg, ingest_scores_path, language_scripts, read_agg_csv, read_corpus,
    read_rows_jsonl, scatter_points, scatter_svg, sniff_format, write_agg_csv, AggBuilder, Corpus,
    CorpusFormat, CorpusOptions, CorrMethod, Grouping, LangMeta, Observation, SweepOptions,
    Tokenizers, Weighting,
};
use crate::error::{Error, Result};
use crate::metrics::{chrf, compression_rate, dnd, idc, ChrfConfig};
use crate::perturb::{
    apply_spec, neighbor_flip_strict, parse_sweep_json, sweep_by_name, PerturbKind,
    PerturbationSpec, PAPER_SWEEP,
};
use crate::rng::SeedPolicy;
use crate::text::{decode_utf8, CharUnit, Granularity};
use crate::tokenize::{Tokenizer, Vocabulary};

#[derive(Parser)]
#[command(
    name = "perturbkit",
    version,
    about = "Order perturbations, structure metrics, and score correlation for text corpora"
)]
struct Cli {
    /// Seed every derived random stream starts from.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// key=value file supplying defaults for common flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one perturbation to every record of a corpus.
    Perturb(PerturbArgs),
    /// Score perturbed records against their originals.
    Measure(MeasureArgs),
    /// Run a perturbation grid over a corpus and aggregate the metrics.
    Sweep(SweepArgs),
    /// Rank-correlate sweep metrics with external task scores.
    Correlate(CorrelateArgs),
    /// Correlate and render SVG figures.
    Report(ReportArgs),
    /// Print a sweep grid as JSON.
    Settings(SettingsArgs),
}

#[derive(Args)]
struct PerturbArgs {
    /// Corpus: JSONL records with id/text/lang, or one text per line.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Output path; "-" writes to stdout. Format mirrors the input.
    #[arg(long, default_value = "-", value_name = "PATH")]
    output: String,
    /// Corpus format: auto, jsonl, or plain.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Language label for plain-text records.
    #[arg(long)]
    lang: Option<String>,
    /// Operator: none, full_shuffle, neighbor_flip, or phrase_shuffle.
    #[arg(long)]
    kind: PerturbKind,
    /// Unit stream to reorder: character or subword.
    #[arg(long)]
    granularity: Option<Granularity>,
    /// Operator intensity in [0, 1]. For neighbor_flip this is the release
    /// probability (1.0 leaves text intact); for phrase_shuffle the phrase
    /// boundary probability (0.0 leaves text intact).
    #[arg(long)]
    rho: Option<f64>,
    /// Convenience for neighbor_flip: probability of displacing each token,
    /// i.e. rho = 1 - flip_prob.
    #[arg(long, conflicts_with = "rho")]
    flip_prob: Option<f64>,
    /// neighbor_flip variant that walks pairs and can only swap disjoint
    /// neighbors.
    #[arg(long)]
    strict: bool,
    /// Subword tokenizer: whitespace or vocab.
    #[arg(long)]
    tokenizer: Option<String>,
    /// Vocabulary file for the vocab tokenizer.
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    /// Override the vocabulary's special-token count.
    #[arg(long)]
    specials: Option<usize>,
    /// Character unit: grapheme or codepoint.
    #[arg(long)]
    char_unit: Option<CharUnit>,
    /// Also write one unit-index trace per record to this JSONL file.
    #[arg(long, value_name = "PATH")]
    emit_trace: Option<PathBuf>,
    /// Override the derived setting id.
    #[arg(long)]
    setting_id: Option<String>,
}

#[derive(Args)]
struct MeasureArgs {
    /// Original corpus.
    #[arg(long, value_name = "PATH")]
    original: PathBuf,
    /// Perturbed corpus, aligned with the original record for record.
    #[arg(long, value_name = "PATH")]
    perturbed: PathBuf,
    /// Trace file from `perturb --emit-trace`; enables idc and dnd.
    #[arg(long, value_name = "PATH")]
    traces: Option<PathBuf>,
    /// Output path; "-" writes to stdout.
    #[arg(long, default_value = "-", value_name = "PATH")]
    out: String,
    /// Output format: csv or jsonl.
    #[arg(long)]
    format: Option<String>,
    /// Corpus format of the two inputs: auto, jsonl, or plain.
    #[arg(long)]
    corpus_format: Option<CorpusFormat>,
    /// Language label for plain-text records.
    #[arg(long)]
    lang: Option<String>,
    /// Setting id to stamp on rows when no trace file is given.
    #[arg(long)]
    setting_id: Option<String>,
    /// Tokenizer for the compression column: chars, whitespace, or vocab.
    /// Without it the comp column stays empty.
    #[arg(long)]
    tokenizer: Option<String>,
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long)]
    specials: Option<usize>,
    /// Character unit: grapheme or codepoint.
    #[arg(long)]
    char_unit: Option<CharUnit>,
    /// chrF: largest n-gram order.
    #[arg(long)]
    max_n: Option<usize>,
    /// chrF: score with bigrams only.
    #[arg(long)]
    bigram_only: bool,
    /// chrF: recall weight beta.
    #[arg(long)]
    beta: Option<f64>,
    /// chrF: drop whitespace units before n-gram extraction.
    #[arg(long)]
    no_whitespace: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Corpus to sweep over.
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Corpus format: auto, jsonl, or plain.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Language label for plain-text records.
    #[arg(long)]
    lang: Option<String>,
    /// Grid name or path to a JSON settings file.
    #[arg(long)]
    sweep: Option<String>,
    /// Perturbation repeats per (record, setting).
    #[arg(long)]
    seeds: Option<u64>,
    /// Directory for sweep.jsonl, sweep_agg.csv, and manifest.json.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Carry the perturbed text on every row (large).
    #[arg(long)]
    keep_texts: bool,
    /// Aggregate weighting: macro or length.
    #[arg(long)]
    weighting: Option<Weighting>,
    /// Vocabulary file; switches the subword tokenizer from whitespace to
    /// greedy vocab matching.
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
    #[arg(long)]
    specials: Option<usize>,
    /// Character unit: grapheme or codepoint.
    #[arg(long)]
    char_unit: Option<CharUnit>,
    /// chrF: largest n-gram order.
    #[arg(long)]
    max_n: Option<usize>,
    /// chrF: score with bigrams only.
    #[arg(long)]
    bigram_only: bool,
    /// chrF: recall weight beta.
    #[arg(long)]
    beta: Option<f64>,
    /// chrF: drop whitespace units before n-gram extraction.
    #[arg(long)]
    no_whitespace: bool,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Directory a sweep run wrote into.
    #[arg(long, value_name = "DIR")]
    sweep_dir: PathBuf,
    /// Correlate per (record, seed) row instead of per aggregate cell.
    #[arg(long)]
    per_record: bool,
    /// Task scores CSV: model,task,language,setting_id,metric,score.
    #[arg(long, value_name = "PATH")]
    scores: PathBuf,
    /// Grouping: model, task, script, or family.
    #[arg(long)]
    grouping: Option<Grouping>,
    /// Language metadata CSV: lang,family,script_override.
    #[arg(long, value_name = "PATH")]
    lang_meta: Option<PathBuf>,
    /// Corpus for per-language script detection (script grouping).
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Corpus format: auto, jsonl, or plain.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Language label for plain-text records.
    #[arg(long)]
    lang: Option<String>,
    /// Correlation method: spearman or kendall.
    #[arg(long)]
    method: Option<CorrMethod>,
    /// Write correlations_<grouping>.{csv,json} and manifest.json here
    /// instead of printing CSV to stdout.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory a sweep run wrote into.
    #[arg(long, value_name = "DIR")]
    sweep_dir: PathBuf,
    /// Task scores CSV: model,task,language,setting_id,metric,score.
    #[arg(long, value_name = "PATH")]
    scores: PathBuf,
    /// Grouping: model, task, script, or family.
    #[arg(long)]
    grouping: Option<Grouping>,
    /// Language metadata CSV: lang,family,script_override.
    #[arg(long, value_name = "PATH")]
    lang_meta: Option<PathBuf>,
    /// Corpus for per-language script detection (script grouping).
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Corpus format: auto, jsonl, or plain.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Language label for plain-text records.
    #[arg(long)]
    lang: Option<String>,
    /// Correlation method: spearman or kendall.
    #[arg(long)]
    method: Option<CorrMethod>,
    /// Directory for correlations, figures/, and manifest.json.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SettingsArgs {
    /// Grid name or path to a JSON settings file.
    #[arg(long)]
    sweep: Option<String>,
}

/// Entry point for the binary. Exit codes: 0 success, 1 usage, 2 data,
/// 3 I/O.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Globals {
    seed: u64,
    config: Config,
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => config.get::<u64>("seed")?.unwrap_or(0),
    };
    let globals = Globals { seed, config };
    match cli.command {
        Command::Perturb(args) => cmd_perturb(&globals, args),
        Command::Measure(args) => cmd_measure(&globals, args),
        Command::Sweep(args) => cmd_sweep(&globals, args),
        Command::Correlate(args) => cmd_correlate(&globals, args),
        Command::Report(args) => cmd_report(&globals, args),
        Command::Settings(args) => cmd_settings(&globals, args),
    }
}

/// `or` chain for an optional flag: command line, then config, then default.
fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    config: &Config,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(config.get::<T>(key)?.unwrap_or(default)),
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(std::io::stdout())))
    } else {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Reads a corpus and reports the format actually used, so output can
/// mirror it.
fn read_corpus_cli(
    path: &Path,
    format: Option<CorpusFormat>,
    lang: Option<&str>,
    config: &Config,
) -> Result<(Corpus, CorpusFormat)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let text = decode_utf8(&bytes)?;
    let format = match resolve(format, config, "format", CorpusFormat::Auto)? {
        CorpusFormat::Auto => sniff_format(text.lines()),
        f => f,
    };
    let default_language = match lang {
        Some(l) => l.to_string(),
        None => config.get::<String>("lang")?.unwrap_or_else(|| "und".into()),
    };
    let opts = CorpusOptions { format, default_language };
    let corpus = read_corpus(std::io::Cursor::new(text.as_bytes()), &opts)?;
    for note in &corpus.skipped {
        eprintln!("note: skipped {note}");
    }
    Ok((corpus, format))
}

/// Resolves a grid name or JSON file path to its settings. Built-in names
/// cannot be shadowed by files.
fn resolve_specs(sweep: &str) -> Result<(Vec<PerturbationSpec>, Option<PathBuf>)> {
    match sweep_by_name(sweep) {
        Ok(specs) => Ok((specs, None)),
        Err(Error::UnknownSweep(name)) => {
            let path = Path::new(sweep);
            if path.exists() {
                let bytes =
                    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
                let specs = parse_sweep_json(&decode_utf8(&bytes)?)?;
                Ok((specs, Some(path.to_path_buf())))
            } else if sweep.contains('/') || sweep.ends_with(".json") {
                Err(Error::io(
                    sweep,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such sweep file"),
                ))
            } else {
                Err(Error::UnknownSweep(name))
            }
        }
        Err(e) => Err(e),
    }
}

fn build_subword_tokenizer(
    choice: Option<&str>,
    vocab: Option<&Path>,
    specials: Option<usize>,
    unit: CharUnit,
) -> Result<Tokenizer> {
    let kind = match choice {
        Some(k) => k,
        None if vocab.is_some() => "vocab",
        None => "whitespace",
    };
    let mut tok = match kind {
        "whitespace" => Tokenizer::whitespace(),
        "vocab" => {
            let path = vocab
                .ok_or_else(|| Error::Usage("the vocab tokenizer requires --vocab PATH".into()))?;
            Tokenizer::vocab(Vocabulary::from_file(path)?)
        }
        other => return Err(Error::Usage(format!("unknown subword tokenizer {other:?}"))),
    };
    tok = tok.with_unit(unit);
    if let Some(n) = specials {
        tok = tok.with_special_tokens(n);
    }
    Ok(tok)
}

fn build_tokenizer(
    granularity: Granularity,
    choice: Option<&str>,
    vocab: Option<&Path>,
    specials: Option<usize>,
    unit: CharUnit,
) -> Result<Tokenizer> {
    match granularity {
        Granularity::Character => {
            if let Some(c) = choice {
                if c != "chars" && c != "characters" {
                    return Err(Error::Usage(format!(
                        "character granularity always splits into characters; --tokenizer {c} \
                         does not apply"
                    )));
                }
            }
            let mut tok = Tokenizer::characters().with_unit(unit);
            if let Some(n) = specials {
                tok = tok.with_special_tokens(n);
            }
            Ok(tok)
        }
        Granularity::Subword => build_subword_tokenizer(choice, vocab, specials, unit),
    }
}

/// Sidecar row written by `perturb --emit-trace` and read back by `measure
/// --traces`.
#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    record_id: String,
    setting_id: String,
    seed: u64,
    trace: Vec<usize>,
}

#[derive(Serialize)]
struct JsonlRecordOut<'a> {
    id: &'a str,
    text: &'a str,
    lang: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<&'a str>,
}

fn cmd_perturb(globals: &Globals, args: PerturbArgs) -> Result<()> {
    let (corpus, format) =
        read_corpus_cli(&args.input, args.format, args.lang.as_deref(), &globals.config)?;
    if corpus.records.is_empty() {
        return Err(Error::EmptyInput("corpus has no records"));
    }

    let rho = match (args.rho, args.flip_prob) {
        (Some(r), _) => Some(r),
        (None, Some(fp)) => {
            if args.kind != PerturbKind::NeighborFlip {
                return Err(Error::Usage("--flip-prob only applies to neighbor_flip".into()));
            }
            if !(0.0..=1.0).contains(&fp) {
                return Err(Error::InvalidRho(fp));
            }
            Some(1.0 - fp)
        }
        (None, None) => None,
    };
    let granularity = args.granularity.unwrap_or(Granularity::Character);
    let mut spec = PerturbationSpec::new(args.kind, granularity, rho)?;
    if args.strict {
        if args.kind != PerturbKind::NeighborFlip {
            return Err(Error::Usage("--strict only applies to neighbor_flip".into()));
        }
        let id = format!("{}_strict", spec.setting_id);
        spec = spec.with_setting_id(id);
    }
    if let Some(id) = args.setting_id {
        spec = spec.with_setting_id(id);
    }
    spec.validate()?;

    let unit = args.char_unit.unwrap_or_default();
    let tokenizer = build_tokenizer(
        granularity,
        args.tokenizer.as_deref(),
        args.vocab.as_deref(),
        args.specials,
        unit,
    )?;

    let policy = SeedPolicy::new(globals.seed);
    let mut out = open_output(&args.output)?;
    let mut trace_out = match &args.emit_trace {
        Some(path) => Some(BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
        )),
        None => None,
    };

    for (i, record) in corpus.records.iter().enumerate() {
        let seed = policy.derive(i as u64, &spec.setting_id, 0);
        let seq = tokenizer.tokenize(&record.text);
        let result = if args.strict {
            if seq.granularity != spec.granularity {
                return Err(Error::InvalidSpec(format!(
                    "tokenizer produces {} units but the spec wants {}",
                    seq.granularity, spec.granularity
                )));
            }
            let mut r = neighbor_flip_strict(&seq, rho.expect("strict spec carries rho"), seed);
            r.spec = spec.clone();
            r
        } else {
            apply_spec(&spec, &seq, seed)?
        };

        match format {
            CorpusFormat::Jsonl => {
                let row = JsonlRecordOut {
                    id: &record.record_id,
                    text: &result.perturbed_text,
                    lang: &record.language,
                    task: record.task.as_deref(),
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n").map_err(|e| Error::io(&args.output, e))?;
            }
            _ => {
                writeln!(out, "{}", result.perturbed_text)
                    .map_err(|e| Error::io(&args.output, e))?;
            }
        }

        if let Some(tw) = &mut trace_out {
            let row = TraceRow {
                record_id: record.record_id.clone(),
                setting_id: spec.setting_id.clone(),
                seed,
                trace: result.trace.0,
            };
            serde_json::to_writer(&mut *tw, &row)?;
            tw.write_all(b"\n").map_err(|e| Error::io("<trace output>", e))?;
        }
    }

    out.flush().map_err(|e| Error::io(&args.output, e))?;
    if let Some(mut tw) = trace_out {
        tw.flush().map_err(|e| Error::io("<trace output>", e))?;
    }
    Ok(())
}

/// Metric row shape for `measure`. idc and dnd need a trace; without one
/// they stay null rather than being guessed from the texts.
#[derive(Serialize)]
struct MeasureRow {
    record_id: String,
    setting_id: String,
    chrf: f64,
    idc: Option<f64>,
    dnd: Option<f64>,
    comp: Option<f64>,
}

fn read_traces(path: &Path) -> Result<Vec<TraceRow>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let text = decode_utf8(&bytes)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceRow = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            reason: format!("bad trace row: {e}"),
        })?;
        if !crate::text::CharIndexTrace(row.trace.clone()).is_permutation() {
            return Err(Error::MalformedRecord {
                line: i + 1,
                reason: "trace is not a permutation".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_measure(globals: &Globals, args: MeasureArgs) -> Result<()> {
    let (original, _) =
        read_corpus_cli(&args.original, args.corpus_format, args.lang.as_deref(), &globals.config)?;
    let (perturbed, _) = read_corpus_cli(
        &args.perturbed,
        args.corpus_format,
        args.lang.as_deref(),
        &globals.config,
    )?;
    if original.records.len() != perturbed.records.len() {
        return Err(Error::RecordCountMismatch {
            left: original.records.len(),
            right: perturbed.records.len(),
        });
    }

    let traces = match &args.traces {
        Some(path) => {
            let rows = read_traces(path)?;
            if rows.len() != original.records.len() {
                return Err(Error::RecordCountMismatch {
                    left: original.records.len(),
                    right: rows.len(),
                });
            }
            Some(rows)
        }
        None => None,
    };

    let unit = args.char_unit.unwrap_or_default();
    let mut cfg = if args.bigram_only { ChrfConfig::bigram_only() } else { ChrfConfig::default() };
    if let Some(n) = args.max_n {
        cfg.max_n = n;
    }
    if let Some(b) = args.beta {
        cfg.beta = b;
    }
    cfg.whitespace_included = !args.no_whitespace;
    cfg.unit = unit;
    if cfg.min_n > cfg.max_n || cfg.min_n == 0 {
        return Err(Error::Usage(format!("bad n-gram order range {}..{}", cfg.min_n, cfg.max_n)));
    }

    let comp_tokenizer = match args.tokenizer.as_deref() {
        None => None,
        Some("chars") | Some("characters") => {
            let mut t = Tokenizer::characters().with_unit(unit);
            if let Some(n) = args.specials {
                t = t.with_special_tokens(n);
            }
            Some(t)
        }
        choice => {
            Some(build_subword_tokenizer(choice, args.vocab.as_deref(), args.specials, unit)?)
        }
    };

    let fallback_setting = args.setting_id.as_deref().unwrap_or("external");
    let mut rows = Vec::with_capacity(original.records.len());
    for (i, (orig, pert)) in original.records.iter().zip(&perturbed.records).enumerate() {
        if orig.record_id != pert.record_id {
            return Err(Error::MalformedRecord {
                line: i + 1,
                reason: format!(
                    "record ids diverge: {:?} vs {:?} (inputs must align)",
                    orig.record_id, pert.record_id
                ),
            });
        }
        let trace = traces.as_ref().map(|t| &t[i]);
        if let Some(t) = trace {
            if t.record_id != orig.record_id {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    reason: format!(
                        "trace record id {:?} does not match corpus record {:?}",
                        t.record_id, orig.record_id
                    ),
                });
            }
        }
        let comp = comp_tokenizer
            .as_ref()
            .and_then(|t| compression_rate(&orig.text, &t.tokenize(&orig.text), t.special_token_count()));
        rows.push(MeasureRow {
            record_id: orig.record_id.clone(),
            setting_id: trace.map_or(fallback_setting, |t| t.setting_id.as_str()).to_string(),
            chrf: chrf(&orig.text, &pert.text, &cfg),
            idc: trace.map(|t| idc(&t.trace)),
            dnd: trace.map(|t| dnd(&t.trace)),
            comp,
        });
    }

    let format = match args.format.as_deref() {
        None => globals.config.get::<String>("format")?.unwrap_or_else(|| "csv".into()),
        Some(f) => f.to_string(),
    };
    let mut out = open_output(&args.out)?;
    match format.as_str() {
        "csv" => {
            let mut wtr = csv::Writer::from_writer(&mut out);
            wtr.write_record(["record_id", "setting_id", "chrf", "idc", "dnd", "comp"])?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in &rows {
                wtr.write_record([
                    r.record_id.as_str(),
                    r.setting_id.as_str(),
                    &r.chrf.to_string(),
                    &opt(r.idc),
                    &opt(r.dnd),
                    &opt(r.comp),
                ])?;
            }
            wtr.flush().map_err(|e| Error::io(&args.out, e))?;
        }
        "jsonl" => {
            for r in &rows {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n").map_err(|e| Error::io(&args.out, e))?;
            }
        }
        other => return Err(Error::Usage(format!("unknown output format {other:?}"))),
    }
    out.flush().map_err(|e| Error::io(&args.out, e))
}

fn cmd_sweep(globals: &Globals, args: SweepArgs) -> Result<()> {
    let (corpus, _) =
        read_corpus_cli(&args.corpus, args.format, args.lang.as_deref(), &globals.config)?;
    if corpus.records.is_empty() {
        return Err(Error::EmptyInput("corpus has no records"));
    }

    let sweep_name = match &args.sweep {
        Some(s) => s.clone(),
        None => globals.config.get::<String>("sweep")?.unwrap_or_else(|| PAPER_SWEEP.into()),
    };
    let (specs, sweep_file) = resolve_specs(&sweep_name)?;

    let unit = args.char_unit.unwrap_or_default();
    let tokenizers = Tokenizers {
        character: Tokenizer::characters().with_unit(unit),
        subword: build_subword_tokenizer(None, args.vocab.as_deref(), args.specials, unit)?,
    };

    let mut chrf_cfg =
        if args.bigram_only { ChrfConfig::bigram_only() } else { ChrfConfig::default() };
    if let Some(n) = args.max_n {
        chrf_cfg.max_n = n;
    }
    if let Some(b) = args.beta {
        chrf_cfg.beta = b;
    }
    chrf_cfg.whitespace_included = !args.no_whitespace;
    chrf_cfg.unit = unit;
    if chrf_cfg.min_n > chrf_cfg.max_n || chrf_cfg.min_n == 0 {
        return Err(Error::Usage(format!(
            "bad n-gram order range {}..{}",
            chrf_cfg.min_n, chrf_cfg.max_n
        )));
    }

    let opts = SweepOptions {
        n_seeds: resolve(args.seeds, &globals.config, "seeds", 5)?,
        keep_texts: args.keep_texts,
        chrf: chrf_cfg,
        weighting: resolve(args.weighting, &globals.config, "weighting", Weighting::Macro)?,
    };
    if opts.n_seeds == 0 {
        return Err(Error::Usage("--seeds must be at least 1".into()));
    }

    create_dir(&args.out_dir)?;
    let rows_path = args.out_dir.join("sweep.jsonl");
    let mut rows_out = BufWriter::new(
        std::fs::File::create(&rows_path)
            .map_err(|e| Error::io(rows_path.display().to_string(), e))?,
    );

    let policy = SeedPolicy::new(globals.seed);
    let mut agg = AggBuilder::new(opts.weighting);
    let mut row_count = 0u64;
    for (i, record) in corpus.records.iter().enumerate() {
        let rows = crate::analysis::sweep_record(record, i as u64, &specs, &tokenizers, &policy, &opts)?;
        for row in &rows {
            agg.push(row);
            serde_json::to_writer(&mut rows_out, row)?;
            rows_out.write_all(b"\n").map_err(|e| Error::io(rows_path.display().to_string(), e))?;
        }
        row_count += rows.len() as u64;
    }
    rows_out.flush().map_err(|e| Error::io(rows_path.display().to_string(), e))?;

    let aggregates = agg.finish();
    let agg_path = args.out_dir.join("sweep_agg.csv");
    let agg_file = std::fs::File::create(&agg_path)
        .map_err(|e| Error::io(agg_path.display().to_string(), e))?;
    write_agg_csv(BufWriter::new(agg_file), &aggregates)?;

    let mut manifest = RunManifest::new(globals.seed);
    manifest.stamp_sweep(&sweep_name, &specs);
    manifest.hash_input(&args.corpus)?;
    if let Some(path) = &args.vocab {
        manifest.hash_input(path)?;
    }
    if let Some(path) = &sweep_file {
        manifest.hash_input(path)?;
    }
    manifest.write(&args.out_dir.join("manifest.json"))?;

    eprintln!(
        "swept {} records x {} settings x {} seeds: {} rows, {} aggregate cells",
        corpus.records.len(),
        specs.len(),
        opts.n_seeds,
        row_count,
        aggregates.len()
    );
    Ok(())
}

/// Shared tail of `correlate` and `report`.
struct CorrelationRun {
    matrix: crate::analysis::CorrelationMatrix,
    aggregates: Vec<crate::analysis::SweepAggregate>,
    scores: crate::analysis::ScoreTable,
    grouping: Grouping,
}

#[allow(clippy::too_many_arguments)]
fn run_correlation(
    globals: &Globals,
    sweep_dir: &Path,
    per_record: bool,
    scores_path: &Path,
    grouping: Option<Grouping>,
    lang_meta: Option<&Path>,
    corpus: Option<&Path>,
    corpus_format: Option<CorpusFormat>,
    lang: Option<&str>,
    method: Option<CorrMethod>,
) -> Result<CorrelationRun> {
    let agg_path = sweep_dir.join("sweep_agg.csv");
    let agg_file = std::fs::File::open(&agg_path)
        .map_err(|e| Error::io(agg_path.display().to_string(), e))?;
    let aggregates = read_agg_csv(std::io::BufReader::new(agg_file))?;

    let observations = if per_record {
        let rows_path = sweep_dir.join("sweep.jsonl");
        let rows_file = std::fs::File::open(&rows_path)
            .map_err(|e| Error::io(rows_path.display().to_string(), e))?;
        let rows = read_rows_jsonl(std::io::BufReader::new(rows_file))?;
        Observation::from_rows(&rows)
    } else {
        Observation::from_aggregates(&aggregates)
    };

    let scores = ingest_scores_path(scores_path)?;
    let meta = match lang_meta {
        Some(path) => LangMeta::ingest_path(path)?,
        None => LangMeta::default(),
    };
    let grouping = resolve(grouping, &globals.config, "grouping", Grouping::Model)?;
    let method = resolve(method, &globals.config, "method", CorrMethod::Spearman)?;

    let detected = match corpus {
        Some(path) => {
            let (corpus, _) = read_corpus_cli(path, corpus_format, lang, &globals.config)?;
            language_scripts(&corpus.records)
        }
        None => BTreeMap::new(),
    };
    if grouping == Grouping::Script && corpus.is_none() && meta.script_override.is_empty() {
        return Err(Error::Usage(
            "script grouping needs --corpus for detection or script overrides in --lang-meta"
                .into(),
        ));
    }

    let matrix = correlate(&observations, &scores, grouping, &meta, &detected, method)?;
    for d in &matrix.diagnostics {
        eprintln!("note: {d}");
    }
    Ok(CorrelationRun { matrix, aggregates, scores, grouping })
}

fn correlation_manifest(
    globals: &Globals,
    scores: &Path,
    lang_meta: Option<&Path>,
    corpus: Option<&Path>,
) -> Result<RunManifest> {
    let mut manifest = RunManifest::new(globals.seed);
    manifest.hash_input(scores)?;
    if let Some(path) = lang_meta {
        manifest.hash_input(path)?;
    }
    if let Some(path) = corpus {
        manifest.hash_input(path)?;
    }
    Ok(manifest)
}

fn cmd_correlate(globals: &Globals, args: CorrelateArgs) -> Result<()> {
    let run = run_correlation(
        globals,
        &args.sweep_dir,
        args.per_record,
        &args.scores,
        args.grouping,
        args.lang_meta.as_deref(),
        args.corpus.as_deref(),
        args.format,
        args.lang.as_deref(),
        args.method,
    )?;

    match &args.out_dir {
        None => {
            print!("{}", run.matrix.to_csv_string());
            Ok(())
        }
        Some(dir) => {
            create_dir(dir)?;
            let stem = format!("correlations_{}", run.grouping.as_str());
            write_file(&dir.join(format!("{stem}.csv")), &run.matrix.to_csv_string())?;
            write_file(&dir.join(format!("{stem}.json")), &run.matrix.to_json_string())?;
            let manifest = correlation_manifest(
                globals,
                &args.scores,
                args.lang_meta.as_deref(),
                args.corpus.as_deref(),
            )?;
            manifest.write(&dir.join("manifest.json"))
        }
    }
}

fn cmd_report(globals: &Globals, args: ReportArgs) -> Result<()> {
    let run = run_correlation(
        globals,
        &args.sweep_dir,
        false,
        &args.scores,
        args.grouping,
        args.lang_meta.as_deref(),
        args.corpus.as_deref(),
        args.format,
        args.lang.as_deref(),
        args.method,
    )?;

    create_dir(&args.out_dir)?;
    let stem = format!("correlations_{}", run.grouping.as_str());
    write_file(&args.out_dir.join(format!("{stem}.csv")), &run.matrix.to_csv_string())?;
    write_file(&args.out_dir.join(format!("{stem}.json")), &run.matrix.to_json_string())?;

    let figures = args.out_dir.join("figures");
    create_dir(&figures)?;
    for metric in crate::analysis::report::SCATTER_METRICS {
        let points = scatter_points(&run.aggregates, &run.scores, metric);
        if metric == "comp" && points.is_empty() {
            continue;
        }
        // Damage metrics grow as order degrades; flip their axis so intact
        // text sits on the right in every figure.
        let invert = metric == "idc";
        let svg = scatter_svg(metric, "score", invert, &points);
        write_file(&figures.join(format!("scatter_{metric}.svg")), &svg)?;
    }
    let heatmap = heatmap_svg(&run.matrix);
    write_file(&figures.join(format!("heatmap_{}.svg", run.grouping.as_str())), &heatmap)?;

    let manifest = correlation_manifest(
        globals,
        &args.scores,
        args.lang_meta.as_deref(),
        args.corpus.as_deref(),
    )?;
    manifest.write(&args.out_dir.join("manifest.json"))
}

fn cmd_settings(globals: &Globals, args: SettingsArgs) -> Result<()> {
    let sweep_name = match &args.sweep {
        Some(s) => s.clone(),
        None => globals.config.get::<String>("sweep")?.unwrap_or_else(|| PAPER_SWEEP.into()),
    };
    let (specs, _) = resolve_specs(&sweep_name)?;
    let json = serde_json::to_string_pretty(&specs)?;
    println!("{json}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parser_accepts_the_documented_surface() {
        Cli::try_parse_from([
            "perturbkit",
            "--seed",
            "7",
            "perturb",
            "--input",
            "c.jsonl",
            "--kind",
            "neighbor_flip",
            "--flip-prob",
            "0.3",
            "--granularity",
            "subword",
        ])
        .unwrap();
        Cli::try_parse_from(["perturbkit", "sweep", "--corpus", "c.jsonl", "--out-dir", "o"])
            .unwrap();
        Cli::try_parse_from(["perturbkit", "settings"]).unwrap();
        // rho and flip_prob are mutually exclusive.
        assert!(Cli::try_parse_from([
            "perturbkit",
            "perturb",
            "--input",
            "c",
            "--kind",
            "neighbor_flip",
            "--rho",
            "0.5",
            "--flip-prob",
            "0.5",
        ])
        .is_err());
        // Unknown enum values are rejected at parse time.
        assert!(Cli::try_parse_from([
            "perturbkit",
            "perturb",
            "--input",
            "c",
            "--kind",
            "reverse",
        ])
        .is_err());
    }

    #[test]
    fn specificity_of_resolve_chain() {
        let config = Config::parse("seeds = 9\n").unwrap();
        assert_eq!(resolve(Some(3u64), &config, "seeds", 5).unwrap(), 3);
        assert_eq!(resolve(None::<u64>, &config, "seeds", 5).unwrap(), 9);
        assert_eq!(resolve(None::<u64>, &config, "seed", 5).unwrap(), 5);
    }

    #[test]
    fn sweep_resolution_prefers_builtins() {
        let (specs, file) = resolve_specs(PAPER_SWEEP).unwrap();
        assert_eq!(specs.len(), 43);
        assert!(file.is_none());
        assert!(matches!(resolve_specs("nope"), Err(Error::UnknownSweep(_))));
        assert!(matches!(resolve_specs("missing/sweep.json"), Err(Error::Io { .. })));
    }
}
