//! Joining sweep measurements with task scores and computing per-group rank
//! correlations.
//!
//! The join key is (language, setting_id): metric values are aggregated over
//! records and seeds first, then each score row pairs with its cell. Groups
//! come from the score table (model, task) or from language metadata
//! (script, family). The output is independent of corpus record order and of
//! score-table row order: samples are sorted on a canonical key before the
//! correlation is computed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::analysis::scores::ScoreTable;
use crate::analysis::stats::{kendall_tau_b, spearman};
use crate::analysis::{SweepAggregate, SweepRow};
use crate::error::{Error, Result};

pub const METRIC_NAMES: [&str; 4] = ["chrf", "idc", "dnd", "comp"];

/// Minimum distinct languages for a script/family group to be reported.
pub const MIN_GROUP_LANGUAGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Model,
    Task,
    Script,
    Family,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Model => "model",
            Grouping::Task => "task",
            Grouping::Script => "script",
            Grouping::Family => "family",
        }
    }
}

impl std::fmt::Display for Grouping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Grouping::Model),
            "task" => Ok(Grouping::Task),
            "script" => Ok(Grouping::Script),
            "family" => Ok(Grouping::Family),
            other => Err(Error::Usage(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrMethod {
    #[default]
    Spearman,
    Kendall,
}

impl CorrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrMethod::Spearman => "spearman",
            CorrMethod::Kendall => "kendall",
        }
    }

    fn compute(self, xs: &[f64], ys: &[f64]) -> Option<f64> {
        match self {
            CorrMethod::Spearman => spearman(xs, ys),
            CorrMethod::Kendall => kendall_tau_b(xs, ys),
        }
    }
}

impl std::str::FromStr for CorrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spearman" => Ok(CorrMethod::Spearman),
            "kendall" => Ok(CorrMethod::Kendall),
            other => Err(Error::Usage(format!("unknown correlation method {other:?}"))),
        }
    }
}

/// Language metadata: family for family grouping, optional script override
/// that takes precedence over detection. CSV columns:
/// `lang,family,script_override` (empty fields mean absent).
#[derive(Debug, Clone, Default)]
pub struct LangMeta {
    pub family: BTreeMap<String, String>,
    pub script_override: BTreeMap<String, String>,
}

impl LangMeta {
    pub fn ingest<R: Read>(reader: R) -> Result<LangMeta> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["lang", "family", "script_override"];
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Usage(format!("language metadata is missing column {name:?}")))
        };
        let idx_lang = col("lang")?;
        let idx_family = col("family")?;
        let idx_script = col("script_override")?;
        for h in headers.iter() {
            if !expected.contains(&h) {
                return Err(Error::Usage(format!("language metadata has unknown column {h:?}")));
            }
        }
        let mut meta = LangMeta::default();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let lang = record.get(idx_lang).unwrap_or("").trim().to_lowercase();
            if lang.is_empty() {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    reason: "empty lang".into(),
                });
            }
            let family = record.get(idx_family).unwrap_or("").trim();
            if !family.is_empty() {
                meta.family.insert(lang.clone(), family.to_string());
            }
            let script = record.get(idx_script).unwrap_or("").trim();
            if !script.is_empty() {
                meta.script_override.insert(lang.clone(), script.to_string());
            }
        }
        Ok(meta)
    }

    pub fn ingest_path(path: impl AsRef<Path>) -> Result<LangMeta> {
        let path = path.as_ref();
        let file =
            std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        LangMeta::ingest(std::io::BufReader::new(file))
    }
}

/// One joinable measurement: either an aggregate cell (the default) or a
/// single sweep row (per-record mode).
#[derive(Debug, Clone)]
pub struct Observation {
    pub language: String,
    pub setting_id: String,
    /// Disambiguates per-record observations in the canonical sort.
    pub obs_key: String,
    pub chrf: f64,
    pub idc: f64,
    pub dnd: f64,
    pub comp: Option<f64>,
}

impl Observation {
    pub fn from_aggregates(aggs: &[SweepAggregate]) -> Vec<Observation> {
        aggs.iter()
            .map(|a| Observation {
                language: a.language.clone(),
                setting_id: a.setting_id.clone(),
                obs_key: String::new(),
                chrf: a.chrf.mean,
                idc: a.idc.mean,
                dnd: a.dnd.mean,
                comp: a.comp.map(|c| c.mean),
            })
            .collect()
    }

    pub fn from_rows(rows: &[SweepRow]) -> Vec<Observation> {
        rows.iter()
            .map(|r| Observation {
                language: r.language.clone(),
                setting_id: r.setting_id.clone(),
                obs_key: format!("{}#{}", r.record_id, r.seed_index),
                chrf: r.chrf,
                idc: r.idc,
                dnd: r.dnd,
                comp: r.comp,
            })
            .collect()
    }

    fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "chrf" => Some(self.chrf),
            "idc" => Some(self.idc),
            "dnd" => Some(self.dnd),
            "comp" => self.comp,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrCell {
    pub rho: f64,
    pub n: usize,
}

/// Correlation of each metric with task score, per group. Cells are absent
/// when the join is empty, the sample is too small, or a rank is degenerate.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationMatrix {
    pub grouping: String,
    pub method: String,
    pub cells: BTreeMap<String, BTreeMap<String, CorrCell>>,
    /// Join problems worth surfacing (skipped languages, dropped groups).
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

impl CorrelationMatrix {
    pub fn get(&self, group: &str, metric: &str) -> Option<CorrCell> {
        self.cells.get(group).and_then(|m| m.get(metric)).copied()
    }

    /// CSV form: one row per group, one value column per metric, empty cell
    /// when absent.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("group,chrf,idc,dnd,comp\n");
        for (group, metrics) in &self.cells {
            out.push_str(&csv_escape(group));
            for metric in METRIC_NAMES {
                out.push(',');
                if let Some(cell) = metrics.get(metric) {
                    out.push_str(&cell.rho.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serializes")
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Joins observations with scores and computes one correlation per
/// (group, metric).
///
/// `detected_scripts` maps language to its detected majority script; it is
/// only consulted for script grouping when no override exists. Script and
/// family groups spanning fewer than [`MIN_GROUP_LANGUAGES`] languages are
/// dropped (with a diagnostic).
pub fn correlate(
    observations: &[Observation],
    scores: &ScoreTable,
    grouping: Grouping,
    meta: &LangMeta,
    detected_scripts: &BTreeMap<String, String>,
    method: CorrMethod,
) -> Result<CorrelationMatrix> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("no sweep observations"));
    }
    let known_settings: HashSet<&str> =
        observations.iter().map(|o| o.setting_id.as_str()).collect();
    for row in &scores.rows {
        if !known_settings.contains(row.setting_id.as_str()) {
            return Err(Error::UnknownSettingId(row.setting_id.clone()));
        }
    }

    let mut by_key: HashMap<(&str, &str), Vec<&Observation>> = HashMap::new();
    for obs in observations {
        by_key
            .entry((obs.language.as_str(), obs.setting_id.as_str()))
            .or_default()
            .push(obs);
    }

    let mut diagnostics = Vec::new();
    let mut skipped_langs: BTreeSet<String> = BTreeSet::new();
    let mut unmatched_langs: BTreeSet<String> = BTreeSet::new();

    // samples[group][metric] -> (sort_key, metric_value, score)
    type Sample = (String, f64, f64);
    let mut samples: BTreeMap<String, BTreeMap<&'static str, Vec<Sample>>> = BTreeMap::new();
    let mut group_langs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    for row in &scores.rows {
        let group = match grouping {
            Grouping::Model => Some(row.model.clone()),
            Grouping::Task => Some(row.task.clone()),
            Grouping::Script => meta
                .script_override
                .get(&row.language)
                .or_else(|| detected_scripts.get(&row.language))
                .cloned(),
            Grouping::Family => meta.family.get(&row.language).cloned(),
        };
        let Some(group) = group else {
            skipped_langs.insert(row.language.clone());
            continue;
        };
        let Some(matched) = by_key.get(&(row.language.as_str(), row.setting_id.as_str())) else {
            unmatched_langs.insert(format!("{}/{}", row.language, row.setting_id));
            continue;
        };
        for obs in matched {
            let sort_key = format!(
                "{}\u{1f}{}\u{1f}{}\u{1f}{}\u{1f}{}",
                row.model, row.task, row.language, row.setting_id, obs.obs_key
            );
            group_langs.entry(group.clone()).or_default().insert(row.language.clone());
            let group_samples = samples.entry(group.clone()).or_default();
            for metric in METRIC_NAMES {
                if let Some(x) = obs.metric(metric) {
                    group_samples
                        .entry(metric)
                        .or_default()
                        .push((sort_key.clone(), x, row.score));
                }
            }
        }
    }

    for lang in &skipped_langs {
        diagnostics.push(format!(
            "language {lang:?} has no {} assignment; its scores were skipped",
            grouping.as_str()
        ));
    }
    for key in &unmatched_langs {
        diagnostics.push(format!("score key {key} matched no sweep observation"));
    }

    let enforce_min_languages = matches!(grouping, Grouping::Script | Grouping::Family);
    let mut cells: BTreeMap<String, BTreeMap<String, CorrCell>> = BTreeMap::new();
    for (group, metric_samples) in samples {
        if enforce_min_languages {
            let langs = group_langs.get(&group).map_or(0, |s| s.len());
            if langs < MIN_GROUP_LANGUAGES {
                diagnostics.push(format!(
                    "group {group:?} spans only {langs} language(s); dropped"
                ));
                continue;
            }
        }
        let mut row_cells = BTreeMap::new();
        for (metric, mut pairs) in metric_samples {
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let xs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            if let Some(rho) = method.compute(&xs, &ys) {
                row_cells.insert(metric.to_string(), CorrCell { rho, n: xs.len() });
            }
        }
        if !row_cells.is_empty() {
            cells.insert(group, row_cells);
        }
    }

    Ok(CorrelationMatrix {
        grouping: grouping.as_str().to_string(),
        method: method.as_str().to_string(),
        cells,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::scores::ScoreRow;
    use crate::analysis::{MeanStd, SweepAggregate};

    fn agg(setting: &str, lang: &str, chrf: f64, idc: f64) -> SweepAggregate {
        SweepAggregate {
            setting_id: setting.into(),
            language: lang.into(),
            n: 5,
            chrf: MeanStd { mean: chrf, std: 0.0 },
            idc: MeanStd { mean: idc, std: 0.0 },
            dnd: MeanStd { mean: idc / 2.0, std: 0.0 },
            comp: Some(MeanStd { mean: 3.0, std: 0.0 }),
        }
    }

    fn score(model: &str, lang: &str, setting: &str, value: f64) -> ScoreRow {
        ScoreRow {
            model: model.into(),
            task: "t".into(),
            language: lang.into(),
            setting_id: setting.into(),
            metric_name: "acc".into(),
            score: value,
        }
    }

    fn settings() -> Vec<SweepAggregate> {
        let mut aggs = Vec::new();
        for (i, s) in ["benchmark", "s1", "s2", "s3"].iter().enumerate() {
            let damage = i as f64 * 0.1;
            aggs.push(agg(s, "en", 100.0 - 20.0 * i as f64, damage));
            aggs.push(agg(s, "zh", 100.0 - 22.0 * i as f64, damage));
        }
        aggs
    }

    #[test]
    fn perfect_monotone_score_gives_exact_one() {
        let aggs = settings();
        let obs = Observation::from_aggregates(&aggs);
        // Score is exactly chrf/100: same ranking, so rho must be exactly 1.
        let rows: Vec<ScoreRow> = aggs
            .iter()
            .map(|a| score("m", &a.language, &a.setting_id, a.chrf.mean / 100.0))
            .collect();
        let table = ScoreTable { rows };
        let m = correlate(
            &obs,
            &table,
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap();
        let cell = m.get("m", "chrf").unwrap();
        assert_eq!(cell.rho, 1.0);
        assert_eq!(cell.n, 8);
        // Score decreasing in idc: exact -1 via the mirrored-rank fast path
        // is not guaranteed here because of idc ties, but sign must be
        // strongly negative.
        let idc_cell = m.get("m", "idc").unwrap();
        assert!(idc_cell.rho < -0.9, "got {}", idc_cell.rho);
    }

    #[test]
    fn anti_monotone_score_gives_exact_minus_one() {
        let aggs: Vec<SweepAggregate> = (0..6)
            .map(|i| agg(&format!("s{i}"), "en", 100.0 - i as f64 * 10.0, i as f64 * 0.05))
            .collect();
        let obs = Observation::from_aggregates(&aggs);
        let rows: Vec<ScoreRow> =
            aggs.iter().map(|a| score("m", "en", &a.setting_id, 1.0 - a.idc.mean)).collect();
        let m = correlate(
            &obs,
            &ScoreTable { rows },
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap();
        assert_eq!(m.get("m", "idc").unwrap().rho, -1.0);
        assert_eq!(m.get("m", "chrf").unwrap().rho, 1.0);
    }

    #[test]
    fn unknown_setting_in_scores_is_rejected() {
        let aggs = settings();
        let obs = Observation::from_aggregates(&aggs);
        let table = ScoreTable { rows: vec![score("m", "en", "mystery", 0.5)] };
        let err = correlate(
            &obs,
            &table,
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownSettingId(s) if s == "mystery"));
    }

    #[test]
    fn script_grouping_needs_three_languages() {
        let mut aggs = Vec::new();
        let mut rows = Vec::new();
        for lang in ["aa", "bb", "cc", "dd"] {
            for (i, s) in ["benchmark", "s1", "s2"].iter().enumerate() {
                aggs.push(agg(s, lang, 100.0 - 10.0 * i as f64, 0.1 * i as f64));
                rows.push(score("m", lang, s, 1.0 - 0.1 * i as f64));
            }
        }
        let mut detected = BTreeMap::new();
        detected.insert("aa".to_string(), "Latin".to_string());
        detected.insert("bb".to_string(), "Latin".to_string());
        detected.insert("cc".to_string(), "Latin".to_string());
        detected.insert("dd".to_string(), "Han".to_string());
        let obs = Observation::from_aggregates(&aggs);
        let m = correlate(
            &obs,
            &ScoreTable { rows },
            Grouping::Script,
            &LangMeta::default(),
            &detected,
            CorrMethod::Spearman,
        )
        .unwrap();
        assert!(m.cells.contains_key("Latin"));
        assert!(!m.cells.contains_key("Han"));
        assert!(m.diagnostics.iter().any(|d| d.contains("\"Han\"")));
    }

    #[test]
    fn script_override_beats_detection() {
        let aggs: Vec<SweepAggregate> = ["l1", "l2", "l3"]
            .iter()
            .flat_map(|lang| {
                (0..3).map(|i| agg(&format!("s{i}"), lang, 100.0 - 10.0 * i as f64, 0.0))
            })
            .collect();
        let rows: Vec<ScoreRow> = aggs
            .iter()
            .map(|a| score("m", &a.language, &a.setting_id, a.chrf.mean))
            .collect();
        let mut detected = BTreeMap::new();
        let mut meta = LangMeta::default();
        for lang in ["l1", "l2", "l3"] {
            detected.insert(lang.to_string(), "Latin".to_string());
            meta.script_override.insert(lang.to_string(), "Cyrillic".to_string());
        }
        let obs = Observation::from_aggregates(&aggs);
        let m = correlate(
            &obs,
            &ScoreTable { rows },
            Grouping::Script,
            &meta,
            &detected,
            CorrMethod::Spearman,
        )
        .unwrap();
        assert!(m.cells.contains_key("Cyrillic"));
        assert!(!m.cells.contains_key("Latin"));
    }

    #[test]
    fn output_is_independent_of_score_row_order() {
        let aggs = settings();
        let obs = Observation::from_aggregates(&aggs);
        let mut rows: Vec<ScoreRow> = aggs
            .iter()
            .enumerate()
            .map(|(i, a)| score("m", &a.language, &a.setting_id, (i as f64 * 7.3) % 1.0))
            .collect();
        let forward = correlate(
            &obs,
            &ScoreTable { rows: rows.clone() },
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap();
        rows.reverse();
        let backward = correlate(
            &obs,
            &ScoreTable { rows },
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap();
        assert_eq!(forward.get("m", "chrf"), backward.get("m", "chrf"));
        assert_eq!(forward.get("m", "idc"), backward.get("m", "idc"));
    }

    #[test]
    fn csv_and_json_forms() {
        let aggs = settings();
        let obs = Observation::from_aggregates(&aggs);
        let rows: Vec<ScoreRow> = aggs
            .iter()
            .map(|a| score("m", &a.language, &a.setting_id, a.chrf.mean))
            .collect();
        let m = correlate(
            &obs,
            &ScoreTable { rows },
            Grouping::Model,
            &LangMeta::default(),
            &BTreeMap::new(),
            CorrMethod::Spearman,
        )
        .unwrap();
        let csv = m.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("group,chrf,idc,dnd,comp"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("m,1,"), "row: {row}");
        let json: serde_json::Value = serde_json::from_str(&m.to_json_string()).unwrap();
        assert_eq!(json["grouping"], "model");
        assert_eq!(json["cells"]["m"]["chrf"]["rho"], 1.0);
        assert_eq!(json["cells"]["m"]["chrf"]["n"], 8);
    }

    #[test]
    fn lang_meta_ingest() {
        let src = "lang,family,script_override\nSW,Bantu,\nzh,Sino-Tibetan,Han\n";
        let meta = LangMeta::ingest(std::io::Cursor::new(src)).unwrap();
        assert_eq!(meta.family.get("sw").map(String::as_str), Some("Bantu"));
        assert_eq!(meta.script_override.get("sw"), None);
        assert_eq!(meta.script_override.get("zh").map(String::as_str), Some("Han"));
        assert!(LangMeta::ingest(std::io::Cursor::new("lang,family\nx,y\n")).is_err());
    }
}
