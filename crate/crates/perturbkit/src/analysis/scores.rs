//! External task-score ingestion. Scores arrive as CSV with one row per
//! (model, task, language, setting) cell; the file is validated eagerly so a
//! bad row is named before any analysis starts.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub model: String,
    pub task: String,
    /// Lowercased on ingest to match corpus languages.
    pub language: String,
    pub setting_id: String,
    /// What the task measures (accuracy, F1, ...); informational.
    pub metric_name: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

pub const SCORES_CSV_HEADER: [&str; 6] =
    ["model", "task", "language", "setting_id", "metric", "score"];

/// Reads and validates a score table.
///
/// Requires exactly the header columns `model,task,language,setting_id,
/// metric,score` (any order). Rejects, naming the offending 1-based data
/// row: duplicate (model, task, language, setting_id) keys, non-numeric or
/// non-finite scores, and empty key fields.
pub fn ingest_scores<R: Read>(reader: R) -> Result<ScoreTable> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Usage(format!("scores CSV is missing column {name:?}")))
    };
    let idx_model = col("model")?;
    let idx_task = col("task")?;
    let idx_language = col("language")?;
    let idx_setting = col("setting_id")?;
    let idx_metric = col("metric")?;
    let idx_score = col("score")?;
    for h in headers.iter() {
        if !SCORES_CSV_HEADER.contains(&h) {
            return Err(Error::Usage(format!("scores CSV has unknown column {h:?}")));
        }
    }

    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String, String, String)> = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + 1;
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or("").trim().to_string();
        let model = field(idx_model);
        let task = field(idx_task);
        let language = field(idx_language).to_lowercase();
        let setting_id = field(idx_setting);
        let metric_name = field(idx_metric);
        let raw_score = field(idx_score);

        for (name, value) in [
            ("model", &model),
            ("task", &task),
            ("language", &language),
            ("setting_id", &setting_id),
        ] {
            if value.is_empty() {
                return Err(Error::BadScoreRow {
                    row: row_no,
                    reason: format!("empty {name}"),
                });
            }
        }
        let score: f64 = raw_score.parse().map_err(|_| Error::BadScoreRow {
            row: row_no,
            reason: format!("score {raw_score:?} is not a number"),
        })?;
        if !score.is_finite() {
            return Err(Error::BadScoreRow {
                row: row_no,
                reason: format!("score {raw_score:?} is not finite"),
            });
        }
        let key = (model.clone(), task.clone(), language.clone(), setting_id.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateScoreKey {
                row: row_no,
                key: format!("{model}/{task}/{language}/{setting_id}"),
            });
        }
        rows.push(ScoreRow { model, task, language, setting_id, metric_name, score });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("score table has no rows"));
    }
    Ok(ScoreTable { rows })
}

pub fn ingest_scores_path(path: impl AsRef<Path>) -> Result<ScoreTable> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ingest_scores(std::io::BufReader::new(file))
}
