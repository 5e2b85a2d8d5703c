//! Generic prompt corpora for efficiency profiling.
//!
//! A corpus is a flat list of QA-style prompts, loaded from JSONL (one
//! object per line with keys `id`, `prompt`, optional `answer`) or CSV
//! (header `id,prompt,answer`). Loading is deterministic and
//! order-preserving; answers are carried along but never graded here.

use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub prompt: String,
    #[serde(default, rename = "answer", skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// Guess the format from a file extension, defaulting to JSONL.
pub fn format_for_path(path: &std::path::Path) -> CorpusFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => CorpusFormat::Csv,
        _ => CorpusFormat::Jsonl,
    }
}

/// Load a corpus. Empty prompts and duplicate ids are rejected with the
/// offending row.
pub fn load_corpus(
    source: impl Read,
    format: CorpusFormat,
) -> Result<Vec<CorpusItem>, CorpusError> {
    let items = match format {
        CorpusFormat::Jsonl => load_jsonl(source)?,
        CorpusFormat::Csv => load_csv(source)?,
    };
    let mut seen = std::collections::HashSet::new();
    for item in &items {
        if !seen.insert(item.id.as_str()) {
            return Err(CorpusError::Integrity(format!(
                "duplicate id {:?}",
                item.id
            )));
        }
    }
    Ok(items)
}

fn load_jsonl(source: impl Read) -> Result<Vec<CorpusItem>, CorpusError> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let row = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: CorpusItem = serde_json::from_str(&line).map_err(|e| CorpusError::Row {
            row,
            msg: format!("{e}"),
        })?;
        validate_item(&item, row)?;
        items.push(item);
    }
    Ok(items)
}

fn load_csv(source: impl Read) -> Result<Vec<CorpusItem>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Schema(format!("unreadable header: {e}")))?;
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_idx = col("id").ok_or_else(|| CorpusError::Schema("missing column id".into()))?;
    let prompt_idx =
        col("prompt").ok_or_else(|| CorpusError::Schema("missing column prompt".into()))?;
    let answer_idx = col("answer");

    let mut items = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| CorpusError::Row {
            row,
            msg: format!("{e}"),
        })?;
        let item = CorpusItem {
            id: record.get(id_idx).unwrap_or("").to_string(),
            prompt: record.get(prompt_idx).unwrap_or("").to_string(),
            reference_answer: answer_idx
                .and_then(|i| record.get(i))
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        };
        validate_item(&item, row)?;
        items.push(item);
    }
    Ok(items)
}

fn validate_item(item: &CorpusItem, row: usize) -> Result<(), CorpusError> {
    if item.prompt.is_empty() {
        return Err(CorpusError::Row {
            row,
            msg: format!("empty prompt (id {:?})", item.id),
        });
    }
    if item.id.is_empty() {
        return Err(CorpusError::Row {
            row,
            msg: "empty id".into(),
        });
    }
    Ok(())
}
