//! Run manifests: a self-consistent, re-checkable record of every
//! prediction a run made.
//!
//! Serialized as `manifest.jsonl`: one meta object on the first line, one
//! prediction record per following line. Because each record carries the
//! raw completion, the recorded outcome can be re-derived offline at any
//! time; `verify` does exactly that.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extract::{extract_label_with, ExtractionOutcome};
use crate::harness::config::RunConfig;
use crate::harness::HarnessError;
use crate::ingest::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockMeta {
    /// Clock source for every t_*_ns field.
    pub source: String,
    /// Wall-clock UNIX ms of the clock anchor.
    pub anchor_unix_ms: u64,
    /// CPU percent normalization: 100 means one fully used core.
    pub cpu_normalization: String,
    /// RAM unit for peak figures.
    pub ram_unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler_period_ms: Option<u64>,
}

impl ClockMeta {
    pub fn for_run(anchor_unix_ms: u64, sampler_period_ms: Option<u64>) -> Self {
        ClockMeta {
            source: "monotonic (ns since run start)".into(),
            anchor_unix_ms,
            cpu_normalization: "percent of one core; multi-core use exceeds 100".into(),
            ram_unit: "GiB".into(),
            sampler_period_ms,
        }
    }
}

/// Which windows went to which side of the split, by window id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub harness_version: String,
    pub created_unix_ms: u64,
    pub clock: ClockMeta,
    pub config: RunConfig,
    /// Split membership per task id.
    pub splits: BTreeMap<String, SplitIds>,
    /// Set when the run stopped early on backend failure.
    #[serde(default)]
    pub aborted: bool,
}

/// One generation: which window, what prompt (by hash), what came back,
/// and what it resolved to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub window_id: String,
    pub task: Task,
    pub repeat: u32,
    pub prompt_sha256: String,
    pub completion: String,
    pub outcome: ExtractionOutcome,
    pub label: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<i64>,
    /// Index into `efficiency.jsonl` when the run was profiled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub meta: ManifestMeta,
    pub records: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ManifestLine {
    Meta(Box<ManifestMeta>),
    Prediction(PredictionRecord),
}

impl RunManifest {
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), HarnessError> {
        let meta = serde_json::to_string(&ManifestLine::Meta(Box::new(self.meta.clone())))
            .map_err(|e| HarnessError::Internal(format!("manifest meta: {e}")))?;
        writeln!(out, "{meta}").map_err(HarnessError::Io)?;
        for record in &self.records {
            let line = serde_json::to_string(&ManifestLine::Prediction(record.clone()))
                .map_err(|e| HarnessError::Internal(format!("manifest record: {e}")))?;
            writeln!(out, "{line}").map_err(HarnessError::Io)?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<RunManifest, HarnessError> {
        let mut meta = None;
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(HarnessError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine = serde_json::from_str(&line)
                .map_err(|e| HarnessError::Data(format!("manifest line {}: {e}", i + 1)))?;
            match parsed {
                ManifestLine::Meta(m) => meta = Some(*m),
                ManifestLine::Prediction(r) => records.push(r),
            }
        }
        let meta = meta.ok_or_else(|| HarnessError::Data("manifest has no meta line".into()))?;
        Ok(RunManifest { meta, records })
    }

    pub fn load(path: &Path) -> Result<RunManifest, HarnessError> {
        let file = std::fs::File::open(path).map_err(HarnessError::Io)?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }

    /// Re-check the manifest against itself. Returns human-readable
    /// problems; empty means consistent.
    ///
    /// Checks per task: train and eval ids are disjoint; every prediction
    /// record references an eval window of its task; re-extracting each
    /// stored completion reproduces the stored outcome.
    pub fn verify(&self) -> Vec<String> {
        let mut problems = Vec::new();

        let specs: BTreeMap<Task, _> = self
            .meta
            .config
            .tasks
            .iter()
            .filter_map(|t| t.resolve().ok().map(|s| (t.task, s)))
            .collect();

        for (task_id, splits) in &self.meta.splits {
            let train: std::collections::HashSet<&String> = splits.train.iter().collect();
            for id in &splits.eval {
                if train.contains(id) {
                    problems.push(format!("{task_id}: window {id} in both train and eval"));
                }
            }
        }

        for (i, record) in self.records.iter().enumerate() {
            let splits = self.meta.splits.get(record.task.id());
            let known = splits
                .map(|s| s.eval.iter().any(|id| id == &record.window_id))
                .unwrap_or(false);
            if !known {
                problems.push(format!(
                    "record {i}: window {} not in the {} eval split",
                    record.window_id,
                    record.task.id()
                ));
            }
            if let Some(spec) = specs.get(&record.task) {
                let re_extracted =
                    extract_label_with(&record.completion, spec, self.meta.config.match_order);
                if re_extracted != record.outcome {
                    problems.push(format!(
                        "record {i}: completion re-extracts to {re_extracted:?}, recorded {:?}",
                        record.outcome
                    ));
                }
            } else {
                problems.push(format!("record {i}: no spec for task {}", record.task.id()));
            }
        }
        problems
    }
}
