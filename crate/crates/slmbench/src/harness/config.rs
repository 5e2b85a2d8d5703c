//! Run configuration.
//!
//! One JSON file drives a run. Any key can be overridden from the command
//! line with `--set dotted.path=value`, applied to the raw JSON before
//! deserialization, so flags mirror config keys exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::extract::{InvalidPolicy, MatchOrder};
use crate::harness::HarnessError;
use crate::inference::http::HttpConfig;
use crate::inference::mock::PromptTokenRule;
use crate::inference::subprocess::SubprocessConfig;
use crate::inference::GenerationParams;
use crate::ingest::{ColumnMapping, MetricKind, Task, TaskSpec, WindowingOptions};
use crate::prompt::SeriesFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Tasks to evaluate; defaults to all four with default specs.
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskOverride>,
    #[serde(default)]
    pub windowing: WindowingOptions,
    #[serde(default)]
    pub split: SplitConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub invalid_policy: InvalidPolicy,
    #[serde(default)]
    pub match_order: MatchOrder,
    /// How many times the eval split is re-queried; reports aggregate the
    /// repeats as mean and std.
    #[serde(default = "default_repeat")]
    pub repeat: u32,
    #[serde(default)]
    pub profiler: ProfilerConfig,
    pub output_dir: PathBuf,
    /// Retries per generation on retryable transport errors.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Worker count for unprofiled evaluation. Profiled runs are always
    /// sequential so CPU attribution stays sound.
    #[serde(default = "default_parallelism")]
    pub eval_parallelism: usize,
    #[serde(default)]
    pub series_decimals: SeriesFormat,
    /// Per-task template overrides; omitted tasks use built-ins.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub templates: BTreeMap<Task, TemplateOverride>,
}

fn default_tasks() -> Vec<TaskOverride> {
    Task::ALL.into_iter().map(TaskOverride::for_task).collect()
}

fn default_repeat() -> u32 {
    3
}

fn default_retries() -> u32 {
    2
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub files: Vec<DatasetFile>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub columns: ColumnMapping,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub path: PathBuf,
    /// Defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_id: Option<String>,
}

impl DatasetFile {
    pub fn resolved_participant_id(&self) -> String {
        self.participant_id.clone().unwrap_or_else(|| {
            self.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskOverride {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_min: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_max: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_len: Option<usize>,
}

impl TaskOverride {
    pub fn for_task(task: Task) -> Self {
        TaskOverride {
            task,
            label_min: None,
            label_max: None,
            metric: None,
            window_len: None,
        }
    }

    pub fn resolve(&self) -> Result<TaskSpec, HarnessError> {
        let base = TaskSpec::default_for(self.task);
        TaskSpec::new(
            self.task,
            self.label_min.unwrap_or(base.label_min),
            self.label_max.unwrap_or(base.label_max),
            self.metric.unwrap_or(base.metric),
            self.window_len.unwrap_or(base.window_len),
        )
        .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_skeleton: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Scripted in-process mock.
    Mock {
        #[serde(default)]
        script: Vec<MockPiece>,
        #[serde(default)]
        prompt_tokens: PromptTokenRule,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Ground-truth oracle; replies with the label of the window whose
    /// prompt it receives. Evaluation only.
    Oracle {},
    Subprocess(SubprocessConfig),
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockPiece {
    #[serde(default)]
    pub delay_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilerConfig {
    /// Profile each generation during `eval` runs (forces sequential
    /// evaluation). The `profile` subcommand always profiles.
    pub enabled: bool,
    pub period_ms: u64,
    /// Dump raw resource samples as CSV next to the reports.
    pub dump_samples: bool,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            enabled: false,
            period_ms: 100,
            dump_samples: false,
        }
    }
}

impl RunConfig {
    /// Parse a config file, apply `--set dotted.path=value` overrides onto
    /// the raw JSON, then deserialize and validate.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("read {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("parse {}: {e}", path.display())))?;
        for entry in overrides {
            apply_override(&mut value, entry)?;
        }
        let mut config: RunConfig = serde_json::from_value(value)
            .map_err(|e| HarnessError::Config(format!("config: {e}")))?;
        // Dataset paths are resolved relative to the config file.
        if let Some(base) = path.parent() {
            for file in &mut config.dataset.files {
                if file.path.is_relative() {
                    file.path = normalize_path(base.join(&file.path));
                }
            }
            if config.output_dir.is_relative() {
                config.output_dir = normalize_path(base.join(&config.output_dir));
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dataset.files.is_empty() {
            return Err(HarnessError::Config("dataset.files is empty".into()));
        }
        let mut participant_ids = std::collections::HashSet::new();
        for file in &self.dataset.files {
            if !file.path.exists() {
                return Err(HarnessError::Config(format!(
                    "dataset file {} does not exist",
                    file.path.display()
                )));
            }
            let id = file.resolved_participant_id();
            if !participant_ids.insert(id.clone()) {
                return Err(HarnessError::Config(format!(
                    "duplicate participant id {id:?}; set dataset.files[].participant_id"
                )));
            }
        }
        if !self.dataset.delimiter.is_ascii() {
            return Err(HarnessError::Config(format!(
                "dataset.delimiter must be a single ASCII character, got {:?}",
                self.dataset.delimiter
            )));
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(HarnessError::Config(format!(
                "split.ratio must lie in (0, 1), got {}",
                self.split.ratio
            )));
        }
        if self.repeat < 1 {
            return Err(HarnessError::Config("repeat must be >= 1".into()));
        }
        if self.eval_parallelism < 1 {
            return Err(HarnessError::Config("eval_parallelism must be >= 1".into()));
        }
        if self.windowing.stride < 1 {
            return Err(HarnessError::Config("windowing.stride must be >= 1".into()));
        }
        if self.profiler.enabled && self.profiler.period_ms < 10 {
            return Err(HarnessError::Config(
                "profiler.period_ms must be >= 10".into(),
            ));
        }
        self.generation
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.tasks.is_empty() {
            return Err(HarnessError::Config("tasks is empty".into()));
        }
        for task in &self.tasks {
            task.resolve()?;
        }
        Ok(())
    }

    pub fn task_specs(&self) -> Result<Vec<TaskSpec>, HarnessError> {
        self.tasks.iter().map(|t| t.resolve()).collect()
    }
}

/// Lexically collapse `.` and `..` components (no filesystem access).
fn normalize_path(path: PathBuf) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for component in path.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Apply one `dotted.path=value` override onto raw config JSON. The value
/// parses as JSON when possible and falls back to a string, so
/// `--set split.seed=7` and `--set backend.kind=mock` both work.
fn apply_override(root: &mut serde_json::Value, entry: &str) -> Result<(), HarnessError> {
    let (path, raw_value) = entry
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override {entry:?} is not path=value")))?;
    let value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));

    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(HarnessError::Config(format!("bad override path {path:?}")));
    }
    for segment in &segments[..segments.len() - 1] {
        cursor = match segment.parse::<usize>() {
            Ok(index) => cursor
                .get_mut(index)
                .ok_or_else(|| HarnessError::Config(format!("no element {index} in {path:?}")))?,
            Err(_) => {
                if !cursor.is_object() {
                    return Err(HarnessError::Config(format!(
                        "cannot descend into {segment:?} in {path:?}"
                    )));
                }
                cursor
                    .as_object_mut()
                    .unwrap()
                    .entry(segment.to_string())
                    .or_insert(serde_json::Value::Object(Default::default()))
            }
        };
    }
    let last = segments[segments.len() - 1];
    match last.parse::<usize>() {
        Ok(index) => {
            let arr = cursor
                .as_array_mut()
                .ok_or_else(|| HarnessError::Config(format!("{path:?}: parent is not an array")))?;
            if index >= arr.len() {
                return Err(HarnessError::Config(format!(
                    "no element {index} in {path:?}"
                )));
            }
            arr[index] = value;
        }
        Err(_) => {
            let obj = cursor.as_object_mut().ok_or_else(|| {
                HarnessError::Config(format!("{path:?}: parent is not an object"))
            })?;
            obj.insert(last.to_string(), value);
        }
    }
    Ok(())
}
