//! Run orchestration: ingestion, prompting, inference, extraction,
//! scoring, and profiling wired into named runs.
//!
//! A run is driven by one [`RunConfig`]. `run_eval` scores the eval split
//! of the configured tasks; `run_profile` measures generation efficiency
//! over a prompt corpus. Both write a stable artifact layout under the
//! output directory: `config.json`, `manifest.jsonl`, `eval_report.json`,
//! `efficiency.jsonl`, `tables.md`.

pub mod config;
pub mod manifest;
pub mod tables;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

pub use config::{BackendConfig, DatasetConfig, ProfilerConfig, RunConfig, SplitConfig};
pub use manifest::{ClockMeta, ManifestMeta, PredictionRecord, RunManifest, SplitIds};
pub use tables::{render_efficiency_table, render_eval_table, render_tables};

use crate::corpus::{CorpusError, CorpusItem};
use crate::extract::{extract_label_with, resolve_prediction};
use crate::inference::http::HttpBackend;
use crate::inference::mock::{MockBackend, ScriptPiece};
use crate::inference::subprocess::SubprocessBackend;
use crate::inference::{
    whitespace_token_count, Backend, BackendError, Clock, GenerationParams, GenerationResult,
    ModelDescriptor,
};
use crate::ingest::{
    build_windows_with, load_participant_log, split_windows, IngestError, PredictionWindow, Task,
    TaskSpec,
};
use crate::metrics::{task_report, EvalReport, MetricsError};
use crate::profiler::{compute_efficiency, spawn_sampler, EfficiencyReport, ProfilerError};
use crate::prompt::{
    builtin_templates, render_prompt_with, PromptBundle, PromptError, PromptTemplate,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    /// The run stopped early; a partial manifest was flushed with the
    /// aborted marker.
    #[error("run aborted: {0}")]
    Aborted(String),
    #[error("profiling error: {0}")]
    Profiling(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 backend, 4 data, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Backend(_) | HarnessError::Aborted(_) | HarnessError::Profiling(_) => 3,
            HarnessError::Data(_) | HarnessError::Io(_) => 4,
            HarnessError::Internal(_) => 1,
        }
    }
}

impl From<IngestError> for HarnessError {
    fn from(e: IngestError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<CorpusError> for HarnessError {
    fn from(e: CorpusError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<PromptError> for HarnessError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::InvalidTemplate(_) => HarnessError::Config(e.to_string()),
            other => HarnessError::Internal(other.to_string()),
        }
    }
}

impl From<MetricsError> for HarnessError {
    fn from(e: MetricsError) -> Self {
        HarnessError::Internal(e.to_string())
    }
}

impl From<ProfilerError> for HarnessError {
    fn from(e: ProfilerError) -> Self {
        match e {
            ProfilerError::Sampler(_) => HarnessError::Profiling(e.to_string()),
            other => HarnessError::Internal(other.to_string()),
        }
    }
}

/// A mock whose reply to a prompt is the label of the window that produced
/// it, correlated by prompt hash. Closes the pipeline loop for
/// verification: a perfect pipeline scores a perfect report.
pub struct OracleBackend {
    answers: HashMap<String, i64>,
    clock: Clock,
}

impl OracleBackend {
    pub fn new(bindings: impl IntoIterator<Item = (String, i64)>, clock: Clock) -> Self {
        OracleBackend {
            answers: bindings.into_iter().collect(),
            clock,
        }
    }
}

impl Backend for OracleBackend {
    fn generate(
        &mut self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<GenerationResult, BackendError> {
        params.validate()?;
        let hash = sha256_hex(prompt);
        let label = self.answers.get(&hash).ok_or_else(|| {
            BackendError::Protocol("prompt is not bound to any known window".into())
        })?;
        let t_request = self.clock.now_ns();
        let mut builder = crate::inference::ResultBuilder::new(t_request);
        builder.set_prompt_tokens(whitespace_token_count(prompt));
        let t = self.clock.now_ns();
        builder.push_piece(&format!(" {label}"), t)?;
        builder.finish(t)
    }

    fn probe(&self) -> Result<ModelDescriptor, BackendError> {
        Ok(ModelDescriptor::named("oracle"))
    }
}

/// Build the oracle from rendered prompt/label pairs.
pub fn oracle_backend(
    bindings: impl IntoIterator<Item = (String, i64)>,
    clock: Clock,
) -> OracleBackend {
    OracleBackend::new(bindings, clock)
}

fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One prompt to evaluate: the window, its rendered prompt, and the truth.
#[derive(Debug, Clone)]
struct EvalUnit {
    window_id: String,
    task: Task,
    label: i64,
    prompt: PromptBundle,
    prompt_sha256: String,
}

/// Everything `run_eval` produces.
#[derive(Debug)]
pub struct EvalRunOutput {
    /// One aggregated report per task, in config task order.
    pub reports: Vec<EvalReport>,
    pub manifest: RunManifest,
    /// Per-generation efficiency reports when profiling was enabled.
    pub efficiency: Vec<EfficiencyReport>,
    pub model: ModelDescriptor,
}

/// Everything `run_profile` produces.
#[derive(Debug)]
pub struct ProfileRunOutput {
    pub reports: Vec<EfficiencyReport>,
    /// Arithmetic mean of each metric across items.
    pub aggregate: EfficiencyReport,
    pub table: String,
    pub model: ModelDescriptor,
}

struct PreparedRun {
    specs: Vec<TaskSpec>,
    units: Vec<EvalUnit>,
    splits: BTreeMap<String, SplitIds>,
    /// Train/eval windows per task, for the window caches.
    split_windows: BTreeMap<String, (Vec<PredictionWindow>, Vec<PredictionWindow>)>,
}

fn resolve_template(config: &RunConfig, task: Task) -> Result<PromptTemplate, HarnessError> {
    let base = builtin_templates()
        .remove(&task)
        .expect("built-in covers all tasks");
    match config.templates.get(&task) {
        None => Ok(base),
        Some(over) => PromptTemplate::new(
            task,
            over.instruction_text
                .clone()
                .unwrap_or(base.instruction_text),
            over.query_skeleton.clone().unwrap_or(base.query_skeleton),
            over.answer_prompt.clone().unwrap_or(base.answer_prompt),
        )
        .map_err(HarnessError::from),
    }
}

/// Load logs, cut windows, split, and render the eval prompts.
fn prepare_run(config: &RunConfig) -> Result<PreparedRun, HarnessError> {
    let mut logs = Vec::new();
    for file in &config.dataset.files {
        let participant_id = file.resolved_participant_id();
        let reader = std::fs::File::open(&file.path)?;
        let log = load_participant_log(
            reader,
            &config.dataset.columns,
            &participant_id,
            config.dataset.delimiter as u8,
        )?;
        logs.push(log);
    }

    let specs = config.task_specs()?;
    let mut units = Vec::new();
    let mut splits = BTreeMap::new();
    let mut split_windows_by_task = BTreeMap::new();
    for spec in &specs {
        let template = resolve_template(config, spec.task)?;
        let mut windows = Vec::new();
        for log in &logs {
            windows.extend(build_windows_with(log, spec, &config.windowing));
        }
        let (train, eval) = split_windows(windows, config.split.ratio, config.split.seed);
        splits.insert(
            spec.task.id().to_string(),
            SplitIds {
                train: train.iter().map(|w| w.window_id()).collect(),
                eval: eval.iter().map(|w| w.window_id()).collect(),
            },
        );
        for window in &eval {
            let prompt = render_prompt_with(window, &template, spec, &config.series_decimals)?;
            let prompt_sha256 = prompt.sha256_hex();
            units.push(EvalUnit {
                window_id: window.window_id(),
                task: spec.task,
                label: window.label,
                prompt,
                prompt_sha256,
            });
        }
        split_windows_by_task.insert(spec.task.id().to_string(), (train, eval));
    }
    Ok(PreparedRun {
        specs,
        units,
        splits,
        split_windows: split_windows_by_task,
    })
}

fn build_backend(
    config: &RunConfig,
    clock: &Clock,
    units: &[EvalUnit],
) -> Result<Box<dyn Backend>, HarnessError> {
    match &config.backend {
        BackendConfig::Mock {
            script,
            prompt_tokens,
            name,
        } => {
            let pieces: Vec<ScriptPiece> = script
                .iter()
                .map(|p| ScriptPiece::new(p.delay_ms, p.text.clone()))
                .collect();
            let mut backend = MockBackend::new(pieces, *prompt_tokens, clock.clone());
            if let Some(name) = name {
                backend = backend.with_descriptor(ModelDescriptor::named(name.clone()));
            }
            Ok(Box::new(backend))
        }
        BackendConfig::Oracle {} => {
            let bindings = units
                .iter()
                .map(|u| (u.prompt_sha256.clone(), u.label))
                .collect::<Vec<_>>();
            Ok(Box::new(OracleBackend::new(bindings, clock.clone())))
        }
        BackendConfig::Subprocess(sub) => {
            Ok(Box::new(SubprocessBackend::spawn(sub, clock.clone())?))
        }
        BackendConfig::Http(http) => Ok(Box::new(HttpBackend::new(http.clone(), clock.clone())?)),
    }
}

fn generate_with_retries(
    backend: &mut dyn Backend,
    prompt: &str,
    params: &GenerationParams,
    retries: u32,
) -> Result<GenerationResult, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.generate(prompt, params) {
            Ok(result) => return Ok(result),
            Err(e) if e.is_retryable() && attempt < retries => {
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

struct UnitOutcome {
    completion: String,
    efficiency: Option<EfficiencyReport>,
}

/// Evaluate the eval split `repeat` times and aggregate per-task metrics.
///
/// Only the eval split is ever queried; the train split is persisted for
/// later use but untouched. On backend failure the partial manifest is
/// flushed with the aborted marker before the error returns.
pub fn run_eval(run_config: &RunConfig) -> Result<EvalRunOutput, HarnessError> {
    run_config.validate()?;
    let clock = Clock::new();
    let prepared = prepare_run(run_config)?;

    let profiling = run_config.profiler.enabled;
    let mut efficiency: Vec<EfficiencyReport> = Vec::new();
    let mut records: Vec<PredictionRecord> = Vec::new();
    let mut per_task_runs: BTreeMap<Task, Vec<EvalReport>> = BTreeMap::new();
    let mut abort: Option<BackendError> = None;

    let mut backend = build_backend(run_config, &clock, &prepared.units)?;

    'repeats: for repeat in 0..run_config.repeat {
        let outcomes: Vec<Option<UnitOutcome>> = if profiling || run_config.eval_parallelism == 1 {
            let mut results = Vec::with_capacity(prepared.units.len());
            for unit in &prepared.units {
                match evaluate_unit(run_config, &clock, backend.as_mut(), unit, profiling) {
                    Ok(outcome) => results.push(Some(outcome)),
                    Err(e) => {
                        abort = Some(e);
                        break;
                    }
                }
            }
            while results.len() < prepared.units.len() {
                results.push(None);
            }
            results
        } else {
            evaluate_parallel(run_config, &clock, &prepared.units, &mut abort)?
        };

        // Record whatever completed, even on abort.
        let mut task_outcomes: BTreeMap<Task, (Vec<crate::extract::ExtractionOutcome>, Vec<i64>)> =
            BTreeMap::new();
        for (unit, outcome) in prepared.units.iter().zip(&outcomes) {
            let Some(outcome) = outcome else { continue };
            let spec = prepared
                .specs
                .iter()
                .find(|s| s.task == unit.task)
                .expect("unit tasks come from specs");
            let extraction = extract_label_with(&outcome.completion, spec, run_config.match_order);
            let resolved = resolve_prediction(&extraction, run_config.invalid_policy, spec);
            let efficiency_index = outcome.efficiency.as_ref().map(|_| efficiency.len());
            if let Some(report) = &outcome.efficiency {
                efficiency.push(report.clone());
            }
            records.push(PredictionRecord {
                window_id: unit.window_id.clone(),
                task: unit.task,
                repeat,
                prompt_sha256: unit.prompt_sha256.clone(),
                completion: outcome.completion.clone(),
                outcome: extraction.clone(),
                label: unit.label,
                resolved,
                efficiency_index,
            });
            let entry = task_outcomes.entry(unit.task).or_default();
            entry.0.push(extraction);
            entry.1.push(unit.label);
        }

        if abort.is_none() {
            for spec in &prepared.specs {
                let (outcomes, labels) = task_outcomes.get(&spec.task).cloned().unwrap_or_default();
                let report = task_report(&outcomes, &labels, spec, run_config.invalid_policy)?;
                per_task_runs.entry(spec.task).or_default().push(report);
            }
        }

        if abort.is_some() {
            break 'repeats;
        }
    }

    // Probe after generating: adapters may have learned the model name
    // from their response headers by now.
    let model = backend
        .probe()
        .unwrap_or_else(|_| ModelDescriptor::named("unknown"));

    let aborted = abort.is_some();
    let reports: Vec<EvalReport> = prepared
        .specs
        .iter()
        .filter_map(|spec| per_task_runs.get(&spec.task))
        .map(|runs| EvalReport::aggregate(runs))
        .collect::<Result<_, _>>()?;

    let manifest = RunManifest {
        meta: ManifestMeta {
            harness_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_ms: clock.anchor_unix_ms(),
            clock: ClockMeta::for_run(
                clock.anchor_unix_ms(),
                profiling.then_some(run_config.profiler.period_ms),
            ),
            config: run_config.clone(),
            splits: prepared.splits.clone(),
            aborted,
        },
        records,
    };

    write_eval_artifacts(
        run_config,
        &prepared,
        &manifest,
        &reports,
        &efficiency,
        &model,
    )?;

    match abort {
        Some(e) => Err(HarnessError::Aborted(e.to_string())),
        None => Ok(EvalRunOutput {
            reports,
            manifest,
            efficiency,
            model,
        }),
    }
}

fn evaluate_unit(
    run_config: &RunConfig,
    clock: &Clock,
    backend: &mut dyn Backend,
    unit: &EvalUnit,
    profiling: bool,
) -> Result<UnitOutcome, BackendError> {
    if !profiling {
        let result = generate_with_retries(
            backend,
            &unit.prompt.full_text,
            &run_config.generation,
            run_config.retries,
        )?;
        return Ok(UnitOutcome {
            completion: result.completion_text,
            efficiency: None,
        });
    }

    let target = backend.target_pid().unwrap_or_else(std::process::id);
    let sampler = spawn_sampler(
        target,
        Duration::from_millis(run_config.profiler.period_ms),
        clock,
    )
    .map_err(|e| BackendError::Config(e.to_string()))?;
    let generated = generate_with_retries(
        backend,
        &unit.prompt.full_text,
        &run_config.generation,
        run_config.retries,
    );
    let trace = sampler.stop();
    let result = generated?;
    let model = backend
        .probe()
        .unwrap_or_else(|_| ModelDescriptor::named("unknown"));
    let report = compute_efficiency(&result, &trace.samples, model)
        .map_err(|e| BackendError::Protocol(format!("efficiency computation: {e}")))?;
    if run_config.profiler.dump_samples {
        let dir = run_config.output_dir.join("samples");
        if std::fs::create_dir_all(&dir).is_ok() {
            if let Ok(file) = std::fs::File::create(
                dir.join(format!("{}.csv", unit.window_id.replace([':', '/'], "_"))),
            ) {
                let _ = trace.write_csv(file);
            }
        }
    }
    Ok(UnitOutcome {
        completion: result.completion_text,
        efficiency: Some(report),
    })
}

/// Worker-pool evaluation for unprofiled runs. Each worker gets its own
/// backend handle; results land in unit order so the run stays
/// deterministic.
fn evaluate_parallel(
    run_config: &RunConfig,
    clock: &Clock,
    units: &[EvalUnit],
    abort: &mut Option<BackendError>,
) -> Result<Vec<Option<UnitOutcome>>, HarnessError> {
    let workers = run_config.eval_parallelism.min(units.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<UnitOutcome>>> =
        Mutex::new((0..units.len()).map(|_| None).collect());
    let first_error: Mutex<Option<BackendError>> = Mutex::new(None);

    // Build every backend up front so a spawn failure surfaces before any
    // generation runs.
    let mut backends = Vec::with_capacity(workers);
    for _ in 0..workers {
        backends.push(build_backend(run_config, clock, units)?);
    }

    {
        let (next, stop, slots, first_error) = (&next, &stop, &slots, &first_error);
        std::thread::scope(|scope| {
            for mut backend in backends {
                scope.spawn(move || loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= units.len() {
                        break;
                    }
                    let unit = &units[i];
                    match generate_with_retries(
                        backend.as_mut(),
                        &unit.prompt.full_text,
                        &run_config.generation,
                        run_config.retries,
                    ) {
                        Ok(result) => {
                            slots.lock().unwrap_or_else(|p| p.into_inner())[i] =
                                Some(UnitOutcome {
                                    completion: result.completion_text,
                                    efficiency: None,
                                });
                        }
                        Err(e) => {
                            let mut err = first_error.lock().unwrap_or_else(|p| p.into_inner());
                            if err.is_none() {
                                *err = Some(e);
                            }
                            stop.store(true, Ordering::SeqCst);
                            break;
                        }
                    }
                });
            }
        });
    }

    *abort = first_error.into_inner().unwrap_or_else(|p| p.into_inner());
    Ok(slots.into_inner().unwrap_or_else(|p| p.into_inner()))
}

fn write_eval_artifacts(
    run_config: &RunConfig,
    prepared: &PreparedRun,
    manifest: &RunManifest,
    reports: &[EvalReport],
    efficiency: &[EfficiencyReport],
    model: &ModelDescriptor,
) -> Result<(), HarnessError> {
    let dir = &run_config.output_dir;
    std::fs::create_dir_all(dir)?;

    let config_json = serde_json::to_string_pretty(run_config)
        .map_err(|e| HarnessError::Internal(format!("config serialization: {e}")))?;
    std::fs::write(dir.join("config.json"), config_json)?;

    let manifest_file = std::fs::File::create(dir.join("manifest.jsonl"))?;
    manifest.write_jsonl(std::io::BufWriter::new(manifest_file))?;

    let report_doc = serde_json::json!({
        "model": model,
        "reports": reports,
    });
    std::fs::write(
        dir.join("eval_report.json"),
        serde_json::to_string_pretty(&report_doc)
            .map_err(|e| HarnessError::Internal(format!("report serialization: {e}")))?,
    )?;

    let mut eff_file =
        std::io::BufWriter::new(std::fs::File::create(dir.join("efficiency.jsonl"))?);
    for report in efficiency {
        let line = serde_json::to_string(report)
            .map_err(|e| HarnessError::Internal(format!("efficiency serialization: {e}")))?;
        writeln!(eff_file, "{line}")?;
    }

    let eval_rows = vec![(model.name.clone(), reports.to_vec())];
    let eff_rows: Vec<(String, EfficiencyReport)> = match mean_efficiency(efficiency, model) {
        Some(mean) => vec![(model.name.clone(), mean)],
        None => Vec::new(),
    };
    std::fs::write(dir.join("tables.md"), render_tables(&eval_rows, &eff_rows))?;

    let windows_dir = dir.join("windows");
    std::fs::create_dir_all(&windows_dir)?;
    for (task_id, (train, eval)) in &prepared.split_windows {
        let train_file = std::fs::File::create(windows_dir.join(format!("{task_id}.train.jsonl")))?;
        crate::ingest::write_windows_jsonl(train, std::io::BufWriter::new(train_file))?;
        let eval_file = std::fs::File::create(windows_dir.join(format!("{task_id}.eval.jsonl")))?;
        crate::ingest::write_windows_jsonl(eval, std::io::BufWriter::new(eval_file))?;
    }
    Ok(())
}

/// Arithmetic mean of each metric over per-item reports. Token counts are
/// dropped (a mean count has no rate-consistency meaning).
pub fn mean_efficiency(
    reports: &[EfficiencyReport],
    model: &ModelDescriptor,
) -> Option<EfficiencyReport> {
    if reports.is_empty() {
        return None;
    }
    let mean_of = |f: &dyn Fn(&EfficiencyReport) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = reports.iter().filter_map(f).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    Some(EfficiencyReport {
        ttft_s: mean_of(&|r| Some(r.ttft_s)).unwrap_or(0.0),
        itps_tok_per_s: mean_of(&|r| r.itps_tok_per_s),
        oet_s: mean_of(&|r| Some(r.oet_s)).unwrap_or(0.0),
        otps_tok_per_s: mean_of(&|r| r.otps_tok_per_s),
        total_s: mean_of(&|r| Some(r.total_s)).unwrap_or(0.0),
        cpu_pct_mean: mean_of(&|r| r.cpu_pct_mean),
        ram_gb_peak: mean_of(&|r| r.ram_gb_peak),
        prompt_tokens: None,
        output_tokens: None,
        model: model.clone(),
        model_load_s: mean_of(&|r| r.model_load_s),
        flags: vec!["aggregate-mean".to_string()],
    })
}

/// Profile each corpus item sequentially, never concurrently, so process
/// CPU stays attributable to the generation being measured.
pub fn run_profile(
    run_config: &RunConfig,
    corpus: &[CorpusItem],
) -> Result<ProfileRunOutput, HarnessError> {
    run_config.validate()?;
    if corpus.is_empty() {
        return Err(HarnessError::Data("profiling corpus is empty".into()));
    }
    let clock = Clock::new();
    let mut backend = build_backend(run_config, &clock, &[])?;
    let model = backend
        .probe()
        .unwrap_or_else(|_| ModelDescriptor::named("unknown"));
    let period = Duration::from_millis(run_config.profiler.period_ms.max(10));

    let dir = &run_config.output_dir;
    std::fs::create_dir_all(dir)?;
    let samples_dir = dir.join("samples");
    if run_config.profiler.dump_samples {
        std::fs::create_dir_all(&samples_dir)?;
    }

    let mut model = model;
    let mut reports = Vec::with_capacity(corpus.len());
    for item in corpus {
        let target = backend.target_pid().unwrap_or_else(std::process::id);
        let sampler = spawn_sampler(target, period, &clock)?;
        let generated = generate_with_retries(
            backend.as_mut(),
            &item.prompt,
            &run_config.generation,
            run_config.retries,
        );
        let trace = sampler.stop();
        let result = generated?;
        // Adapters may learn the model name from their first response.
        model = backend.probe().unwrap_or(model);
        let report = compute_efficiency(&result, &trace.samples, model.clone())?;
        if run_config.profiler.dump_samples {
            let file = std::fs::File::create(
                samples_dir.join(format!("{}.csv", item.id.replace([':', '/'], "_"))),
            )?;
            trace.write_csv(file)?;
        }
        reports.push(report);
    }

    let aggregate = mean_efficiency(&reports, &model)
        .ok_or_else(|| HarnessError::Internal("no efficiency reports".into()))?;
    let table = render_efficiency_table(&[(model.name.clone(), aggregate.clone())]);

    let mut eff_file =
        std::io::BufWriter::new(std::fs::File::create(dir.join("efficiency.jsonl"))?);
    for report in &reports {
        let line = serde_json::to_string(report)
            .map_err(|e| HarnessError::Internal(format!("efficiency serialization: {e}")))?;
        writeln!(eff_file, "{line}")?;
    }
    std::fs::write(
        dir.join("tables.md"),
        render_tables(&[], &[(model.name.clone(), aggregate.clone())]),
    )?;

    Ok(ProfileRunOutput {
        reports,
        aggregate,
        table,
        model,
    })
}

/// Load the windows for the configured tasks and write them (plus the
/// split caches) without querying any backend. Returns per-task counts.
pub fn run_ingest(run_config: &RunConfig) -> Result<Vec<(TaskSpec, usize)>, HarnessError> {
    run_config.validate()?;
    let prepared = prepare_run(run_config)?;
    let dir = &run_config.output_dir;
    let windows_dir = dir.join("windows");
    std::fs::create_dir_all(&windows_dir)?;
    let mut counts = Vec::new();
    for spec in &prepared.specs {
        let (train, eval) = prepared
            .split_windows
            .get(spec.task.id())
            .expect("prepared run covers every spec");
        let train_file =
            std::fs::File::create(windows_dir.join(format!("{}.train.jsonl", spec.task.id())))?;
        crate::ingest::write_windows_jsonl(train, std::io::BufWriter::new(train_file))?;
        let eval_file =
            std::fs::File::create(windows_dir.join(format!("{}.eval.jsonl", spec.task.id())))?;
        crate::ingest::write_windows_jsonl(eval, std::io::BufWriter::new(eval_file))?;
        counts.push((spec.clone(), train.len() + eval.len()));
    }
    Ok(counts)
}
