//! Benchmark harness for zero-shot health-event prediction with locally
//! served language models.
//!
//! The pipeline runs in six stages, each usable on its own:
//!
//! 1. [`ingest`] parses lifelog CSVs into daily records, cuts fixed-length
//!    prediction windows per task, and produces a seeded train/eval split.
//! 2. [`prompt`] renders a window into a three-part completion-style prompt
//!    (instruction, main query, answer prompt).
//! 3. [`inference`] sends the prompt to a backend (subprocess engine,
//!    OpenAI-compatible HTTP endpoint, or a scripted mock) and collects
//!    timestamped token events.
//! 4. [`extract`] parses the integer label out of the completion.
//! 5. [`metrics`] scores predictions (MAE or accuracy) and aggregates
//!    repeated runs as mean and standard deviation.
//! 6. [`profiler`] turns token timestamps plus OS resource samples into a
//!    seven-metric efficiency report (TTFT, ITPS, OTPS, OET, total time,
//!    CPU%, peak RAM).
//!
//! [`harness`] ties the stages into named runs driven by a JSON config, and
//! [`corpus`] loads generic QA prompts for efficiency profiling that does
//! not involve the health pipeline.

pub mod corpus;
pub mod extract;
pub mod harness;
pub mod inference;
pub mod ingest;
pub mod metrics;
pub mod profiler;
pub mod prompt;
pub mod synth;

pub use extract::{extract_label, resolve_prediction, ExtractionOutcome, InvalidPolicy};
pub use harness::{run_eval, run_profile, HarnessError, RunConfig};
pub use inference::{
    Backend, BackendError, Clock, GenerationParams, GenerationResult, ModelDescriptor, TokenEvent,
};
pub use ingest::{
    build_windows, load_participant_log, split_windows, DailyRecord, MetricKind, ParticipantLog,
    PredictionWindow, SensorKind, Task, TaskSpec,
};
pub use metrics::{accuracy, aggregate_runs, mae, task_report, EvalReport};
pub use profiler::{compute_efficiency, fixture_report, EfficiencyReport, ResourceSample};
pub use prompt::{builtin_templates, format_series, render_prompt, PromptBundle, PromptTemplate};
