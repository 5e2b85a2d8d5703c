//! Streaming-generation abstraction over local inference engines.
//!
//! Three adapters implement [`Backend`]: a subprocess adapter speaking a
//! newline-delimited JSON protocol ([`subprocess`]), an OpenAI-compatible
//! streaming HTTP client ([`http`]), and a deterministic scripted mock
//! ([`mock`]). All of them emit [`TokenEvent`]s timestamped at receipt on
//! one shared monotonic [`Clock`], which is what the profiler consumes.
//!
//! Timestamps are never clamped at this boundary. An adapter that delivers
//! out-of-order events produces an error, not silently repaired data.

pub mod http;
pub mod mock;
pub mod subprocess;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    /// The backend is unreachable, crashed, or closed the connection.
    #[error("transport error{}: {msg}", if *.retryable { " (retryable)" } else { "" })]
    Transport { retryable: bool, msg: String },
    /// The prompt exceeds the backend's context window.
    #[error("capacity error: {0}")]
    Capacity(String),
    /// The backend closed the stream before producing any token.
    #[error("empty generation: backend produced no tokens")]
    EmptyGeneration,
    /// The backend violated the adapter protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// Event stream violated an ordering invariant (indices or clocks).
    #[error("invariant violation: {0}")]
    Invariant(String),
    /// Adapter configuration is unusable (missing file, bad params).
    #[error("backend config error: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::Transport {
                retryable: true,
                ..
            }
        )
    }

    pub(crate) fn transport(retryable: bool, msg: impl Into<String>) -> Self {
        BackendError::Transport {
            retryable,
            msg: msg.into(),
        }
    }
}

/// Monotonic clock shared by every component of a run.
///
/// Readings are nanoseconds since the clock was created, so they are
/// serializable and comparable anywhere within the run.
#[derive(Debug, Clone)]
pub struct Clock {
    inner: Arc<ClockInner>,
}

#[derive(Debug)]
struct ClockInner {
    anchor: Instant,
    anchor_unix_ms: u64,
}

impl Clock {
    pub fn new() -> Self {
        let anchor_unix_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Clock {
            inner: Arc::new(ClockInner {
                anchor: Instant::now(),
                anchor_unix_ms,
            }),
        }
    }

    /// Nanoseconds since the clock anchor.
    pub fn now_ns(&self) -> u64 {
        self.inner.anchor.elapsed().as_nanos() as u64
    }

    /// Wall-clock UNIX time of the anchor, for report metadata only.
    pub fn anchor_unix_ms(&self) -> u64 {
        self.inner.anchor_unix_ms
    }
}

impl Default for Clock {
    fn default() -> Self {
        Clock::new()
    }
}

/// Decoding parameters handed to a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationParams {
    /// Greedy decoding, few tokens, stop at the first newline. A single
    /// integer answer needs nothing more and stays reproducible.
    fn default() -> Self {
        GenerationParams {
            max_new_tokens: 32,
            temperature: 0.0,
            seed: None,
            stop_sequences: vec!["\n".to_string()],
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens == 0 {
            return Err(BackendError::Config("max_new_tokens must be >= 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One streamed token piece with its receipt timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEvent {
    pub index: usize,
    pub text_piece: String,
    /// Reading of the run clock at receipt, in ns.
    pub t_ns: u64,
}

/// Everything observed for one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    /// Prompt token count as reported by the backend; 0 when the backend
    /// does not report it (the profiler then flags ITPS as unavailable).
    pub prompt_token_count: usize,
    pub output_token_count: usize,
    pub events: Vec<TokenEvent>,
    pub completion_text: String,
    pub t_request_ns: u64,
    pub t_first_token_ns: u64,
    pub t_last_token_ns: u64,
    pub t_done_ns: u64,
    /// Per-request setup work recorded outside [t_request, t_done], if any.
    #[serde(default)]
    pub setup_overhead_ns: u64,
    /// One-time model load time, reported separately and never folded into
    /// the per-request timings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_load_ns: Option<u64>,
}

impl GenerationResult {
    /// Check every structural invariant. Violations mean a buggy adapter.
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.events.is_empty() {
            return Err(BackendError::Invariant(
                "result carries no token events".into(),
            ));
        }
        if self.output_token_count != self.events.len() {
            return Err(BackendError::Invariant(format!(
                "output_token_count {} != {} events",
                self.output_token_count,
                self.events.len()
            )));
        }
        let mut concat = String::new();
        let mut last_ts = 0u64;
        for (i, event) in self.events.iter().enumerate() {
            if event.index != i {
                return Err(BackendError::Invariant(format!(
                    "event index {} at position {i}",
                    event.index
                )));
            }
            if event.t_ns < last_ts {
                return Err(BackendError::Invariant(format!(
                    "event {} timestamp went backwards",
                    event.index
                )));
            }
            last_ts = event.t_ns;
            concat.push_str(&event.text_piece);
        }
        if concat != self.completion_text {
            return Err(BackendError::Invariant(
                "completion_text differs from concatenated pieces".into(),
            ));
        }
        let ordered = self.t_request_ns <= self.t_first_token_ns
            && self.t_first_token_ns <= self.t_last_token_ns
            && self.t_last_token_ns <= self.t_done_ns;
        if !ordered {
            return Err(BackendError::Invariant(
                "request/first/last/done timestamps out of order".into(),
            ));
        }
        if self.t_first_token_ns != self.events[0].t_ns
            || self.t_last_token_ns != self.events[self.events.len() - 1].t_ns
        {
            return Err(BackendError::Invariant(
                "first/last markers disagree with event timestamps".into(),
            ));
        }
        Ok(())
    }
}

/// Static facts about the model behind an adapter. Fields an adapter
/// cannot learn stay absent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<u64>,
    /// Quantization tag such as "Q4"; recorded, never produced here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl ModelDescriptor {
    pub fn named(name: impl Into<String>) -> Self {
        ModelDescriptor {
            name: name.into(),
            ..ModelDescriptor::default()
        }
    }
}

/// A generation backend. `&mut self` serializes generations per handle;
/// run several handles for concurrency.
pub trait Backend: Send {
    /// Run one generation. Stops at `max_new_tokens` or the first stop
    /// sequence, whichever comes first.
    fn generate(
        &mut self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<GenerationResult, BackendError>;

    /// Model metadata, as far as the adapter can learn it.
    fn probe(&self) -> Result<ModelDescriptor, BackendError>;

    /// PID whose CPU/RSS should be attributed to this backend's
    /// generations. `None` means the calling process itself.
    fn target_pid(&self) -> Option<u32> {
        None
    }
}

/// Incremental stop-sequence watcher.
///
/// Feeding a piece returns the part to emit and whether generation is
/// finished. The emitted part is cropped so the stop sequence itself never
/// enters the completion. A stop spanning an event boundary leaves the
/// already-emitted fragment in place; events are immutable once
/// timestamped.
pub(crate) struct StopCropper {
    stops: Vec<String>,
    emitted: String,
}

impl StopCropper {
    pub(crate) fn new(stops: &[String]) -> Self {
        StopCropper {
            stops: stops.iter().filter(|s| !s.is_empty()).cloned().collect(),
            emitted: String::new(),
        }
    }

    pub(crate) fn feed(&mut self, piece: &str) -> (String, bool) {
        if self.stops.is_empty() {
            self.emitted.push_str(piece);
            return (piece.to_string(), false);
        }
        let longest = self.stops.iter().map(|s| s.len()).max().unwrap_or(0);
        let tentative = format!("{}{piece}", self.emitted);
        // Only matches that end inside the new piece matter; earlier text
        // was already scanned.
        let search_from = self.emitted.len().saturating_sub(longest.saturating_sub(1));
        let mut earliest: Option<usize> = None;
        for stop in &self.stops {
            let region = &tentative[search_from..];
            let mut offset = 0;
            while let Some(pos) = region[offset..].find(stop.as_str()) {
                let abs = search_from + offset + pos;
                if abs + stop.len() > self.emitted.len() {
                    earliest = Some(earliest.map_or(abs, |e| e.min(abs)));
                    break;
                }
                offset += pos + 1;
            }
        }
        match earliest {
            Some(stop_at) => {
                let keep_until = stop_at.max(self.emitted.len());
                let emit = tentative[self.emitted.len()..keep_until].to_string();
                self.emitted.push_str(&emit);
                (emit, true)
            }
            None => {
                self.emitted.push_str(piece);
                (piece.to_string(), false)
            }
        }
    }
}

/// Accumulates token events for an adapter and finishes into a validated
/// [`GenerationResult`].
pub(crate) struct ResultBuilder {
    t_request_ns: u64,
    events: Vec<TokenEvent>,
    completion: String,
    prompt_token_count: usize,
    setup_overhead_ns: u64,
    model_load_ns: Option<u64>,
}

impl ResultBuilder {
    pub(crate) fn new(t_request_ns: u64) -> Self {
        ResultBuilder {
            t_request_ns,
            events: Vec::new(),
            completion: String::new(),
            prompt_token_count: 0,
            setup_overhead_ns: 0,
            model_load_ns: None,
        }
    }

    pub(crate) fn set_prompt_tokens(&mut self, count: usize) {
        self.prompt_token_count = count;
    }

    pub(crate) fn set_model_load_ns(&mut self, ns: Option<u64>) {
        self.model_load_ns = ns;
    }

    pub(crate) fn token_count(&self) -> usize {
        self.events.len()
    }

    /// Record one emitted piece. Empty pieces are skipped (they carry no
    /// token). Timestamps must not move backwards.
    pub(crate) fn push_piece(&mut self, piece: &str, t_ns: u64) -> Result<(), BackendError> {
        if piece.is_empty() {
            return Ok(());
        }
        if let Some(last) = self.events.last() {
            if t_ns < last.t_ns {
                return Err(BackendError::Invariant(format!(
                    "token timestamp regressed: {} after {}",
                    t_ns, last.t_ns
                )));
            }
        } else if t_ns < self.t_request_ns {
            return Err(BackendError::Invariant(
                "first token timestamp precedes the request".into(),
            ));
        }
        self.events.push(TokenEvent {
            index: self.events.len(),
            text_piece: piece.to_string(),
            t_ns,
        });
        self.completion.push_str(piece);
        Ok(())
    }

    /// Finish the generation. `t_done_ns` is the completion timestamp; it
    /// must not precede the last token.
    pub(crate) fn finish(self, t_done_ns: u64) -> Result<GenerationResult, BackendError> {
        if self.events.is_empty() {
            return Err(BackendError::EmptyGeneration);
        }
        let t_first = self.events[0].t_ns;
        let t_last = self.events[self.events.len() - 1].t_ns;
        let result = GenerationResult {
            prompt_token_count: self.prompt_token_count,
            output_token_count: self.events.len(),
            events: self.events,
            completion_text: self.completion,
            t_request_ns: self.t_request_ns,
            t_first_token_ns: t_first,
            t_last_token_ns: t_last,
            t_done_ns,
            setup_overhead_ns: self.setup_overhead_ns,
            model_load_ns: self.model_load_ns,
        };
        result.validate()?;
        Ok(result)
    }
}

/// Default prompt-token rule shared by the mock adapter and shims:
/// whitespace-delimited word count.
pub fn whitespace_token_count(prompt: &str) -> usize {
    prompt.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_cropper_crops_within_a_piece() {
        let mut cropper = StopCropper::new(&["\n".to_string()]);
        assert_eq!(cropper.feed(" 3"), (" 3".to_string(), false));
        assert_eq!(cropper.feed(" out\nignored"), (" out".to_string(), true));
    }

    #[test]
    fn stop_cropper_handles_stop_at_piece_start() {
        let mut cropper = StopCropper::new(&["\n".to_string()]);
        assert_eq!(cropper.feed("\nrest"), (String::new(), true));
    }

    #[test]
    fn stop_cropper_spanning_boundary_keeps_emitted_fragment() {
        let mut cropper = StopCropper::new(&["END".to_string()]);
        assert_eq!(cropper.feed("abcEN"), ("abcEN".to_string(), false));
        // The "EN" is already out; only the new "D" is suppressed.
        assert_eq!(cropper.feed("Dxyz"), (String::new(), true));
    }

    #[test]
    fn stop_cropper_multiple_stops_take_earliest() {
        let mut cropper = StopCropper::new(&["xx".to_string(), "b".to_string()]);
        assert_eq!(cropper.feed("a b xx"), ("a ".to_string(), true));
    }

    #[test]
    fn builder_enforces_monotonic_timestamps() {
        let mut builder = ResultBuilder::new(100);
        builder.push_piece("a", 150).unwrap();
        let err = builder.push_piece("b", 140).unwrap_err();
        assert!(matches!(err, BackendError::Invariant(_)));
    }

    #[test]
    fn builder_rejects_empty_generation() {
        let builder = ResultBuilder::new(100);
        assert!(matches!(
            builder.finish(200),
            Err(BackendError::EmptyGeneration)
        ));
    }

    #[test]
    fn builder_produces_valid_result() {
        let mut builder = ResultBuilder::new(100);
        builder.set_prompt_tokens(7);
        builder.push_piece(" 4", 180).unwrap();
        builder.push_piece(" out", 220).unwrap();
        let result = builder.finish(230).unwrap();
        result.validate().unwrap();
        assert_eq!(result.completion_text, " 4 out");
        assert_eq!(result.output_token_count, 2);
        assert_eq!(result.t_first_token_ns, 180);
        assert_eq!(result.t_last_token_ns, 220);
    }

    #[test]
    fn params_validation() {
        let mut params = GenerationParams::default();
        params.validate().unwrap();
        params.max_new_tokens = 0;
        assert!(params.validate().is_err());
        params.max_new_tokens = 1;
        params.temperature = -0.5;
        assert!(params.validate().is_err());
    }
}
