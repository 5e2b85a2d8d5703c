//! Out-of-process engine adapter.
//!
//! The engine runs as a child process so its CPU and memory are
//! attributable per request and crashes stay contained. The wire protocol
//! is newline-delimited JSON:
//!
//! - harness -> engine (stdin): one [`EngineRequest`] object per line.
//! - engine -> harness (stdout): one [`EngineEvent::Header`] carrying the
//!   prompt token count, then one [`EngineEvent::Token`] per token piece,
//!   then [`EngineEvent::Done`]. Errors surface as [`EngineEvent::Error`].
//!
//! Token timestamps are taken at harness receipt of each line. Model files
//! (e.g. GGUF) are referenced by path only and checked for existence, never
//! parsed.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::inference::{
    Backend, BackendError, Clock, GenerationParams, GenerationResult, ModelDescriptor,
    ResultBuilder, StopCropper,
};

/// Request line written to the engine's stdin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

/// Response lines read from the engine's stdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EngineEvent {
    /// First line of every response.
    Header {
        prompt_token_count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_name: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parameter_count: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantization: Option<String>,
        /// One-time model load cost, reported once by engines that track it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_load_ms: Option<f64>,
    },
    Token {
        index: usize,
        text: String,
    },
    Done {},
    Error {
        message: String,
    },
}

/// Subprocess adapter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessConfig {
    /// Engine executable.
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Optional model file handed to the engine via `args`; only its
    /// existence is checked here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<u64>,
}

#[derive(Debug)]
pub struct SubprocessBackend {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    descriptor: ModelDescriptor,
    model_load_ns: Option<u64>,
    clock: Clock,
}

impl SubprocessBackend {
    /// Spawn the engine. The child lives as long as the adapter and serves
    /// one request per `generate` call.
    pub fn spawn(config: &SubprocessConfig, clock: Clock) -> Result<Self, BackendError> {
        if let Some(path) = &config.model_path {
            if !path.exists() {
                return Err(BackendError::Config(format!(
                    "model file {} does not exist",
                    path.display()
                )));
            }
        }
        let mut child = Command::new(&config.command)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| {
                BackendError::transport(false, format!("failed to spawn {}: {e}", config.command))
            })?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));

        let name = config
            .model_name
            .clone()
            .or_else(|| {
                config
                    .model_path
                    .as_ref()
                    .and_then(|p| p.file_stem())
                    .map(|s| s.to_string_lossy().into_owned())
            })
            .unwrap_or_else(|| config.command.clone());
        let descriptor = ModelDescriptor {
            name,
            parameter_count: config.parameter_count,
            quantization: config.quantization.clone(),
            source: Some(match &config.model_path {
                Some(p) => p.display().to_string(),
                None => config.command.clone(),
            }),
        };
        Ok(SubprocessBackend {
            child,
            stdin,
            stdout,
            descriptor,
            model_load_ns: None,
            clock,
        })
    }

    fn read_event(&mut self) -> Result<(EngineEvent, u64), BackendError> {
        let mut line = String::new();
        let n = self
            .stdin_flush_then_read(&mut line)
            .map_err(|e| BackendError::transport(false, format!("engine read failed: {e}")))?;
        let t = self.clock.now_ns();
        if n == 0 {
            return Err(BackendError::transport(
                false,
                "engine closed its stdout".to_string(),
            ));
        }
        let event: EngineEvent = serde_json::from_str(line.trim_end()).map_err(|e| {
            BackendError::Protocol(format!("bad engine line {:?}: {e}", line.trim_end()))
        })?;
        Ok((event, t))
    }

    fn stdin_flush_then_read(&mut self, line: &mut String) -> std::io::Result<usize> {
        self.stdout.read_line(line)
    }

    fn classify_engine_error(message: String) -> BackendError {
        let lower = message.to_lowercase();
        if lower.contains("context") && (lower.contains("exceed") || lower.contains("too long")) {
            BackendError::Capacity(message)
        } else {
            BackendError::transport(false, message)
        }
    }
}

impl Backend for SubprocessBackend {
    fn generate(
        &mut self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<GenerationResult, BackendError> {
        params.validate()?;
        let request = EngineRequest {
            prompt: prompt.to_string(),
            max_new_tokens: params.max_new_tokens,
            temperature: params.temperature,
            seed: params.seed,
            stop_sequences: params.stop_sequences.clone(),
        };
        let mut line = serde_json::to_string(&request)
            .map_err(|e| BackendError::Protocol(format!("request serialization: {e}")))?;
        line.push('\n');

        let t_request = self.clock.now_ns();
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BackendError::transport(true, format!("engine write failed: {e}")))?;

        let mut builder = ResultBuilder::new(t_request);
        let mut cropper = StopCropper::new(&params.stop_sequences);

        // Header first.
        match self.read_event()? {
            (
                EngineEvent::Header {
                    prompt_token_count,
                    model_name,
                    parameter_count,
                    quantization,
                    model_load_ms,
                },
                _,
            ) => {
                builder.set_prompt_tokens(prompt_token_count);
                if let Some(name) = model_name {
                    self.descriptor.name = name;
                }
                if parameter_count.is_some() {
                    self.descriptor.parameter_count = parameter_count;
                }
                if quantization.is_some() {
                    self.descriptor.quantization = quantization;
                }
                if let Some(ms) = model_load_ms {
                    self.model_load_ns = Some((ms * 1e6) as u64);
                }
                builder.set_model_load_ns(self.model_load_ns);
            }
            (EngineEvent::Error { message }, _) => {
                return Err(Self::classify_engine_error(message))
            }
            (other, _) => {
                return Err(BackendError::Protocol(format!(
                    "expected header, got {other:?}"
                )))
            }
        }

        // Token stream until done. If the cap or a stop sequence fires
        // client-side, keep draining so the next request starts clean.
        let mut capped = false;
        let t_done;
        loop {
            match self.read_event()? {
                (EngineEvent::Token { index, text }, t) => {
                    if capped {
                        continue;
                    }
                    if index != builder.token_count() {
                        return Err(BackendError::Protocol(format!(
                            "token index {index} out of order (expected {})",
                            builder.token_count()
                        )));
                    }
                    let (emit, done) = cropper.feed(&text);
                    builder.push_piece(&emit, t)?;
                    if done || builder.token_count() as u32 >= params.max_new_tokens {
                        capped = true;
                    }
                }
                (EngineEvent::Done {}, t) => {
                    t_done = t;
                    break;
                }
                (EngineEvent::Error { message }, _) => {
                    return Err(Self::classify_engine_error(message))
                }
                (EngineEvent::Header { .. }, _) => {
                    return Err(BackendError::Protocol("duplicate header".into()))
                }
            }
        }
        builder.finish(t_done)
    }

    fn probe(&self) -> Result<ModelDescriptor, BackendError> {
        Ok(self.descriptor.clone())
    }

    fn target_pid(&self) -> Option<u32> {
        Some(self.child.id())
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
