//! OpenAI-compatible streaming completion client.
//!
//! POSTs to `{base_url}/v1/completions` with `stream: true` and consumes
//! the server-sent event stream. Each non-empty text delta becomes one
//! token event, timestamped at client receipt, so the reported latencies
//! include transport time. Prompt token counts come from the server's
//! `usage` object when it sends one (`stream_options.include_usage` is
//! requested); the harness never re-tokenizes.

use std::io::{BufRead, BufReader};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::inference::{
    Backend, BackendError, Clock, GenerationParams, GenerationResult, ModelDescriptor,
    ResultBuilder, StopCropper,
};

/// HTTP adapter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Server root, e.g. `http://127.0.0.1:8080`.
    pub base_url: String,
    /// Model name sent with each request; also the descriptor fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter_count: Option<u64>,
}

fn default_timeout_s() -> u64 {
    120
}

#[derive(Debug, Deserialize)]
struct StreamChunk {
    #[serde(default)]
    choices: Vec<StreamChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct StreamChoice {
    #[serde(default)]
    text: String,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct ModelList {
    #[serde(default)]
    data: Vec<ModelEntry>,
}

#[derive(Debug, Deserialize)]
struct ModelEntry {
    id: String,
}

pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    clock: Clock,
}

impl HttpBackend {
    pub fn new(config: HttpConfig, clock: Clock) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            config,
            client,
            clock,
        })
    }

    fn auth(
        &self,
        builder: reqwest::blocking::RequestBuilder,
    ) -> reqwest::blocking::RequestBuilder {
        match &self.config.api_key {
            Some(key) => builder.bearer_auth(key),
            None => builder,
        }
    }
}

impl Backend for HttpBackend {
    fn generate(
        &mut self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<GenerationResult, BackendError> {
        params.validate()?;
        let mut body = json!({
            "prompt": prompt,
            "max_tokens": params.max_new_tokens,
            "temperature": params.temperature,
            "stream": true,
            "stream_options": {"include_usage": true},
        });
        if let Some(model) = &self.config.model {
            body["model"] = json!(model);
        }
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }

        let url = format!(
            "{}/v1/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let t_request = self.clock.now_ns();
        let response = self
            .auth(self.client.post(&url))
            .json(&body)
            .send()
            .map_err(|e| BackendError::transport(true, format!("POST {url}: {e}")))?;

        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            let lower = text.to_lowercase();
            if status.as_u16() == 400 && lower.contains("context") {
                return Err(BackendError::Capacity(text));
            }
            return Err(BackendError::transport(
                status.is_server_error(),
                format!("HTTP {status}: {text}"),
            ));
        }

        let mut builder = ResultBuilder::new(t_request);
        let mut cropper = StopCropper::new(&params.stop_sequences);
        let mut reader = BufReader::new(response);
        let mut capped = false;
        let mut line = String::new();
        let t_done;
        loop {
            line.clear();
            let n = reader
                .read_line(&mut line)
                .map_err(|e| BackendError::transport(false, format!("stream read: {e}")))?;
            let t = self.clock.now_ns();
            if n == 0 {
                // Stream closed without [DONE]; treat closure as done.
                t_done = t;
                break;
            }
            let data = match line.trim().strip_prefix("data:") {
                Some(rest) => rest.trim(),
                None => continue, // blank separators, comments, other fields
            };
            if data == "[DONE]" {
                t_done = t;
                break;
            }
            let chunk: StreamChunk = serde_json::from_str(data)
                .map_err(|e| BackendError::Protocol(format!("bad SSE chunk {data:?}: {e}")))?;
            if let Some(usage) = chunk.usage {
                builder.set_prompt_tokens(usage.prompt_tokens);
            }
            let piece = chunk.choices.first().map(|c| c.text.as_str()).unwrap_or("");
            if piece.is_empty() || capped {
                continue;
            }
            let (emit, done) = cropper.feed(piece);
            builder.push_piece(&emit, t)?;
            if done || builder.token_count() as u32 >= params.max_new_tokens {
                // Keep draining so usage-bearing trailer chunks still land.
                capped = true;
            }
        }
        builder.finish(t_done)
    }

    fn probe(&self) -> Result<ModelDescriptor, BackendError> {
        let url = format!("{}/v1/models", self.config.base_url.trim_end_matches('/'));
        let name = self
            .auth(self.client.get(&url))
            .send()
            .map_err(|e| BackendError::transport(true, format!("GET {url}: {e}")))?
            .json::<ModelList>()
            .ok()
            .and_then(|list| list.data.into_iter().next().map(|m| m.id))
            .or_else(|| self.config.model.clone())
            .unwrap_or_else(|| self.config.base_url.clone());
        Ok(ModelDescriptor {
            name,
            parameter_count: self.config.parameter_count,
            quantization: self.config.quantization.clone(),
            source: Some(self.config.base_url.clone()),
        })
    }
}
