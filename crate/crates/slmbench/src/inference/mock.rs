//! Deterministic scripted backend.
//!
//! Replays its script verbatim for every request, independent of prompt
//! content, with real sleeps between pieces. Used for profiler fidelity
//! tests and fully reproducible pipeline runs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::inference::{
    whitespace_token_count, Backend, BackendError, Clock, GenerationParams, GenerationResult,
    ModelDescriptor, ResultBuilder, StopCropper,
};

/// How the mock reports the prompt token count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptTokenRule {
    /// Whitespace-delimited word count of the prompt.
    #[default]
    Whitespace,
    /// A fixed count regardless of the prompt.
    Fixed(usize),
}

impl PromptTokenRule {
    pub fn count(&self, prompt: &str) -> usize {
        match self {
            PromptTokenRule::Whitespace => whitespace_token_count(prompt),
            PromptTokenRule::Fixed(n) => *n,
        }
    }
}

/// One scripted piece: wait `delay`, then deliver `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptPiece {
    pub delay_ms: u64,
    pub text: String,
}

impl ScriptPiece {
    pub fn new(delay_ms: u64, text: impl Into<String>) -> Self {
        ScriptPiece {
            delay_ms,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    script: Vec<ScriptPiece>,
    prompt_tokens: PromptTokenRule,
    descriptor: ModelDescriptor,
    clock: Clock,
}

impl MockBackend {
    pub fn new(script: Vec<ScriptPiece>, prompt_tokens: PromptTokenRule, clock: Clock) -> Self {
        MockBackend {
            script,
            prompt_tokens,
            descriptor: ModelDescriptor::named("mock"),
            clock,
        }
    }

    /// Convenience constructor from `(delay_ms, text)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (u64, S)>,
        prompt_tokens: PromptTokenRule,
        clock: Clock,
    ) -> Self {
        let script = pairs
            .into_iter()
            .map(|(d, t)| ScriptPiece::new(d, t))
            .collect();
        MockBackend::new(script, prompt_tokens, clock)
    }

    pub fn with_descriptor(mut self, descriptor: ModelDescriptor) -> Self {
        self.descriptor = descriptor;
        self
    }
}

impl Backend for MockBackend {
    fn generate(
        &mut self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<GenerationResult, BackendError> {
        params.validate()?;
        let t_request = self.clock.now_ns();
        let mut builder = ResultBuilder::new(t_request);
        builder.set_prompt_tokens(self.prompt_tokens.count(prompt));
        let mut cropper = StopCropper::new(&params.stop_sequences);

        let mut t_last = t_request;
        for piece in &self.script {
            if builder.token_count() as u32 >= params.max_new_tokens {
                break;
            }
            if piece.delay_ms > 0 {
                std::thread::sleep(Duration::from_millis(piece.delay_ms));
            }
            let t = self.clock.now_ns();
            let (emit, done) = cropper.feed(&piece.text);
            if !emit.is_empty() {
                builder.push_piece(&emit, t)?;
                t_last = t;
            }
            if done {
                break;
            }
        }
        // The mock has no teardown: the generation is complete the moment
        // the last token lands, so a single-token run has OET exactly 0.
        builder.finish(t_last)
    }

    fn probe(&self) -> Result<ModelDescriptor, BackendError> {
        Ok(self.descriptor.clone())
    }
}
