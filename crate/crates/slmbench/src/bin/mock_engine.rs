//! Reference engine shim for the subprocess adapter protocol.
//!
//! Reads one JSON request per line on stdin and answers on stdout with a
//! header line, one token line per scripted piece, and a done line. Real
//! engines (e.g. a llama.cpp wrapper) implement the same protocol; this
//! shim replays a script so the adapter and profiler can be exercised
//! without model weights.
//!
//! Usage: slmbench-mock-engine [--script FILE]
//!
//! The script file is JSON:
//!
//! ```json
//! {
//!   "model_name": "scripted-engine",
//!   "quantization": "Q4",
//!   "model_load_ms": 0.0,
//!   "prompt_tokens": "whitespace",
//!   "pieces": [{"delay_ms": 100, "text": " 3"}]
//! }
//! ```
//!
//! `prompt_tokens` is either the string "whitespace" or `{"fixed": N}`.

use std::io::{BufRead, Write};

use serde::Deserialize;

use slmbench::inference::mock::{PromptTokenRule, ScriptPiece};
use slmbench::inference::subprocess::{EngineEvent, EngineRequest};

#[derive(Debug, Deserialize)]
#[serde(default)]
struct EngineScript {
    model_name: String,
    quantization: Option<String>,
    parameter_count: Option<u64>,
    model_load_ms: Option<f64>,
    prompt_tokens: PromptTokenRule,
    pieces: Vec<ScriptPiece>,
}

impl Default for EngineScript {
    fn default() -> Self {
        EngineScript {
            model_name: "mock-engine".into(),
            quantization: None,
            parameter_count: None,
            model_load_ms: None,
            prompt_tokens: PromptTokenRule::Whitespace,
            pieces: vec![
                ScriptPiece::new(20, "The"),
                ScriptPiece::new(20, " predicted"),
                ScriptPiece::new(20, " level"),
                ScriptPiece::new(20, " is"),
                ScriptPiece::new(20, " 3"),
            ],
        }
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mut script = EngineScript::default();
    while let Some(arg) = args.next() {
        match arg.as_str() {
            "--script" => {
                let path = args.next().unwrap_or_else(|| {
                    eprintln!("--script needs a file path");
                    std::process::exit(2);
                });
                let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
                    eprintln!("cannot read {path}: {e}");
                    std::process::exit(2);
                });
                script = serde_json::from_str(&text).unwrap_or_else(|e| {
                    eprintln!("bad script {path}: {e}");
                    std::process::exit(2);
                });
            }
            other => {
                eprintln!("unknown argument {other:?}");
                std::process::exit(2);
            }
        }
    }

    if let Some(load_ms) = script.model_load_ms {
        // Pretend to load the model once at startup.
        std::thread::sleep(std::time::Duration::from_millis(load_ms as u64));
    }

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    for line in stdin.lock().lines() {
        let line = match line {
            Ok(l) => l,
            Err(_) => break,
        };
        if line.trim().is_empty() {
            continue;
        }
        let mut out = stdout.lock();
        match serde_json::from_str::<EngineRequest>(&line) {
            Ok(request) => serve(&script, &request, &mut out),
            Err(e) => {
                emit(
                    &mut out,
                    &EngineEvent::Error {
                        message: format!("bad request: {e}"),
                    },
                );
            }
        }
    }
}

fn serve(script: &EngineScript, request: &EngineRequest, out: &mut impl Write) {
    emit(
        out,
        &EngineEvent::Header {
            prompt_token_count: script.prompt_tokens.count(&request.prompt),
            model_name: Some(script.model_name.clone()),
            parameter_count: script.parameter_count,
            quantization: script.quantization.clone(),
            model_load_ms: script.model_load_ms,
        },
    );

    let mut emitted = String::new();
    let capped = script.pieces.iter().take(request.max_new_tokens as usize);
    for (index, piece) in capped.enumerate() {
        if piece.delay_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(piece.delay_ms));
        }
        emit(
            out,
            &EngineEvent::Token {
                index,
                text: piece.text.clone(),
            },
        );
        emitted.push_str(&piece.text);
        if request
            .stop_sequences
            .iter()
            .any(|s| !s.is_empty() && emitted.contains(s))
        {
            break;
        }
    }
    emit(out, &EngineEvent::Done {});
}

fn emit(out: &mut impl Write, event: &EngineEvent) {
    let line = serde_json::to_string(event).expect("engine events serialize");
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}
