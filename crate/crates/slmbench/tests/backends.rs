//! Adapter integration tests: the subprocess adapter against the shipped
//! engine shim, and the HTTP adapter against a canned local SSE server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use slmbench::inference::http::{HttpBackend, HttpConfig};
use slmbench::inference::subprocess::{SubprocessBackend, SubprocessConfig};
use slmbench::inference::{Backend, BackendError, Clock, GenerationParams};

fn mock_engine_path() -> String {
    env!("CARGO_BIN_EXE_slmbench-mock-engine").to_string()
}

fn engine_config(script_path: Option<PathBuf>) -> SubprocessConfig {
    SubprocessConfig {
        command: mock_engine_path(),
        args: script_path
            .map(|p| vec!["--script".to_string(), p.display().to_string()])
            .unwrap_or_default(),
        model_path: None,
        model_name: None,
        quantization: None,
        parameter_count: None,
    }
}

fn write_script(dir: &std::path::Path, json: &str) -> PathBuf {
    let path = dir.join("script.json");
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn subprocess_streams_scripted_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(
        dir.path(),
        r#"{
            "model_name": "scripted-engine",
            "quantization": "Q4",
            "model_load_ms": 5.0,
            "prompt_tokens": "whitespace",
            "pieces": [
                {"delay_ms": 50, "text": " 4"},
                {"delay_ms": 30, "text": " out"},
                {"delay_ms": 30, "text": " of"},
                {"delay_ms": 30, "text": " 5"}
            ]
        }"#,
    );
    let clock = Clock::new();
    let mut backend = SubprocessBackend::spawn(&engine_config(Some(script)), clock).unwrap();
    let params = GenerationParams {
        stop_sequences: vec![],
        ..Default::default()
    };

    let result = backend.generate("count from one to five", &params).unwrap();
    result.validate().unwrap();
    assert_eq!(result.completion_text, " 4 out of 5");
    assert_eq!(result.output_token_count, 4);
    assert_eq!(result.prompt_token_count, 5);
    assert!(result.model_load_ns.is_some());
    let ttft_ms = (result.t_first_token_ns - result.t_request_ns) as f64 / 1e6;
    assert!(ttft_ms >= 45.0, "ttft {ttft_ms} ms");
    assert!(result.t_done_ns >= result.t_last_token_ns);

    // Metadata learned from the header.
    let descriptor = backend.probe().unwrap();
    assert_eq!(descriptor.name, "scripted-engine");
    assert_eq!(descriptor.quantization.as_deref(), Some("Q4"));
    assert!(backend.target_pid().is_some());

    // Back-to-back requests reuse the same child cleanly.
    let again = backend
        .generate("another prompt entirely", &params)
        .unwrap();
    assert_eq!(again.completion_text, " 4 out of 5");
}

#[test]
fn subprocess_enforces_token_cap() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(
        dir.path(),
        r#"{"pieces": [
            {"delay_ms": 0, "text": "a"},
            {"delay_ms": 0, "text": "b"},
            {"delay_ms": 0, "text": "c"}
        ]}"#,
    );
    let clock = Clock::new();
    let mut backend = SubprocessBackend::spawn(&engine_config(Some(script)), clock).unwrap();
    let params = GenerationParams {
        max_new_tokens: 1,
        stop_sequences: vec![],
        ..Default::default()
    };
    let result = backend.generate("p", &params).unwrap();
    assert_eq!(result.output_token_count, 1);
    assert_eq!(result.completion_text, "a");

    // The stream stayed in sync for the next request.
    let result = backend.generate("p", &params).unwrap();
    assert_eq!(result.completion_text, "a");
}

#[test]
fn subprocess_applies_stop_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(
        dir.path(),
        r#"{"pieces": [
            {"delay_ms": 0, "text": " 4"},
            {"delay_ms": 0, "text": "\n"},
            {"delay_ms": 0, "text": "junk"}
        ]}"#,
    );
    let clock = Clock::new();
    let mut backend = SubprocessBackend::spawn(&engine_config(Some(script)), clock).unwrap();
    let result = backend.generate("p", &GenerationParams::default()).unwrap();
    assert_eq!(result.completion_text, " 4");
}

#[test]
fn subprocess_empty_script_is_empty_generation() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path(), r#"{"pieces": []}"#);
    let clock = Clock::new();
    let mut backend = SubprocessBackend::spawn(&engine_config(Some(script)), clock).unwrap();
    let err = backend
        .generate("p", &GenerationParams::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::EmptyGeneration), "got {err:?}");
}

#[test]
fn subprocess_engine_exit_is_transport_error() {
    // A child that exits after consuming the request produces EOF.
    let config = SubprocessConfig {
        command: "sh".into(),
        args: vec!["-c".into(), "read _line; exit 0".into()],
        model_path: None,
        model_name: Some("dying-engine".into()),
        quantization: None,
        parameter_count: None,
    };
    let clock = Clock::new();
    let mut backend = SubprocessBackend::spawn(&config, clock).unwrap();
    let err = backend
        .generate("p", &GenerationParams::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport { .. }), "got {err:?}");
}

/// Minimal SSE completion server: accepts `n` connections sequentially and
/// replays the same chunk script for each.
fn spawn_sse_server(
    chunks: Vec<(u64, String)>,
    requests: usize,
) -> (String, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = std::thread::spawn(move || {
        for _ in 0..requests {
            let (mut stream, _) = listener.accept().unwrap();
            read_http_request(&mut stream);
            let head =
                "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nConnection: close\r\n\r\n";
            stream.write_all(head.as_bytes()).unwrap();
            stream.flush().unwrap();
            for (delay_ms, data) in &chunks {
                if *delay_ms > 0 {
                    std::thread::sleep(Duration::from_millis(*delay_ms));
                }
                stream
                    .write_all(format!("data: {data}\n\n").as_bytes())
                    .unwrap();
                stream.flush().unwrap();
            }
        }
    });
    (format!("http://{addr}"), handle)
}

fn read_http_request(stream: &mut std::net::TcpStream) {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    // Headers end at the blank line.
    while !buf.ends_with(b"\r\n\r\n") {
        if stream.read(&mut byte).unwrap_or(0) == 0 {
            return;
        }
        buf.push(byte[0]);
    }
    let headers = String::from_utf8_lossy(&buf).to_lowercase();
    let content_length = headers
        .lines()
        .find_map(|l| l.strip_prefix("content-length:"))
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0u8; content_length];
    let _ = stream.read_exact(&mut body);
}

fn http_config(base_url: String) -> HttpConfig {
    HttpConfig {
        base_url,
        model: Some("sse-test".into()),
        api_key: None,
        timeout_s: 30,
        quantization: None,
        parameter_count: None,
    }
}

#[test]
fn http_adapter_consumes_sse_stream() {
    let chunks = vec![
        (60, r#"{"choices":[{"text":"The"}]}"#.to_string()),
        (40, r#"{"choices":[{"text":" predicted"}]}"#.to_string()),
        (40, r#"{"choices":[{"text":" level is 4"}]}"#.to_string()),
        (
            0,
            r#"{"choices":[],"usage":{"prompt_tokens":214}}"#.to_string(),
        ),
        (0, "[DONE]".to_string()),
    ];
    let (base_url, server) = spawn_sse_server(chunks, 1);
    let clock = Clock::new();
    let mut backend = HttpBackend::new(http_config(base_url), clock).unwrap();
    let params = GenerationParams {
        stop_sequences: vec![],
        ..Default::default()
    };

    let result = backend.generate("how high is the level", &params).unwrap();
    result.validate().unwrap();
    assert_eq!(result.completion_text, "The predicted level is 4");
    assert_eq!(result.output_token_count, 3);
    assert_eq!(result.prompt_token_count, 214);
    let ttft_ms = (result.t_first_token_ns - result.t_request_ns) as f64 / 1e6;
    assert!(
        ttft_ms >= 50.0,
        "ttft {ttft_ms} ms includes the first chunk delay"
    );
    assert!(result.t_done_ns >= result.t_last_token_ns);
    server.join().unwrap();
}

#[test]
fn http_adapter_is_deterministic_against_a_deterministic_server() {
    let chunks = vec![
        (0, r#"{"choices":[{"text":" 2"}]}"#.to_string()),
        (0, "[DONE]".to_string()),
    ];
    let (base_url, server) = spawn_sse_server(chunks, 2);
    let clock = Clock::new();
    let mut backend = HttpBackend::new(http_config(base_url), clock).unwrap();
    let params = GenerationParams {
        temperature: 0.0,
        seed: Some(3),
        ..Default::default()
    };

    let a = backend.generate("p", &params).unwrap();
    let b = backend.generate("p", &params).unwrap();
    assert_eq!(a.completion_text, b.completion_text);
    assert_eq!(a.completion_text, " 2");
    server.join().unwrap();
}

#[test]
fn http_adapter_caps_and_crops() {
    let chunks = vec![
        (0, r#"{"choices":[{"text":" 4"}]}"#.to_string()),
        (0, r#"{"choices":[{"text":"\nrest"}]}"#.to_string()),
        (0, r#"{"choices":[{"text":" more"}]}"#.to_string()),
        (0, "[DONE]".to_string()),
    ];
    let (base_url, server) = spawn_sse_server(chunks, 2);
    let clock = Clock::new();
    let mut backend = HttpBackend::new(http_config(base_url), clock).unwrap();
    // Default params stop at the first newline.
    let result = backend.generate("p", &GenerationParams::default()).unwrap();
    assert_eq!(result.completion_text, " 4");
    assert_eq!(result.output_token_count, 1);

    // max_new_tokens caps client-side as well.
    let params = GenerationParams { max_new_tokens: 1, stop_sequences: vec![], ..Default::default() };
    let result = backend.generate("p", &params).unwrap();
    assert_eq!(result.output_token_count, 1);
    assert_eq!(result.completion_text, " 4");
    server.join().unwrap();
}

#[test]
fn http_error_statuses_classify() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        for (status, body) in [
            ("500 Internal Server Error", "boom"),
            ("400 Bad Request", "prompt exceeds the context window"),
        ] {
            let (mut stream, _) = listener.accept().unwrap();
            read_http_request(&mut stream);
            let response = format!(
                "HTTP/1.1 {status}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });

    let clock = Clock::new();
    let mut backend = HttpBackend::new(http_config(format!("http://{addr}")), clock).unwrap();
    let err = backend
        .generate("p", &GenerationParams::default())
        .unwrap_err();
    assert!(err.is_retryable(), "5xx should be retryable, got {err:?}");
    let err = backend
        .generate("p", &GenerationParams::default())
        .unwrap_err();
    assert!(matches!(err, BackendError::Capacity(_)), "got {err:?}");
    server.join().unwrap();
}

#[test]
fn http_probe_reads_model_list() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        read_http_request(&mut stream);
        let body = r#"{"data":[{"id":"tiny-q4","object":"model"}]}"#;
        let response = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(response.as_bytes()).unwrap();
    });

    let clock = Clock::new();
    let backend = HttpBackend::new(http_config(format!("http://{addr}")), clock).unwrap();
    let descriptor = backend.probe().unwrap();
    assert_eq!(descriptor.name, "tiny-q4");
    server.join().unwrap();
}

#[test]
fn event_invariants_hold_across_adapters() {
    // Same scripted content through the subprocess adapter and the HTTP
    // adapter: indices contiguous, pieces concatenate to the completion.
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(
        dir.path(),
        r#"{"pieces": [
            {"delay_ms": 0, "text": "alpha"},
            {"delay_ms": 0, "text": " beta"},
            {"delay_ms": 0, "text": " gamma"}
        ]}"#,
    );
    let clock = Clock::new();
    let mut sub = SubprocessBackend::spawn(&engine_config(Some(script)), clock.clone()).unwrap();
    let params = GenerationParams {
        stop_sequences: vec![],
        ..Default::default()
    };
    let sub_result = sub.generate("p", &params).unwrap();

    let chunks = vec![
        (0, r#"{"choices":[{"text":"alpha"}]}"#.to_string()),
        (0, r#"{"choices":[{"text":" beta"}]}"#.to_string()),
        (0, r#"{"choices":[{"text":" gamma"}]}"#.to_string()),
        (0, "[DONE]".to_string()),
    ];
    let (base_url, server) = spawn_sse_server(chunks, 1);
    let mut http = HttpBackend::new(http_config(base_url), clock).unwrap();
    let http_result = http.generate("p", &params).unwrap();
    server.join().unwrap();

    for result in [&sub_result, &http_result] {
        result.validate().unwrap();
        assert_eq!(result.completion_text, "alpha beta gamma");
        for (i, event) in result.events.iter().enumerate() {
            assert_eq!(event.index, i);
        }
    }
}

#[test]
fn http_probe_on_a_dead_server_is_a_transport_error() {
    // Bind a port, then drop the listener so nothing is listening.
    let port = {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap().port()
    };
    let clock = Clock::new();
    let backend = HttpBackend::new(http_config(format!("http://127.0.0.1:{port}")), clock).unwrap();
    let err = backend.probe().unwrap_err();
    assert!(matches!(err, BackendError::Transport { .. }), "got {err:?}");
}
