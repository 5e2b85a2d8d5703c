//! Shared helpers for the integration and acceptance suites.

use std::path::{Path, PathBuf};

use slmbench::harness::config::{DatasetConfig, DatasetFile, TaskOverride};
use slmbench::harness::{BackendConfig, RunConfig, SplitConfig};
use slmbench::ingest::Task;

/// Run one acceptance criterion and print its PASS/FAIL line.
#[allow(dead_code)]
pub fn criterion(n: u32, description: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("ACCEPTANCE {n} PASS - {description}"),
        Err(reason) => {
            println!("ACCEPTANCE {n} FAIL - {description}: {reason}");
            panic!("acceptance criterion {n} failed: {reason}");
        }
    }
}

/// A baseline config over the given dataset CSVs: all four tasks, default
/// splits, mock backend (callers override as needed), one repeat.
#[allow(dead_code)]
pub fn config_for_dataset(paths: &[PathBuf], output_dir: PathBuf) -> RunConfig {
    RunConfig {
        dataset: DatasetConfig {
            files: paths
                .iter()
                .map(|p| DatasetFile {
                    path: p.clone(),
                    participant_id: None,
                })
                .collect(),
            delimiter: ',',
            columns: Default::default(),
        },
        tasks: Task::ALL.into_iter().map(TaskOverride::for_task).collect(),
        windowing: Default::default(),
        split: SplitConfig {
            ratio: 0.8,
            seed: 7,
        },
        backend: BackendConfig::Mock {
            script: vec![slmbench::harness::config::MockPiece {
                delay_ms: 0,
                text: " 3".into(),
            }],
            prompt_tokens: Default::default(),
            name: None,
        },
        generation: Default::default(),
        invalid_policy: Default::default(),
        match_order: Default::default(),
        repeat: 1,
        profiler: Default::default(),
        output_dir,
        retries: 2,
        eval_parallelism: 1,
        series_decimals: Default::default(),
        templates: Default::default(),
    }
}

/// Write a tiny valid dataset and a JSON config file next to it; returns
/// the config path. Used by CLI tests.
#[allow(dead_code)]
pub fn write_cli_fixture(dir: &Path) -> PathBuf {
    let logs = slmbench::synth::synthetic_logs(2, 30, 5);
    let paths = slmbench::synth::write_logs_as_csv(&logs, &dir.join("data")).unwrap();
    let config = serde_json::json!({
        "dataset": {
            "files": paths.iter().map(|p| serde_json::json!({"path": p})).collect::<Vec<_>>(),
        },
        "backend": {"kind": "mock", "script": [{"text": " 3"}]},
        "repeat": 1,
        "output_dir": dir.join("out"),
    });
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    config_path
}
