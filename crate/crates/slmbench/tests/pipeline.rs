//! End-to-end harness tests: determinism, manifest self-consistency,
//! split hygiene, profiled eval runs, parallel evaluation, and the abort
//! path.

use std::path::PathBuf;

use slmbench::harness::{run_eval, run_profile, BackendConfig, RunConfig, RunManifest};
use slmbench::inference::mock::PromptTokenRule;
use slmbench::ingest::Task;
use slmbench::synth::{synthetic_logs, write_logs_as_csv};

mod support;
use support::config_for_dataset;

fn dataset_in(dir: &std::path::Path) -> Vec<PathBuf> {
    let logs = synthetic_logs(2, 40, 11);
    write_logs_as_csv(&logs, &dir.join("data")).unwrap()
}

fn manifest_path(config: &RunConfig) -> PathBuf {
    config.output_dir.join("manifest.jsonl")
}

#[test]
fn oracle_run_manifest_is_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    config.backend = BackendConfig::Oracle {};
    config.repeat = 2;

    let output = run_eval(&config).unwrap();
    assert!(!output.manifest.records.is_empty());
    assert!(!output.manifest.meta.aborted);

    // Reload from disk and re-check everything.
    let manifest = RunManifest::load(&manifest_path(&config)).unwrap();
    assert_eq!(manifest.records.len(), output.manifest.records.len());
    let problems = manifest.verify();
    assert!(problems.is_empty(), "{problems:?}");

    // Train and eval never intersect, and only eval windows were queried.
    for (task_id, split) in &manifest.meta.splits {
        let eval: std::collections::HashSet<_> = split.eval.iter().collect();
        for id in &split.train {
            assert!(!eval.contains(id), "{task_id}: {id} in both splits");
        }
    }
    for record in &manifest.records {
        let split = &manifest.meta.splits[record.task.id()];
        assert!(split.eval.contains(&record.window_id));
        assert_eq!(
            record.resolved,
            Some(record.label),
            "oracle must echo the label"
        );
    }

    // Every repeat evaluated every eval window exactly once.
    let eval_total: usize = manifest.meta.splits.values().map(|s| s.eval.len()).sum();
    assert_eq!(manifest.records.len(), eval_total * 2);
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());

    let mut config_a = config_for_dataset(&paths, dir.path().join("out_a"));
    config_a.repeat = 2;
    let mut config_b = config_a.clone();
    config_b.output_dir = dir.path().join("out_b");

    let out_a = run_eval(&config_a).unwrap();
    let out_b = run_eval(&config_b).unwrap();

    // Reports agree bit-for-bit.
    let json_a = serde_json::to_string(&out_a.reports).unwrap();
    let json_b = serde_json::to_string(&out_b.reports).unwrap();
    assert_eq!(json_a, json_b);

    // Manifests agree modulo timestamps: records and splits are identical.
    assert_eq!(out_a.manifest.records, out_b.manifest.records);
    assert_eq!(out_a.manifest.meta.splits, out_b.manifest.meta.splits);

    // The artifact layout is complete.
    for name in [
        "config.json",
        "manifest.jsonl",
        "eval_report.json",
        "efficiency.jsonl",
        "tables.md",
    ] {
        assert!(config_a.output_dir.join(name).exists(), "missing {name}");
    }
    assert!(config_a
        .output_dir
        .join("windows/stress.train.jsonl")
        .exists());
    assert!(config_a
        .output_dir
        .join("windows/stress.eval.jsonl")
        .exists());
}

#[test]
fn mock_runs_score_against_constant_answer() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    config.repeat = 3;

    let output = run_eval(&config).unwrap();
    // The constant " 3" answer is always in range for 1-5 tasks, so no
    // invalid pairs there; readiness (0-10) also contains 3.
    for report in &output.reports {
        assert_eq!(report.n_invalid, 0, "{}", report.task.id());
        assert!(report.value.is_some());
        assert_eq!(report.per_run.len(), 3);
        // Identical repeats aggregate with zero dispersion.
        assert_eq!(report.std_dev, Some(0.0));
    }
}

#[test]
fn profiled_eval_attaches_efficiency_reports() {
    let dir = tempfile::tempdir().unwrap();
    let logs = synthetic_logs(1, 22, 3);
    let paths = write_logs_as_csv(&logs, &dir.path().join("data")).unwrap();
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    config.tasks = vec![slmbench::harness::config::TaskOverride::for_task(
        Task::Stress,
    )];
    config.backend = BackendConfig::Mock {
        script: vec![
            slmbench::harness::config::MockPiece {
                delay_ms: 30,
                text: " 3".into(),
            },
            slmbench::harness::config::MockPiece {
                delay_ms: 30,
                text: " done".into(),
            },
        ],
        prompt_tokens: PromptTokenRule::Whitespace,
        name: Some("profiled-mock".into()),
    };
    config.profiler.enabled = true;
    config.profiler.period_ms = 10;
    config.repeat = 1;

    let output = run_eval(&config).unwrap();
    assert!(!output.manifest.records.is_empty());
    assert_eq!(output.efficiency.len(), output.manifest.records.len());
    for record in &output.manifest.records {
        let idx = record.efficiency_index.expect("profiled runs link reports");
        let report = &output.efficiency[idx];
        assert!(report.ttft_s > 0.0);
        assert!(
            report.cpu_pct_mean.is_some(),
            "sampler should cover the generation"
        );
    }

    // efficiency.jsonl parses back line by line.
    let text = std::fs::read_to_string(config.output_dir.join("efficiency.jsonl")).unwrap();
    let parsed: Vec<slmbench::profiler::EfficiencyReport> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(parsed.len(), output.efficiency.len());
}

#[test]
fn parallel_evaluation_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());

    let mut sequential = config_for_dataset(&paths, dir.path().join("out_seq"));
    sequential.repeat = 1;
    let mut parallel = sequential.clone();
    parallel.eval_parallelism = 4;
    parallel.output_dir = dir.path().join("out_par");

    let out_seq = run_eval(&sequential).unwrap();
    let out_par = run_eval(&parallel).unwrap();
    assert_eq!(
        serde_json::to_string(&out_seq.reports).unwrap(),
        serde_json::to_string(&out_par.reports).unwrap()
    );
    assert_eq!(out_seq.manifest.records, out_par.manifest.records);
}

#[test]
fn backend_failure_aborts_with_partial_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    // An engine that serves exactly one request and exits: the second
    // generation hits EOF and the run must abort.
    let script = r#"read _line
printf '%s\n' '{"type":"header","prompt_token_count":1}'
printf '%s\n' '{"type":"token","index":0,"text":" 3"}'
printf '%s\n' '{"type":"done"}'
exit 0
"#;
    let script_path = dir.path().join("one_shot.sh");
    std::fs::write(&script_path, script).unwrap();
    config.backend = BackendConfig::Subprocess(slmbench::inference::subprocess::SubprocessConfig {
        command: "sh".into(),
        args: vec![script_path.display().to_string()],
        model_path: None,
        model_name: Some("one-shot".into()),
        quantization: None,
        parameter_count: None,
    });
    config.repeat = 1;
    config.retries = 1;

    let err = run_eval(&config).unwrap_err();
    assert!(
        matches!(err, slmbench::harness::HarnessError::Aborted(_)),
        "got {err:?}"
    );

    let manifest = RunManifest::load(&manifest_path(&config)).unwrap();
    assert!(manifest.meta.aborted);
    // Exactly the first generation made it in.
    assert_eq!(manifest.records.len(), 1);
    assert!(manifest.verify().is_empty());
}

#[test]
fn profile_run_aggregates_corpus_items() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    config.backend = BackendConfig::Mock {
        script: vec![
            slmbench::harness::config::MockPiece {
                delay_ms: 20,
                text: "The".into(),
            },
            slmbench::harness::config::MockPiece {
                delay_ms: 20,
                text: " answer".into(),
            },
            slmbench::harness::config::MockPiece {
                delay_ms: 20,
                text: " is 42".into(),
            },
        ],
        prompt_tokens: PromptTokenRule::Whitespace,
        name: Some("profile-mock".into()),
    };
    config.profiler.period_ms = 10;
    config.profiler.dump_samples = true;

    let corpus = vec![
        slmbench::corpus::CorpusItem {
            id: "q1".into(),
            prompt: "What is six times seven?".into(),
            reference_answer: None,
        },
        slmbench::corpus::CorpusItem {
            id: "q2".into(),
            prompt: "Name a prime above forty.".into(),
            reference_answer: None,
        },
    ];
    let output = run_profile(&config, &corpus).unwrap();
    assert_eq!(output.reports.len(), 2);
    for report in &output.reports {
        assert!(report.ttft_s > 0.0);
        assert!(report.otps_tok_per_s.is_some());
    }
    assert!(output.aggregate.has_flag("aggregate-mean"));
    assert!(output.table.contains("profile-mock"));
    assert!(config.output_dir.join("efficiency.jsonl").exists());
    assert!(config.output_dir.join("tables.md").exists());
    assert!(config.output_dir.join("samples/q1.csv").exists());
    assert!(config.output_dir.join("samples/q2.csv").exists());
}

#[test]
fn empty_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let config = config_for_dataset(&paths, dir.path().join("out"));
    let err = run_profile(&config, &[]).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn invalid_policies_flow_through_reports() {
    // The mock answers " 9": out of range for stress 1-5.
    let dir = tempfile::tempdir().unwrap();
    let paths = dataset_in(dir.path());
    let mut config = config_for_dataset(&paths, dir.path().join("out"));
    config.tasks = vec![slmbench::harness::config::TaskOverride::for_task(
        Task::Stress,
    )];
    config.backend = BackendConfig::Mock {
        script: vec![slmbench::harness::config::MockPiece {
            delay_ms: 0,
            text: " 9".into(),
        }],
        prompt_tokens: PromptTokenRule::Whitespace,
        name: None,
    };
    config.repeat = 1;

    // Discard: everything invalid, value undefined but counts visible.
    let discard = run_eval(&config).unwrap();
    assert_eq!(discard.reports[0].value, None);
    assert_eq!(discard.reports[0].n_valid, 0);
    assert!(discard.reports[0].n_invalid > 0);

    // Clamp: 9 clamps to 5.
    config.invalid_policy = slmbench::extract::InvalidPolicy::Clamp;
    config.output_dir = dir.path().join("out_clamp");
    let clamp = run_eval(&config).unwrap();
    assert!(clamp.reports[0].value.is_some());
    assert_eq!(clamp.reports[0].n_invalid, 0);
    let manifest = RunManifest::load(&manifest_path(&config)).unwrap();
    assert!(manifest.records.iter().all(|r| r.resolved == Some(5)));
}
