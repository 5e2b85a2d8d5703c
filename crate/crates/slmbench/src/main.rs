//! Command-line entry point.
//!
//! Subcommands: `ingest` (cut and cache windows), `eval` (score the eval
//! split), `profile` (efficiency over a prompt corpus), `report`
//! (re-render tables from one or more run directories).
//!
//! Exit codes: 0 success, 2 config error, 3 backend error, 4 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slmbench::corpus::{format_for_path, load_corpus, CorpusFormat};
use slmbench::harness::{
    render_tables, run_eval, run_ingest, run_profile, HarnessError, RunConfig, RunManifest,
};
use slmbench::metrics::EvalReport;
use slmbench::profiler::EfficiencyReport;

#[derive(Parser)]
#[command(
    name = "slmbench",
    version,
    about = "Health-event prediction benchmark harness for locally served language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override any config key: --set dotted.path=value (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for --set split.seed=N.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for --set output_dir=DIR.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Shorthand for --set invalid_policy=POLICY (discard, clamp, midpoint).
    #[arg(long)]
    invalid_policy: Option<slmbench::extract::InvalidPolicy>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, HarnessError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("split.seed={seed}"));
        }
        if let Some(dir) = &self.output_dir {
            overrides.push(format!("output_dir={}", serde_json::json!(dir)));
        }
        if let Some(policy) = self.invalid_policy {
            overrides.push(format!("invalid_policy={}", serde_json::json!(policy)));
        }
        RunConfig::load(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse the dataset, cut windows, and write the split caches.
    Ingest {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate the eval split against the configured backend.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Profile generation efficiency over a prompt corpus.
    Profile {
        #[command(flatten)]
        config: ConfigArgs,
        /// Corpus file (JSONL with id/prompt/answer, or CSV).
        #[arg(long)]
        corpus: PathBuf,
        /// Corpus format; inferred from the extension when omitted.
        #[arg(long)]
        format: Option<CorpusFormat>,
    },
    /// Re-render tables from finished run directories.
    Report {
        /// One or more run directories written by eval/profile.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        /// Verify each manifest re-extracts to its recorded outcomes.
        #[arg(long)]
        check: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Ingest { config } => {
            let run_config = config.load()?;
            let counts = run_ingest(&run_config)?;
            for (spec, count) in counts {
                println!(
                    "{}: {count} windows (range {}-{}, {} metric, {}-day window)",
                    spec.task.id(),
                    spec.label_min,
                    spec.label_max,
                    spec.metric.id(),
                    spec.window_len
                );
            }
            println!(
                "window caches written under {}",
                run_config.output_dir.join("windows").display()
            );
            Ok(())
        }
        Command::Eval { config } => {
            let run_config = config.load()?;
            let output = run_eval(&run_config)?;
            for report in &output.reports {
                let value = report
                    .value
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "n/a".to_string());
                println!(
                    "{}: {} = {} \u{b1} {:.4} (n={}, invalid={})",
                    report.task.id(),
                    report.metric.id(),
                    value,
                    report.std_dev.unwrap_or(0.0),
                    report.n_total,
                    report.n_invalid
                );
            }
            println!(
                "artifacts written under {}",
                run_config.output_dir.display()
            );
            Ok(())
        }
        Command::Profile {
            config,
            corpus,
            format,
        } => {
            let run_config = config.load()?;
            let fmt = format.unwrap_or_else(|| format_for_path(&corpus));
            let file = std::fs::File::open(&corpus)?;
            let items = load_corpus(file, fmt)?;
            let output = run_profile(&run_config, &items)?;
            println!("{}", output.table);
            println!(
                "{} generations profiled; artifacts under {}",
                output.reports.len(),
                run_config.output_dir.display()
            );
            Ok(())
        }
        Command::Report { runs, check } => report(&runs, check),
    }
}

fn report(runs: &[PathBuf], check: bool) -> Result<(), HarnessError> {
    let mut eval_rows: Vec<(String, Vec<EvalReport>)> = Vec::new();
    let mut eff_rows: Vec<(String, EfficiencyReport)> = Vec::new();
    let mut problems = 0usize;

    for dir in runs {
        let eval_path = dir.join("eval_report.json");
        let mut model_name = dir.display().to_string();
        if eval_path.exists() {
            let text = std::fs::read_to_string(&eval_path)?;
            let doc: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| HarnessError::Data(format!("{}: {e}", eval_path.display())))?;
            if let Some(name) = doc.pointer("/model/name").and_then(|v| v.as_str()) {
                model_name = name.to_string();
            }
            let reports: Vec<EvalReport> = serde_json::from_value(
                doc.get("reports")
                    .cloned()
                    .unwrap_or(serde_json::Value::Array(vec![])),
            )
            .map_err(|e| HarnessError::Data(format!("{}: {e}", eval_path.display())))?;
            if !reports.is_empty() {
                eval_rows.push((model_name.clone(), reports));
            }
        }

        let eff_path = dir.join("efficiency.jsonl");
        if eff_path.exists() {
            let text = std::fs::read_to_string(&eff_path)?;
            let mut reports = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let report: EfficiencyReport = serde_json::from_str(line)
                    .map_err(|e| HarnessError::Data(format!("{}: {e}", eff_path.display())))?;
                reports.push(report);
            }
            let model = reports
                .first()
                .map(|r| r.model.clone())
                .unwrap_or_else(|| slmbench::inference::ModelDescriptor::named(&model_name));
            if let Some(mean) = slmbench::harness::mean_efficiency(&reports, &model) {
                eff_rows.push((model.name.clone(), mean));
            }
        }

        if check {
            let manifest_path = dir.join("manifest.jsonl");
            if manifest_path.exists() {
                let manifest = RunManifest::load(&manifest_path)?;
                let issues = manifest.verify();
                if issues.is_empty() {
                    println!(
                        "{}: manifest consistent ({} records)",
                        dir.display(),
                        manifest.records.len()
                    );
                } else {
                    problems += issues.len();
                    for issue in issues {
                        eprintln!("{}: {issue}", dir.display());
                    }
                }
                if manifest.meta.aborted {
                    eprintln!("{}: run was aborted", dir.display());
                }
            } else {
                eprintln!("{}: no manifest.jsonl", dir.display());
                problems += 1;
            }
        }
    }

    if eval_rows.is_empty() && eff_rows.is_empty() {
        return Err(HarnessError::Data(
            "no reports found in the given run directories".into(),
        ));
    }
    println!("{}", render_tables(&eval_rows, &eff_rows));
    if problems > 0 {
        return Err(HarnessError::Data(format!("{problems} manifest problems")));
    }
    Ok(())
}
