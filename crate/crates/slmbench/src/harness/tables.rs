//! Markdown table rendering for eval and efficiency reports.
//!
//! Columns carry the metric direction arrow; with two or more models the
//! best value per column is bolded. Numbers print with up to 6 significant
//! digits (full precision lives in the JSON artifacts).

use crate::ingest::{MetricKind, Task};
use crate::metrics::EvalReport;
use crate::profiler::EfficiencyReport;

/// Format with up to `sig` significant digits, trimming trailing zeros.
pub fn fmt_sig(value: f64, sig: u32) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let decimals = (sig as i32 - 1 - magnitude).clamp(0, 12) as usize;
    let text = format!("{value:.decimals$}");
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text
    }
}

fn eval_cell(report: &EvalReport) -> String {
    match report.value {
        Some(v) => {
            let std = report.std_dev.unwrap_or(0.0);
            format!("{} \u{b1} {}", fmt_sig(v, 6), fmt_sig(std, 3))
        }
        None => format!("n/a (all {} invalid)", report.n_invalid),
    }
}

/// Render one eval table: a row per model, a column per task.
pub fn render_eval_table(rows: &[(String, Vec<EvalReport>)]) -> String {
    let mut tasks: Vec<(Task, MetricKind)> = Vec::new();
    for (_, reports) in rows {
        for report in reports {
            if !tasks.iter().any(|(t, _)| *t == report.task) {
                tasks.push((report.task, report.metric));
            }
        }
    }
    tasks.sort_by_key(|(t, _)| Task::ALL.iter().position(|x| x == t));

    let mut header = String::from("| Model |");
    let mut rule = String::from("|---|");
    for (task, metric) in &tasks {
        header.push_str(&format!(
            " {} ({}) |",
            task.display_name().to_uppercase(),
            metric.arrow()
        ));
        rule.push_str("---|");
    }

    // Best value per task column, only meaningful with >= 2 models.
    let bold_best = rows.len() >= 2;
    let mut best: Vec<Option<f64>> = vec![None; tasks.len()];
    if bold_best {
        for (ti, (task, metric)) in tasks.iter().enumerate() {
            let values = rows.iter().filter_map(|(_, reports)| {
                reports
                    .iter()
                    .find(|r| r.task == *task)
                    .and_then(|r| r.value)
            });
            best[ti] = if metric.higher_is_better() {
                values.fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                })
            } else {
                values.fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.min(v)))
                })
            };
        }
    }

    let mut out = format!("{header}\n{rule}\n");
    for (model, reports) in rows {
        out.push_str(&format!("| {model} |"));
        for (ti, (task, _)) in tasks.iter().enumerate() {
            match reports.iter().find(|r| r.task == *task) {
                Some(report) => {
                    let cell = eval_cell(report);
                    let is_best = bold_best
                        && report.value.is_some()
                        && best[ti].is_some_and(|b| {
                            (report.value.unwrap() - b).abs() <= f64::EPSILON * b.abs().max(1.0)
                        });
                    if is_best {
                        out.push_str(&format!(" **{cell}** |"));
                    } else {
                        out.push_str(&format!(" {cell} |"));
                    }
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

const EFF_COLUMNS: [(&str, bool); 7] = [
    ("TTFT(s)", false),
    ("ITPS(/s)", true),
    ("OET(s)", false),
    ("OTPS(/s)", true),
    ("Total Time(s)", false),
    ("CPU(%)", false),
    ("RAM(GB)", false),
];

fn eff_values(report: &EfficiencyReport) -> [Option<f64>; 7] {
    [
        Some(report.ttft_s),
        report.itps_tok_per_s,
        Some(report.oet_s),
        report.otps_tok_per_s,
        Some(report.total_s),
        report.cpu_pct_mean,
        report.ram_gb_peak,
    ]
}

/// Render one efficiency table: a row per model, the seven metric columns.
pub fn render_efficiency_table(rows: &[(String, EfficiencyReport)]) -> String {
    let mut header = String::from("| Model |");
    let mut rule = String::from("|---|");
    for (name, higher_better) in EFF_COLUMNS {
        let arrow = if higher_better {
            "\u{2191}"
        } else {
            "\u{2193}"
        };
        header.push_str(&format!(" {name} ({arrow}) |"));
        rule.push_str("---|");
    }

    let bold_best = rows.len() >= 2;
    let mut best: Vec<Option<f64>> = vec![None; EFF_COLUMNS.len()];
    if bold_best {
        for (ci, (_, higher_better)) in EFF_COLUMNS.iter().enumerate() {
            let values = rows.iter().filter_map(|(_, r)| eff_values(r)[ci]);
            best[ci] = if *higher_better {
                values.fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                })
            } else {
                values.fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.min(v)))
                })
            };
        }
    }

    let mut out = format!("{header}\n{rule}\n");
    for (model, report) in rows {
        out.push_str(&format!("| {model} |"));
        for (ci, value) in eff_values(report).iter().enumerate() {
            match value {
                Some(v) => {
                    let cell = fmt_sig(*v, 6);
                    let is_best = bold_best
                        && best[ci]
                            .is_some_and(|b| (v - b).abs() <= f64::EPSILON * b.abs().max(1.0));
                    if is_best {
                        out.push_str(&format!(" **{cell}** |"));
                    } else {
                        out.push_str(&format!(" {cell} |"));
                    }
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Render whichever tables have data, separated by a blank line.
pub fn render_tables(
    eval_rows: &[(String, Vec<EvalReport>)],
    efficiency_rows: &[(String, EfficiencyReport)],
) -> String {
    let mut sections = Vec::new();
    if !eval_rows.is_empty() {
        sections.push(format!(
            "## Prediction quality\n\n{}",
            render_eval_table(eval_rows)
        ));
    }
    if !efficiency_rows.is_empty() {
        sections.push(format!(
            "## Efficiency & utilization\n\n{}",
            render_efficiency_table(efficiency_rows)
        ));
    }
    sections.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ModelDescriptor;

    fn report(task: Task, metric: MetricKind, value: f64) -> EvalReport {
        EvalReport {
            task,
            metric,
            value: Some(value),
            std_dev: Some(0.1),
            n_total: 10,
            n_valid: 10,
            n_invalid: 0,
            per_run: vec![Some(value)],
        }
    }

    #[test]
    fn sig_digit_formatting() {
        assert_eq!(fmt_sig(0.0, 6), "0");
        assert_eq!(fmt_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(fmt_sig(66.66666666666667, 6), "66.6667");
        assert_eq!(fmt_sig(100.0, 6), "100");
        assert_eq!(fmt_sig(2000.0, 6), "2000");
        assert_eq!(fmt_sig(0.5, 3), "0.5");
    }

    #[test]
    fn eval_table_has_arrows_and_bolds_best() {
        let rows = vec![
            (
                "model-a".to_string(),
                vec![
                    report(Task::Stress, MetricKind::Mae, 0.5),
                    report(Task::Fatigue, MetricKind::Accuracy, 60.0),
                ],
            ),
            (
                "model-b".to_string(),
                vec![
                    report(Task::Stress, MetricKind::Mae, 0.4),
                    report(Task::Fatigue, MetricKind::Accuracy, 55.0),
                ],
            ),
        ];
        let table = render_eval_table(&rows);
        assert!(table.contains("STRESS (\u{2193})"));
        assert!(table.contains("FATIGUE (\u{2191})"));
        // Lower MAE and higher accuracy win.
        assert!(table.contains("| model-b | **0.4 \u{b1} 0.1** |"));
        assert!(table.contains("**60 \u{b1} 0.1**"));
    }

    #[test]
    fn single_model_table_has_no_bold() {
        let rows = vec![(
            "only".to_string(),
            vec![report(Task::Stress, MetricKind::Mae, 0.5)],
        )];
        let table = render_eval_table(&rows);
        assert!(!table.contains("**"));
    }

    #[test]
    fn efficiency_table_renders_absent_fields_as_dash() {
        let report = EfficiencyReport {
            ttft_s: 0.5,
            itps_tok_per_s: None,
            oet_s: 1.0,
            otps_tok_per_s: Some(20.0),
            total_s: 1.6,
            cpu_pct_mean: None,
            ram_gb_peak: None,
            prompt_tokens: Some(10),
            output_tokens: Some(20),
            model: ModelDescriptor::named("m"),
            model_load_s: None,
            flags: vec![],
        };
        let table = render_efficiency_table(&[("m".to_string(), report)]);
        assert!(table.contains("| m | 0.5 | - | 1 | 20 | 1.6 | - | - |"));
    }
}
