//! MAE / accuracy scoring and mean-and-std aggregation across repeats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{resolve_prediction, ExtractionOutcome, InvalidPolicy};
use crate::ingest::{MetricKind, Task, TaskSpec};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
}

/// Mean absolute error between aligned integer predictions and labels.
pub fn mae(predictions: &[i64], labels: &[i64]) -> Result<f64, MetricsError> {
    check_lengths(predictions, labels)?;
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - l).abs() as f64)
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Exact-match hit rate in percent.
pub fn accuracy(predictions: &[i64], labels: &[i64]) -> Result<f64, MetricsError> {
    check_lengths(predictions, labels)?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(100.0 * hits as f64 / predictions.len() as f64)
}

fn check_lengths(predictions: &[i64], labels: &[i64]) -> Result<(), MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::Contract(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(MetricsError::Undefined("no prediction/label pairs".into()));
    }
    Ok(())
}

/// Arithmetic mean and sample standard deviation (n-1 denominator, 0 for a
/// single value).
pub fn aggregate_runs(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Contract(
            "aggregate_runs on empty input".into(),
        ));
    }
    // Constant inputs must report exactly zero dispersion; summing first
    // can lose an ulp and turn it into ~1e-16.
    if values.windows(2).all(|w| w[0] == w[1]) {
        return Ok((values[0], 0.0));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt()
    };
    Ok((mean, std))
}

/// Scored result for one task, possibly aggregated over repeated runs.
///
/// `value` is the metric in its native unit (MAE in label units, accuracy
/// in percent) and is absent when every retained pair set was empty. The
/// retained-pair shrinkage is always visible through `n_invalid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metric: MetricKind,
    pub value: Option<f64>,
    pub std_dev: Option<f64>,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
    /// Metric value per run; `null` wherever a run retained zero pairs.
    pub per_run: Vec<Option<f64>>,
}

impl EvalReport {
    fn check(self) -> Result<Self, MetricsError> {
        if self.n_valid + self.n_invalid != self.n_total {
            return Err(MetricsError::Contract(format!(
                "count mismatch: {} valid + {} invalid != {} total",
                self.n_valid, self.n_invalid, self.n_total
            )));
        }
        if let Some(v) = self.value {
            let ok = match self.metric {
                MetricKind::Mae => v >= 0.0,
                MetricKind::Accuracy => (0.0..=100.0).contains(&v),
            };
            if !ok {
                return Err(MetricsError::Contract(format!(
                    "{} value {v} outside its domain",
                    self.metric.id()
                )));
            }
        }
        Ok(self)
    }

    /// Merge single-run reports for the same task into one aggregated
    /// report with mean and sample std over the defined run values.
    pub fn aggregate(runs: &[EvalReport]) -> Result<EvalReport, MetricsError> {
        let first = runs
            .first()
            .ok_or_else(|| MetricsError::Contract("aggregate of zero runs".into()))?;
        if runs
            .iter()
            .any(|r| r.task != first.task || r.metric != first.metric)
        {
            return Err(MetricsError::Contract(
                "aggregating mixed task reports".into(),
            ));
        }
        let per_run: Vec<Option<f64>> = runs.iter().flat_map(|r| r.per_run.clone()).collect();
        let defined: Vec<f64> = per_run.iter().flatten().copied().collect();
        let (value, std_dev) = if defined.is_empty() {
            (None, None)
        } else {
            let (m, s) = aggregate_runs(&defined)?;
            (Some(m), Some(s))
        };
        EvalReport {
            task: first.task,
            metric: first.metric,
            value,
            std_dev,
            n_total: runs.iter().map(|r| r.n_total).sum(),
            n_valid: runs.iter().map(|r| r.n_valid).sum(),
            n_invalid: runs.iter().map(|r| r.n_invalid).sum(),
            per_run,
        }
        .check()
    }
}

/// Score one run: resolve each outcome under the policy, keep the retained
/// pairs, and compute the task's designated metric.
///
/// Zero retained pairs produce a report with `value: None` rather than an
/// error, so a fully invalid run still surfaces its counts.
pub fn task_report(
    outcomes: &[ExtractionOutcome],
    labels: &[i64],
    spec: &TaskSpec,
    policy: InvalidPolicy,
) -> Result<EvalReport, MetricsError> {
    if outcomes.len() != labels.len() {
        return Err(MetricsError::Contract(format!(
            "{} outcomes vs {} labels",
            outcomes.len(),
            labels.len()
        )));
    }
    let mut retained_predictions = Vec::new();
    let mut retained_labels = Vec::new();
    for (outcome, label) in outcomes.iter().zip(labels) {
        if let Some(prediction) = resolve_prediction(outcome, policy, spec) {
            retained_predictions.push(prediction);
            retained_labels.push(*label);
        }
    }
    let n_total = outcomes.len();
    let n_valid = retained_predictions.len();
    let value = if n_valid == 0 {
        None
    } else {
        Some(match spec.metric {
            MetricKind::Mae => mae(&retained_predictions, &retained_labels)?,
            MetricKind::Accuracy => accuracy(&retained_predictions, &retained_labels)?,
        })
    };
    EvalReport {
        task: spec.task,
        metric: spec.metric,
        value,
        std_dev: value.map(|_| 0.0),
        n_total,
        n_valid,
        n_invalid: n_total - n_valid,
        per_run: vec![value],
    }
    .check()
}
