//! Efficiency metrology for single generations.
//!
//! Seven metrics per generation:
//!
//! - TTFT (s): request submission to first token; prefill latency.
//! - ITPS (tokens/s): prompt tokens / TTFT; prompt-processing throughput.
//! - OET (s): first token to completion of the response.
//! - OTPS (tokens/s): output tokens / OET; decode throughput.
//! - Total time (s): request to completed response, including per-request
//!   setup overhead. Model load time is reported separately, never folded
//!   in.
//! - CPU (%): time-weighted mean process CPU over the request interval,
//!   normalized to one core (multi-core use exceeds 100).
//! - RAM (GB): peak RSS over the interval, in GiB.
//!
//! Degenerate generations (zero output tokens, zero TTFT, zero OET) yield
//! reports with the affected rates absent and a flag set, never fabricated
//! numbers.

pub mod sampler;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{GenerationResult, ModelDescriptor};

pub use sampler::{spawn_sampler, ResourceSample, SamplerHandle, SamplerTrace};

/// GiB, the convention used for the RAM column.
pub const BYTES_PER_GB: f64 = (1u64 << 30) as f64;

#[derive(Debug, Error)]
pub enum ProfilerError {
    /// The generation result violates its structural invariants.
    #[error("invalid generation result: {0}")]
    InvalidResult(String),
    /// A fixture row breaks an ordering invariant.
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("sampler error: {0}")]
    Sampler(String),
    /// A required fixture key is missing.
    #[error("missing metric {0:?}")]
    MissingMetric(String),
}

/// The per-generation metric vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub ttft_s: f64,
    /// Absent when TTFT is zero or the prompt token count is unknown.
    pub itps_tok_per_s: Option<f64>,
    pub oet_s: f64,
    /// Absent when OET is zero or no tokens were produced.
    pub otps_tok_per_s: Option<f64>,
    pub total_s: f64,
    /// Absent when no resource samples cover the request interval.
    pub cpu_pct_mean: Option<f64>,
    pub ram_gb_peak: Option<f64>,
    pub prompt_tokens: Option<usize>,
    pub output_tokens: Option<usize>,
    pub model: ModelDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_load_s: Option<f64>,
    /// Why any field is absent ("degenerate-generation", "zero-ttft", ...).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl EfficiencyReport {
    /// Check the report invariants: non-negative times, total covering
    /// ttft + oet, and stored rates consistent with stored tokens/times to
    /// 1e-9 relative.
    pub fn validate(&self) -> Result<(), ProfilerError> {
        if self.ttft_s < 0.0 || self.oet_s < 0.0 || self.total_s < 0.0 {
            return Err(ProfilerError::Integrity("negative duration".into()));
        }
        if self.total_s + 1e-9 < self.ttft_s + self.oet_s {
            return Err(ProfilerError::Integrity(format!(
                "total {} < ttft {} + oet {}",
                self.total_s, self.ttft_s, self.oet_s
            )));
        }
        if let (Some(itps), Some(prompt)) = (self.itps_tok_per_s, self.prompt_tokens) {
            if self.ttft_s > 0.0 {
                let expected = prompt as f64 / self.ttft_s;
                if relative_gap(itps, expected) > 1e-9 {
                    return Err(ProfilerError::Integrity(format!(
                        "itps {itps} inconsistent with {prompt} tokens / {} s",
                        self.ttft_s
                    )));
                }
            }
        }
        if let (Some(otps), Some(output)) = (self.otps_tok_per_s, self.output_tokens) {
            if self.oet_s > 0.0 {
                let expected = output as f64 / self.oet_s;
                if relative_gap(otps, expected) > 1e-9 {
                    return Err(ProfilerError::Integrity(format!(
                        "otps {otps} inconsistent with {output} tokens / {} s",
                        self.oet_s
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() / scale
}

/// Compute the metric vector for one generation from its token timestamps
/// and the resource samples collected alongside it.
pub fn compute_efficiency(
    result: &GenerationResult,
    samples: &[ResourceSample],
    model: ModelDescriptor,
) -> Result<EfficiencyReport, ProfilerError> {
    result
        .validate()
        .map_err(|e| ProfilerError::InvalidResult(e.to_string()))?;

    let ns = 1e-9f64;
    let ttft_s = (result.t_first_token_ns - result.t_request_ns) as f64 * ns;
    let oet_s = (result.t_done_ns - result.t_first_token_ns) as f64 * ns;
    let total_s = (result.t_done_ns - result.t_request_ns + result.setup_overhead_ns) as f64 * ns;

    let mut flags = Vec::new();
    let output_tokens = result.output_token_count;
    if output_tokens == 0 {
        flags.push("degenerate-generation".to_string());
    }

    let itps = if output_tokens == 0 {
        None
    } else if ttft_s <= 0.0 {
        flags.push("zero-ttft".to_string());
        None
    } else if result.prompt_token_count == 0 {
        flags.push("prompt-tokens-unknown".to_string());
        None
    } else {
        Some(result.prompt_token_count as f64 / ttft_s)
    };

    let otps = if output_tokens == 0 {
        None
    } else if oet_s <= 0.0 {
        flags.push("zero-oet".to_string());
        None
    } else {
        Some(output_tokens as f64 / oet_s)
    };

    let (cpu_pct_mean, ram_gb_peak) =
        summarize_resources(samples, result.t_request_ns, result.t_done_ns);
    if cpu_pct_mean.is_none() {
        flags.push("no-resource-samples".to_string());
    }

    let report = EfficiencyReport {
        ttft_s,
        itps_tok_per_s: itps,
        oet_s,
        otps_tok_per_s: otps,
        total_s,
        cpu_pct_mean,
        ram_gb_peak,
        prompt_tokens: Some(result.prompt_token_count),
        output_tokens: Some(output_tokens),
        model,
        model_load_s: result.model_load_ns.map(|n| n as f64 * ns),
        flags,
    };
    report.validate()?;
    Ok(report)
}

/// Time-weighted CPU mean and peak RSS (GiB) over `[lo, hi]`.
///
/// Each sample's CPU value describes the interval since the previous
/// sample, so it is weighted by that interval's overlap with the window.
/// The peak is taken over every sample that contributed weight or lies
/// inside the window, which keeps peak >= weighted mean by construction.
pub fn summarize_resources(
    samples: &[ResourceSample],
    lo: u64,
    hi: u64,
) -> (Option<f64>, Option<f64>) {
    let mut weighted = 0.0f64;
    let mut weight = 0.0f64;
    let mut peak_rss: Option<u64> = None;
    let mut in_window_cpu = Vec::new();
    let mut prev: Option<u64> = None;

    for sample in samples {
        let in_window = sample.t_ns >= lo && sample.t_ns <= hi;
        let mut contributed = false;
        if let Some(p) = prev {
            let a = p.max(lo);
            let b = sample.t_ns.min(hi);
            if b > a {
                let w = (b - a) as f64;
                weighted += sample.cpu_pct * w;
                weight += w;
                contributed = true;
            }
        }
        if in_window {
            in_window_cpu.push(sample.cpu_pct);
        }
        if in_window || contributed {
            peak_rss = Some(peak_rss.map_or(sample.rss_bytes, |p| p.max(sample.rss_bytes)));
        }
        prev = Some(sample.t_ns);
    }

    let cpu = if weight > 0.0 {
        Some(weighted / weight)
    } else if !in_window_cpu.is_empty() {
        Some(in_window_cpu.iter().sum::<f64>() / in_window_cpu.len() as f64)
    } else {
        None
    };
    (cpu, peak_rss.map(|b| b as f64 / BYTES_PER_GB))
}

/// Required keys for [`fixture_report`], in table column order.
pub const FIXTURE_KEYS: [&str; 7] = [
    "ttft_s",
    "itps_tok_per_s",
    "oet_s",
    "otps_tok_per_s",
    "total_s",
    "cpu_pct",
    "ram_gb",
];

/// Build a report from an externally measured row of the seven metrics.
///
/// Token counts are unknown for such rows, so the rate-consistency checks
/// do not apply; the `total >= ttft + oet` ordering is still enforced and
/// a violating row is rejected.
pub fn fixture_report(
    model_name: &str,
    row: &BTreeMap<String, f64>,
) -> Result<EfficiencyReport, ProfilerError> {
    let get = |key: &str| {
        row.get(key)
            .copied()
            .ok_or_else(|| ProfilerError::MissingMetric(key.to_string()))
    };
    let report = EfficiencyReport {
        ttft_s: get("ttft_s")?,
        itps_tok_per_s: Some(get("itps_tok_per_s")?),
        oet_s: get("oet_s")?,
        otps_tok_per_s: Some(get("otps_tok_per_s")?),
        total_s: get("total_s")?,
        cpu_pct_mean: Some(get("cpu_pct")?),
        ram_gb_peak: Some(get("ram_gb")?),
        prompt_tokens: None,
        output_tokens: None,
        model: ModelDescriptor::named(model_name),
        model_load_s: None,
        flags: vec!["fixture".to_string()],
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{GenerationResult, TokenEvent};

    /// Fabricate a result with exact nanosecond timings, no sleeping.
    fn synthetic_result(
        prompt_tokens: usize,
        piece_times_ms: &[u64],
        done_ms: u64,
    ) -> GenerationResult {
        let events: Vec<TokenEvent> = piece_times_ms
            .iter()
            .enumerate()
            .map(|(i, ms)| TokenEvent {
                index: i,
                text_piece: format!(" t{i}"),
                t_ns: ms * 1_000_000,
            })
            .collect();
        let completion = events.iter().map(|e| e.text_piece.clone()).collect();
        GenerationResult {
            prompt_token_count: prompt_tokens,
            output_token_count: events.len(),
            t_first_token_ns: events.first().map(|e| e.t_ns).unwrap_or(0),
            t_last_token_ns: events.last().map(|e| e.t_ns).unwrap_or(0),
            events,
            completion_text: completion,
            t_request_ns: 0,
            t_done_ns: done_ms * 1_000_000,
            setup_overhead_ns: 0,
            model_load_ns: None,
        }
    }

    #[test]
    fn exact_arithmetic_on_synthetic_timings() {
        // First token at 100 ms, then 19 more every 50 ms, done at the
        // last token: ttft 0.1 s, oet 0.95 s, itps 2000/s, otps 20/0.95.
        let times: Vec<u64> = (0..20).map(|i| 100 + 50 * i).collect();
        let result = synthetic_result(200, &times, 100 + 50 * 19);
        let report = compute_efficiency(&result, &[], ModelDescriptor::named("synthetic")).unwrap();
        assert!((report.ttft_s - 0.1).abs() < 1e-12);
        assert!((report.oet_s - 0.95).abs() < 1e-12);
        assert!((report.total_s - 1.05).abs() < 1e-12);
        assert!((report.itps_tok_per_s.unwrap() - 2000.0).abs() < 1e-9);
        assert!((report.otps_tok_per_s.unwrap() - 20.0 / 0.95).abs() < 1e-9);
        assert!(report.has_flag("no-resource-samples"));
        report.validate().unwrap();
    }

    #[test]
    fn single_token_generation_has_zero_oet_and_no_otps() {
        let result = synthetic_result(10, &[40], 40);
        let report = compute_efficiency(&result, &[], ModelDescriptor::named("m")).unwrap();
        assert_eq!(report.oet_s, 0.0);
        assert_eq!(report.otps_tok_per_s, None);
        assert!(report.has_flag("zero-oet"));
        assert!(report.itps_tok_per_s.is_some());
    }

    #[test]
    fn setup_overhead_is_added_to_total_only() {
        let mut result = synthetic_result(10, &[100, 200], 250);
        result.setup_overhead_ns = 50_000_000;
        let report = compute_efficiency(&result, &[], ModelDescriptor::named("m")).unwrap();
        assert!((report.total_s - 0.3).abs() < 1e-12);
        assert!((report.ttft_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rates_recompute_from_stored_fields() {
        let times: Vec<u64> = (0..7).map(|i| 30 + 20 * i).collect();
        let result = synthetic_result(123, &times, 200);
        let report = compute_efficiency(&result, &[], ModelDescriptor::named("m")).unwrap();
        let itps = report.prompt_tokens.unwrap() as f64 / report.ttft_s;
        let otps = report.output_tokens.unwrap() as f64 / report.oet_s;
        assert!(relative_gap(report.itps_tok_per_s.unwrap(), itps) <= 1e-9);
        assert!(relative_gap(report.otps_tok_per_s.unwrap(), otps) <= 1e-9);
    }

    #[test]
    fn cpu_mean_is_time_weighted() {
        let samples = vec![
            ResourceSample {
                t_ns: 0,
                cpu_pct: 0.0,
                rss_bytes: 100 << 20,
            },
            // 100 ms at 80%.
            ResourceSample {
                t_ns: 100_000_000,
                cpu_pct: 80.0,
                rss_bytes: 200 << 20,
            },
            // 300 ms at 20%.
            ResourceSample {
                t_ns: 400_000_000,
                cpu_pct: 20.0,
                rss_bytes: 150 << 20,
            },
        ];
        let result = synthetic_result(10, &[50, 400], 400);
        let report = compute_efficiency(&result, &samples, ModelDescriptor::named("m")).unwrap();
        // Weighted: (80 * 100 + 20 * 300) / 400 = 35.
        assert!((report.cpu_pct_mean.unwrap() - 35.0).abs() < 1e-9);
        assert!((report.ram_gb_peak.unwrap() - (200 << 20) as f64 / BYTES_PER_GB).abs() < 1e-12);
    }

    #[test]
    fn peak_rss_dominates_weighted_mean() {
        let samples: Vec<ResourceSample> = (0..10)
            .map(|i| ResourceSample {
                t_ns: i * 50_000_000,
                cpu_pct: 10.0,
                rss_bytes: (50 + 17 * (i % 4)) << 20,
            })
            .collect();
        let result = synthetic_result(10, &[60, 450], 450);
        let report = compute_efficiency(&result, &samples, ModelDescriptor::named("m")).unwrap();
        let mut weighted = 0.0;
        let mut weight = 0.0;
        let mut prev: Option<u64> = None;
        for s in &samples {
            if let Some(p) = prev {
                let a = p.max(result.t_request_ns);
                let b = s.t_ns.min(result.t_done_ns);
                if b > a {
                    weighted += (s.rss_bytes as f64 / BYTES_PER_GB) * (b - a) as f64;
                    weight += (b - a) as f64;
                }
            }
            prev = Some(s.t_ns);
        }
        assert!(report.ram_gb_peak.unwrap() >= weighted / weight);
    }

    #[test]
    fn fixture_rows_validate_ordering() {
        let mk = |vals: [f64; 7]| {
            FIXTURE_KEYS
                .iter()
                .zip(vals)
                .map(|(k, v)| (k.to_string(), v))
                .collect::<BTreeMap<_, _>>()
        };
        // Reference rows used as invariant anchors.
        let phi3 = fixture_report(
            "phi-3-mini-4k",
            &mk([2.01, 102.46, 8.52, 13.70, 10.62, 66.48, 6.32]),
        )
        .unwrap();
        assert!(phi3.total_s >= phi3.ttft_s + phi3.oet_s);
        let tiny = fixture_report(
            "tinyllama-1.1b",
            &mk([0.48, 552.58, 1.16, 45.22, 2.14, 74.55, 4.31]),
        )
        .unwrap();
        assert!(tiny.total_s >= tiny.ttft_s + tiny.oet_s);
        // Multi-core CPU percentages above 100 are fine.
        let llama2 = fixture_report(
            "llama-2-7b",
            &mk([4.75, 56.17, 18.04, 7.04, 26.51, 262.84, 6.82]),
        )
        .unwrap();
        assert!(llama2.cpu_pct_mean.unwrap() > 100.0);

        let err = fixture_report("bad", &mk([5.0, 10.0, 1.0, 10.0, 4.0, 50.0, 1.0])).unwrap_err();
        assert!(matches!(err, ProfilerError::Integrity(_)));

        let mut missing = mk([0.5, 10.0, 1.0, 10.0, 2.0, 50.0, 1.0]);
        missing.remove("ram_gb");
        let err = fixture_report("bad", &missing).unwrap_err();
        assert!(matches!(err, ProfilerError::MissingMetric(_)));
    }

    #[test]
    fn doubling_script_delays_scales_oet() {
        use crate::inference::mock::{MockBackend, PromptTokenRule};
        use crate::inference::{Backend, Clock, GenerationParams};

        let run = |unit_ms: u64| {
            let clock = Clock::new();
            let mut pairs: Vec<(u64, String)> = vec![(unit_ms, " t0".to_string())];
            for i in 1..5 {
                pairs.push((unit_ms, format!(" t{i}")));
            }
            let mut backend = MockBackend::from_pairs(pairs, PromptTokenRule::Fixed(10), clock);
            let result = backend.generate("p", &GenerationParams::default()).unwrap();
            compute_efficiency(&result, &[], ModelDescriptor::named("m")).unwrap()
        };
        let base = run(50);
        let doubled = run(100);
        // Sleep overshoot adds noise; allow a small tolerance below 2x.
        assert!(
            doubled.oet_s >= 1.8 * base.oet_s,
            "oet did not scale: {} -> {}",
            base.oet_s,
            doubled.oet_s
        );
        assert!(doubled.ttft_s >= 0.9 * base.ttft_s);
    }
}
