//! Integer label extraction from completions.
//!
//! The answer prompt positions the label first, so the default rule takes
//! the first standalone decimal integer in the completion. "Standalone"
//! excludes digits that belong to a decimal literal: in `3.5` neither the
//! `3` (mantissa head) nor the `5` (fraction) counts. An optional sign is
//! part of the token when it is not preceded by a digit.
//!
//! Extraction is total: every string maps to exactly one
//! [`ExtractionOutcome`], never an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::TaskSpec;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("unknown invalid-policy {0:?} (expected discard, clamp, or midpoint)")]
    UnknownPolicy(String),
}

/// Classification of one completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExtractionOutcome {
    /// A standalone integer within the task's label range.
    Valid { value: i64, raw_match: String },
    /// A standalone integer was found but falls outside the range.
    OutOfRange { raw_match: String },
    /// No standalone integer anywhere in the completion.
    NoInteger,
}

impl ExtractionOutcome {
    pub fn is_valid(&self) -> bool {
        matches!(self, ExtractionOutcome::Valid { .. })
    }

    pub fn value(&self) -> Option<i64> {
        match self {
            ExtractionOutcome::Valid { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn raw_match(&self) -> Option<&str> {
        match self {
            ExtractionOutcome::Valid { raw_match, .. }
            | ExtractionOutcome::OutOfRange { raw_match } => Some(raw_match),
            ExtractionOutcome::NoInteger => None,
        }
    }
}

/// Which standalone integer wins when a completion contains several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    #[default]
    First,
    Last,
}

/// What to do with completions that carry no usable integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Drop the pair from metrics; it is still counted in `n_invalid`.
    #[default]
    Discard,
    /// Clamp an out-of-range integer to the nearest range bound. A
    /// completion with no integer at all is still discarded.
    Clamp,
    /// Replace any invalid completion with the range midpoint (ties
    /// rounded up).
    Midpoint,
}

impl std::str::FromStr for InvalidPolicy {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discard" => Ok(InvalidPolicy::Discard),
            "clamp" => Ok(InvalidPolicy::Clamp),
            "midpoint" => Ok(InvalidPolicy::Midpoint),
            other => Err(ExtractError::UnknownPolicy(other.to_string())),
        }
    }
}

/// Extract the first standalone integer and classify it against the spec's
/// label range.
pub fn extract_label(completion: &str, spec: &TaskSpec) -> ExtractionOutcome {
    extract_label_with(completion, spec, MatchOrder::First)
}

/// [`extract_label`] with an explicit match order.
pub fn extract_label_with(
    completion: &str,
    spec: &TaskSpec,
    order: MatchOrder,
) -> ExtractionOutcome {
    let candidates = standalone_integers(completion);
    let raw = match order {
        MatchOrder::First => candidates.first(),
        MatchOrder::Last => candidates.last(),
    };
    match raw {
        None => ExtractionOutcome::NoInteger,
        Some(raw) => {
            let value = parse_saturating(raw);
            if spec.contains(value) {
                ExtractionOutcome::Valid {
                    value,
                    raw_match: raw.clone(),
                }
            } else {
                ExtractionOutcome::OutOfRange {
                    raw_match: raw.clone(),
                }
            }
        }
    }
}

/// All standalone integer tokens in order of appearance.
fn standalone_integers(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;

        // Fractional part of a decimal literal ("3.5" -> the 5).
        if start > 0 && bytes[start - 1] == b'.' {
            continue;
        }
        // Integer mantissa of a decimal literal ("3.5" -> the 3).
        if end + 1 < bytes.len() && bytes[end] == b'.' && bytes[end + 1].is_ascii_digit() {
            continue;
        }
        // A sign belongs to the token unless it trails a digit ("3-5").
        let mut token_start = start;
        if start > 0 && (bytes[start - 1] == b'-' || bytes[start - 1] == b'+') {
            let sign_pos = start - 1;
            if sign_pos == 0 || !bytes[sign_pos - 1].is_ascii_digit() {
                token_start = sign_pos;
            }
        }
        out.push(text[token_start..end].to_string());
    }
    out
}

/// Parse an optionally signed digit run, saturating at the i64 bounds so
/// absurdly long runs still classify as out of range.
fn parse_saturating(raw: &str) -> i64 {
    let unsigned = raw.strip_prefix('+').unwrap_or(raw);
    match unsigned.parse::<i64>() {
        Ok(v) => v,
        Err(_) => {
            if unsigned.starts_with('-') {
                i64::MIN
            } else {
                i64::MAX
            }
        }
    }
}

/// Apply the invalid-policy to an outcome. `None` means the pair is
/// excluded from metrics (and counted as invalid).
pub fn resolve_prediction(
    outcome: &ExtractionOutcome,
    policy: InvalidPolicy,
    spec: &TaskSpec,
) -> Option<i64> {
    match outcome {
        ExtractionOutcome::Valid { value, .. } => Some(*value),
        ExtractionOutcome::OutOfRange { raw_match } => match policy {
            InvalidPolicy::Discard => None,
            InvalidPolicy::Clamp => {
                let value = parse_saturating(raw_match);
                Some(value.clamp(spec.label_min, spec.label_max))
            }
            InvalidPolicy::Midpoint => Some(spec.midpoint()),
        },
        ExtractionOutcome::NoInteger => match policy {
            InvalidPolicy::Discard | InvalidPolicy::Clamp => None,
            InvalidPolicy::Midpoint => Some(spec.midpoint()),
        },
    }
}
