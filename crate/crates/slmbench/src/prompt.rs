//! Zero-shot prompt rendering.
//!
//! A prompt has three parts: an instruction that states the task and its
//! integer range, a main query that embeds the formatted sensor series and
//! the optional mood context, and a short answer prompt the model completes
//! ("The predicted fatigue level would be:"). Prompts are raw completion
//! text, no chat roles.
//!
//! Templates are plain strings with `{{name}}` placeholders and can be
//! overridden from the harness config. Available placeholders:
//! `{{task_name}}`, `{{range_min}}`, `{{range_max}}`, `{{window_len}}`,
//! `{{mood_clause}}`, and one `{{<sensor>_series}}` per sensor
//! (`steps_series`, `calories_series`, `resting_heart_rate_series`,
//! `sleep_minutes_series`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{PredictionWindow, SensorKind, Task, TaskSpec};

/// Mood self-reports use a fixed 1-5 scale in the rendered clause.
const MOOD_SCALE_MAX: i64 = 5;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    /// Window and template (or spec) disagree on the task or window length.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unresolved placeholder {0:?} in rendered text")]
    UnresolvedPlaceholder(String),
}

impl SensorKind {
    /// Placeholder name (without braces) for this sensor's series.
    pub fn series_placeholder(self) -> &'static str {
        match self {
            SensorKind::Steps => "steps_series",
            SensorKind::CaloriesBurned => "calories_series",
            SensorKind::RestingHeartRate => "resting_heart_rate_series",
            SensorKind::SleepMinutes => "sleep_minutes_series",
        }
    }
}

/// Per-sensor fixed-point precision used when rendering series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u32>", into = "BTreeMap<String, u32>")]
pub struct SeriesFormat {
    decimals: [u32; 4],
}

impl Default for SeriesFormat {
    fn default() -> Self {
        let mut decimals = [0; 4];
        for kind in SensorKind::ALL {
            decimals[kind.index()] = kind.default_decimals();
        }
        SeriesFormat { decimals }
    }
}

impl SeriesFormat {
    pub fn decimals(&self, kind: SensorKind) -> u32 {
        self.decimals[kind.index()]
    }

    pub fn set(&mut self, kind: SensorKind, decimals: u32) -> Result<(), PromptError> {
        if decimals > 6 {
            return Err(PromptError::InvalidTemplate(format!(
                "{}: at most 6 fractional digits supported, got {decimals}",
                kind.id()
            )));
        }
        self.decimals[kind.index()] = decimals;
        Ok(())
    }
}

impl TryFrom<BTreeMap<String, u32>> for SeriesFormat {
    type Error = String;

    fn try_from(map: BTreeMap<String, u32>) -> Result<Self, String> {
        let mut fmt = SeriesFormat::default();
        for (key, value) in map {
            let kind = SensorKind::ALL
                .into_iter()
                .find(|k| k.id() == key)
                .ok_or_else(|| format!("unknown sensor {key:?}"))?;
            fmt.set(kind, value).map_err(|e| e.to_string())?;
        }
        Ok(fmt)
    }
}

impl From<SeriesFormat> for BTreeMap<String, u32> {
    fn from(fmt: SeriesFormat) -> Self {
        SensorKind::ALL
            .into_iter()
            .map(|k| (k.id().to_string(), fmt.decimals(k)))
            .collect()
    }
}

/// Render one value in fixed point with exactly `decimals` fractional
/// digits, rounding halves away from zero. Non-finite values render as
/// `NaN`.
pub fn format_fixed(value: f64, decimals: u32) -> String {
    assert!(decimals <= 6, "at most 6 fractional digits supported");
    if !value.is_finite() {
        return "NaN".to_string();
    }
    let scale = 10i128.pow(decimals);
    let scaled = value * scale as f64;
    if scaled.abs() >= 1e27 {
        // Out of exact integer territory; fall back to std formatting.
        return format!("{value:.*}", decimals as usize);
    }
    // f64::round ties away from zero, which is the rule we want.
    let units = scaled.round() as i128;
    let int_part = units / scale;
    let frac_part = (units % scale).abs();
    // Keep the sign on values that round to zero, as std formatting does.
    let negative_zero = units == 0 && value.is_sign_negative();
    let sign = if (units < 0 || negative_zero) && int_part == 0 {
        "-"
    } else {
        ""
    };
    if decimals == 0 {
        format!("{sign}{int_part}")
    } else {
        format!(
            "{sign}{int_part}.{frac_part:0width$}",
            width = decimals as usize
        )
    }
}

/// Join a series with ", ". Present values render in fixed point, missing
/// values as the literal token `NaN`.
pub fn format_series(values: &[Option<f64>], decimals: u32) -> String {
    values
        .iter()
        .map(|v| match v {
            Some(x) => format_fixed(*x, decimals),
            None => "NaN".to_string(),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// A three-part prompt template for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: Task,
    pub instruction_text: String,
    pub query_skeleton: String,
    pub answer_prompt: String,
}

impl PromptTemplate {
    /// Validating constructor: the answer prompt must be non-empty without
    /// trailing whitespace, and the query skeleton must reference each
    /// sensor series exactly once.
    pub fn new(
        task: Task,
        instruction_text: impl Into<String>,
        query_skeleton: impl Into<String>,
        answer_prompt: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let template = PromptTemplate {
            task,
            instruction_text: instruction_text.into(),
            query_skeleton: query_skeleton.into(),
            answer_prompt: answer_prompt.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.answer_prompt.is_empty() {
            return Err(PromptError::InvalidTemplate(
                "answer prompt is empty".into(),
            ));
        }
        if self.answer_prompt.ends_with(char::is_whitespace) {
            return Err(PromptError::InvalidTemplate(
                "answer prompt ends with whitespace".into(),
            ));
        }
        for kind in SensorKind::ALL {
            let token = format!("{{{{{}}}}}", kind.series_placeholder());
            let count = self.query_skeleton.matches(&token).count();
            if count != 1 {
                return Err(PromptError::InvalidTemplate(format!(
                    "query skeleton must contain {token} exactly once, found {count}"
                )));
            }
        }
        Ok(())
    }
}

/// The rendered prompt: parts plus their newline-joined concatenation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instruction: String,
    pub main_query: String,
    pub answer_prompt: String,
    pub full_text: String,
}

impl PromptBundle {
    /// Hex SHA-256 of the full text, used to correlate completions with
    /// the windows that produced them.
    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.full_text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Instruction wording shared by every built-in template.
const BUILTIN_INSTRUCTION: &str = "You are a personalized healthcare agent trained to predict \
{{task_name}} which ranges from {{range_min}} to {{range_max}} based on physiological data and \
user information.";

/// Main-query wording shared by every built-in template.
const BUILTIN_QUERY: &str = "The recent {{window_len}}-days sensor readings show: Steps: \
\"{{steps_series}}\" steps, Burned Calories: \"{{calories_series}}\" calories, Resting Heart \
Rate: \"{{resting_heart_rate_series}}\" beats/min, Sleep Minutes: \"{{sleep_minutes_series}}\" \
minutes{{mood_clause}}. What would be the predicted {{task_name}} (Please give me a single \
integer value between {{range_min}} and {{range_max}})?";

/// Built-in templates for the four tasks. The answer prompt follows the
/// sentence-completion pattern "The predicted <task> level would be:".
pub fn builtin_templates() -> BTreeMap<Task, PromptTemplate> {
    Task::ALL
        .into_iter()
        .map(|task| {
            let answer = format!("The predicted {} level would be:", task.display_name());
            let template = PromptTemplate::new(task, BUILTIN_INSTRUCTION, BUILTIN_QUERY, answer)
                .expect("built-in templates are valid");
            (task, template)
        })
        .collect()
}

/// Render with the default per-sensor precision.
pub fn render_prompt(
    window: &PredictionWindow,
    template: &PromptTemplate,
    spec: &TaskSpec,
) -> Result<PromptBundle, PromptError> {
    render_prompt_with(window, template, spec, &SeriesFormat::default())
}

/// Render a window through a template.
///
/// The mood clause is emitted only when the window carries a context mood;
/// otherwise the placeholder collapses to nothing. The answer prompt is
/// copied verbatim. Rendering is pure: equal inputs give byte-identical
/// bundles.
pub fn render_prompt_with(
    window: &PredictionWindow,
    template: &PromptTemplate,
    spec: &TaskSpec,
    fmt: &SeriesFormat,
) -> Result<PromptBundle, PromptError> {
    if window.task != template.task {
        return Err(PromptError::Contract(format!(
            "window task {} does not match template task {}",
            window.task, template.task
        )));
    }
    if window.task != spec.task {
        return Err(PromptError::Contract(format!(
            "window task {} does not match spec task {}",
            window.task, spec.task
        )));
    }
    if window.days.len() != spec.window_len {
        return Err(PromptError::Contract(format!(
            "window has {} days, spec requires {}",
            window.days.len(),
            spec.window_len
        )));
    }

    let mood_clause = match window.context_mood {
        Some(mood) => format!(", [Mood]: {mood} out of {MOOD_SCALE_MAX}"),
        None => String::new(),
    };

    let mut vars: Vec<(String, String)> = vec![
        ("task_name".into(), spec.task.display_name().into()),
        ("range_min".into(), spec.label_min.to_string()),
        ("range_max".into(), spec.label_max.to_string()),
        ("window_len".into(), window.days.len().to_string()),
        ("mood_clause".into(), mood_clause),
    ];
    for kind in SensorKind::ALL {
        let series = format_series(&window.series(kind), fmt.decimals(kind));
        vars.push((kind.series_placeholder().into(), series));
    }

    let instruction = substitute(&template.instruction_text, &vars)?;
    let main_query = substitute(&template.query_skeleton, &vars)?;
    let answer_prompt = template.answer_prompt.clone();
    let full_text = format!("{instruction}\n{main_query}\n{answer_prompt}");

    Ok(PromptBundle {
        instruction,
        main_query,
        answer_prompt,
        full_text,
    })
}

fn substitute(skeleton: &str, vars: &[(String, String)]) -> Result<String, PromptError> {
    let mut text = skeleton.to_string();
    for (name, value) in vars {
        text = text.replace(&format!("{{{{{name}}}}}"), value);
    }
    if let Some(start) = text.find("{{") {
        let tail: String = text[start..].chars().take(24).collect();
        return Err(PromptError::UnresolvedPlaceholder(tail));
    }
    Ok(text)
}
