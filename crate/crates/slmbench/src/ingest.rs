//! Lifelog ingestion: daily records, prediction windows, seeded splits.
//!
//! Input is a header-bearing delimited text table (comma by default) with
//! ISO-8601 dates, one row per day. A [`ColumnMapping`] names which columns
//! hold each sensor series and self-report, so differently shaped CSVs load
//! without code changes. Windows are cut with stride 1 by default and the
//! label is taken from the day immediately after the window (prediction
//! semantics); both are configurable through [`WindowingOptions`].

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    /// The header is missing, unreadable, or lacks a mapped date column.
    #[error("schema error: {0}")]
    Schema(String),
    /// Duplicate dates or other cross-row inconsistencies.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A single data row could not be parsed. `row` is 1-based, counting
    /// data rows (the header is row 0).
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
    /// An invalid task specification (empty range, zero-length window).
    #[error("task spec error: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// The four sensor series every prediction window carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    /// Step count per day.
    Steps,
    /// Burned calories per day (kcal).
    CaloriesBurned,
    /// Resting heart rate per day (beats/min).
    RestingHeartRate,
    /// Sleep duration per day (minutes).
    SleepMinutes,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [
        SensorKind::Steps,
        SensorKind::CaloriesBurned,
        SensorKind::RestingHeartRate,
        SensorKind::SleepMinutes,
    ];

    /// Stable identifier used in configs and serialized forms.
    pub fn id(self) -> &'static str {
        match self {
            SensorKind::Steps => "steps",
            SensorKind::CaloriesBurned => "calories_burned",
            SensorKind::RestingHeartRate => "resting_heart_rate",
            SensorKind::SleepMinutes => "sleep_minutes",
        }
    }

    /// Series caption used in the rendered main query.
    pub fn display_name(self) -> &'static str {
        match self {
            SensorKind::Steps => "Steps",
            SensorKind::CaloriesBurned => "Burned Calories",
            SensorKind::RestingHeartRate => "Resting Heart Rate",
            SensorKind::SleepMinutes => "Sleep Minutes",
        }
    }

    /// Unit phrase that follows the quoted series in the main query.
    pub fn unit_phrase(self) -> &'static str {
        match self {
            SensorKind::Steps => "steps",
            SensorKind::CaloriesBurned => "calories",
            SensorKind::RestingHeartRate => "beats/min",
            SensorKind::SleepMinutes => "minutes",
        }
    }

    /// Fixed-point fractional digits used when rendering this series.
    pub fn default_decimals(self) -> u32 {
        match self {
            SensorKind::RestingHeartRate => 2,
            _ => 1,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            SensorKind::Steps => 0,
            SensorKind::CaloriesBurned => 1,
            SensorKind::RestingHeartRate => 2,
            SensorKind::SleepMinutes => 3,
        }
    }
}

/// The four self-reported prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Stress,
    Readiness,
    Fatigue,
    SleepQuality,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::Stress,
        Task::Readiness,
        Task::Fatigue,
        Task::SleepQuality,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Task::Stress => "stress",
            Task::Readiness => "readiness",
            Task::Fatigue => "fatigue",
            Task::SleepQuality => "sleep_quality",
        }
    }

    /// Human-readable name as it appears inside prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Task::Stress => "stress",
            Task::Readiness => "readiness",
            Task::Fatigue => "fatigue",
            Task::SleepQuality => "sleep quality",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stress" => Ok(Task::Stress),
            "readiness" => Ok(Task::Readiness),
            "fatigue" => Ok(Task::Fatigue),
            "sleep_quality" => Ok(Task::SleepQuality),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Which score is computed for a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Mean absolute error, lower is better.
    Mae,
    /// Exact-match hit rate in percent, higher is better.
    Accuracy,
}

impl MetricKind {
    pub fn id(self) -> &'static str {
        match self {
            MetricKind::Mae => "mae",
            MetricKind::Accuracy => "accuracy",
        }
    }

    /// Direction arrow used in rendered tables.
    pub fn arrow(self) -> &'static str {
        match self {
            MetricKind::Mae => "\u{2193}",
            MetricKind::Accuracy => "\u{2191}",
        }
    }

    /// True when a larger value is better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Accuracy)
    }
}

/// Per-task evaluation parameters: label range, metric, and window length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub label_min: i64,
    pub label_max: i64,
    pub metric: MetricKind,
    pub window_len: usize,
}

impl TaskSpec {
    pub fn new(
        task: Task,
        label_min: i64,
        label_max: i64,
        metric: MetricKind,
        window_len: usize,
    ) -> Result<Self, IngestError> {
        if label_min >= label_max {
            return Err(IngestError::Spec(format!(
                "label_min {label_min} must be < label_max {label_max}"
            )));
        }
        if window_len == 0 {
            return Err(IngestError::Spec("window_len must be >= 1".into()));
        }
        Ok(TaskSpec {
            task,
            label_min,
            label_max,
            metric,
            window_len,
        })
    }

    /// Default spec for a task: fatigue is scored by accuracy, the rest by
    /// MAE; readiness uses the 0-10 scale, the others 1-5; 14-day windows.
    pub fn default_for(task: Task) -> Self {
        let (label_min, label_max) = match task {
            Task::Readiness => (0, 10),
            _ => (1, 5),
        };
        let metric = match task {
            Task::Fatigue => MetricKind::Accuracy,
            _ => MetricKind::Mae,
        };
        TaskSpec {
            task,
            label_min,
            label_max,
            metric,
            window_len: 14,
        }
    }

    pub fn contains(&self, value: i64) -> bool {
        (self.label_min..=self.label_max).contains(&value)
    }

    /// Midpoint of the label range, ties rounded toward +infinity.
    pub fn midpoint(&self) -> i64 {
        (self.label_min + self.label_max + 1).div_euclid(2)
    }
}

/// One day of sensor readings and self-reports. Any field may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calories_burned: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resting_heart_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sleep_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mood: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fatigue: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readiness: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sleep_quality: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress: Option<i64>,
}

impl DailyRecord {
    pub fn empty(date: NaiveDate) -> Self {
        DailyRecord {
            date,
            steps: None,
            calories_burned: None,
            resting_heart_rate: None,
            sleep_minutes: None,
            mood: None,
            fatigue: None,
            readiness: None,
            sleep_quality: None,
            stress: None,
        }
    }

    pub fn sensor(&self, kind: SensorKind) -> Option<f64> {
        match kind {
            SensorKind::Steps => self.steps,
            SensorKind::CaloriesBurned => self.calories_burned,
            SensorKind::RestingHeartRate => self.resting_heart_rate,
            SensorKind::SleepMinutes => self.sleep_minutes,
        }
    }

    pub fn set_sensor(&mut self, kind: SensorKind, value: Option<f64>) {
        match kind {
            SensorKind::Steps => self.steps = value,
            SensorKind::CaloriesBurned => self.calories_burned = value,
            SensorKind::RestingHeartRate => self.resting_heart_rate = value,
            SensorKind::SleepMinutes => self.sleep_minutes = value,
        }
    }

    pub fn report(&self, task: Task) -> Option<i64> {
        match task {
            Task::Stress => self.stress,
            Task::Readiness => self.readiness,
            Task::Fatigue => self.fatigue,
            Task::SleepQuality => self.sleep_quality,
        }
    }

    pub fn set_report(&mut self, task: Task, value: Option<i64>) {
        match task {
            Task::Stress => self.stress = value,
            Task::Readiness => self.readiness = value,
            Task::Fatigue => self.fatigue = value,
            Task::SleepQuality => self.sleep_quality = value,
        }
    }
}

/// Date-ordered daily records for one participant.
///
/// Dates are strictly increasing; construction sorts and rejects duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantLog {
    pub participant_id: String,
    records: Vec<DailyRecord>,
}

impl ParticipantLog {
    pub fn new(
        participant_id: impl Into<String>,
        mut records: Vec<DailyRecord>,
    ) -> Result<Self, IngestError> {
        let participant_id = participant_id.into();
        records.sort_by_key(|r| r.date);
        for pair in records.windows(2) {
            if pair[0].date == pair[1].date {
                return Err(IngestError::Integrity(format!(
                    "participant {participant_id}: duplicate date {}",
                    pair[0].date
                )));
            }
        }
        Ok(ParticipantLog {
            participant_id,
            records,
        })
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Maps input column names onto record fields. Only the date column is
/// required to exist in the header; other mapped columns that are absent
/// load as missing values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub date: String,
    pub steps: String,
    pub calories_burned: String,
    pub resting_heart_rate: String,
    pub sleep_minutes: String,
    pub mood: String,
    pub fatigue: String,
    pub readiness: String,
    pub sleep_quality: String,
    pub stress: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            date: "date".into(),
            steps: "steps".into(),
            calories_burned: "calories_burned".into(),
            resting_heart_rate: "resting_heart_rate".into(),
            sleep_minutes: "sleep_minutes".into(),
            mood: "mood".into(),
            fatigue: "fatigue".into(),
            readiness: "readiness".into(),
            sleep_quality: "sleep_quality".into(),
            stress: "stress".into(),
        }
    }
}

/// Parse a delimited lifelog table into a date-sorted [`ParticipantLog`].
///
/// Unparseable numeric cells (including literal `NaN`) become missing
/// values; an unparseable date fails the whole load with the offending row
/// index; a duplicate date is an integrity error. Row order in the input
/// does not matter.
pub fn load_participant_log(
    source: impl Read,
    schema: &ColumnMapping,
    participant_id: &str,
    delimiter: u8,
) -> Result<ParticipantLog, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Schema(format!("unreadable header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let date_idx = col(&schema.date).ok_or_else(|| {
        IngestError::Schema(format!("date column {:?} not found in header", schema.date))
    })?;
    let sensor_idx: [(SensorKind, Option<usize>); 4] = [
        (SensorKind::Steps, col(&schema.steps)),
        (SensorKind::CaloriesBurned, col(&schema.calories_burned)),
        (
            SensorKind::RestingHeartRate,
            col(&schema.resting_heart_rate),
        ),
        (SensorKind::SleepMinutes, col(&schema.sleep_minutes)),
    ];
    let report_idx: [(Task, Option<usize>); 4] = [
        (Task::Stress, col(&schema.stress)),
        (Task::Readiness, col(&schema.readiness)),
        (Task::Fatigue, col(&schema.fatigue)),
        (Task::SleepQuality, col(&schema.sleep_quality)),
    ];
    let mood_idx = col(&schema.mood);

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| IngestError::Row {
            row: row_no,
            msg: format!("{e}"),
        })?;
        let raw_date = row.get(date_idx).unwrap_or("");
        let date = raw_date
            .parse::<NaiveDate>()
            .map_err(|_| IngestError::Row {
                row: row_no,
                msg: format!("unparseable date {raw_date:?}"),
            })?;

        let mut rec = DailyRecord::empty(date);
        for (kind, idx) in sensor_idx {
            rec.set_sensor(kind, idx.and_then(|i| parse_float_cell(row.get(i))));
        }
        for (task, idx) in report_idx {
            rec.set_report(task, idx.and_then(|i| parse_int_cell(row.get(i))));
        }
        rec.mood = mood_idx.and_then(|i| parse_int_cell(row.get(i)));
        records.push(rec);
    }

    ParticipantLog::new(participant_id, records)
}

fn parse_float_cell(cell: Option<&str>) -> Option<f64> {
    let v = cell?.trim().parse::<f64>().ok()?;
    v.is_finite().then_some(v)
}

/// Integer cells may be written as floats ("3.0"); anything with a
/// fractional part is treated as missing rather than rounded.
fn parse_int_cell(cell: Option<&str>) -> Option<i64> {
    let text = cell?.trim();
    if let Ok(v) = text.parse::<i64>() {
        return Some(v);
    }
    let f = text.parse::<f64>().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9e15).then_some(f as i64)
}

/// Window construction knobs beyond what [`TaskSpec`] carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowingOptions {
    /// Keep every `stride`-th eligible window (1 = all, the default).
    pub stride: usize,
    /// Extra days between the window end and the label day. 0 means the
    /// label is read on the day immediately after the window.
    pub label_offset: u32,
}

impl Default for WindowingOptions {
    fn default() -> Self {
        WindowingOptions {
            stride: 1,
            label_offset: 0,
        }
    }
}

/// A fixed-length slice of consecutive daily records plus the ground-truth
/// label reported after the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWindow {
    pub participant_id: String,
    pub task: Task,
    pub days: Vec<DailyRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_mood: Option<i64>,
    pub label: i64,
    /// The day the label was reported on.
    pub label_date: NaiveDate,
}

impl PredictionWindow {
    /// Validating constructor: checks window length, date consecutiveness,
    /// and label range against `spec`.
    pub fn new(
        participant_id: impl Into<String>,
        spec: &TaskSpec,
        days: Vec<DailyRecord>,
        context_mood: Option<i64>,
        label: i64,
        label_date: NaiveDate,
    ) -> Result<Self, IngestError> {
        if days.len() != spec.window_len {
            return Err(IngestError::Integrity(format!(
                "window has {} days, spec requires {}",
                days.len(),
                spec.window_len
            )));
        }
        for pair in days.windows(2) {
            if pair[1].date != pair[0].date.succ_opt().expect("date overflow") {
                return Err(IngestError::Integrity(format!(
                    "window days not consecutive: {} then {}",
                    pair[0].date, pair[1].date
                )));
            }
        }
        if !spec.contains(label) {
            return Err(IngestError::Integrity(format!(
                "label {label} outside [{}, {}]",
                spec.label_min, spec.label_max
            )));
        }
        Ok(PredictionWindow {
            participant_id: participant_id.into(),
            task: spec.task,
            days,
            context_mood,
            label,
            label_date,
        })
    }

    /// Stable identifier for manifests and caches.
    pub fn window_id(&self) -> String {
        format!(
            "{}:{}:{}",
            self.participant_id,
            self.task.id(),
            self.label_date
        )
    }

    /// The four sensor series in window order, one entry per day.
    pub fn series(&self, kind: SensorKind) -> Vec<Option<f64>> {
        self.days.iter().map(|d| d.sensor(kind)).collect()
    }
}

/// Cut prediction windows with default options (stride 1, next-day label).
pub fn build_windows(log: &ParticipantLog, spec: &TaskSpec) -> Vec<PredictionWindow> {
    build_windows_with(log, spec, &WindowingOptions::default())
}

/// Cut prediction windows: one per label day whose preceding `window_len`
/// calendar days all have records.
///
/// A candidate label day must carry the task's self-report within the
/// spec's range; days with a missing or out-of-range report are skipped.
/// Windows whose sensor cells are entirely missing are still emitted (they
/// render as NaN downstream). An unusable log yields an empty list.
pub fn build_windows_with(
    log: &ParticipantLog,
    spec: &TaskSpec,
    opts: &WindowingOptions,
) -> Vec<PredictionWindow> {
    let by_date: BTreeMap<NaiveDate, &DailyRecord> =
        log.records().iter().map(|r| (r.date, r)).collect();
    let stride = opts.stride.max(1);

    let mut windows = Vec::new();
    let mut eligible_rank = 0usize;
    for rec in log.records() {
        let label = match rec.report(spec.task) {
            Some(v) if spec.contains(v) => v,
            _ => continue,
        };
        let gap = chrono::Days::new(1 + u64::from(opts.label_offset));
        let window_end = match rec.date.checked_sub_days(gap) {
            Some(d) => d,
            None => continue,
        };
        let mut days = Vec::with_capacity(spec.window_len);
        let mut cursor = window_end;
        let mut complete = true;
        for _ in 0..spec.window_len {
            match by_date.get(&cursor) {
                Some(r) => days.push((*r).clone()),
                None => {
                    complete = false;
                    break;
                }
            }
            cursor = match cursor.pred_opt() {
                Some(d) => d,
                None => {
                    complete = false;
                    break;
                }
            };
        }
        if !complete {
            continue;
        }
        days.reverse();
        let keep = eligible_rank.is_multiple_of(stride);
        eligible_rank += 1;
        if !keep {
            continue;
        }
        let window = PredictionWindow::new(
            log.participant_id.clone(),
            spec,
            days,
            rec.mood,
            label,
            rec.date,
        )
        .expect("construction satisfies window invariants");
        windows.push(window);
    }
    windows
}

/// Deterministic seeded shuffle and split. Returns `(train, eval)` with
/// `|train| = floor(ratio * n)`; the remainder goes to eval.
///
/// The two halves partition the input as a multiset. Equal seeds give
/// bit-identical partitions.
///
/// # Panics
///
/// Panics unless `0 < ratio < 1`.
pub fn split_windows<T>(items: Vec<T>, ratio: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1)");
    let mut items = items;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    // The 1e-9 nudge compensates for products like 0.7 * 10 landing just
    // below their mathematical value in f64.
    let train_len = ((ratio * items.len() as f64) + 1e-9).floor() as usize;
    let train_len = train_len.min(items.len());
    let eval = items.split_off(train_len);
    (items, eval)
}

/// Write windows as line-delimited JSON, one window object per line.
pub fn write_windows_jsonl(
    windows: &[PredictionWindow],
    mut out: impl Write,
) -> Result<(), IngestError> {
    for w in windows {
        serde_json::to_writer(&mut out, w)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read windows from the line-delimited JSON form written by
/// [`write_windows_jsonl`]. Blank lines are ignored.
pub fn read_windows_jsonl(input: impl BufRead) -> Result<Vec<PredictionWindow>, IngestError> {
    let mut windows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let w: PredictionWindow = serde_json::from_str(&line).map_err(|e| IngestError::Row {
            row: i + 1,
            msg: format!("bad window object: {e}"),
        })?;
        windows.push(w);
    }
    Ok(windows)
}
