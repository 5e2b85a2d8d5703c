//! Synthetic lifelog generation for demos and harness self-tests.
//!
//! The generated data is deliberately boring: plausible sensor ranges,
//! occasional missing cells, and self-reports every day, so every pipeline
//! stage gets exercised without shipping anyone's real health data.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{DailyRecord, ParticipantLog, PredictionWindow, Task, TaskSpec};

/// Deterministic multi-participant logs with all four self-reports daily.
pub fn synthetic_logs(participants: usize, days: usize, seed: u64) -> Vec<ParticipantLog> {
    (0..participants)
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(p as u64));
            let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
            let records: Vec<DailyRecord> = (0..days)
                .map(|i| {
                    let date = start.checked_add_days(chrono::Days::new(i as u64)).unwrap();
                    let mut rec = DailyRecord::empty(date);
                    if rng.gen_bool(0.93) {
                        rec.steps = Some(rng.gen_range(800.0..18000.0_f64).round());
                    }
                    if rng.gen_bool(0.93) {
                        rec.calories_burned = Some(rng.gen_range(120.0..900.0_f64).round());
                    }
                    if rng.gen_bool(0.95) {
                        rec.resting_heart_rate =
                            Some((rng.gen_range(46.0..72.0_f64) * 100.0).round() / 100.0);
                    }
                    if rng.gen_bool(0.9) {
                        rec.sleep_minutes = Some(rng.gen_range(90.0..560.0_f64).round());
                    }
                    rec.mood = Some(rng.gen_range(1..=5));
                    rec.stress = Some(rng.gen_range(1..=5));
                    rec.fatigue = Some(rng.gen_range(1..=5));
                    rec.sleep_quality = Some(rng.gen_range(1..=5));
                    rec.readiness = Some(rng.gen_range(0..=10));
                    rec
                })
                .collect();
            ParticipantLog::new(format!("p{:02}", p + 1), records).unwrap()
        })
        .collect()
}

/// Like [`synthetic_logs`], but the given task's label cycles through its
/// full range by record index, so any index-contiguous subset of label
/// days is balanced when its size is a multiple of the range size.
pub fn balanced_label_logs(
    participants: usize,
    days: usize,
    seed: u64,
    task: Task,
    label_min: i64,
    label_max: i64,
) -> Vec<ParticipantLog> {
    let span = (label_max - label_min + 1) as usize;
    synthetic_logs(participants, days, seed)
        .into_iter()
        .map(|log| {
            let records: Vec<DailyRecord> = log
                .records()
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let mut rec = rec.clone();
                    rec.set_report(task, Some(label_min + (i % span) as i64));
                    rec
                })
                .collect();
            ParticipantLog::new(log.participant_id.clone(), records).unwrap()
        })
        .collect()
}

/// The documented 14-day fatigue example window: step counts opening
/// 1476.0, 4809.0 and closing missing; calories opening 169.0, 419.0 and
/// closing missing; resting heart rate opening 53.24, 52.24 and closing
/// 51.40; sleep minutes opening 110.0, 524.0 and closing 481.0; mood 3.
/// The middle values are locally constructed filler.
pub fn sample_fatigue_window() -> (PredictionWindow, TaskSpec) {
    let spec = TaskSpec::default_for(Task::Fatigue);
    let start = NaiveDate::from_ymd_opt(2019, 11, 1).unwrap();

    let steps: [Option<f64>; 14] = [
        Some(1476.0),
        Some(4809.0),
        Some(6230.0),
        Some(3514.0),
        Some(8122.0),
        Some(5090.0),
        Some(7241.0),
        Some(2988.0),
        Some(6407.0),
        Some(9150.0),
        Some(4372.0),
        Some(5618.0),
        Some(7765.0),
        None,
    ];
    let calories: [Option<f64>; 14] = [
        Some(169.0),
        Some(419.0),
        Some(540.0),
        Some(305.0),
        Some(611.0),
        Some(450.0),
        Some(587.0),
        Some(263.0),
        Some(498.0),
        Some(702.0),
        Some(381.0),
        Some(466.0),
        Some(623.0),
        None,
    ];
    let heart_rate: [Option<f64>; 14] = [
        Some(53.24),
        Some(52.24),
        Some(52.80),
        Some(53.01),
        Some(52.55),
        Some(51.98),
        Some(52.31),
        Some(52.76),
        Some(53.12),
        Some(52.44),
        Some(51.87),
        Some(52.09),
        Some(51.65),
        Some(51.40),
    ];
    let sleep: [Option<f64>; 14] = [
        Some(110.0),
        Some(524.0),
        Some(463.0),
        Some(388.0),
        Some(502.0),
        Some(441.0),
        Some(375.0),
        Some(496.0),
        Some(418.0),
        Some(530.0),
        Some(352.0),
        Some(467.0),
        Some(489.0),
        Some(481.0),
    ];

    let days: Vec<DailyRecord> = (0..14)
        .map(|i| {
            let mut rec =
                DailyRecord::empty(start.checked_add_days(chrono::Days::new(i as u64)).unwrap());
            rec.steps = steps[i];
            rec.calories_burned = calories[i];
            rec.resting_heart_rate = heart_rate[i];
            rec.sleep_minutes = sleep[i];
            rec
        })
        .collect();

    let label_date = start.checked_add_days(chrono::Days::new(14)).unwrap();
    let window = PredictionWindow::new("p01", &spec, days, Some(3), 3, label_date).unwrap();
    (window, spec)
}

/// Write participant logs as CSVs named `<participant_id>.csv` under `dir`
/// using the default column names.
pub fn write_logs_as_csv(
    logs: &[ParticipantLog],
    dir: &std::path::Path,
) -> std::io::Result<Vec<std::path::PathBuf>> {
    use std::io::Write;

    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for log in logs {
        let path = dir.join(format!("{}.csv", log.participant_id));
        let mut file = std::fs::File::create(&path)?;
        writeln!(
            file,
            "date,steps,calories_burned,resting_heart_rate,sleep_minutes,mood,fatigue,readiness,sleep_quality,stress"
        )?;
        for rec in log.records() {
            let fmt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let fmt_i = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                file,
                "{},{},{},{},{},{},{},{},{},{}",
                rec.date,
                fmt_f(rec.steps),
                fmt_f(rec.calories_burned),
                fmt_f(rec.resting_heart_rate),
                fmt_f(rec.sleep_minutes),
                fmt_i(rec.mood),
                fmt_i(rec.fatigue),
                fmt_i(rec.readiness),
                fmt_i(rec.sleep_quality),
                fmt_i(rec.stress),
            )?;
        }
        paths.push(path);
    }
    Ok(paths)
}
