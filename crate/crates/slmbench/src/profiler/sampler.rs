//! OS resource sampler.
//!
//! A background thread reads the target process's CPU time and RSS at a
//! fixed period. CPU percent is the CPU-time delta between consecutive
//! reads divided by the wall delta, as a percentage of one core, so a
//! process using four cores reads ~400%. RSS comes straight from the OS at
//! each tick, no interpolation.
//!
//! Linux only (reads `/proc`); other platforms get a sampler error.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::inference::Clock;
use crate::profiler::ProfilerError;

/// One observation of the target process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSample {
    /// Run-clock reading at the tick, ns.
    pub t_ns: u64,
    /// Process CPU over the preceding inter-sample interval, percent of
    /// one core. Bounded by 100 x logical core count.
    pub cpu_pct: f64,
    /// Resident set size at the tick, bytes.
    pub rss_bytes: u64,
}

/// Everything a sampling session collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerTrace {
    pub samples: Vec<ResourceSample>,
    /// True when sampling ended because the target exited.
    pub target_terminated: bool,
}

impl SamplerTrace {
    /// Dump samples as CSV (`t_ns,cpu_pct,rss_bytes`) for offline audit.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t_ns,cpu_pct,rss_bytes")?;
        for s in &self.samples {
            writeln!(out, "{},{},{}", s.t_ns, s.cpu_pct, s.rss_bytes)?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SamplerHandle {
    stop: Arc<AtomicBool>,
    trace: Arc<Mutex<SamplerTrace>>,
    thread: JoinHandle<()>,
}

impl SamplerHandle {
    /// Stop sampling and return the collected trace.
    pub fn stop(self) -> SamplerTrace {
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.thread.join();
        Arc::try_unwrap(self.trace)
            .map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
            .unwrap_or_else(|arc| arc.lock().unwrap_or_else(|p| p.into_inner()).clone())
    }
}

/// Start sampling `pid` every `period` on the shared run clock.
///
/// The first sample lands immediately with `cpu_pct` 0 over a zero-length
/// interval; it anchors the RSS baseline without skewing the time-weighted
/// CPU mean. Sampling stops when [`SamplerHandle::stop`] is called or the
/// target exits, whichever comes first.
pub fn spawn_sampler(
    pid: u32,
    period: Duration,
    clock: &Clock,
) -> Result<SamplerHandle, ProfilerError> {
    if period < Duration::from_millis(10) {
        return Err(ProfilerError::Sampler(format!(
            "period must be >= 10 ms, got {period:?}"
        )));
    }
    // Fail fast if the target is already gone or unreadable.
    let first = read_process(pid)
        .map_err(|e| ProfilerError::Sampler(format!("cannot read process {pid}: {e}")))?;
    let cores = logical_cores();

    let stop = Arc::new(AtomicBool::new(false));
    let trace = Arc::new(Mutex::new(SamplerTrace {
        samples: Vec::new(),
        target_terminated: false,
    }));
    let clock = clock.clone();

    let thread = {
        let stop = Arc::clone(&stop);
        let trace = Arc::clone(&trace);
        std::thread::spawn(move || {
            let mut prev_reading = first;
            let mut prev_t = clock.now_ns();
            {
                let mut t = trace.lock().unwrap_or_else(|p| p.into_inner());
                t.samples.push(ResourceSample {
                    t_ns: prev_t,
                    cpu_pct: 0.0,
                    rss_bytes: prev_reading.rss_bytes,
                });
            }
            while !stop.load(Ordering::SeqCst) {
                std::thread::sleep(period);
                let reading = match read_process(pid) {
                    Ok(r) => r,
                    Err(_) => {
                        let mut t = trace.lock().unwrap_or_else(|p| p.into_inner());
                        t.target_terminated = true;
                        return;
                    }
                };
                let now = clock.now_ns();
                let wall_ns = now.saturating_sub(prev_t);
                if wall_ns == 0 {
                    continue;
                }
                let cpu_ns = reading.cpu_time_ns.saturating_sub(prev_reading.cpu_time_ns);
                let raw_pct = 100.0 * cpu_ns as f64 / wall_ns as f64;
                // Tick granularity can overshoot the physical bound a
                // little; cap at the per-core invariant.
                let cpu_pct = raw_pct.min(100.0 * cores as f64);
                {
                    let mut t = trace.lock().unwrap_or_else(|p| p.into_inner());
                    t.samples.push(ResourceSample {
                        t_ns: now,
                        cpu_pct,
                        rss_bytes: reading.rss_bytes,
                    });
                }
                prev_reading = reading;
                prev_t = now;
            }
        })
    };

    Ok(SamplerHandle {
        stop,
        trace,
        thread,
    })
}

struct ProcessReading {
    cpu_time_ns: u64,
    rss_bytes: u64,
}

#[cfg(target_os = "linux")]
fn logical_cores() -> usize {
    let n = unsafe { libc::sysconf(libc::_SC_NPROCESSORS_ONLN) };
    if n > 0 {
        n as usize
    } else {
        1
    }
}

#[cfg(not(target_os = "linux"))]
fn logical_cores() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Read utime+stime from `/proc/<pid>/stat` and resident pages from
/// `/proc/<pid>/statm`.
#[cfg(target_os = "linux")]
fn read_process(pid: u32) -> std::io::Result<ProcessReading> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat"))?;
    // comm can contain spaces and parentheses; fields resume after the
    // last ')'.
    let after_comm = stat
        .rfind(')')
        .map(|i| &stat[i + 1..])
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "malformed stat"))?;
    let fields: Vec<&str> = after_comm.split_whitespace().collect();
    // Overall fields 14 (utime) and 15 (stime); the slice starts at
    // field 3, so they sit at offsets 11 and 12.
    let utime: u64 = fields
        .get(11)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no utime"))?;
    let stime: u64 = fields
        .get(12)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no stime"))?;
    let ns_per_tick = 1_000_000_000u64 / clock_ticks_per_second();

    let statm = std::fs::read_to_string(format!("/proc/{pid}/statm"))?;
    let resident_pages: u64 = statm
        .split_whitespace()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no rss"))?;

    Ok(ProcessReading {
        cpu_time_ns: (utime + stime) * ns_per_tick,
        rss_bytes: resident_pages * page_size(),
    })
}

#[cfg(target_os = "linux")]
fn clock_ticks_per_second() -> u64 {
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as u64
    } else {
        100
    }
}

#[cfg(target_os = "linux")]
fn page_size() -> u64 {
    let p = unsafe { libc::sysconf(libc::_SC_PAGESIZE) };
    if p > 0 {
        p as u64
    } else {
        4096
    }
}

#[cfg(not(target_os = "linux"))]
fn read_process(_pid: u32) -> std::io::Result<ProcessReading> {
    Err(std::io::Error::new(
        std::io::ErrorKind::Unsupported,
        "resource sampling is only implemented for Linux /proc",
    ))
}

#[cfg(all(test, target_os = "linux"))]
mod tests {
    use super::*;

    #[test]
    fn rejects_sub_10ms_periods() {
        let clock = Clock::new();
        let err = spawn_sampler(std::process::id(), Duration::from_millis(5), &clock).unwrap_err();
        assert!(matches!(err, ProfilerError::Sampler(_)));
    }

    #[test]
    fn samples_own_process() {
        let clock = Clock::new();
        let handle = spawn_sampler(std::process::id(), Duration::from_millis(20), &clock).unwrap();
        std::thread::sleep(Duration::from_millis(120));
        let trace = handle.stop();
        assert!(
            trace.samples.len() >= 3,
            "got {} samples",
            trace.samples.len()
        );
        assert!(!trace.target_terminated);
        for s in &trace.samples {
            assert!(s.rss_bytes > 0);
            assert!(s.cpu_pct >= 0.0);
        }
        for pair in trace.samples.windows(2) {
            assert!(pair[1].t_ns >= pair[0].t_ns);
        }
    }

    #[test]
    fn detects_target_exit() {
        let mut child = std::process::Command::new("sleep")
            .arg("0.05")
            .spawn()
            .expect("spawn sleep");
        let clock = Clock::new();
        let handle = spawn_sampler(child.id(), Duration::from_millis(20), &clock).unwrap();
        child.wait().unwrap();
        std::thread::sleep(Duration::from_millis(150));
        let trace = handle.stop();
        assert!(trace.target_terminated);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let trace = SamplerTrace {
            samples: vec![ResourceSample {
                t_ns: 1,
                cpu_pct: 2.5,
                rss_bytes: 3,
            }],
            target_terminated: false,
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_ns,cpu_pct,rss_bytes\n"));
        assert!(text.contains("1,2.5,3"));
    }
}
