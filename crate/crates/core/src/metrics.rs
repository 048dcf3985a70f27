//! Run results: per-GPU utilization trace, event log and summaries.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::SimError;
use crate::time::SimTime;
use crate::workload::JobId;

/// Trace fractions are stored in parts per million.
pub const PPM: u32 = 1_000_000;

pub fn to_ppm(fraction: f64) -> u32 {
    libm::round(fraction.clamp(0.0, 1.0) * PPM as f64) as u32
}

pub fn from_ppm(ppm: u32) -> f64 {
    ppm as f64 / PPM as f64
}

/// Quantizes a RAN/AI pair so that the two parts never sum past one GPU.
pub fn quantize_pair(ran: f64, ai: f64) -> (u32, u32) {
    let ran_q = to_ppm(ran);
    let total_q = to_ppm(ran + ai).max(ran_q);
    (ran_q, total_q - ran_q)
}

/// Counts of notable events on a GPU since the previous sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Annotation {
    pub deadline_misses: u32,
    pub preemptions: u32,
    pub repartitions: u32,
}

impl Annotation {
    pub fn is_empty(&self) -> bool {
        *self == Annotation::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceSample {
    pub time: SimTime,
    /// Index into [`MetricsReport::gpus`].
    pub gpu: u32,
    pub ran_ppm: u32,
    pub ai_ppm: u32,
    pub annotation: Annotation,
}

impl TraceSample {
    pub fn ran_fraction(&self) -> f64 {
        from_ppm(self.ran_ppm)
    }

    pub fn ai_fraction(&self) -> f64 {
        from_ppm(self.ai_ppm)
    }

    pub fn total_fraction(&self) -> f64 {
        from_ppm(self.ran_ppm + self.ai_ppm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadlineMissRecord {
    pub time: SimTime,
    pub gpu: u32,
    /// Unserved RAN demand, rounded up.
    pub shortfall_ppm: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Placed { job: JobId, fraction_ppm: u32 },
    Preempted { job: JobId },
    Trimmed { job: JobId, fraction_ppm: u32 },
    ToppedUp { job: JobId, fraction_ppm: u32 },
    Completed { job: JobId },
    Rejected { job: JobId },
    Reclaimed { fraction_ppm: u32 },
    Granted { fraction_ppm: u32 },
    Repartitioned,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Placed { .. } => "placed",
            EventKind::Preempted { .. } => "preempted",
            EventKind::Trimmed { .. } => "trimmed",
            EventKind::ToppedUp { .. } => "topped_up",
            EventKind::Completed { .. } => "completed",
            EventKind::Rejected { .. } => "rejected",
            EventKind::Reclaimed { .. } => "reclaimed",
            EventKind::Granted { .. } => "granted",
            EventKind::Repartitioned => "repartitioned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventRecord {
    pub time: SimTime,
    pub gpu: Option<u32>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FabricViolationRecord {
    pub time: SimTime,
    pub link: u32,
    pub load_gbps: f64,
    pub capacity_gbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JobStats {
    pub arrived: u64,
    pub completed: u64,
    pub rejected: u64,
    pub preemptions: u64,
    pub waiting_at_end: u64,
    pub running_at_end: u64,
    /// Mean time from arrival to first start, over started jobs.
    pub mean_wait_s: f64,
    /// Mean time from arrival to completion, over completed jobs.
    pub mean_completion_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub gpus: Vec<String>,
    pub horizon: SimTime,
    pub sample_interval: SimTime,
    pub trace: Vec<TraceSample>,
    pub events: Vec<EventRecord>,
    pub deadline_misses: Vec<DeadlineMissRecord>,
    pub fabric_violations: Vec<FabricViolationRecord>,
    pub jobs: JobStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassStats {
    pub mean: f64,
    pub peak: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpuSummary {
    pub label: String,
    pub ran: ClassStats,
    pub ai: ClassStats,
    pub total: ClassStats,
    pub deadline_misses: u64,
}

/// Time-weighted statistics of a sampled signal. Each sample holds until the
/// next one; the last holds until `end`.
pub fn summarize(samples: &[(SimTime, f64)], end: SimTime) -> Result<ClassStats, SimError> {
    if samples.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let mut weighted: Vec<(f64, f64)> = samples
        .iter()
        .enumerate()
        .map(|(i, &(t, v))| {
            let next = samples.get(i + 1).map(|s| s.0).unwrap_or(end);
            (v, next.saturating_sub(t).as_secs_f64())
        })
        .collect();
    let mut total_w: f64 = weighted.iter().map(|w| w.1).sum();
    if total_w <= 0.0 {
        for w in &mut weighted {
            w.1 = 1.0;
        }
        total_w = weighted.len() as f64;
    }
    let mean = weighted.iter().map(|(v, w)| v * w).sum::<f64>() / total_w;
    let peak = weighted.iter().map(|w| w.0).fold(f64::NEG_INFINITY, f64::max);
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = 0.95 * total_w;
    let mut acc = 0.0;
    let mut p95 = peak;
    for (v, w) in &weighted {
        acc += w;
        if acc >= target - 1e-12 * total_w {
            p95 = *v;
            break;
        }
    }
    Ok(ClassStats { mean, peak, p95 })
}

impl MetricsReport {
    /// Per-GPU statistics, in the order of [`MetricsReport::gpus`].
    pub fn summaries(&self) -> Result<Vec<GpuSummary>, SimError> {
        let mut out = Vec::with_capacity(self.gpus.len());
        for (i, label) in self.gpus.iter().enumerate() {
            let samples: Vec<&TraceSample> = self.trace.iter().filter(|s| s.gpu == i as u32).collect();
            let series = |f: fn(&TraceSample) -> f64| -> Vec<(SimTime, f64)> {
                samples.iter().map(|s| (s.time, f(s))).collect()
            };
            out.push(GpuSummary {
                label: label.clone(),
                ran: summarize(&series(TraceSample::ran_fraction), self.horizon)?,
                ai: summarize(&series(TraceSample::ai_fraction), self.horizon)?,
                total: summarize(&series(TraceSample::total_fraction), self.horizon)?,
                deadline_misses: self.deadline_misses.iter().filter(|m| m.gpu == i as u32).count() as u64,
            });
        }
        Ok(out)
    }

    /// Average of the per-GPU mean total utilization over `gpus`.
    pub fn mean_total(&self, gpus: &[u32]) -> Result<f64, SimError> {
        let summaries = self.summaries()?;
        if gpus.is_empty() {
            return Err(SimError::EmptyTrace);
        }
        Ok(gpus.iter().map(|&g| summaries[g as usize].total.mean).sum::<f64>() / gpus.len() as f64)
    }

    pub fn gpu_index(&self, label: &str) -> Option<u32> {
        self.gpus.iter().position(|g| g == label).map(|i| i as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: u64) -> SimTime {
        SimTime::from_micros(s * 1_000_000)
    }

    #[test]
    fn quantized_pair_never_exceeds_one() {
        assert_eq!(quantize_pair(0.4, 0.6), (400_000, 600_000));
        assert_eq!(quantize_pair(0.4000004, 0.6000004), (400_000, 600_000));
        assert_eq!(quantize_pair(1.0, 0.0), (PPM, 0));
        let (r, a) = quantize_pair(0.3333335, 0.3333335);
        assert_eq!(r + a, 666_667);
    }

    #[test]
    fn weighted_mean_and_peak() {
        let s = summarize(&[(t(0), 0.2), (t(1), 1.0), (t(2), 0.2)], t(4)).unwrap();
        assert!((s.mean - 0.4).abs() < 1e-12);
        assert_eq!(s.peak, 1.0);
        assert_eq!(s.p95, 1.0);
    }

    #[test]
    fn summary_examples() {
        let ran = summarize(&[(t(0), 0.4)], t(10)).unwrap();
        let total = summarize(&[(t(0), 0.95)], t(10)).unwrap();
        assert_eq!(ran.mean, 0.4);
        assert_eq!(total.mean, 0.95);
        let halves = summarize(&[(t(0), 0.3), (t(5), 0.5)], t(10)).unwrap();
        assert!((halves.mean - 0.4).abs() < 1e-12);
    }

    #[test]
    fn p95_ignores_short_spike() {
        let s = summarize(&[(t(0), 0.5), (t(99), 0.9)], t(100)).unwrap();
        assert_eq!(s.p95, 0.5);
        assert_eq!(s.peak, 0.9);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert_eq!(summarize(&[], t(1)), Err(SimError::EmptyTrace));
    }

    #[test]
    fn zero_length_window_uses_equal_weights() {
        let s = summarize(&[(t(1), 0.2), (t(1), 0.4)], t(1)).unwrap();
        assert!((s.mean - 0.3).abs() < 1e-12);
    }
}
