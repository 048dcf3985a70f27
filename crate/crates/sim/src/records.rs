//! Report serialization.
//!
//! RECORDS is line-delimited JSON: a header, one line per (sample time, GPU)
//! with fields `time_s, gpu_id, ran_fraction, ai_fraction, annotation`, then
//! one line per logged event. Fractions carry six decimals, which is exactly
//! the resolution the trace is kept at, so parsing a written report gives
//! back the same report.

use std::fmt::Write as _;

use airan_core::metrics::{
    Annotation, DeadlineMissRecord, EventKind, EventRecord, FabricViolationRecord, JobStats, MetricsReport, TraceSample,
};
use airan_core::time::SimTime;
use airan_core::workload::JobId;
use serde_json::{json, Map, Value};

pub const FORMAT: &str = "airan-records";
pub const VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Records,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct RecordsError {
    pub line: usize,
    pub message: String,
}

fn secs(t: SimTime) -> String {
    format!("{}.{:06}", t.as_micros() / 1_000_000, t.as_micros() % 1_000_000)
}

fn ppm(v: u32) -> String {
    format!("{}.{:06}", v / 1_000_000, v % 1_000_000)
}

fn label(report: &MetricsReport, gpu: Option<u32>) -> String {
    match gpu.and_then(|g| report.gpus.get(g as usize)) {
        Some(l) => Value::String(l.clone()).to_string(),
        None => "null".into(),
    }
}

pub fn write_report(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Records => write_records(report),
        ReportFormat::Summary => write_summary(report),
    }
}

fn write_records(report: &MetricsReport) -> String {
    let mut out = String::new();
    let gpus = Value::Array(report.gpus.iter().cloned().map(Value::String).collect());
    let _ = writeln!(
        out,
        r#"{{"format":"{FORMAT}","version":{VERSION},"horizon_s":{},"sample_interval_s":{},"gpus":{gpus}}}"#,
        secs(report.horizon),
        secs(report.sample_interval),
    );
    for s in &report.trace {
        let a = s.annotation;
        let _ = writeln!(
            out,
            r#"{{"time_s":{},"gpu_id":{},"ran_fraction":{},"ai_fraction":{},"annotation":{{"miss":{},"preemption":{},"repartition":{}}}}}"#,
            secs(s.time),
            label(report, Some(s.gpu)),
            ppm(s.ran_ppm),
            ppm(s.ai_ppm),
            a.deadline_misses,
            a.preemptions,
            a.repartitions,
        );
    }
    for m in &report.deadline_misses {
        let _ = writeln!(
            out,
            r#"{{"event":"deadline_miss","time_s":{},"gpu_id":{},"shortfall":{}}}"#,
            secs(m.time),
            label(report, Some(m.gpu)),
            ppm(m.shortfall_ppm),
        );
    }
    for e in &report.events {
        let mut line = format!(r#"{{"event":"{}","time_s":{},"gpu_id":{}"#, e.kind.name(), secs(e.time), label(report, e.gpu));
        let (job, fraction) = match e.kind {
            EventKind::Placed { job, fraction_ppm }
            | EventKind::Trimmed { job, fraction_ppm }
            | EventKind::ToppedUp { job, fraction_ppm } => (Some(job), Some(fraction_ppm)),
            EventKind::Preempted { job } | EventKind::Completed { job } | EventKind::Rejected { job } => (Some(job), None),
            EventKind::Reclaimed { fraction_ppm } | EventKind::Granted { fraction_ppm } => (None, Some(fraction_ppm)),
            EventKind::Repartitioned => (None, None),
        };
        if let Some(j) = job {
            let _ = write!(line, r#","job":{}"#, j.0);
        }
        if let Some(f) = fraction {
            let _ = write!(line, r#","fraction":{}"#, ppm(f));
        }
        out.push_str(&line);
        out.push_str("}\n");
    }
    for v in &report.fabric_violations {
        let _ = writeln!(
            out,
            r#"{{"event":"link_overload","time_s":{},"link":{},"load_gbps":{:?},"capacity_gbps":{:?}}}"#,
            secs(v.time),
            v.link,
            v.load_gbps,
            v.capacity_gbps,
        );
    }
    let j = &report.jobs;
    let _ = writeln!(
        out,
        r#"{{"event":"job_stats","arrived":{},"completed":{},"rejected":{},"preemptions":{},"waiting_at_end":{},"running_at_end":{},"mean_wait_s":{:?},"mean_completion_s":{:?}}}"#,
        j.arrived, j.completed, j.rejected, j.preemptions, j.waiting_at_end, j.running_at_end, j.mean_wait_s, j.mean_completion_s,
    );
    out
}

fn stats(s: &airan_core::metrics::ClassStats) -> Value {
    json!({ "mean": s.mean, "peak": s.peak, "p95": s.p95 })
}

fn write_summary(report: &MetricsReport) -> String {
    let gpus: Vec<Value> = match report.summaries() {
        Ok(list) => list
            .iter()
            .map(|g| {
                json!({
                    "gpu_id": g.label,
                    "average_total": g.total.mean,
                    "ran": stats(&g.ran),
                    "ai": stats(&g.ai),
                    "total": stats(&g.total),
                    "deadline_misses": g.deadline_misses,
                })
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    let j = &report.jobs;
    let doc = json!({
        "horizon_s": report.horizon.as_secs_f64(),
        "sample_interval_s": report.sample_interval.as_secs_f64(),
        "gpus": gpus,
        "deadline_misses": report.deadline_misses.len(),
        "fabric_violations": report.fabric_violations.len(),
        "jobs": {
            "arrived": j.arrived,
            "completed": j.completed,
            "rejected": j.rejected,
            "preemptions": j.preemptions,
            "waiting_at_end": j.waiting_at_end,
            "running_at_end": j.running_at_end,
            "mean_wait_s": j.mean_wait_s,
            "mean_completion_s": j.mean_completion_s,
        },
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}

struct Line<'a> {
    no: usize,
    obj: &'a Map<String, Value>,
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> RecordsError {
        RecordsError { line: self.no, message: message.into() }
    }

    fn get(&self, key: &str) -> Result<&Value, RecordsError> {
        self.obj.get(key).ok_or_else(|| self.err(format!("missing `{key}`")))
    }

    fn u64(&self, key: &str) -> Result<u64, RecordsError> {
        self.get(key)?.as_u64().ok_or_else(|| self.err(format!("`{key}` is not an unsigned integer")))
    }

    fn u32(&self, key: &str) -> Result<u32, RecordsError> {
        u32::try_from(self.u64(key)?).map_err(|_| self.err(format!("`{key}` out of range")))
    }

    fn f64(&self, key: &str) -> Result<f64, RecordsError> {
        self.get(key)?.as_f64().ok_or_else(|| self.err(format!("`{key}` is not a number")))
    }

    /// Six-decimal fixed point value in millionths.
    fn fixed(&self, key: &str) -> Result<u64, RecordsError> {
        let v = self.f64(key)?;
        if !(v >= 0.0) {
            return Err(self.err(format!("`{key}` must be non-negative")));
        }
        Ok((v * 1e6).round() as u64)
    }

    fn time(&self) -> Result<SimTime, RecordsError> {
        Ok(SimTime::from_micros(self.fixed("time_s")?))
    }

    fn fraction(&self, key: &str) -> Result<u32, RecordsError> {
        let v = self.fixed(key)?;
        if v > 1_000_000 {
            return Err(self.err(format!("`{key}` exceeds 1")));
        }
        Ok(v as u32)
    }

    fn gpu(&self, gpus: &[String]) -> Result<Option<u32>, RecordsError> {
        match self.get("gpu_id")? {
            Value::Null => Ok(None),
            Value::String(s) => gpus
                .iter()
                .position(|g| g == s)
                .map(|i| Some(i as u32))
                .ok_or_else(|| self.err(format!("unknown gpu `{s}`"))),
            _ => Err(self.err("`gpu_id` must be a string")),
        }
    }

    fn job(&self) -> Result<JobId, RecordsError> {
        Ok(JobId(self.u64("job")?))
    }
}

/// Reads RECORDS text back into a report.
pub fn parse_records(text: &str) -> Result<MetricsReport, RecordsError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(RecordsError { line: 1, message: "empty input".into() })?;
    let header: Value =
        serde_json::from_str(header).map_err(|e| RecordsError { line: 1, message: e.to_string() })?;
    let h = Line { no: 1, obj: header.as_object().ok_or(RecordsError { line: 1, message: "header is not an object".into() })? };
    if h.get("format")?.as_str() != Some(FORMAT) || h.u64("version")? != VERSION {
        return Err(h.err("not an airan-records v1 stream"));
    }
    let gpus: Vec<String> = h
        .get("gpus")?
        .as_array()
        .ok_or_else(|| h.err("`gpus` must be an array"))?
        .iter()
        .map(|v| v.as_str().map(String::from).ok_or_else(|| h.err("gpu labels must be strings")))
        .collect::<Result<_, _>>()?;
    let mut report = MetricsReport {
        horizon: SimTime::from_micros(h.fixed("horizon_s")?),
        sample_interval: SimTime::from_micros(h.fixed("sample_interval_s")?),
        gpus,
        trace: Vec::new(),
        events: Vec::new(),
        deadline_misses: Vec::new(),
        fabric_violations: Vec::new(),
        jobs: JobStats::default(),
    };

    for (i, text) in lines {
        let value: Value =
            serde_json::from_str(text).map_err(|e| RecordsError { line: i + 1, message: e.to_string() })?;
        let obj = value.as_object().ok_or(RecordsError { line: i + 1, message: "record is not an object".into() })?;
        let l = Line { no: i + 1, obj };
        let Some(kind) = obj.get("event") else {
            let gpu = l.gpu(&report.gpus)?.ok_or_else(|| l.err("trace records need a gpu"))?;
            let a = l.get("annotation")?.as_object().ok_or_else(|| l.err("`annotation` must be an object"))?;
            let al = Line { no: l.no, obj: a };
            report.trace.push(TraceSample {
                time: l.time()?,
                gpu,
                ran_ppm: l.fraction("ran_fraction")?,
                ai_ppm: l.fraction("ai_fraction")?,
                annotation: Annotation {
                    deadline_misses: al.u32("miss")?,
                    preemptions: al.u32("preemption")?,
                    repartitions: al.u32("repartition")?,
                },
            });
            continue;
        };
        let kind = kind.as_str().ok_or_else(|| l.err("`event` must be a string"))?;
        match kind {
            "deadline_miss" => report.deadline_misses.push(DeadlineMissRecord {
                time: l.time()?,
                gpu: l.gpu(&report.gpus)?.ok_or_else(|| l.err("misses need a gpu"))?,
                shortfall_ppm: l.fraction("shortfall")?,
            }),
            "link_overload" => report.fabric_violations.push(FabricViolationRecord {
                time: l.time()?,
                link: l.u32("link")?,
                load_gbps: l.f64("load_gbps")?,
                capacity_gbps: l.f64("capacity_gbps")?,
            }),
            "job_stats" => {
                report.jobs = JobStats {
                    arrived: l.u64("arrived")?,
                    completed: l.u64("completed")?,
                    rejected: l.u64("rejected")?,
                    preemptions: l.u64("preemptions")?,
                    waiting_at_end: l.u64("waiting_at_end")?,
                    running_at_end: l.u64("running_at_end")?,
                    mean_wait_s: l.f64("mean_wait_s")?,
                    mean_completion_s: l.f64("mean_completion_s")?,
                }
            }
            other => {
                let kind = match other {
                    "placed" => EventKind::Placed { job: l.job()?, fraction_ppm: l.fraction("fraction")? },
                    "trimmed" => EventKind::Trimmed { job: l.job()?, fraction_ppm: l.fraction("fraction")? },
                    "topped_up" => EventKind::ToppedUp { job: l.job()?, fraction_ppm: l.fraction("fraction")? },
                    "preempted" => EventKind::Preempted { job: l.job()? },
                    "completed" => EventKind::Completed { job: l.job()? },
                    "rejected" => EventKind::Rejected { job: l.job()? },
                    "reclaimed" => EventKind::Reclaimed { fraction_ppm: l.fraction("fraction")? },
                    "granted" => EventKind::Granted { fraction_ppm: l.fraction("fraction")? },
                    "repartitioned" => EventKind::Repartitioned,
                    _ => return Err(l.err(format!("unknown event `{other}`"))),
                };
                report.events.push(EventRecord { time: l.time()?, gpu: l.gpu(&report.gpus)?, kind });
            }
        }
    }
    Ok(report)
}
