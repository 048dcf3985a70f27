//! Parameter sweeps over a base scenario.
//!
//! A sweep axis is a dotted path into the scenario document and a list of
//! values, e.g. `policy.safety_margin=0,0.05,0.1` or
//! `ai_workloads.0.rate_per_s=1,2`. Runs cover the cartesian product of all
//! axes, in row-major order with the last axis varying fastest.

use airan_core::engine;
use airan_core::error::SimError;
use airan_core::metrics::MetricsReport;
use airan_core::scenario::{mix_seed, Scenario};

use crate::config::{document_from_table, scenario_from_document, ConfigError};

fn semantic(e: SimError) -> ConfigError {
    match e {
        SimError::ScenarioInvalid(list) => ConfigError::Semantic(list),
        other => ConfigError::Semantic(vec![other.to_string()]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub path: Vec<String>,
    pub values: Vec<toml::Value>,
}

impl Axis {
    pub fn name(&self) -> String {
        self.path.join(".")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("bad sweep parameter `{0}`: {1}")]
    Param(String, String),
    #[error("run {index}: {source}")]
    Config { index: usize, source: ConfigError },
    #[error("run {index}: {source}")]
    Sim { index: usize, source: SimError },
}

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub index: usize,
    /// `(path, value)` for every axis.
    pub params: Vec<(String, String)>,
    pub seed: u64,
    pub report: MetricsReport,
}

fn parse_value(raw: &str) -> toml::Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Parses `a.b.c=v1,v2,...`. Values are TOML literals; anything that is not
/// one is taken as a bare string.
pub fn parse_axis(spec: &str) -> Result<Axis, SweepError> {
    let bad = |m: &str| SweepError::Param(spec.to_string(), m.to_string());
    let (path, values) = spec.split_once('=').ok_or_else(|| bad("expected path=value[,value...]"))?;
    let path: Vec<String> = path.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(bad("empty path segment"));
    }
    let values: Vec<toml::Value> = values.split(',').filter(|v| !v.trim().is_empty()).map(parse_value).collect();
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(Axis { path, values })
}

/// Writes `value` at `path`, replacing an existing entry. Numeric segments
/// index into arrays.
pub fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (first, rest) = path.split_first().ok_or("empty path")?;
    if rest.is_empty() {
        table.insert(first.clone(), value);
        return Ok(());
    }
    let node = table.get_mut(first).ok_or_else(|| format!("no key `{first}`"))?;
    set_in(node, rest, value)
}

fn set_in(node: &mut toml::Value, path: &[String], value: toml::Value) -> Result<(), String> {
    let (seg, rest) = path.split_first().ok_or("empty path")?;
    let child = match node {
        toml::Value::Table(t) if rest.is_empty() => {
            t.insert(seg.clone(), value);
            return Ok(());
        }
        toml::Value::Table(t) => t.get_mut(seg).ok_or_else(|| format!("no key `{seg}`"))?,
        toml::Value::Array(a) => {
            let i: usize = seg.parse().map_err(|_| format!("`{seg}` is not an array index"))?;
            let len = a.len();
            a.get_mut(i).ok_or_else(|| format!("index {i} out of range ({len} entries)"))?
        }
        _ => return Err(format!("`{seg}` is inside a scalar")),
    };
    if rest.is_empty() {
        *child = value;
        Ok(())
    } else {
        set_in(child, rest, value)
    }
}

fn display(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Every point of the cartesian product, each as one value per axis.
pub fn grid(axes: &[Axis]) -> Vec<Vec<toml::Value>> {
    let mut out: Vec<Vec<toml::Value>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }
    out
}

/// Runs every grid point. Run `i` uses seed `mix_seed(base_seed, i)`, where
/// the base seed comes from `sim.seed` unless overridden.
pub fn run_sweep(
    base: &toml::Table,
    axes: &[Axis],
    seed_override: Option<u64>,
    threads: usize,
) -> Result<Vec<SweepRun>, SweepError> {
    let base_seed = seed_override.unwrap_or_else(|| {
        base.get("sim")
            .and_then(|s| s.get("seed"))
            .and_then(toml::Value::as_integer)
            .map(|s| s as u64)
            .unwrap_or(0)
    });
    let points = grid(axes);
    let mut jobs = Vec::with_capacity(points.len());
    for (index, point) in points.into_iter().enumerate() {
        let mut table = base.clone();
        let mut params = Vec::new();
        for (axis, value) in axes.iter().zip(point) {
            params.push((axis.name(), display(&value)));
            set_path(&mut table, &axis.path, value).map_err(|m| SweepError::Param(axis.name(), m))?;
        }
        let seed = mix_seed(base_seed, index as u64);
        let scenario = document_from_table(table)
            .and_then(|doc| scenario_from_document(&doc))
            .and_then(|s| s.validate().map(|_| s).map_err(semantic))
            .map(|s| Scenario { seed, ..s })
            .map_err(|source| SweepError::Config { index, source })?;
        jobs.push((index, params, seed, scenario));
    }

    let threads = threads.max(1);
    let mut results: Vec<Option<Result<SweepRun, SweepError>>> = (0..jobs.len()).map(|_| None).collect();
    for chunk in jobs.chunks(threads).zip(results.chunks_mut(threads)) {
        let (batch, slots) = chunk;
        std::thread::scope(|s| {
            for ((index, params, seed, scenario), slot) in batch.iter().zip(slots.iter_mut()) {
                s.spawn(move || {
                    *slot = Some(
                        engine::run(scenario)
                            .map(|report| SweepRun { index: *index, params: params.clone(), seed: *seed, report })
                            .map_err(|source| SweepError::Sim { index: *index, source }),
                    );
                });
            }
        });
    }
    results.into_iter().map(|r| r.expect("every run finishes")).collect()
}
