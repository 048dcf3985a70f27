//! Scenario files: a strict TOML schema and its mapping to [`Scenario`].

use std::collections::BTreeMap;

use airan_core::compute::{GpuDevice, GpuId, Granularity, NfBundle, Server, ServerId};
use airan_core::error::SimError;
use airan_core::fabric::{FronthaulCalibration, ReferenceFabric};
use airan_core::orchestrator::{Forecast, Policy, TimeWindow};
use airan_core::scenario::{CellSpec, Scenario, ServerSpec};
use airan_core::time::SimTime;
use airan_core::workload::{
    AiWorkload, Arrival, Calibration, CellConfig, JobSize, LoadProfile, SloClass, TracedJob,
};
use serde::{Deserialize, Serialize};

pub const REQUIRED_SECTIONS: [&str; 8] =
    ["topology", "servers", "cells", "calibration", "profiles", "ai_workloads", "policy", "sim"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("semantic error: {}", .0.join("; "))]
    Semantic(Vec<String>),
}

fn schema(msg: impl Into<String>) -> ConfigError {
    ConfigError::Schema(vec![msg.into()])
}

fn semantic(msg: impl Into<String>) -> ConfigError {
    ConfigError::Semantic(vec![msg.into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub topology: TopologyDoc,
    pub servers: Vec<ServerDoc>,
    pub cells: Vec<CellDoc>,
    pub calibration: CalibrationDoc,
    pub profiles: BTreeMap<String, ProfileDoc>,
    pub ai_workloads: Vec<AiWorkloadDoc>,
    pub policy: PolicyDoc,
    pub sim: SimDoc,
}

fn default_spines() -> usize {
    2
}
fn default_leaves() -> usize {
    4
}
fn default_link() -> f64 {
    100.0
}
fn default_fh() -> f64 {
    FronthaulCalibration::default().gbps_per_mhz_per_port
}
fn default_northbound() -> f64 {
    FronthaulCalibration::default().northbound_ratio
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default = "default_spines")]
    pub compute_spines: usize,
    #[serde(default = "default_leaves")]
    pub compute_leaves: usize,
    #[serde(default = "default_spines")]
    pub converged_spines: usize,
    #[serde(default = "default_leaves")]
    pub converged_leaves: usize,
    #[serde(default = "default_link")]
    pub link_capacity_gbps: f64,
    #[serde(default = "default_fh")]
    pub fronthaul_gbps_per_mhz_per_port: f64,
    #[serde(default = "default_northbound")]
    pub northbound_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BundleDoc {
    DuOnly,
    DuCu,
    DuCuCn,
}

fn default_memory() -> u32 {
    80
}
fn default_granularity() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuDoc {
    pub id: String,
    #[serde(default = "default_memory")]
    pub memory_units: u32,
    #[serde(default = "default_granularity")]
    pub partition_granularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerDoc {
    pub id: String,
    pub cpu_cores: u32,
    pub nf_bundle: BundleDoc,
    pub frontend_port_gbps: f64,
    pub backend_port_gbps: f64,
    pub gpus: Vec<GpuDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDoc {
    pub id: String,
    pub bandwidth_mhz: f64,
    pub scs_khz: u32,
    pub tx_antennas: u32,
    pub rx_antennas: u32,
    /// `server/gpu` of the hosting GPU.
    pub gpu: String,
    pub profile: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationDoc {
    #[serde(default = "poc_bandwidth")]
    pub reference_bandwidth_mhz: f64,
    #[serde(default = "poc_scs")]
    pub reference_scs_khz: u32,
    #[serde(default = "poc_antennas")]
    pub reference_tx_antennas: u32,
    #[serde(default = "poc_antennas")]
    pub reference_rx_antennas: u32,
    #[serde(default = "poc_peak")]
    pub reference_peak_fraction: f64,
    #[serde(default = "one")]
    pub bandwidth_exponent: f64,
    #[serde(default = "one")]
    pub antenna_exponent: f64,
    #[serde(default)]
    pub idle_floor_fraction: f64,
}

fn poc_bandwidth() -> f64 {
    100.0
}
fn poc_scs() -> u32 {
    30
}
fn poc_antennas() -> u32 {
    4
}
fn poc_peak() -> f64 {
    0.40
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileDoc {
    Constant {
        level: f64,
    },
    DiurnalSinusoid {
        min: f64,
        max: f64,
        period_s: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    Trace {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalKind {
    Poisson,
    Trace,
    Saturating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeKind {
    #[default]
    Constant,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SloDoc {
    #[default]
    Batch,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AiWorkloadDoc {
    pub id: String,
    pub arrival: ArrivalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_per_s: Option<f64>,
    /// `[arrival_s, compute_seconds]` pairs for trace arrivals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub job_size: SizeKind,
    /// Size of a constant job, or the mean of exponential sizes.
    #[serde(default = "one")]
    pub compute_seconds: f64,
    #[serde(default)]
    pub slo: SloDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_bound_s: Option<f64>,
    #[serde(default = "one")]
    pub demand_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    StaticSplit,
    TimeSplit,
    DynamicBackfill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastDoc {
    LastValue,
    MaxOverWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowDoc {
    pub start_s: f64,
    pub end_s: f64,
    pub ran_fraction: f64,
}

fn default_settle() -> u32 {
    1
}
fn default_queue() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDoc {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ran_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<WindowDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<ForecastDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast_window_s: Option<f64>,
    /// `server/gpu` references; defaults to the GPUs hosting cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<String>>,
    #[serde(default = "default_settle")]
    pub repartition_settle_slots: u32,
    #[serde(default)]
    pub resume_delay_s: f64,
    #[serde(default = "default_queue")]
    pub queue_bound: usize,
}

fn default_sample() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    pub horizon_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample")]
    pub sample_interval_s: f64,
}

/// Parses scenario text into a TOML table, failing only on syntax.
pub fn parse_table(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Strict schema pass over a parsed table.
pub fn document_from_table(table: toml::Table) -> Result<ConfigDocument, ConfigError> {
    let missing: Vec<String> = REQUIRED_SECTIONS
        .iter()
        .filter(|s| !table.contains_key(**s))
        .map(|s| format!("missing required section `{s}`"))
        .collect();
    let unknown: Vec<String> = table
        .keys()
        .filter(|k| !REQUIRED_SECTIONS.contains(&k.as_str()))
        .map(|k| format!("{k}: unknown key `{k}`"))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(ConfigError::Schema(missing.into_iter().chain(unknown).collect()));
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        schema(format!("{path}: {}", e.into_inner().message()))
    })
}

fn micros(path: &str, seconds: f64) -> Result<SimTime, ConfigError> {
    if !(seconds >= 0.0 && seconds.is_finite()) {
        return Err(semantic(format!("{path}: {seconds} must be a non-negative number of seconds")));
    }
    if !SimTime::is_whole_micros(seconds) {
        return Err(semantic(format!("{path}: {seconds} is not a whole number of microseconds")));
    }
    Ok(SimTime::from_secs_f64(seconds))
}

fn bundle(b: BundleDoc) -> NfBundle {
    match b {
        BundleDoc::DuOnly => NfBundle::DuOnly,
        BundleDoc::DuCu => NfBundle::DuCu,
        BundleDoc::DuCuCn => NfBundle::DuCuCn,
    }
}

fn profile(p: &ProfileDoc) -> LoadProfile {
    match p {
        ProfileDoc::Constant { level } => LoadProfile::Constant { level: *level },
        ProfileDoc::DiurnalSinusoid { min, max, period_s, phase_rad } => LoadProfile::DiurnalSinusoid {
            min: *min,
            max: *max,
            period_s: *period_s,
            phase_rad: *phase_rad,
        },
        ProfileDoc::Trace { points } => LoadProfile::Trace { points: points.clone() },
    }
}

fn policy(doc: &PolicyDoc) -> Result<Policy, ConfigError> {
    let mut errors = Vec::new();
    let allowed: &[&str] = match doc.kind {
        PolicyKind::StaticSplit => &["ran_fraction", "ai_fraction"],
        PolicyKind::TimeSplit => &["schedule"],
        PolicyKind::DynamicBackfill => &["epoch_s", "safety_margin", "forecast", "forecast_window_s"],
    };
    let present = [
        ("ran_fraction", doc.ran_fraction.is_some()),
        ("ai_fraction", doc.ai_fraction.is_some()),
        ("schedule", doc.schedule.is_some()),
        ("epoch_s", doc.epoch_s.is_some()),
        ("safety_margin", doc.safety_margin.is_some()),
        ("forecast", doc.forecast.is_some()),
        ("forecast_window_s", doc.forecast_window_s.is_some()),
    ];
    let kind = match doc.kind {
        PolicyKind::StaticSplit => "static_split",
        PolicyKind::TimeSplit => "time_split",
        PolicyKind::DynamicBackfill => "dynamic_backfill",
    };
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            errors.push(format!("policy.{key}: not used by {kind}"));
        }
    }
    let need = |key: &str, v: Option<f64>, errors: &mut Vec<String>| -> f64 {
        v.unwrap_or_else(|| {
            errors.push(format!("policy.{key}: required for {kind}"));
            0.0
        })
    };
    let built = match doc.kind {
        PolicyKind::StaticSplit => {
            let ran_fraction = need("ran_fraction", doc.ran_fraction, &mut errors);
            let ai_fraction = need("ai_fraction", doc.ai_fraction, &mut errors);
            Policy::StaticSplit { ran_fraction, ai_fraction }
        }
        PolicyKind::TimeSplit => {
            let schedule = match &doc.schedule {
                Some(s) => s,
                None => {
                    errors.push(format!("policy.schedule: required for {kind}"));
                    return Err(ConfigError::Schema(errors));
                }
            };
            if !errors.is_empty() {
                return Err(ConfigError::Schema(errors));
            }
            let mut windows = Vec::new();
            for (i, w) in schedule.iter().enumerate() {
                windows.push(TimeWindow {
                    start: micros(&format!("policy.schedule[{i}].start_s"), w.start_s)?,
                    end: micros(&format!("policy.schedule[{i}].end_s"), w.end_s)?,
                    ran_fraction: w.ran_fraction,
                });
            }
            Policy::TimeSplit { schedule: windows }
        }
        PolicyKind::DynamicBackfill => {
            let epoch_s = doc.epoch_s.unwrap_or(0.1);
            let margin = doc.safety_margin.unwrap_or(0.05);
            if !errors.is_empty() {
                return Err(ConfigError::Schema(errors));
            }
            let epoch = micros("policy.epoch_s", epoch_s)?;
            let forecast = match doc.forecast.unwrap_or(ForecastDoc::MaxOverWindow) {
                ForecastDoc::LastValue => {
                    if doc.forecast_window_s.is_some() {
                        return Err(schema("policy.forecast_window_s: not used by last_value forecasts"));
                    }
                    Forecast::LastValue
                }
                ForecastDoc::MaxOverWindow => {
                    let window = match doc.forecast_window_s {
                        Some(w) => micros("policy.forecast_window_s", w)?,
                        None => SimTime::from_micros(2 * epoch.as_micros()),
                    };
                    Forecast::MaxOverWindow { window }
                }
            };
            Policy::DynamicBackfill { epoch, safety_margin: margin, forecast }
        }
    };
    if errors.is_empty() {
        Ok(built)
    } else {
        Err(ConfigError::Schema(errors))
    }
}

/// Resolves references and builds the scenario. Dangling references are
/// schema errors; everything the core validation rejects is semantic.
pub fn scenario_from_document(doc: &ConfigDocument) -> Result<Scenario, ConfigError> {
    let mut gpu_refs: BTreeMap<String, GpuId> = BTreeMap::new();
    let mut servers = Vec::new();
    let mut next_gpu = 0u32;
    let mut errors = Vec::new();
    for (si, s) in doc.servers.iter().enumerate() {
        let mut gpus = Vec::new();
        let mut labels = Vec::new();
        for (gi, g) in s.gpus.iter().enumerate() {
            let granularity = Granularity::new(g.partition_granularity)
                .map_err(|e| semantic(format!("servers[{si}].gpus[{gi}].partition_granularity: {e}")))?;
            let id = GpuId(next_gpu);
            next_gpu += 1;
            if gpu_refs.insert(format!("{}/{}", s.id, g.id), id).is_some() {
                errors.push(format!("servers[{si}].gpus[{gi}].id: duplicate gpu `{}/{}`", s.id, g.id));
            }
            if g.memory_units == 0 {
                return Err(semantic(format!("servers[{si}].gpus[{gi}].memory_units: must be positive")));
            }
            gpus.push(GpuDevice::new(id, g.memory_units, granularity));
            labels.push(g.id.clone());
        }
        if s.cpu_cores == 0 {
            return Err(semantic(format!("servers[{si}].cpu_cores: must be positive")));
        }
        if !(s.frontend_port_gbps > 0.0 && s.backend_port_gbps > 0.0) {
            return Err(semantic(format!("servers[{si}]: port rates must be positive")));
        }
        let server = Server::new(ServerId(si as u32), gpus, s.cpu_cores, bundle(s.nf_bundle), s.frontend_port_gbps, s.backend_port_gbps)
            .map_err(|e| semantic(format!("servers[{si}].gpus: {e}")))?;
        servers.push(ServerSpec { label: s.id.clone(), server, gpu_labels: labels });
    }

    let mut cells = Vec::new();
    for (ci, c) in doc.cells.iter().enumerate() {
        let gpu = gpu_refs.get(&c.gpu).copied();
        if gpu.is_none() {
            errors.push(format!("cells[{ci}].gpu: unknown gpu `{}`", c.gpu));
        }
        let prof = doc.profiles.get(&c.profile);
        if prof.is_none() {
            errors.push(format!("cells[{ci}].profile: unknown profile `{}`", c.profile));
        }
        let (Some(gpu), Some(prof)) = (gpu, prof) else { continue };
        let config = CellConfig::new(c.bandwidth_mhz, c.scs_khz, c.tx_antennas, c.rx_antennas)
            .map_err(|e| semantic(format!("cells[{ci}]: {e}")))?;
        cells.push(CellSpec { label: c.id.clone(), config, profile: profile(prof), gpu });
    }

    let pool = match &doc.policy.pool {
        None => None,
        Some(refs) => {
            let mut ids = Vec::new();
            for (i, r) in refs.iter().enumerate() {
                match gpu_refs.get(r) {
                    Some(&g) => ids.push(g),
                    None => errors.push(format!("policy.pool[{i}]: unknown gpu `{r}`")),
                }
            }
            Some(ids)
        }
    };
    if !errors.is_empty() {
        return Err(ConfigError::Schema(errors));
    }

    let cal = &doc.calibration;
    let reference_cell = CellConfig::new(
        cal.reference_bandwidth_mhz,
        cal.reference_scs_khz,
        cal.reference_tx_antennas,
        cal.reference_rx_antennas,
    )
    .map_err(|e| semantic(format!("calibration: {e}")))?;
    let calibration = Calibration {
        reference_cell,
        reference_peak_fraction: cal.reference_peak_fraction,
        bandwidth_exponent: cal.bandwidth_exponent,
        antenna_exponent: cal.antenna_exponent,
        idle_floor_fraction: cal.idle_floor_fraction,
    };

    let mut ai_workloads = Vec::new();
    for (i, w) in doc.ai_workloads.iter().enumerate() {
        ai_workloads.push(workload(i, w)?);
    }

    let t = &doc.topology;
    Ok(Scenario {
        fabric: ReferenceFabric {
            compute_spines: t.compute_spines,
            compute_leaves: t.compute_leaves,
            converged_spines: t.converged_spines,
            converged_leaves: t.converged_leaves,
            link_capacity_gbps: t.link_capacity_gbps,
        },
        fronthaul: FronthaulCalibration {
            gbps_per_mhz_per_port: t.fronthaul_gbps_per_mhz_per_port,
            northbound_ratio: t.northbound_ratio,
        },
        servers,
        cells,
        calibration,
        ai_workloads,
        policy: policy(&doc.policy)?,
        pool,
        repartition_settle_slots: doc.policy.repartition_settle_slots,
        resume_delay: micros("policy.resume_delay_s", doc.policy.resume_delay_s)?,
        queue_bound: doc.policy.queue_bound,
        horizon: micros("sim.horizon_s", doc.sim.horizon_s)?,
        sample_interval: micros("sim.sample_interval_s", doc.sim.sample_interval_s)?,
        seed: doc.sim.seed,
    })
}

fn workload(i: usize, w: &AiWorkloadDoc) -> Result<AiWorkload, ConfigError> {
    let p = |k: &str| format!("ai_workloads[{i}].{k}");
    let arrival = match w.arrival {
        ArrivalKind::Poisson => {
            if w.jobs.is_some() {
                return Err(schema(format!("{}: not used by poisson arrivals", p("jobs"))));
            }
            Arrival::Poisson {
                rate_per_s: w.rate_per_s.ok_or_else(|| schema(format!("{}: required for poisson arrivals", p("rate_per_s"))))?,
            }
        }
        ArrivalKind::Trace => {
            if w.rate_per_s.is_some() {
                return Err(schema(format!("{}: not used by trace arrivals", p("rate_per_s"))));
            }
            let jobs = w.jobs.as_ref().ok_or_else(|| schema(format!("{}: required for trace arrivals", p("jobs"))))?;
            Arrival::Trace(jobs.iter().map(|&(arrival_s, compute_seconds)| TracedJob { arrival_s, compute_seconds }).collect())
        }
        ArrivalKind::Saturating => {
            if w.rate_per_s.is_some() || w.jobs.is_some() {
                return Err(schema(format!("ai_workloads[{i}]: saturating arrivals take no rate or jobs")));
            }
            Arrival::Saturating
        }
    };
    let job_size = match w.job_size {
        SizeKind::Constant => JobSize::Constant { compute_seconds: w.compute_seconds },
        SizeKind::Exponential => JobSize::Exponential { mean_compute_seconds: w.compute_seconds },
    };
    let slo_class = match (w.slo, w.latency_bound_s) {
        (SloDoc::Batch, None) => SloClass::Batch,
        (SloDoc::Batch, Some(_)) => return Err(schema(format!("{}: only interactive workloads have a bound", p("latency_bound_s")))),
        (SloDoc::Interactive, Some(b)) => SloClass::Interactive { latency_bound_s: b },
        (SloDoc::Interactive, None) => return Err(schema(format!("{}: required for interactive workloads", p("latency_bound_s")))),
    };
    let out = AiWorkload { arrival, job_size, slo_class, demand_fraction: w.demand_fraction };
    out.validate().map_err(|e| semantic(format!("ai_workloads[{i}]: {e}")))?;
    Ok(out)
}

/// Parses and fully validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let doc = document_from_table(parse_table(text)?)?;
    let scenario = scenario_from_document(&doc)?;
    match scenario.validate() {
        Ok(()) => Ok(scenario),
        Err(SimError::ScenarioInvalid(problems)) => Err(ConfigError::Semantic(problems)),
        Err(e) => Err(semantic(e.to_string())),
    }
}

fn bundle_doc(b: NfBundle) -> BundleDoc {
    match b {
        NfBundle::DuOnly => BundleDoc::DuOnly,
        NfBundle::DuCu => BundleDoc::DuCu,
        NfBundle::DuCuCn => BundleDoc::DuCuCn,
    }
}

fn profile_doc(p: &LoadProfile) -> ProfileDoc {
    match p {
        LoadProfile::Constant { level } => ProfileDoc::Constant { level: *level },
        LoadProfile::DiurnalSinusoid { min, max, period_s, phase_rad } => ProfileDoc::DiurnalSinusoid {
            min: *min,
            max: *max,
            period_s: *period_s,
            phase_rad: *phase_rad,
        },
        LoadProfile::Trace { points } => ProfileDoc::Trace { points: points.clone() },
    }
}

/// Document describing `scenario`; one profile per cell, named after it.
pub fn document_from_scenario(scenario: &Scenario) -> ConfigDocument {
    let labels: BTreeMap<GpuId, String> = scenario
        .servers
        .iter()
        .flat_map(|s| s.server.gpus.iter().zip(&s.gpu_labels).map(move |(g, l)| (g.id, format!("{}/{}", s.label, l))))
        .collect();
    let c = &scenario.calibration;
    let mut policy = PolicyDoc {
        kind: PolicyKind::StaticSplit,
        ran_fraction: None,
        ai_fraction: None,
        schedule: None,
        epoch_s: None,
        safety_margin: None,
        forecast: None,
        forecast_window_s: None,
        pool: scenario.pool.as_ref().map(|p| p.iter().map(|g| labels[g].clone()).collect()),
        repartition_settle_slots: scenario.repartition_settle_slots,
        resume_delay_s: scenario.resume_delay.as_secs_f64(),
        queue_bound: scenario.queue_bound,
    };
    match &scenario.policy {
        Policy::StaticSplit { ran_fraction, ai_fraction } => {
            policy.ran_fraction = Some(*ran_fraction);
            policy.ai_fraction = Some(*ai_fraction);
        }
        Policy::TimeSplit { schedule } => {
            policy.kind = PolicyKind::TimeSplit;
            policy.schedule = Some(
                schedule
                    .iter()
                    .map(|w| WindowDoc { start_s: w.start.as_secs_f64(), end_s: w.end.as_secs_f64(), ran_fraction: w.ran_fraction })
                    .collect(),
            );
        }
        Policy::DynamicBackfill { epoch, safety_margin, forecast } => {
            policy.kind = PolicyKind::DynamicBackfill;
            policy.epoch_s = Some(epoch.as_secs_f64());
            policy.safety_margin = Some(*safety_margin);
            match forecast {
                Forecast::LastValue => policy.forecast = Some(ForecastDoc::LastValue),
                Forecast::MaxOverWindow { window } => {
                    policy.forecast = Some(ForecastDoc::MaxOverWindow);
                    policy.forecast_window_s = Some(window.as_secs_f64());
                }
            }
        }
    }
    let ai_workloads = scenario
        .ai_workloads
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (arrival, rate_per_s, jobs) = match &w.arrival {
                Arrival::Poisson { rate_per_s } => (ArrivalKind::Poisson, Some(*rate_per_s), None),
                Arrival::Trace(t) => (ArrivalKind::Trace, None, Some(t.iter().map(|j| (j.arrival_s, j.compute_seconds)).collect())),
                Arrival::Saturating => (ArrivalKind::Saturating, None, None),
            };
            let (job_size, compute_seconds) = match w.job_size {
                JobSize::Constant { compute_seconds } => (SizeKind::Constant, compute_seconds),
                JobSize::Exponential { mean_compute_seconds } => (SizeKind::Exponential, mean_compute_seconds),
            };
            let (slo, latency_bound_s) = match w.slo_class {
                SloClass::Batch => (SloDoc::Batch, None),
                SloClass::Interactive { latency_bound_s } => (SloDoc::Interactive, Some(latency_bound_s)),
            };
            AiWorkloadDoc {
                id: format!("workload{}", i + 1),
                arrival,
                rate_per_s,
                jobs,
                job_size,
                compute_seconds,
                slo,
                latency_bound_s,
                demand_fraction: w.demand_fraction,
            }
        })
        .collect();
    ConfigDocument {
        topology: TopologyDoc {
            compute_spines: scenario.fabric.compute_spines,
            compute_leaves: scenario.fabric.compute_leaves,
            converged_spines: scenario.fabric.converged_spines,
            converged_leaves: scenario.fabric.converged_leaves,
            link_capacity_gbps: scenario.fabric.link_capacity_gbps,
            fronthaul_gbps_per_mhz_per_port: scenario.fronthaul.gbps_per_mhz_per_port,
            northbound_ratio: scenario.fronthaul.northbound_ratio,
        },
        servers: scenario
            .servers
            .iter()
            .map(|s| ServerDoc {
                id: s.label.clone(),
                cpu_cores: s.server.cpu_cores,
                nf_bundle: bundle_doc(s.server.hosted_nf_bundle),
                frontend_port_gbps: s.server.frontend_port_gbps,
                backend_port_gbps: s.server.backend_port_gbps,
                gpus: s
                    .server
                    .gpus
                    .iter()
                    .zip(&s.gpu_labels)
                    .map(|(g, l)| GpuDoc {
                        id: l.clone(),
                        memory_units: g.memory_units,
                        partition_granularity: g.granularity.step(),
                    })
                    .collect(),
            })
            .collect(),
        cells: scenario
            .cells
            .iter()
            .map(|c| CellDoc {
                id: c.label.clone(),
                bandwidth_mhz: c.config.bandwidth_mhz,
                scs_khz: c.config.scs_khz,
                tx_antennas: c.config.tx_antennas,
                rx_antennas: c.config.rx_antennas,
                gpu: labels[&c.gpu].clone(),
                profile: c.label.clone(),
            })
            .collect(),
        calibration: CalibrationDoc {
            reference_bandwidth_mhz: c.reference_cell.bandwidth_mhz,
            reference_scs_khz: c.reference_cell.scs_khz,
            reference_tx_antennas: c.reference_cell.tx_antennas,
            reference_rx_antennas: c.reference_cell.rx_antennas,
            reference_peak_fraction: c.reference_peak_fraction,
            bandwidth_exponent: c.bandwidth_exponent,
            antenna_exponent: c.antenna_exponent,
            idle_floor_fraction: c.idle_floor_fraction,
        },
        profiles: scenario.cells.iter().map(|c| (c.label.clone(), profile_doc(&c.profile))).collect(),
        ai_workloads,
        policy,
        sim: SimDoc {
            horizon_s: scenario.horizon.as_secs_f64(),
            seed: scenario.seed,
            sample_interval_s: scenario.sample_interval.as_secs_f64(),
        },
    }
}

/// Scenario text that parses back to `scenario`.
pub fn write_scenario(scenario: &Scenario) -> String {
    toml::to_string(&document_from_scenario(scenario)).expect("scenario documents always serialize")
}
