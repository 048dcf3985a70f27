//! RAN compute demand from cell parameters and load profiles, and AI
//! inference job streams.
//!
//! A cell's peak GPU demand follows a separable power law anchored on a
//! reference cell: the 4T4R, 100 MHz, 30 kHz cell peaks at 40% of one GPU.
//! Instantaneous demand scales that peak by the cell's load profile.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::SeedableRng;
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64Mcg;

use crate::error::WorkloadError;
use crate::time::SimTime;

pub const SUPPORTED_SCS_KHZ: [u32; 4] = [15, 30, 60, 120];

/// Slot length for a subcarrier spacing: 1 ms / (scs / 15 kHz).
pub fn slot_duration(scs_khz: u32) -> Result<SimTime, WorkloadError> {
    if !SUPPORTED_SCS_KHZ.contains(&scs_khz) {
        return Err(WorkloadError::UnsupportedNumerology { scs_khz });
    }
    Ok(SimTime::from_micros(15_000 / scs_khz as u64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    pub bandwidth_mhz: f64,
    pub scs_khz: u32,
    pub tx_antennas: u32,
    pub rx_antennas: u32,
}

impl CellConfig {
    pub fn new(bandwidth_mhz: f64, scs_khz: u32, tx_antennas: u32, rx_antennas: u32) -> Result<Self, WorkloadError> {
        if !(bandwidth_mhz > 0.0) || !bandwidth_mhz.is_finite() {
            return Err(WorkloadError::InvalidCell("bandwidth must be positive"));
        }
        if tx_antennas == 0 || rx_antennas == 0 {
            return Err(WorkloadError::InvalidCell("antenna counts must be at least one"));
        }
        slot_duration(scs_khz)?;
        Ok(CellConfig {
            bandwidth_mhz,
            scs_khz,
            tx_antennas,
            rx_antennas,
        })
    }

    /// 4T4R, 100 MHz carrier, 30 kHz subcarrier spacing.
    pub fn poc() -> Self {
        CellConfig {
            bandwidth_mhz: 100.0,
            scs_khz: 30,
            tx_antennas: 4,
            rx_antennas: 4,
        }
    }

    pub fn slot_duration(&self) -> SimTime {
        slot_duration(self.scs_khz).expect("validated at construction")
    }

    fn min_antennas(&self) -> u32 {
        self.tx_antennas.min(self.rx_antennas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub reference_cell: CellConfig,
    pub reference_peak_fraction: f64,
    pub bandwidth_exponent: f64,
    pub antenna_exponent: f64,
    pub idle_floor_fraction: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            reference_cell: CellConfig::poc(),
            reference_peak_fraction: 0.40,
            bandwidth_exponent: 1.0,
            antenna_exponent: 1.0,
            idle_floor_fraction: 0.0,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.reference_peak_fraction > 0.0 && self.reference_peak_fraction <= 1.0) {
            return Err(WorkloadError::InvalidCalibration("reference_peak_fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.idle_floor_fraction) {
            return Err(WorkloadError::InvalidCalibration("idle_floor_fraction must lie in [0, 1]"));
        }
        if !self.bandwidth_exponent.is_finite() || !self.antenna_exponent.is_finite() {
            return Err(WorkloadError::InvalidCalibration("exponents must be finite"));
        }
        Ok(())
    }
}

/// Peak GPU fraction one cell needs at full load.
pub fn ran_peak_fraction(cell: &CellConfig, calib: &Calibration) -> Result<f64, WorkloadError> {
    let reference = &calib.reference_cell;
    let bandwidth = libm::pow(cell.bandwidth_mhz / reference.bandwidth_mhz, calib.bandwidth_exponent);
    let antennas = libm::pow(
        cell.min_antennas() as f64 / reference.min_antennas() as f64,
        calib.antenna_exponent,
    );
    let fraction = calib.reference_peak_fraction * bandwidth * antennas;
    if fraction > 1.0 + 1e-9 {
        return Err(WorkloadError::CalibrationOverflow { fraction });
    }
    Ok(fraction.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Load over time, always within [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum LoadProfile {
    Constant { level: f64 },
    /// `min + (max - min) * (1 + sin(2πt/period + phase)) / 2`
    DiurnalSinusoid {
        min: f64,
        max: f64,
        period_s: f64,
        phase_rad: f64,
    },
    /// Step interpolation between `(time_s, level)` points. Before the first
    /// point the first level holds.
    Trace { points: Vec<(f64, f64)> },
}

impl LoadProfile {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match self {
            LoadProfile::Constant { level } => {
                if !unit(*level) {
                    return Err(WorkloadError::InvalidProfile("constant level must lie in [0, 1]"));
                }
            }
            LoadProfile::DiurnalSinusoid { min, max, period_s, phase_rad } => {
                if !unit(*min) || !unit(*max) || min > max {
                    return Err(WorkloadError::InvalidProfile("diurnal needs 0 <= min <= max <= 1"));
                }
                if !(*period_s > 0.0) || !period_s.is_finite() || !phase_rad.is_finite() {
                    return Err(WorkloadError::InvalidProfile("diurnal period must be positive"));
                }
            }
            LoadProfile::Trace { points } => {
                if points.is_empty() {
                    return Err(WorkloadError::EmptyTrace);
                }
                if points.iter().any(|&(t, v)| !unit(v) || !(t >= 0.0) || !t.is_finite()) {
                    return Err(WorkloadError::InvalidProfile("trace levels must lie in [0, 1] at t >= 0"));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(WorkloadError::InvalidProfile("trace timestamps must strictly increase"));
                }
            }
        }
        Ok(())
    }

    /// Largest level the profile can take in `[from_s, to_s)`.
    pub fn peak_between(&self, from_s: f64, to_s: f64) -> f64 {
        match self {
            LoadProfile::Constant { level } => *level,
            LoadProfile::DiurnalSinusoid { max, .. } => *max,
            LoadProfile::Trace { points } => {
                let start = points.partition_point(|&(t, _)| t <= from_s).saturating_sub(1);
                points[start..]
                    .iter()
                    .enumerate()
                    .take_while(|(i, &(t, _))| *i == 0 || t < to_s)
                    .map(|(_, &(_, v))| v)
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Times in `(0, horizon)` at which a step profile changes level.
    pub fn change_points(&self, horizon: SimTime) -> Vec<SimTime> {
        match self {
            LoadProfile::Trace { points } => points
                .iter()
                .map(|&(t, _)| SimTime::from_secs_f64(t))
                .filter(|&t| t > SimTime::ZERO && t < horizon)
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Load level of `profile` at `t_s` seconds.
pub fn sample_load(profile: &LoadProfile, t_s: f64) -> Result<f64, WorkloadError> {
    let level = match profile {
        LoadProfile::Constant { level } => *level,
        LoadProfile::DiurnalSinusoid { min, max, period_s, phase_rad } => {
            let s = libm::sin(2.0 * PI * t_s / period_s + phase_rad);
            min + (max - min) * (1.0 + s) / 2.0
        }
        LoadProfile::Trace { points } => {
            if points.is_empty() {
                return Err(WorkloadError::EmptyTrace);
            }
            let idx = points.partition_point(|&(t, _)| t <= t_s);
            points[idx.saturating_sub(1)].1
        }
    };
    Ok(level.clamp(0.0, 1.0))
}

/// One cell and the load it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct RanCell {
    pub config: CellConfig,
    pub profile: LoadProfile,
}

/// The RAN cells served from one GPU.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RanWorkload {
    pub cells: Vec<RanCell>,
}

impl RanWorkload {
    /// Slot deadline: the shortest slot among the cells (1 ms when empty).
    pub fn deadline(&self) -> SimTime {
        self.cells
            .iter()
            .map(|c| c.config.slot_duration())
            .min()
            .unwrap_or(SimTime::from_millis(1))
    }

    pub fn peak_fractions(&self, calib: &Calibration) -> Result<Vec<f64>, WorkloadError> {
        self.cells.iter().map(|c| ran_peak_fraction(&c.config, calib)).collect()
    }

    /// Demand from precomputed per-cell peaks; same result as [`ran_demand_at`].
    pub fn demand_with_peaks(&self, peaks: &[f64], floor: f64, t_s: f64) -> Result<f64, WorkloadError> {
        let mut sum = 0.0;
        for (cell, peak) in self.cells.iter().zip(peaks) {
            sum += peak * sample_load(&cell.profile, t_s)?;
        }
        Ok(sum.max(floor))
    }
}

/// GPU fraction the workload needs at `t_s`.
pub fn ran_demand_at(workload: &RanWorkload, calib: &Calibration, t_s: f64) -> Result<f64, WorkloadError> {
    let peaks = workload.peak_fractions(calib)?;
    workload.demand_with_peaks(&peaks, calib.idle_floor_fraction, t_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SloClass {
    Interactive { latency_bound_s: f64 },
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JobSize {
    Constant { compute_seconds: f64 },
    Exponential { mean_compute_seconds: f64 },
}

/// A job listed explicitly in a trace workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracedJob {
    pub arrival_s: f64,
    pub compute_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arrival {
    Poisson { rate_per_s: f64 },
    Trace(Vec<TracedJob>),
    /// One job with unbounded backlog that absorbs any capacity granted to it.
    Saturating,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiWorkload {
    pub arrival: Arrival,
    pub job_size: JobSize,
    pub slo_class: SloClass,
    /// GPU fraction each job asks for while running.
    pub demand_fraction: f64,
}

impl AiWorkload {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        match &self.arrival {
            Arrival::Poisson { rate_per_s } if !(*rate_per_s >= 0.0) || !rate_per_s.is_finite() => {
                return Err(WorkloadError::InvalidWorkload("arrival rate must be non-negative"));
            }
            Arrival::Trace(jobs) if jobs.iter().any(|j| !(j.compute_seconds > 0.0) || !(j.arrival_s >= 0.0)) => {
                return Err(WorkloadError::InvalidWorkload("traced jobs need positive size and arrival >= 0"));
            }
            _ => {}
        }
        let size_ok = match self.job_size {
            JobSize::Constant { compute_seconds } => compute_seconds > 0.0 && compute_seconds.is_finite(),
            JobSize::Exponential { mean_compute_seconds } => {
                mean_compute_seconds > 0.0 && mean_compute_seconds.is_finite()
            }
        };
        if !size_ok {
            return Err(WorkloadError::InvalidWorkload("job sizes must be positive"));
        }
        if !(self.demand_fraction > 0.0 && self.demand_fraction <= 1.0) {
            return Err(WorkloadError::InvalidWorkload("demand_fraction must lie in (0, 1]"));
        }
        if let SloClass::Interactive { latency_bound_s } = self.slo_class {
            if !(latency_bound_s > 0.0) {
                return Err(WorkloadError::InvalidWorkload("latency bound must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JobState {
    Queued,
    Running,
    Preempted,
    Done,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiJob {
    pub id: JobId,
    /// Index of the workload that produced the job.
    pub workload: u32,
    pub arrival_time: SimTime,
    pub remaining_compute_seconds: f64,
    pub demand_fraction: f64,
    /// Elastic jobs run on whatever fraction is available; rigid jobs are
    /// placed only where their full demand fits.
    pub elastic: bool,
    pub slo_class: SloClass,
    pub state: JobState,
}

impl AiJob {
    /// Fraction a placement must offer before the job can start.
    pub fn required_fraction(&self) -> f64 {
        match self.slo_class {
            SloClass::Interactive { latency_bound_s } if !self.elastic => {
                self.demand_fraction.max(self.remaining_compute_seconds / latency_bound_s)
            }
            _ => self.demand_fraction,
        }
    }
}

/// Job stream for one workload over `[0, horizon)`. Ids count from zero in
/// arrival order; the caller renumbers when merging workloads.
pub fn gen_ai_arrivals(workload: &AiWorkload, workload_index: u32, seed: u64, horizon: SimTime) -> Vec<AiJob> {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let size = {
        let exp = match workload.job_size {
            JobSize::Exponential { mean_compute_seconds } => Exp::new(1.0 / mean_compute_seconds).ok(),
            JobSize::Constant { .. } => None,
        };
        move |rng: &mut Pcg64Mcg| match (workload.job_size, &exp) {
            (JobSize::Constant { compute_seconds }, _) => compute_seconds,
            (_, Some(e)) => e.sample(rng).max(1e-9),
            (JobSize::Exponential { mean_compute_seconds }, None) => mean_compute_seconds,
        }
    };
    let job = |seq: usize, at: SimTime, remaining: f64, elastic: bool| AiJob {
        id: JobId(seq as u64),
        workload: workload_index,
        arrival_time: at,
        remaining_compute_seconds: remaining,
        demand_fraction: workload.demand_fraction,
        elastic,
        slo_class: workload.slo_class,
        state: JobState::Queued,
    };

    match &workload.arrival {
        Arrival::Saturating => alloc::vec![job(0, SimTime::ZERO, f64::INFINITY, true)],
        Arrival::Trace(traced) => {
            let mut sorted: Vec<&TracedJob> = traced.iter().collect();
            sorted.sort_by(|a, b| a.arrival_s.total_cmp(&b.arrival_s));
            sorted
                .into_iter()
                .map(|j| (SimTime::from_secs_f64(j.arrival_s), j.compute_seconds))
                .filter(|(at, _)| *at < horizon)
                .enumerate()
                .map(|(i, (at, size))| job(i, at, size, false))
                .collect()
        }
        Arrival::Poisson { rate_per_s } => {
            let Ok(gap) = Exp::new(*rate_per_s) else {
                return Vec::new();
            };
            if *rate_per_s <= 0.0 {
                return Vec::new();
            }
            let horizon_s = horizon.as_secs_f64();
            let mut out = Vec::new();
            let mut t = 0.0;
            loop {
                t += gap.sample(&mut rng);
                if t >= horizon_s {
                    break;
                }
                let s = size(&mut rng);
                out.push(job(out.len(), SimTime::from_secs_f64(t), s, false));
            }
            out
        }
    }
}
