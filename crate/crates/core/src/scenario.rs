//! A complete, validated description of one simulation run.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::compute::{GpuId, Server, FRACTION_EPS};
use crate::error::SimError;
use crate::fabric::{build_reference_fabric, validate_topology, FabricTopology, FronthaulCalibration, ReferenceFabric, RuId};
use crate::orchestrator::{OrchestratorConfig, Policy};
use crate::time::SimTime;
use crate::workload::{ran_peak_fraction, AiWorkload, Calibration, CellConfig, LoadProfile, RanCell, RanWorkload};

#[derive(Debug, Clone, PartialEq)]
pub struct ServerSpec {
    pub label: String,
    pub server: Server,
    /// One label per entry of `server.gpus`.
    pub gpu_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub label: String,
    pub config: CellConfig,
    pub profile: LoadProfile,
    pub gpu: GpuId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub fabric: ReferenceFabric,
    pub fronthaul: FronthaulCalibration,
    pub servers: Vec<ServerSpec>,
    pub cells: Vec<CellSpec>,
    pub calibration: Calibration,
    pub ai_workloads: Vec<AiWorkload>,
    pub policy: Policy,
    /// GPUs the orchestrator manages. Defaults to the GPUs hosting cells.
    pub pool: Option<Vec<GpuId>>,
    pub repartition_settle_slots: u32,
    pub resume_delay: SimTime,
    pub queue_bound: usize,
    pub horizon: SimTime,
    pub sample_interval: SimTime,
    pub seed: u64,
}

/// SplitMix64 finalizer over `base + index`, used to derive independent seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scenario {
    /// Engine slot: the shortest slot among the cells, 1 ms without cells.
    pub fn slot(&self) -> SimTime {
        self.cells
            .iter()
            .map(|c| c.config.slot_duration())
            .min()
            .unwrap_or(SimTime::from_millis(1))
    }

    /// GPU labels in server order, as `server/gpu`.
    pub fn gpu_labels(&self) -> Vec<String> {
        self.servers
            .iter()
            .flat_map(|s| s.gpu_labels.iter().map(move |g| format!("{}/{}", s.label, g)))
            .collect()
    }

    pub fn gpu_ids(&self) -> Vec<GpuId> {
        self.servers.iter().flat_map(|s| s.server.gpus.iter().map(|g| g.id)).collect()
    }

    pub fn pool(&self) -> Vec<GpuId> {
        match &self.pool {
            Some(p) => {
                let mut p = p.clone();
                p.sort();
                p.dedup();
                p
            }
            None => {
                let hosts: BTreeSet<GpuId> = self.cells.iter().map(|c| c.gpu).collect();
                hosts.into_iter().collect()
            }
        }
    }

    pub fn orchestrator_config(&self) -> OrchestratorConfig {
        let slot = self.slot();
        OrchestratorConfig {
            policy: self.policy.clone(),
            pool: self.pool(),
            slot,
            repartition_settle: SimTime::from_micros(slot.as_micros() * self.repartition_settle_slots as u64),
            resume_delay: self.resume_delay,
            queue_bound: self.queue_bound,
        }
    }

    /// RAN cells grouped by hosting GPU.
    pub fn ran_workloads(&self) -> BTreeMap<GpuId, RanWorkload> {
        let mut out: BTreeMap<GpuId, RanWorkload> = BTreeMap::new();
        for c in &self.cells {
            out.entry(c.gpu).or_default().cells.push(RanCell {
                config: c.config,
                profile: c.profile.clone(),
            });
        }
        out
    }

    pub fn topology(&self) -> Result<FabricTopology, SimError> {
        let rus: Vec<RuId> = (0..self.cells.len() as u32).map(RuId).collect();
        let servers: Vec<Server> = self.servers.iter().map(|s| s.server.clone()).collect();
        Ok(build_reference_fabric(&self.fabric, &rus, &servers)?)
    }

    /// The same site with every AI workload removed.
    pub fn without_ai(&self) -> Scenario {
        Scenario { ai_workloads: Vec::new(), ..self.clone() }
    }

    /// Checks every cross-field invariant and reports all problems found.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut problems: Vec<String> = Vec::new();

        if self.horizon == SimTime::ZERO {
            problems.push("horizon must be positive".into());
        }
        if self.sample_interval == SimTime::ZERO {
            problems.push("sample interval must be positive".into());
        } else if self.sample_interval < self.slot() {
            problems.push(format!("sample interval {} is shorter than the slot {}", self.sample_interval, self.slot()));
        }
        if self.servers.is_empty() {
            problems.push("at least one server is required".into());
        }

        let mut server_ids = BTreeSet::new();
        let mut gpu_ids = BTreeSet::new();
        for s in &self.servers {
            if !server_ids.insert(s.server.id) {
                problems.push(format!("duplicate server id {}", s.server.id.0));
            }
            if s.gpu_labels.len() != s.server.gpus.len() {
                problems.push(format!("server {} has {} GPU labels for {} GPUs", s.label, s.gpu_labels.len(), s.server.gpus.len()));
            }
            for g in &s.server.gpus {
                if !gpu_ids.insert(g.id) {
                    problems.push(format!("duplicate gpu id {}", g.id.0));
                }
            }
        }

        if let Err(e) = self.calibration.validate() {
            problems.push(e.to_string());
        }
        let pool: BTreeSet<GpuId> = self.pool().into_iter().collect();
        for g in &pool {
            if !gpu_ids.contains(g) {
                problems.push(format!("pool names unknown gpu {}", g.0));
            }
        }
        let mut peak_by_gpu: BTreeMap<GpuId, f64> = BTreeMap::new();
        for c in &self.cells {
            if let Err(e) = c.profile.validate() {
                problems.push(format!("cell {}: {e}", c.label));
            }
            if !gpu_ids.contains(&c.gpu) {
                problems.push(format!("cell {} is hosted on unknown gpu {}", c.label, c.gpu.0));
            } else if !pool.contains(&c.gpu) {
                problems.push(format!("cell {} is hosted on gpu {} outside the orchestrator pool", c.label, c.gpu.0));
            }
            match ran_peak_fraction(&c.config, &self.calibration) {
                Ok(p) => *peak_by_gpu.entry(c.gpu).or_insert(0.0) += p,
                Err(e) => problems.push(format!("cell {}: {e}", c.label)),
            }
        }
        for (g, peak) in &peak_by_gpu {
            if *peak > 1.0 + FRACTION_EPS {
                problems.push(format!("RAN peak demand {peak:.3} on gpu {} exceeds one GPU", g.0));
            }
        }

        for (i, w) in self.ai_workloads.iter().enumerate() {
            if let Err(e) = w.validate() {
                problems.push(format!("ai workload {i}: {e}"));
            }
        }

        if let Err(e) = self.policy.validate(self.horizon) {
            problems.push(e.to_string());
        }
        let slot = self.slot();
        let granularities: Vec<_> = self
            .servers
            .iter()
            .flat_map(|s| s.server.gpus.iter())
            .filter(|g| pool.contains(&g.id))
            .map(|g| g.granularity)
            .collect();
        match &self.policy {
            Policy::StaticSplit { ran_fraction, ai_fraction } => {
                for g in &granularities {
                    for f in [ran_fraction, ai_fraction] {
                        if *f > FRACTION_EPS && g.fraction_to_units(*f).is_err() {
                            problems.push(format!("static fraction {f} is not a multiple of granularity {}", g.step()));
                        }
                    }
                }
            }
            Policy::TimeSplit { schedule } => {
                for w in schedule {
                    if !w.start.is_multiple_of(slot) {
                        problems.push(format!("time split window at {} is not slot aligned", w.start));
                    }
                    for g in &granularities {
                        for f in [w.ran_fraction, 1.0 - w.ran_fraction] {
                            if f > FRACTION_EPS && g.fraction_to_units(f).is_err() {
                                problems.push(format!("time split fraction {f} is not a multiple of granularity {}", g.step()));
                            }
                        }
                    }
                }
            }
            Policy::DynamicBackfill { epoch, .. } => {
                if !epoch.is_multiple_of(slot) {
                    problems.push(format!("policy epoch {epoch} is not a multiple of the slot {slot}"));
                }
            }
        }

        if !self.servers.is_empty() && !self.cells.is_empty() {
            match self.topology() {
                Ok(topo) => {
                    for v in validate_topology(&topo) {
                        problems.push(format!("topology: {v}"));
                    }
                }
                Err(e) => problems.push(format!("topology: {e}")),
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::ScenarioInvalid(problems))
        }
    }
}
