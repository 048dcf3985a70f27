#![allow(dead_code)]

use airan_core::compute::{GpuDevice, GpuId, Granularity, NfBundle, Server, ServerId};
use airan_core::fabric::{FronthaulCalibration, ReferenceFabric};
use airan_core::orchestrator::Policy;
use airan_core::scenario::{CellSpec, Scenario, ServerSpec};
use airan_core::time::SimTime;
use airan_core::workload::{AiWorkload, Arrival, Calibration, CellConfig, JobSize, LoadProfile, SloClass};

pub fn saturating_ai() -> AiWorkload {
    AiWorkload {
        arrival: Arrival::Saturating,
        job_size: JobSize::Constant { compute_seconds: 1.0 },
        slo_class: SloClass::Batch,
        demand_fraction: 1.0,
    }
}

/// One server with two GPUs and one 100 MHz 4T4R cell on the first.
pub fn poc(policy: Policy, profile: LoadProfile, horizon_s: u64) -> Scenario {
    let gpus = vec![
        GpuDevice::new(GpuId(0), 80, Granularity::default()),
        GpuDevice::new(GpuId(1), 80, Granularity::default()),
    ];
    Scenario {
        fabric: ReferenceFabric::default(),
        fronthaul: FronthaulCalibration::default(),
        servers: vec![ServerSpec {
            label: "server1".into(),
            server: Server::new(ServerId(0), gpus, 72, NfBundle::DuCuCn, 400.0, 400.0).unwrap(),
            gpu_labels: vec!["gpu1".into(), "gpu2".into()],
        }],
        cells: vec![CellSpec {
            label: "cell1".into(),
            config: CellConfig::poc(),
            profile,
            gpu: GpuId(0),
        }],
        calibration: Calibration::default(),
        ai_workloads: vec![saturating_ai()],
        policy,
        pool: None,
        repartition_settle_slots: 1,
        resume_delay: SimTime::ZERO,
        queue_bound: 10_000,
        horizon: SimTime::from_micros(horizon_s * 1_000_000),
        sample_interval: SimTime::from_millis(10),
        seed: 1,
    }
}

pub fn static_split() -> Policy {
    Policy::StaticSplit { ran_fraction: 0.4, ai_fraction: 0.6 }
}
