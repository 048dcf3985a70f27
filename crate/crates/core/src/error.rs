use alloc::string::String;
use alloc::vec::Vec;

use crate::compute::{GpuId, InstanceId, ServerId, TenantClass};
use crate::fabric::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComputeError {
    #[error("slice fractions sum to {sum}, more than one GPU")]
    PartitionOverflow { sum: f64 },
    #[error("fraction {fraction} is not a multiple of granularity {granularity}")]
    GranularityViolation { fraction: f64, granularity: f64 },
    #[error("fraction {fraction} outside (0, 1]")]
    InvalidFraction { fraction: f64 },
    #[error("granularity {step} does not divide one GPU")]
    InvalidGranularity { step: f64 },
    #[error("memory fractions sum to {sum}, more than one GPU")]
    MemoryOverflow { sum: f64 },
    #[error("partition needs at least one slice")]
    EmptyPartition,
    #[error("{fractions} fractions but {classes} classes")]
    LengthMismatch { fractions: usize, classes: usize },
    #[error("{requested} request on {slice} slice {instance}")]
    ClassMismatch {
        instance: InstanceId,
        slice: TenantClass,
        requested: TenantClass,
    },
    #[error("gpu {} holds {granted} of {class} grants but the new layout offers {capacity}", gpu.0)]
    ActiveAllocationConflict {
        gpu: GpuId,
        class: TenantClass,
        granted: f64,
        capacity: f64,
    },
    #[error("no such slice {instance}")]
    UnknownInstance { instance: InstanceId },
    #[error("demand {demand} must be a finite non-negative fraction")]
    InvalidDemand { demand: f64 },
    #[error("server {} has no GPUs", server.0)]
    NoGpus { server: ServerId },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("unsupported subcarrier spacing {scs_khz} kHz")]
    UnsupportedNumerology { scs_khz: u32 },
    #[error("cell peak demand {fraction} exceeds one GPU")]
    CalibrationOverflow { fraction: f64 },
    #[error("load trace has no points")]
    EmptyTrace,
    #[error("invalid cell: {0}")]
    InvalidCell(&'static str),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(&'static str),
    #[error("invalid load profile: {0}")]
    InvalidProfile(&'static str),
    #[error("invalid AI workload: {0}")]
    InvalidWorkload(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FabricError {
    #[error("spine and leaf counts must be at least one, with at least one RU and one server")]
    InvalidCounts,
    #[error("{tier} tier has {count} leaves; leaves come in pairs")]
    OddLeafCount { tier: &'static str, count: usize },
    #[error("endpoint {0} has no path to a grandmaster")]
    UnreachableEndpoint(NodeId),
    #[error("no path from {src} to {dst}")]
    NoPath { src: NodeId, dst: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("policy epoch at {0} is not aligned to the policy's boundaries")]
    InvalidEpoch(SimTime),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Compute(#[from] ComputeError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("scenario invalid: {}", .0.join("; "))]
    ScenarioInvalid(Vec<String>),
    #[error("{kind} event at {time}: {source}")]
    Event {
        time: SimTime,
        kind: &'static str,
        source: OrchestratorError,
    },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("summary of an empty trace")]
    EmptyTrace,
}
