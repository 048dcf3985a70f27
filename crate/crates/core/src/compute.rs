//! Servers, partitionable GPUs and hard-isolated fractional GPU instances.
//!
//! Slice sizes are held as integer multiples of the device's partition
//! granularity, so partition arithmetic is exact. Grants inside a slice are
//! continuous fractions and are tracked per tenant class in a per-slot ledger.

use alloc::vec::Vec;
use core::fmt;

use crate::error::ComputeError;
use crate::time::SimTime;

/// Tolerance used for every fraction comparison in the model.
pub const FRACTION_EPS: f64 = 1e-9;

/// Default slice step: 5% of a GPU.
pub const DEFAULT_GRANULARITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(pub u32);

/// Cluster-wide GPU identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GpuId(pub u32);

/// Identifies one slice of one GPU. The generation changes on every
/// effective repartition, so ids of destroyed slices never resolve again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstanceId {
    pub gpu: GpuId,
    pub generation: u32,
    pub index: u16,
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gpu{}.g{}.{}", self.gpu.0, self.generation, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TenantClass {
    Ran,
    Ai,
    Free,
}

impl fmt::Display for TenantClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TenantClass::Ran => "RAN",
            TenantClass::Ai => "AI",
            TenantClass::Free => "FREE",
        })
    }
}

/// Which network functions a server runs; decides its north-south egress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NfBundle {
    DuOnly,
    DuCu,
    DuCuCn,
}

/// Smallest allocatable slice step, stored as the number of steps per GPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Granularity {
    units_per_gpu: u32,
}

impl Granularity {
    /// `step` must lie in (0, 1] and divide 1.0 within 1e-9.
    pub fn new(step: f64) -> Result<Self, ComputeError> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(ComputeError::InvalidGranularity { step });
        }
        let units = 1.0 / step;
        let rounded = libm::round(units);
        if libm::fabs(units - rounded) > 1e-9 * rounded.max(1.0) || rounded > u32::MAX as f64 {
            return Err(ComputeError::InvalidGranularity { step });
        }
        Ok(Granularity { units_per_gpu: rounded as u32 })
    }

    pub fn from_units_per_gpu(units_per_gpu: u32) -> Self {
        assert!(units_per_gpu > 0, "granularity needs at least one unit per GPU");
        Granularity { units_per_gpu }
    }

    pub fn units_per_gpu(self) -> u32 {
        self.units_per_gpu
    }

    pub fn step(self) -> f64 {
        1.0 / self.units_per_gpu as f64
    }

    pub fn units_to_fraction(self, units: u32) -> f64 {
        units as f64 / self.units_per_gpu as f64
    }

    /// Converts a slice fraction to whole granularity steps.
    pub fn fraction_to_units(self, fraction: f64) -> Result<u32, ComputeError> {
        if !(fraction > 0.0 && fraction <= 1.0 + FRACTION_EPS) {
            return Err(ComputeError::InvalidFraction { fraction });
        }
        let units = fraction * self.units_per_gpu as f64;
        let rounded = libm::round(units);
        if libm::fabs(units - rounded) > FRACTION_EPS * self.units_per_gpu as f64 || rounded < 1.0 {
            return Err(ComputeError::GranularityViolation {
                fraction,
                granularity: self.step(),
            });
        }
        Ok(rounded as u32)
    }
}

impl Default for Granularity {
    fn default() -> Self {
        Granularity::from_units_per_gpu(20)
    }
}

/// A partitionable accelerator. Compute capacity is always one whole GPU.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuDevice {
    pub id: GpuId,
    pub memory_units: u32,
    pub granularity: Granularity,
}

impl GpuDevice {
    pub fn new(id: GpuId, memory_units: u32, granularity: Granularity) -> Self {
        GpuDevice {
            id,
            memory_units: memory_units.max(1),
            granularity,
        }
    }

    pub const fn compute_capacity(&self) -> f64 {
        1.0
    }
}

/// A hard-isolated slice of a GPU.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuInstance {
    pub id: InstanceId,
    pub units: u32,
    pub memory_fraction: f64,
    pub tenant_class: TenantClass,
    granularity: Granularity,
}

impl GpuInstance {
    pub fn parent_gpu(&self) -> GpuId {
        self.id.gpu
    }

    pub fn compute_fraction(&self) -> f64 {
        self.granularity.units_to_fraction(self.units)
    }

    /// A RAN request may use RAN or FREE slices, an AI request AI or FREE slices.
    pub fn accepts(&self, class: TenantClass) -> bool {
        self.tenant_class == TenantClass::Free || self.tenant_class == class
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Server {
    pub id: ServerId,
    pub gpus: Vec<GpuDevice>,
    pub cpu_cores: u32,
    pub hosted_nf_bundle: NfBundle,
    pub frontend_port_gbps: f64,
    pub backend_port_gbps: f64,
}

impl Server {
    pub fn new(
        id: ServerId,
        gpus: Vec<GpuDevice>,
        cpu_cores: u32,
        hosted_nf_bundle: NfBundle,
        frontend_port_gbps: f64,
        backend_port_gbps: f64,
    ) -> Result<Self, ComputeError> {
        if gpus.is_empty() {
            return Err(ComputeError::NoGpus { server: id });
        }
        Ok(Server {
            id,
            gpus,
            cpu_cores: cpu_cores.max(1),
            hosted_nf_bundle,
            frontend_port_gbps,
            backend_port_gbps,
        })
    }
}

/// Outcome of one allocation request against one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub instance: InstanceId,
    pub granted_fraction: f64,
    pub shortfall_fraction: f64,
    pub tenant_class: TenantClass,
}

/// Splits a GPU into slices. Capacity not covered by `fractions` becomes a
/// trailing FREE slice when it is at least one granularity step.
pub fn partition_gpu(
    gpu: &GpuDevice,
    fractions: &[f64],
    classes: &[TenantClass],
) -> Result<Vec<GpuInstance>, ComputeError> {
    build_instances(gpu, 0, fractions, classes, None)
}

/// As [`partition_gpu`], with memory fractions set per slice instead of
/// mirroring the compute fractions.
pub fn partition_gpu_with_memory(
    gpu: &GpuDevice,
    fractions: &[f64],
    classes: &[TenantClass],
    memory_fractions: &[f64],
) -> Result<Vec<GpuInstance>, ComputeError> {
    build_instances(gpu, 0, fractions, classes, Some(memory_fractions))
}

fn build_instances(
    gpu: &GpuDevice,
    generation: u32,
    fractions: &[f64],
    classes: &[TenantClass],
    memory_fractions: Option<&[f64]>,
) -> Result<Vec<GpuInstance>, ComputeError> {
    if fractions.is_empty() {
        return Err(ComputeError::EmptyPartition);
    }
    if fractions.len() != classes.len() {
        return Err(ComputeError::LengthMismatch {
            fractions: fractions.len(),
            classes: classes.len(),
        });
    }
    if let Some(mem) = memory_fractions {
        if mem.len() != fractions.len() {
            return Err(ComputeError::LengthMismatch {
                fractions: fractions.len(),
                classes: mem.len(),
            });
        }
        let total: f64 = mem.iter().sum();
        if mem.iter().any(|m| !(*m > 0.0 && *m <= 1.0)) || total > 1.0 + FRACTION_EPS {
            return Err(ComputeError::MemoryOverflow { sum: total });
        }
    }

    let g = gpu.granularity;
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + FRACTION_EPS {
        return Err(ComputeError::PartitionOverflow { sum: total });
    }
    let mut units = Vec::with_capacity(fractions.len());
    for &f in fractions {
        units.push(g.fraction_to_units(f)?);
    }
    let used: u32 = units.iter().sum();
    if used > g.units_per_gpu() {
        return Err(ComputeError::PartitionOverflow { sum: total });
    }

    let mut out = Vec::with_capacity(fractions.len() + 1);
    for (i, (&u, &class)) in units.iter().zip(classes).enumerate() {
        let memory_fraction = match memory_fractions {
            Some(mem) => mem[i],
            None => g.units_to_fraction(u),
        };
        out.push(GpuInstance {
            id: InstanceId { gpu: gpu.id, generation, index: i as u16 },
            units: u,
            memory_fraction,
            tenant_class: class,
            granularity: g,
        });
    }
    let rest = g.units_per_gpu() - used;
    if rest > 0 {
        let assigned_memory: f64 = out.iter().map(|i| i.memory_fraction).sum();
        out.push(GpuInstance {
            id: InstanceId { gpu: gpu.id, generation, index: out.len() as u16 },
            units: rest,
            memory_fraction: (1.0 - assigned_memory).max(0.0),
            tenant_class: TenantClass::Free,
            granularity: g,
        });
    }
    Ok(out)
}

/// Granted fractions on one slice in the current slot, split by class.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SliceGrants {
    pub ran: f64,
    pub ai: f64,
}

impl SliceGrants {
    pub fn total(&self) -> f64 {
        self.ran + self.ai
    }

    fn get_mut(&mut self, class: TenantClass) -> &mut f64 {
        match class {
            TenantClass::Ran => &mut self.ran,
            _ => &mut self.ai,
        }
    }

    fn get(&self, class: TenantClass) -> f64 {
        match class {
            TenantClass::Ran => self.ran,
            _ => self.ai,
        }
    }
}

/// One GPU's current slices plus its grant ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct GpuState {
    device: GpuDevice,
    generation: u32,
    instances: Vec<GpuInstance>,
    grants: Vec<SliceGrants>,
    settling_until: SimTime,
}

impl GpuState {
    /// An unpartitioned GPU: one FREE slice covering the whole device.
    pub fn new(device: GpuDevice) -> Self {
        let instances = build_instances(&device, 0, &[1.0], &[TenantClass::Free], None)
            .expect("a whole-GPU slice is always valid");
        let grants = alloc::vec![SliceGrants::default(); instances.len()];
        GpuState {
            device,
            generation: 0,
            instances,
            grants,
            settling_until: SimTime::ZERO,
        }
    }

    pub fn partitioned(
        device: GpuDevice,
        fractions: &[f64],
        classes: &[TenantClass],
    ) -> Result<Self, ComputeError> {
        let instances = build_instances(&device, 0, fractions, classes, None)?;
        let grants = alloc::vec![SliceGrants::default(); instances.len()];
        Ok(GpuState {
            device,
            generation: 0,
            instances,
            grants,
            settling_until: SimTime::ZERO,
        })
    }

    pub fn device(&self) -> &GpuDevice {
        &self.device
    }

    pub fn id(&self) -> GpuId {
        self.device.id
    }

    pub fn instances(&self) -> &[GpuInstance] {
        &self.instances
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn settling_until(&self) -> SimTime {
        self.settling_until
    }

    /// New slices accept allocations only once their settling delay has passed.
    pub fn is_settled(&self, now: SimTime) -> bool {
        now >= self.settling_until
    }

    fn index_of(&self, id: InstanceId) -> Result<usize, ComputeError> {
        if id.gpu != self.device.id || id.generation != self.generation {
            return Err(ComputeError::UnknownInstance { instance: id });
        }
        let idx = id.index as usize;
        if idx < self.instances.len() {
            Ok(idx)
        } else {
            Err(ComputeError::UnknownInstance { instance: id })
        }
    }

    pub fn instance(&self, id: InstanceId) -> Option<&GpuInstance> {
        self.index_of(id).ok().map(|i| &self.instances[i])
    }

    pub fn grants(&self, id: InstanceId) -> Option<SliceGrants> {
        self.index_of(id).ok().map(|i| self.grants[i])
    }

    /// The first slice `class` may use: its own class first, then FREE.
    pub fn home_instance(&self, class: TenantClass) -> Option<&GpuInstance> {
        self.instances
            .iter()
            .find(|i| i.tenant_class == class)
            .or_else(|| self.instances.iter().find(|i| i.tenant_class == TenantClass::Free))
    }

    /// Unused capacity of one slice in the current slot.
    pub fn headroom(&self, id: InstanceId) -> f64 {
        match self.index_of(id) {
            Ok(i) => (self.instances[i].compute_fraction() - self.grants[i].total()).max(0.0),
            Err(_) => 0.0,
        }
    }

    /// Grants up to the slice's remaining headroom. Before the settling
    /// delay has elapsed the whole demand is reported as shortfall.
    pub fn allocate(
        &mut self,
        instance: InstanceId,
        demand: f64,
        class: TenantClass,
        now: SimTime,
    ) -> Result<Allocation, ComputeError> {
        if !(demand >= 0.0) || !demand.is_finite() {
            return Err(ComputeError::InvalidDemand { demand });
        }
        if class == TenantClass::Free {
            return Err(ComputeError::ClassMismatch {
                instance,
                slice: TenantClass::Free,
                requested: class,
            });
        }
        let idx = self.index_of(instance)?;
        let inst = &self.instances[idx];
        if !inst.accepts(class) {
            return Err(ComputeError::ClassMismatch {
                instance,
                slice: inst.tenant_class,
                requested: class,
            });
        }
        let granted = if self.is_settled(now) {
            let room = (inst.compute_fraction() - self.grants[idx].total()).max(0.0);
            demand.min(room)
        } else {
            0.0
        };
        *self.grants[idx].get_mut(class) += granted;
        Ok(Allocation {
            instance,
            granted_fraction: granted,
            shortfall_fraction: demand - granted,
            tenant_class: class,
        })
    }

    /// Returns `amount` of `class` capacity on a slice. Releasing more than
    /// is held clamps at zero.
    pub fn release(&mut self, instance: InstanceId, class: TenantClass, amount: f64) -> Result<(), ComputeError> {
        let idx = self.index_of(instance)?;
        let g = self.grants[idx].get_mut(class);
        *g = (*g - amount).max(0.0);
        if *g < FRACTION_EPS {
            *g = 0.0;
        }
        Ok(())
    }

    /// Drops every grant of `class` on this GPU.
    pub fn clear_class(&mut self, class: TenantClass) {
        for g in &mut self.grants {
            *g.get_mut(class) = 0.0;
        }
    }

    pub fn granted(&self, class: TenantClass) -> f64 {
        self.grants.iter().map(|g| g.get(class)).sum()
    }

    pub fn granted_total(&self) -> f64 {
        self.grants.iter().map(SliceGrants::total).sum()
    }

    /// Capacity not granted to anyone in the current slot. Headroom inside
    /// RAN slices is only counted when `ran_headroom_visible` is set.
    pub fn free_capacity(&self, ran_headroom_visible: bool) -> f64 {
        self.instances
            .iter()
            .zip(&self.grants)
            .filter(|(i, _)| ran_headroom_visible || i.tenant_class != TenantClass::Ran)
            .map(|(i, g)| (i.compute_fraction() - g.total()).max(0.0))
            .sum()
    }

    /// Replaces every slice at once. Current grants are carried into the
    /// first new slice accepting their class; if a class's grant no longer
    /// fits, nothing changes and `ActiveAllocationConflict` is returned.
    /// Identical layouts are a no-op and return `Ok(false)`.
    pub fn repartition(
        &mut self,
        fractions: &[f64],
        classes: &[TenantClass],
        now: SimTime,
        settle: SimTime,
    ) -> Result<bool, ComputeError> {
        let next = build_instances(&self.device, self.generation + 1, fractions, classes, None)?;
        let same = next.len() == self.instances.len()
            && next
                .iter()
                .zip(&self.instances)
                .all(|(a, b)| a.units == b.units && a.tenant_class == b.tenant_class);
        if same {
            return Ok(false);
        }

        let mut grants = alloc::vec![SliceGrants::default(); next.len()];
        for class in [TenantClass::Ran, TenantClass::Ai] {
            let mut held = self.granted(class);
            if held <= FRACTION_EPS {
                continue;
            }
            let capacity: f64 = next
                .iter()
                .filter(|i| i.accepts(class))
                .map(GpuInstance::compute_fraction)
                .sum();
            for (inst, g) in next.iter().zip(grants.iter_mut()) {
                if held <= 0.0 {
                    break;
                }
                if !inst.accepts(class) {
                    continue;
                }
                let room = (inst.compute_fraction() - g.total()).max(0.0);
                let put = held.min(room);
                *g.get_mut(class) += put;
                held -= put;
            }
            if held > FRACTION_EPS {
                return Err(ComputeError::ActiveAllocationConflict {
                    gpu: self.device.id,
                    class,
                    granted: self.granted(class),
                    capacity,
                });
            }
        }

        self.generation += 1;
        self.instances = next;
        self.grants = grants;
        self.settling_until = now.saturating_add(settle);
        Ok(true)
    }
}

/// Runtime view of one server.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub server: Server,
    pub gpus: Vec<GpuState>,
}

impl ServerState {
    pub fn new(server: Server) -> Self {
        let gpus = server.gpus.iter().cloned().map(GpuState::new).collect();
        ServerState { server, gpus }
    }

    pub fn gpu(&self, id: GpuId) -> Option<&GpuState> {
        self.gpus.iter().find(|g| g.id() == id)
    }

    pub fn gpu_mut(&mut self, id: GpuId) -> Option<&mut GpuState> {
        self.gpus.iter_mut().find(|g| g.id() == id)
    }
}

/// Per-GPU unused capacity of a server in the current slot.
pub fn free_capacity(server: &ServerState, ran_headroom_visible: bool) -> Vec<f64> {
    server
        .gpus
        .iter()
        .map(|g| g.free_capacity(ran_headroom_visible))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn gpu(step: f64) -> GpuDevice {
        GpuDevice::new(GpuId(1), 80, Granularity::new(step).unwrap())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    #[test]
    fn poc_split_has_no_free_remainder() {
        let inst = partition_gpu(&gpu(0.1), &[0.4, 0.6], &[TenantClass::Ran, TenantClass::Ai]).unwrap();
        assert_eq!(inst.len(), 2);
        assert!(close(inst[0].compute_fraction(), 0.4));
        assert_eq!(inst[0].tenant_class, TenantClass::Ran);
        assert!(close(inst[1].compute_fraction(), 0.6));
        assert_eq!(inst[1].tenant_class, TenantClass::Ai);
    }

    #[test]
    fn identity_partition() {
        let inst = partition_gpu(&gpu(0.05), &[1.0], &[TenantClass::Ran]).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].compute_fraction(), 1.0);
        assert!(close(inst[0].memory_fraction, 1.0));
    }

    #[test]
    fn overflow_and_granularity_errors() {
        let err = partition_gpu(&gpu(0.1), &[0.5, 0.6], &[TenantClass::Ran, TenantClass::Ai]).unwrap_err();
        assert!(matches!(err, ComputeError::PartitionOverflow { .. }));
        let err = partition_gpu(&gpu(0.1), &[0.45], &[TenantClass::Ran]).unwrap_err();
        assert!(matches!(err, ComputeError::GranularityViolation { .. }));
        let err = partition_gpu(&gpu(0.1), &[], &[]).unwrap_err();
        assert!(matches!(err, ComputeError::EmptyPartition));
    }

    #[test]
    fn remainder_becomes_free_slice() {
        let inst = partition_gpu(&gpu(0.05), &[0.4], &[TenantClass::Ran]).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[1].tenant_class, TenantClass::Free);
        assert_eq!(inst[0].units + inst[1].units, 20);
    }

    #[test]
    fn seventh_granularity() {
        let g = gpu(1.0 / 7.0);
        let inst = partition_gpu(&g, &[3.0 / 7.0, 4.0 / 7.0], &[TenantClass::Ran, TenantClass::Ai]).unwrap();
        assert_eq!(inst.iter().map(|i| i.units).sum::<u32>(), 7);
        assert!(Granularity::new(0.3).is_err());
    }

    #[test]
    fn memory_fractions_default_to_compute() {
        let inst = partition_gpu_with_memory(&gpu(0.05), &[0.4, 0.6], &[TenantClass::Ran, TenantClass::Ai], &[0.25, 0.75])
            .unwrap();
        assert_eq!(inst[0].memory_fraction, 0.25);
        let err = partition_gpu_with_memory(&gpu(0.05), &[0.4], &[TenantClass::Ran], &[1.5]).unwrap_err();
        assert!(matches!(err, ComputeError::MemoryOverflow { .. }));
    }

    fn poc_state() -> GpuState {
        GpuState::partitioned(gpu(0.05), &[0.4, 0.6], &[TenantClass::Ran, TenantClass::Ai]).unwrap()
    }

    #[test]
    fn allocate_clips_to_slice() {
        let mut s = poc_state();
        let ran = s.instances()[0].id;
        let ai = s.instances()[1].id;
        let a = s.allocate(ran, 0.35, TenantClass::Ran, SimTime::ZERO).unwrap();
        assert!(close(a.granted_fraction, 0.35) && close(a.shortfall_fraction, 0.0));

        let mut s = poc_state();
        let a = s.allocate(ran, 0.50, TenantClass::Ran, SimTime::ZERO).unwrap();
        assert!(close(a.granted_fraction, 0.40));
        assert!(close(a.shortfall_fraction, 0.10));

        let a = s.allocate(ai, 0.0, TenantClass::Ai, SimTime::ZERO).unwrap();
        assert_eq!((a.granted_fraction, a.shortfall_fraction), (0.0, 0.0));
    }

    #[test]
    fn allocate_accumulates_within_slot() {
        let mut s = poc_state();
        let ai = s.instances()[1].id;
        s.allocate(ai, 0.5, TenantClass::Ai, SimTime::ZERO).unwrap();
        let a = s.allocate(ai, 0.5, TenantClass::Ai, SimTime::ZERO).unwrap();
        assert!(close(a.granted_fraction, 0.1));
        assert!(close(a.shortfall_fraction, 0.4));
    }

    #[test]
    fn class_mismatch() {
        let mut s = poc_state();
        let ran = s.instances()[0].id;
        let err = s.allocate(ran, 0.1, TenantClass::Ai, SimTime::ZERO).unwrap_err();
        assert!(matches!(err, ComputeError::ClassMismatch { .. }));
        let mut whole = GpuState::new(gpu(0.05));
        let free = whole.instances()[0].id;
        assert!(whole.allocate(free, 0.2, TenantClass::Ai, SimTime::ZERO).is_ok());
        assert!(whole.allocate(free, 0.2, TenantClass::Ran, SimTime::ZERO).is_ok());
    }

    #[test]
    fn free_capacity_examples() {
        let mut s = poc_state();
        let (ran, ai) = (s.instances()[0].id, s.instances()[1].id);
        s.allocate(ran, 0.4, TenantClass::Ran, SimTime::ZERO).unwrap();
        s.allocate(ai, 0.55, TenantClass::Ai, SimTime::ZERO).unwrap();
        assert!((s.free_capacity(false) - 0.05).abs() < 1e-12);
        assert_eq!(GpuState::new(gpu(0.05)).free_capacity(false), 1.0);

        let mut s = poc_state();
        s.allocate(ran, 0.1, TenantClass::Ran, SimTime::ZERO).unwrap();
        assert!((s.free_capacity(false) - 0.6).abs() < 1e-12);
        assert!((s.free_capacity(true) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn poc_server_frees_gpu2() {
        let g1 = GpuDevice::new(GpuId(1), 80, Granularity::default());
        let g2 = GpuDevice::new(GpuId(2), 80, Granularity::default());
        let server = Server::new(ServerId(0), vec![g1.clone(), g2], 72, NfBundle::DuCuCn, 400.0, 400.0).unwrap();
        let mut st = ServerState::new(server);
        st.gpus[0] = GpuState::partitioned(g1, &[0.4, 0.6], &[TenantClass::Ran, TenantClass::Ai]).unwrap();
        let (ran, ai) = (st.gpus[0].instances()[0].id, st.gpus[0].instances()[1].id);
        st.gpus[0].allocate(ran, 0.4, TenantClass::Ran, SimTime::ZERO).unwrap();
        st.gpus[0].allocate(ai, 1.0, TenantClass::Ai, SimTime::ZERO).unwrap();
        let free = free_capacity(&st, false);
        assert!(free[0].abs() < 1e-12);
        assert_eq!(free[1], 1.0);
    }

    #[test]
    fn server_needs_a_gpu() {
        let err = Server::new(ServerId(3), vec![], 8, NfBundle::DuOnly, 100.0, 100.0).unwrap_err();
        assert!(matches!(err, ComputeError::NoGpus { .. }));
    }

    #[test]
    fn repartition_moves_to_new_layout() {
        let mut s = poc_state();
        let ran = s.instances()[0].id;
        s.allocate(ran, 0.3, TenantClass::Ran, SimTime::ZERO).unwrap();
        let changed = s
            .repartition(&[0.7, 0.3], &[TenantClass::Ran, TenantClass::Ai], SimTime::ZERO, SimTime::from_micros(500))
            .unwrap();
        assert!(changed);
        let sum: f64 = s.instances().iter().map(GpuInstance::compute_fraction).sum();
        assert_eq!(sum, 1.0);
        assert_eq!(s.instances().len(), 2);
        assert!((s.granted(TenantClass::Ran) - 0.3).abs() < 1e-12);
        assert!(s.instance(ran).is_none());
    }

    #[test]
    fn repartition_identical_is_noop() {
        let mut s = poc_state();
        let before = s.clone();
        let changed = s
            .repartition(&[0.4, 0.6], &[TenantClass::Ran, TenantClass::Ai], SimTime::ZERO, SimTime::from_micros(500))
            .unwrap();
        assert!(!changed);
        assert_eq!(s, before);
    }

    #[test]
    fn repartition_conflict_leaves_state_untouched() {
        let mut s = poc_state();
        let ran = s.instances()[0].id;
        s.allocate(ran, 0.4, TenantClass::Ran, SimTime::ZERO).unwrap();
        let before = s.clone();
        let err = s
            .repartition(&[0.3, 0.7], &[TenantClass::Ran, TenantClass::Ai], SimTime::ZERO, SimTime::ZERO)
            .unwrap_err();
        assert!(matches!(err, ComputeError::ActiveAllocationConflict { .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn settling_slices_grant_nothing() {
        let mut s = poc_state();
        s.repartition(&[0.5, 0.5], &[TenantClass::Ran, TenantClass::Ai], SimTime::ZERO, SimTime::from_micros(500))
            .unwrap();
        let ran = s.instances()[0].id;
        let a = s.allocate(ran, 0.2, TenantClass::Ran, SimTime::from_micros(100)).unwrap();
        assert_eq!(a.granted_fraction, 0.0);
        assert_eq!(a.shortfall_fraction, 0.2);
        let a = s.allocate(ran, 0.2, TenantClass::Ran, SimTime::from_micros(500)).unwrap();
        assert_eq!(a.granted_fraction, 0.2);
    }
}
