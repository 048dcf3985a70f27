//! Discrete-event loop.
//!
//! Events at the same instant run in a fixed order: slot boundary, policy
//! epoch, arrival, completion, profile change, repartition settled, sample.
//! Remaining ties go to the event scheduled first.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::compute::{GpuId, ServerState, TenantClass};
use crate::error::{OrchestratorError, SimError};
use crate::fabric::{egress_target, fronthaul_rate, route_flows, FabricTopology, Flow, FlowId, FlowKind, RuId};
use crate::metrics::{
    quantize_pair, to_ppm, Annotation, DeadlineMissRecord, EventKind, EventRecord, FabricViolationRecord, JobStats,
    MetricsReport, TraceSample,
};
use crate::orchestrator::{
    apply_actions_in_place, enforce_ran_priority, plan_placement, policy_epoch, ClusterState, Happening, Policy,
    ScaleAction,
};
use crate::scenario::{mix_seed, Scenario};
use crate::time::SimTime;
use crate::workload::{gen_ai_arrivals, AiJob, JobId, JobState, RanWorkload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEventKind {
    SlotBoundary,
    PolicyEpoch,
    JobArrival(JobId),
    /// Resume check for a preempted job after its resume delay.
    JobResume(JobId),
    JobCompletion { job: JobId, version: u64 },
    ProfileChange,
    RepartitionSettled(GpuId),
    Sample,
}

impl SimEventKind {
    fn priority(&self) -> u8 {
        match self {
            SimEventKind::SlotBoundary => 0,
            SimEventKind::PolicyEpoch => 1,
            SimEventKind::JobArrival(_) | SimEventKind::JobResume(_) => 2,
            SimEventKind::JobCompletion { .. } => 3,
            SimEventKind::ProfileChange => 4,
            SimEventKind::RepartitionSettled(_) => 5,
            SimEventKind::Sample => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimEventKind::SlotBoundary => "slot boundary",
            SimEventKind::PolicyEpoch => "policy epoch",
            SimEventKind::JobArrival(_) => "job arrival",
            SimEventKind::JobResume(_) => "job resume",
            SimEventKind::JobCompletion { .. } => "job completion",
            SimEventKind::ProfileChange => "profile change",
            SimEventKind::RepartitionSettled(_) => "repartition settled",
            SimEventKind::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub time: SimTime,
    pub kind: SimEventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Queued {
    event: SimEvent,
    seq: u64,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.event.time, self.event.kind.priority(), self.seq).cmp(&(
            other.event.time,
            other.event.kind.priority(),
            other.seq,
        ))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct RanGpu {
    gpu: GpuId,
    workload: RanWorkload,
    peaks: Vec<f64>,
}

/// One run in progress.
pub struct Simulation {
    scenario: Scenario,
    state: ClusterState,
    queue: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    slot: SimTime,
    ran: Vec<RanGpu>,
    gpu_order: Vec<GpuId>,
    gpu_index: BTreeMap<GpuId, u32>,
    pending_jobs: BTreeMap<JobId, AiJob>,
    versions: BTreeMap<JobId, u64>,
    completed_at: BTreeMap<JobId, SimTime>,
    topology: Option<FabricTopology>,
    change_points: Vec<SimTime>,
    annotations: Vec<Annotation>,
    trace: Vec<TraceSample>,
    events: Vec<EventRecord>,
    misses: Vec<DeadlineMissRecord>,
    fabric_violations: Vec<FabricViolationRecord>,
    arrived: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let scenario = scenario.clone();
        let slot = scenario.slot();
        let config = scenario.orchestrator_config();
        let servers: Vec<ServerState> = scenario.servers.iter().map(|s| ServerState::new(s.server.clone())).collect();
        let state = ClusterState::new(servers, config).map_err(|source| SimError::Event {
            time: SimTime::ZERO,
            kind: "initial layout",
            source,
        })?;

        let mut ran = Vec::new();
        for (gpu, workload) in scenario.ran_workloads() {
            let peaks = workload.peak_fractions(&scenario.calibration)?;
            ran.push(RanGpu { gpu, workload, peaks });
        }

        let gpu_order = scenario.gpu_ids();
        let gpu_index = gpu_order.iter().enumerate().map(|(i, &g)| (g, i as u32)).collect();

        let mut jobs: Vec<AiJob> = Vec::new();
        for (i, w) in scenario.ai_workloads.iter().enumerate() {
            jobs.extend(gen_ai_arrivals(w, i as u32, mix_seed(scenario.seed, i as u64), scenario.horizon));
        }
        jobs.sort_by(|a, b| a.arrival_time.cmp(&b.arrival_time).then(a.workload.cmp(&b.workload)).then(a.id.cmp(&b.id)));
        let pending_jobs: BTreeMap<JobId, AiJob> = jobs
            .into_iter()
            .enumerate()
            .map(|(i, mut j)| {
                j.id = JobId(i as u64);
                (j.id, j)
            })
            .collect();

        let topology = if scenario.cells.is_empty() { None } else { Some(scenario.topology()?) };
        let mut change_points: Vec<SimTime> = scenario
            .cells
            .iter()
            .flat_map(|c| c.profile.change_points(scenario.horizon))
            .collect();
        change_points.push(SimTime::ZERO);
        change_points.sort();
        change_points.dedup();

        let n_gpus = gpu_order.len();
        let mut sim = Simulation {
            scenario,
            state,
            queue: BinaryHeap::new(),
            seq: 0,
            slot,
            ran,
            gpu_order,
            gpu_index,
            pending_jobs,
            versions: BTreeMap::new(),
            completed_at: BTreeMap::new(),
            topology,
            change_points,
            annotations: alloc::vec![Annotation::default(); n_gpus],
            trace: Vec::new(),
            events: Vec::new(),
            misses: Vec::new(),
            fabric_violations: Vec::new(),
            arrived: 0,
        };

        let mut initial = alloc::vec![
            SimEvent { time: SimTime::ZERO, kind: SimEventKind::SlotBoundary },
            SimEvent { time: SimTime::ZERO, kind: SimEventKind::PolicyEpoch },
            SimEvent { time: SimTime::ZERO, kind: SimEventKind::Sample },
        ];
        if sim.topology.is_some() {
            initial.extend(sim.change_points.iter().map(|&t| SimEvent { time: t, kind: SimEventKind::ProfileChange }));
        }
        initial.extend(
            sim.pending_jobs
                .values()
                .map(|j| SimEvent { time: j.arrival_time, kind: SimEventKind::JobArrival(j.id) }),
        );
        for e in initial {
            sim.schedule(e);
        }
        Ok(sim)
    }

    pub fn schedule(&mut self, event: SimEvent) {
        self.seq += 1;
        self.queue.push(Reverse(Queued { event, seq: self.seq }));
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    pub fn now(&self) -> SimTime {
        self.state.clock
    }

    /// Next event due before the horizon.
    pub fn next_event(&mut self) -> Option<SimEvent> {
        let Reverse(q) = self.queue.peek()?;
        if q.event.time >= self.scenario.horizon {
            return None;
        }
        self.queue.pop().map(|Reverse(q)| q.event)
    }

    /// Processes one event and returns the events it causes, all at or after
    /// its time. The caller schedules them.
    pub fn step(&mut self, event: SimEvent) -> Result<Vec<SimEvent>, SimError> {
        let t = event.time;
        self.state.clock = t;
        let mut out = Vec::new();
        let err = |source: OrchestratorError| SimError::Event { time: t, kind: event.kind.name(), source };
        match event.kind {
            SimEventKind::SlotBoundary => {
                let t_s = t.as_secs_f64();
                for r in &self.ran {
                    let d = r.workload.demand_with_peaks(&r.peaks, self.scenario.calibration.idle_floor_fraction, t_s)?;
                    self.state.set_ran_demand(r.gpu, d);
                }
                for m in enforce_ran_priority(&mut self.state) {
                    let gpu = self.gpu_index[&m.gpu];
                    self.annotations[gpu as usize].deadline_misses += 1;
                    self.misses.push(DeadlineMissRecord {
                        time: t,
                        gpu,
                        shortfall_ppm: libm::ceil(m.shortfall * 1e6).max(1.0) as u32,
                    });
                }
                if !self.ran.is_empty() {
                    out.push(SimEvent { time: t + self.slot, kind: SimEventKind::SlotBoundary });
                }
            }
            SimEventKind::PolicyEpoch => {
                let actions = policy_epoch(&self.state, t).map_err(err)?;
                apply_actions_in_place(&mut self.state, &actions).map_err(err)?;
                let settle = self.state.config().repartition_settle;
                for a in &actions {
                    if let ScaleAction::Repartition { gpu, .. } = a {
                        out.push(SimEvent { time: t + settle, kind: SimEventKind::RepartitionSettled(*gpu) });
                    }
                }
                self.place().map_err(err)?;
                if let Some(next) = self.next_epoch(t) {
                    out.push(SimEvent { time: next, kind: SimEventKind::PolicyEpoch });
                }
            }
            SimEventKind::JobArrival(job) => {
                if let Some(j) = self.pending_jobs.remove(&job) {
                    self.arrived += 1;
                    self.state.enqueue(j);
                }
                self.place().map_err(err)?;
            }
            SimEventKind::JobResume(_) | SimEventKind::RepartitionSettled(_) => self.place().map_err(err)?,
            SimEventKind::JobCompletion { job, version } => {
                let live = self.versions.get(&job) == Some(&version)
                    && self.state.jobs.get(&job).is_some_and(|j| j.state == JobState::Running);
                if live {
                    let gpu = self.state.assignment(job).map(|a| a.gpu);
                    self.state.complete_job(job).map_err(|e| err(e.into()))?;
                    self.completed_at.insert(job, t);
                    self.events.push(EventRecord {
                        time: t,
                        gpu: gpu.map(|g| self.gpu_index[&g]),
                        kind: EventKind::Completed { job },
                    });
                    self.place().map_err(err)?;
                }
            }
            SimEventKind::ProfileChange => self.reroute(t)?,
            SimEventKind::Sample => {
                for (i, &g) in self.gpu_order.iter().enumerate() {
                    let gpu = self.state.gpu(g).expect("scenario gpu");
                    let (ran_ppm, ai_ppm) = quantize_pair(gpu.granted(TenantClass::Ran), gpu.granted(TenantClass::Ai));
                    self.trace.push(TraceSample {
                        time: t,
                        gpu: i as u32,
                        ran_ppm,
                        ai_ppm,
                        annotation: core::mem::take(&mut self.annotations[i]),
                    });
                }
                out.push(SimEvent { time: t + self.scenario.sample_interval, kind: SimEventKind::Sample });
            }
        }
        self.drain_log(&mut out);
        Ok(out)
    }

    fn next_epoch(&self, t: SimTime) -> Option<SimTime> {
        match &self.scenario.policy {
            Policy::StaticSplit { .. } => None,
            Policy::TimeSplit { schedule } => schedule.iter().map(|w| w.start).find(|&s| s > t),
            Policy::DynamicBackfill { epoch, .. } => Some(t + *epoch),
        }
    }

    fn place(&mut self) -> Result<(), OrchestratorError> {
        let eligible = self.state.eligible_waiting();
        if eligible.is_empty() {
            return Ok(());
        }
        let decision = plan_placement(&eligible, &self.state);
        self.state.apply_placement(&decision)?;
        Ok(())
    }

    fn reroute(&mut self, t: SimTime) -> Result<(), SimError> {
        let Some(topo) = &self.topology else { return Ok(()) };
        let next = self.change_points.iter().copied().find(|&c| c > t).unwrap_or(self.scenario.horizon);
        let (from_s, to_s) = (t.as_secs_f64(), next.as_secs_f64());
        let mut flows = Vec::new();
        let mut north: BTreeMap<u32, f64> = BTreeMap::new();
        for (i, cell) in self.scenario.cells.iter().enumerate() {
            let rate = fronthaul_rate(&cell.config, &self.scenario.fronthaul) * cell.profile.peak_between(from_s, to_s);
            let server = self
                .scenario
                .servers
                .iter()
                .find(|s| s.server.gpus.iter().any(|g| g.id == cell.gpu))
                .map(|s| s.server.id)
                .expect("validated host");
            let (Some(ru), Some(att)) = (topo.ru_node(RuId(i as u32)), topo.server(server)) else { continue };
            flows.push(Flow::new(FlowId(flows.len() as u32), ru, att.frontend, FlowKind::Fronthaul, rate));
            *north.entry(server.0).or_insert(0.0) += rate * self.scenario.fronthaul.northbound_ratio;
        }
        if let Some(uplink) = topo.uplink {
            for att in &topo.servers {
                if let Some(&rate) = north.get(&att.server.0) {
                    flows.push(Flow::new(FlowId(flows.len() as u32), att.backend, uplink, egress_target(att.bundle), rate));
                }
            }
        }
        let routing = route_flows(topo, &flows)?;
        for v in routing.violations {
            self.fabric_violations.push(FabricViolationRecord {
                time: t,
                link: v.link.0,
                load_gbps: v.load_gbps,
                capacity_gbps: v.capacity_gbps,
            });
        }
        Ok(())
    }

    fn drain_log(&mut self, out: &mut Vec<SimEvent>) {
        for (time, h) in self.state.take_log() {
            let idx = |g: GpuId| Some(self.gpu_index[&g]);
            let (gpu, kind) = match h {
                Happening::Placed { job, gpu, fraction } => (idx(gpu), EventKind::Placed { job, fraction_ppm: to_ppm(fraction) }),
                Happening::Preempted { job, gpu } => {
                    self.annotations[self.gpu_index[&gpu] as usize].preemptions += 1;
                    if self.state.config().resume_delay > SimTime::ZERO {
                        out.push(SimEvent {
                            time: time + self.state.config().resume_delay,
                            kind: SimEventKind::JobResume(job),
                        });
                    }
                    (idx(gpu), EventKind::Preempted { job })
                }
                Happening::Trimmed { job, gpu, fraction } => (idx(gpu), EventKind::Trimmed { job, fraction_ppm: to_ppm(fraction) }),
                Happening::ToppedUp { job, gpu, fraction } => {
                    (idx(gpu), EventKind::ToppedUp { job, fraction_ppm: to_ppm(fraction) })
                }
                Happening::Reclaimed { gpu, fraction } => (idx(gpu), EventKind::Reclaimed { fraction_ppm: to_ppm(fraction) }),
                Happening::Granted { gpu, fraction } => (idx(gpu), EventKind::Granted { fraction_ppm: to_ppm(fraction) }),
                Happening::Repartitioned { gpu } => {
                    self.annotations[self.gpu_index[&gpu] as usize].repartitions += 1;
                    (idx(gpu), EventKind::Repartitioned)
                }
                Happening::Rejected { job } => (None, EventKind::Rejected { job }),
            };
            self.events.push(EventRecord { time, gpu, kind });
        }
        for job in self.state.take_changed() {
            let v = self.versions.entry(job).or_insert(0);
            *v += 1;
            let version = *v;
            if let Some(eta) = self.state.completion_eta(job) {
                out.push(SimEvent {
                    time: eta.max(self.state.clock),
                    kind: SimEventKind::JobCompletion { job, version },
                });
            }
        }
    }

    /// Runs to the horizon and assembles the report.
    pub fn run(mut self) -> Result<MetricsReport, SimError> {
        while let Some(ev) = self.next_event() {
            for next in self.step(ev)? {
                debug_assert!(next.time >= ev.time);
                self.schedule(next);
            }
        }
        Ok(self.finish())
    }

    fn finish(mut self) -> MetricsReport {
        self.state.clock = self.scenario.horizon;
        self.state.settle_all();
        let jobs = &self.state.jobs;
        let count = |s: JobState| jobs.values().filter(|j| j.state == s).count() as u64;
        let waits: Vec<f64> = jobs
            .values()
            .filter_map(|j| self.state.first_start(j.id).map(|s| (s - j.arrival_time).as_secs_f64()))
            .collect();
        let completions: Vec<f64> = self
            .completed_at
            .iter()
            .map(|(id, &t)| (t - jobs[id].arrival_time).as_secs_f64())
            .collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let stats = JobStats {
            arrived: self.arrived,
            completed: count(JobState::Done),
            rejected: count(JobState::Rejected),
            preemptions: self.state.preemption_count(),
            waiting_at_end: count(JobState::Queued) + count(JobState::Preempted),
            running_at_end: count(JobState::Running),
            mean_wait_s: mean(&waits),
            mean_completion_s: mean(&completions),
        };
        let gpus: Vec<String> = self.scenario.gpu_labels();
        MetricsReport {
            gpus,
            horizon: self.scenario.horizon,
            sample_interval: self.scenario.sample_interval,
            trace: self.trace,
            events: self.events,
            deadline_misses: self.misses,
            fabric_violations: self.fabric_violations,
            jobs: stats,
        }
    }
}

/// Validates and runs a scenario to its horizon.
pub fn run(scenario: &Scenario) -> Result<MetricsReport, SimError> {
    Simulation::new(scenario)?.run()
}
