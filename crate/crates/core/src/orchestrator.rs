//! Joint RAN/AI orchestration.
//!
//! Two cadences share one state machine. Every slot, RAN demand is granted
//! before anything else on its GPU and any shortfall is a deadline miss.
//! At policy epochs the multi-tenancy policy resizes what AI may hold:
//! fixed slices, a time-of-day repartition schedule, or dynamic backfill of
//! forecast RAN headroom with newest-first reclaim.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use crate::compute::{GpuId, GpuState, InstanceId, ServerId, ServerState, TenantClass, FRACTION_EPS};
use crate::error::{ComputeError, OrchestratorError};
use crate::time::SimTime;
use crate::workload::{AiJob, JobId, JobState, SloClass};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forecast {
    LastValue,
    MaxOverWindow { window: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub start: SimTime,
    pub end: SimTime,
    pub ran_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    StaticSplit { ran_fraction: f64, ai_fraction: f64 },
    TimeSplit { schedule: Vec<TimeWindow> },
    DynamicBackfill {
        epoch: SimTime,
        safety_margin: f64,
        forecast: Forecast,
    },
}

impl Policy {
    /// Default dynamic policy: 100 ms epochs, max over the last two epochs.
    pub fn dynamic(safety_margin: f64) -> Self {
        let epoch = SimTime::from_millis(100);
        Policy::DynamicBackfill {
            epoch,
            safety_margin,
            forecast: Forecast::MaxOverWindow { window: SimTime::from_micros(2 * epoch.as_micros()) },
        }
    }

    pub fn validate(&self, horizon: SimTime) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::InvalidPolicy(String::from(m)));
        match self {
            Policy::StaticSplit { ran_fraction, ai_fraction } => {
                if !(*ran_fraction >= 0.0 && *ai_fraction >= 0.0) {
                    return bad("static fractions must be non-negative");
                }
                if ran_fraction + ai_fraction > 1.0 + FRACTION_EPS {
                    return bad("static fractions sum past one GPU");
                }
            }
            Policy::TimeSplit { schedule } => {
                if schedule.is_empty() {
                    return bad("time split needs at least one window");
                }
                if schedule[0].start != SimTime::ZERO {
                    return bad("time split schedule must start at 0");
                }
                for w in schedule {
                    if w.end <= w.start || !(0.0..=1.0).contains(&w.ran_fraction) {
                        return bad("time split windows need start < end and ran_fraction in [0, 1]");
                    }
                }
                for pair in schedule.windows(2) {
                    if pair[1].start != pair[0].end {
                        return bad("time split windows must be contiguous and non-overlapping");
                    }
                }
                if schedule[schedule.len() - 1].end < horizon {
                    return bad("time split schedule must cover the horizon");
                }
            }
            Policy::DynamicBackfill { epoch, safety_margin, forecast } => {
                if *epoch == SimTime::ZERO {
                    return bad("epoch must be positive");
                }
                if !(0.0..1.0).contains(safety_margin) {
                    return bad("safety margin must lie in [0, 1)");
                }
                if let Forecast::MaxOverWindow { window } = forecast {
                    if *window == SimTime::ZERO {
                        return bad("forecast window must be positive");
                    }
                }
            }
        }
        Ok(())
    }

    fn history_span(&self) -> SimTime {
        match self {
            Policy::DynamicBackfill { forecast: Forecast::MaxOverWindow { window }, .. } => *window,
            _ => SimTime::ZERO,
        }
    }

    /// Whether AI may use unused RAN headroom on shared slices.
    pub fn ran_headroom_visible(&self) -> bool {
        matches!(self, Policy::DynamicBackfill { .. })
    }
}

/// Slice layout for a GPU given the RAN share.
pub fn split_layout(ran_fraction: f64, ai_fraction: f64) -> (Vec<f64>, Vec<TenantClass>) {
    let mut fractions = Vec::new();
    let mut classes = Vec::new();
    if ran_fraction > FRACTION_EPS {
        fractions.push(ran_fraction);
        classes.push(TenantClass::Ran);
    }
    if ai_fraction > FRACTION_EPS {
        fractions.push(ai_fraction);
        classes.push(TenantClass::Ai);
    }
    if fractions.is_empty() {
        fractions.push(1.0);
        classes.push(TenantClass::Free);
    }
    (fractions, classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrchestratorConfig {
    pub policy: Policy,
    /// GPUs the orchestrator manages; others stay untouched.
    pub pool: Vec<GpuId>,
    pub slot: SimTime,
    pub repartition_settle: SimTime,
    pub resume_delay: SimTime,
    /// Maximum number of waiting jobs; placement rejects beyond it.
    pub queue_bound: usize,
}

impl OrchestratorConfig {
    pub fn new(policy: Policy, pool: Vec<GpuId>, slot: SimTime) -> Self {
        OrchestratorConfig {
            policy,
            pool,
            slot,
            repartition_settle: slot,
            resume_delay: SimTime::ZERO,
            queue_bound: 10_000,
        }
    }
}

/// Where a running job sits and how much it holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub server: ServerId,
    pub gpu: GpuId,
    pub instance: InstanceId,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    QueueFull,
    /// Needs more than one GPU to meet its latency bound.
    Unschedulable,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlacementDecision {
    pub assignments: BTreeMap<JobId, Assignment>,
    pub rejected: Vec<(JobId, RejectReason)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScaleAction {
    GrantAi { gpu: GpuId, fraction: f64 },
    ReclaimAi { gpu: GpuId, fraction: f64 },
    Repartition {
        gpu: GpuId,
        fractions: Vec<f64>,
        classes: Vec<TenantClass>,
    },
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineMiss {
    pub time: SimTime,
    pub gpu: GpuId,
    pub shortfall: f64,
}

/// Something the orchestrator did, for the run's event log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Happening {
    Placed { job: JobId, gpu: GpuId, fraction: f64 },
    Preempted { job: JobId, gpu: GpuId },
    Trimmed { job: JobId, gpu: GpuId, fraction: f64 },
    ToppedUp { job: JobId, gpu: GpuId, fraction: f64 },
    Reclaimed { gpu: GpuId, fraction: f64 },
    Granted { gpu: GpuId, fraction: f64 },
    Repartitioned { gpu: GpuId },
    Rejected { job: JobId },
}

/// Sliding-window maximum of per-slot RAN demand.
#[derive(Debug, Clone, PartialEq, Default)]
struct DemandWindow {
    span: SimTime,
    entries: VecDeque<(SimTime, f64)>,
}

impl DemandWindow {
    fn push(&mut self, t: SimTime, demand: f64) {
        while self.entries.back().is_some_and(|&(_, d)| d <= demand) {
            self.entries.pop_back();
        }
        self.entries.push_back((t, demand));
        while self.entries.front().is_some_and(|&(s, _)| s.saturating_add(self.span) <= t && s != t) {
            self.entries.pop_front();
        }
    }

    fn max(&self) -> f64 {
        self.entries.front().map(|&(_, d)| d).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct RanState {
    demand: f64,
    last: f64,
    history: DemandWindow,
}

#[derive(Debug, Clone, PartialEq)]
struct RunningJob {
    assignment: Assignment,
    since: SimTime,
}

/// Everything the orchestrator knows about the site.
type GpuHeadroom = (ServerId, GpuId, Vec<(InstanceId, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub clock: SimTime,
    pub servers: Vec<ServerState>,
    pub jobs: BTreeMap<JobId, AiJob>,
    config: OrchestratorConfig,
    pool: BTreeSet<GpuId>,
    running: BTreeMap<JobId, RunningJob>,
    waiting: Vec<JobId>,
    eligible_at: BTreeMap<JobId, SimTime>,
    first_start: BTreeMap<JobId, SimTime>,
    ran: BTreeMap<GpuId, RanState>,
    changed: BTreeSet<JobId>,
    log: Vec<(SimTime, Happening)>,
    preemptions: u64,
}

impl ClusterState {
    /// Lays out every pool GPU for the policy; GPUs outside the pool stay whole.
    pub fn new(servers: Vec<ServerState>, config: OrchestratorConfig) -> Result<Self, OrchestratorError> {
        let mut servers = servers;
        let pool: BTreeSet<GpuId> = config.pool.iter().copied().collect();
        let initial = match &config.policy {
            Policy::StaticSplit { ran_fraction, ai_fraction } => Some(split_layout(*ran_fraction, *ai_fraction)),
            Policy::TimeSplit { schedule } => schedule.first().map(|w| split_layout(w.ran_fraction, 1.0 - w.ran_fraction)),
            Policy::DynamicBackfill { .. } => None,
        };
        for server in &mut servers {
            for gpu in &mut server.gpus {
                if let (true, Some((fractions, classes))) = (pool.contains(&gpu.id()), &initial) {
                    *gpu = GpuState::partitioned(gpu.device().clone(), fractions, classes)?;
                }
            }
        }
        let span = config.policy.history_span();
        let ran = pool
            .iter()
            .map(|&g| {
                (
                    g,
                    RanState {
                        history: DemandWindow { span, entries: VecDeque::new() },
                        ..RanState::default()
                    },
                )
            })
            .collect();
        Ok(ClusterState {
            clock: SimTime::ZERO,
            servers,
            jobs: BTreeMap::new(),
            config,
            pool,
            running: BTreeMap::new(),
            waiting: Vec::new(),
            eligible_at: BTreeMap::new(),
            first_start: BTreeMap::new(),
            ran,
            changed: BTreeSet::new(),
            log: Vec::new(),
            preemptions: 0,
        })
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    pub fn gpu(&self, id: GpuId) -> Option<&GpuState> {
        self.servers.iter().find_map(|s| s.gpu(id))
    }

    fn gpu_mut(&mut self, id: GpuId) -> Option<&mut GpuState> {
        self.servers.iter_mut().find_map(|s| s.gpu_mut(id))
    }

    fn server_of(&self, id: GpuId) -> Option<ServerId> {
        self.servers.iter().find(|s| s.gpu(id).is_some()).map(|s| s.server.id)
    }

    pub fn pool(&self) -> impl Iterator<Item = GpuId> + '_ {
        self.pool.iter().copied()
    }

    pub fn assignment(&self, job: JobId) -> Option<Assignment> {
        self.running.get(&job).map(|r| r.assignment)
    }

    pub fn running_jobs(&self) -> impl Iterator<Item = (JobId, Assignment)> + '_ {
        self.running.iter().map(|(&j, r)| (j, r.assignment))
    }

    pub fn waiting_jobs(&self) -> &[JobId] {
        &self.waiting
    }

    pub fn first_start(&self, job: JobId) -> Option<SimTime> {
        self.first_start.get(&job).copied()
    }

    pub fn preemption_count(&self) -> u64 {
        self.preemptions
    }

    pub fn ai_granted(&self, gpu: GpuId) -> f64 {
        self.running
            .values()
            .filter(|r| r.assignment.gpu == gpu)
            .map(|r| r.assignment.fraction)
            .sum()
    }

    /// Jobs whose grant changed since the last call.
    pub fn take_changed(&mut self) -> Vec<JobId> {
        core::mem::take(&mut self.changed).into_iter().collect()
    }

    pub fn take_log(&mut self) -> Vec<(SimTime, Happening)> {
        core::mem::take(&mut self.log)
    }

    /// Adds a newly arrived job to the back of the wait queue.
    pub fn enqueue(&mut self, mut job: AiJob) {
        job.state = JobState::Queued;
        let id = job.id;
        self.eligible_at.insert(id, job.arrival_time);
        self.jobs.insert(id, job);
        self.waiting.push(id);
    }

    /// Waiting jobs that may be placed now.
    pub fn eligible_waiting(&self) -> Vec<JobId> {
        self.waiting
            .iter()
            .copied()
            .filter(|j| self.eligible_at.get(j).is_none_or(|&t| t <= self.clock))
            .collect()
    }

    /// Records this slot's RAN demand for a pool GPU.
    pub fn set_ran_demand(&mut self, gpu: GpuId, demand: f64) {
        let now = self.clock;
        if let Some(r) = self.ran.get_mut(&gpu) {
            r.demand = demand;
            r.last = demand;
            r.history.push(now, demand);
        }
    }

    pub fn ran_demand(&self, gpu: GpuId) -> f64 {
        self.ran.get(&gpu).map(|r| r.demand).unwrap_or(0.0)
    }

    /// Forecast RAN demand for a GPU under the configured policy.
    pub fn forecast(&self, gpu: GpuId) -> f64 {
        let Some(r) = self.ran.get(&gpu) else { return 0.0 };
        match self.config.policy {
            Policy::DynamicBackfill { forecast: Forecast::MaxOverWindow { .. }, .. } => r.history.max(),
            _ => r.last,
        }
    }

    /// Most the AI tenants of a GPU may hold under dynamic backfill.
    pub fn ai_ceiling(&self, gpu: GpuId) -> f64 {
        match self.config.policy {
            Policy::DynamicBackfill { safety_margin, .. } => (1.0 - self.forecast(gpu) - safety_margin).max(0.0),
            _ => f64::INFINITY,
        }
    }

    fn budget(&self, gpu: GpuId) -> f64 {
        (self.ai_ceiling(gpu) - self.ai_granted(gpu)).max(0.0)
    }

    /// AI-usable headroom of every AI or FREE slice on pool GPUs.
    fn slice_headroom(&self) -> Vec<GpuHeadroom> {
        let mut out = Vec::new();
        for s in &self.servers {
            for g in &s.gpus {
                if !self.pool.contains(&g.id()) {
                    continue;
                }
                let settled = g.is_settled(self.clock);
                let slices = g
                    .instances()
                    .iter()
                    .filter(|i| i.accepts(TenantClass::Ai))
                    .map(|i| (i.id, if settled { g.headroom(i.id) } else { 0.0 }))
                    .collect();
                out.push((s.server.id, g.id(), slices));
            }
        }
        out
    }

    fn settle_progress(&mut self, job: JobId) {
        let now = self.clock;
        if let Some(r) = self.running.get_mut(&job) {
            let dt = (now.saturating_sub(r.since)).as_secs_f64();
            if let Some(j) = self.jobs.get_mut(&job) {
                if j.remaining_compute_seconds.is_finite() {
                    j.remaining_compute_seconds = (j.remaining_compute_seconds - r.assignment.fraction * dt).max(0.0);
                }
            }
            r.since = now;
        }
    }

    /// Brings every running job's remaining work up to the clock.
    pub fn settle_all(&mut self) {
        let ids: Vec<JobId> = self.running.keys().copied().collect();
        for id in ids {
            self.settle_progress(id);
        }
    }

    /// Time at which a running job finishes at its current grant.
    pub fn completion_eta(&self, job: JobId) -> Option<SimTime> {
        let r = self.running.get(&job)?;
        let j = self.jobs.get(&job)?;
        if !j.remaining_compute_seconds.is_finite() || r.assignment.fraction <= FRACTION_EPS {
            return None;
        }
        let elapsed = self.clock.saturating_sub(r.since).as_secs_f64();
        let left = (j.remaining_compute_seconds - r.assignment.fraction * elapsed).max(0.0);
        Some(self.clock + SimTime::from_secs_f64_ceil(left / r.assignment.fraction))
    }

    fn start_job(&mut self, job: JobId, a: Assignment) -> Result<(), ComputeError> {
        let now = self.clock;
        let gpu = self.gpu_mut(a.gpu).ok_or(ComputeError::UnknownInstance { instance: a.instance })?;
        let alloc = gpu.allocate(a.instance, a.fraction, TenantClass::Ai, now)?;
        let a = Assignment { fraction: alloc.granted_fraction, ..a };
        self.running.insert(job, RunningJob { assignment: a, since: now });
        self.waiting.retain(|&w| w != job);
        if let Some(j) = self.jobs.get_mut(&job) {
            j.state = JobState::Running;
        }
        self.first_start.entry(job).or_insert(now);
        self.changed.insert(job);
        self.log.push((now, Happening::Placed { job, gpu: a.gpu, fraction: a.fraction }));
        Ok(())
    }

    fn resize_job(&mut self, job: JobId, fraction: f64) -> Result<(), ComputeError> {
        self.settle_progress(job);
        let now = self.clock;
        let Some(r) = self.running.get(&job) else { return Ok(()) };
        let a = r.assignment;
        let gpu = self.gpu_mut(a.gpu).ok_or(ComputeError::UnknownInstance { instance: a.instance })?;
        let granted = if fraction > a.fraction {
            a.fraction + gpu.allocate(a.instance, fraction - a.fraction, TenantClass::Ai, now)?.granted_fraction
        } else {
            gpu.release(a.instance, TenantClass::Ai, a.fraction - fraction)?;
            fraction
        };
        if let Some(r) = self.running.get_mut(&job) {
            r.assignment.fraction = granted;
        }
        self.changed.insert(job);
        Ok(())
    }

    fn preempt_job(&mut self, job: JobId) -> Result<(), ComputeError> {
        self.settle_progress(job);
        let now = self.clock;
        let Some(r) = self.running.remove(&job) else { return Ok(()) };
        let a = r.assignment;
        if let Some(gpu) = self.gpu_mut(a.gpu) {
            gpu.release(a.instance, TenantClass::Ai, a.fraction)?;
        }
        if let Some(j) = self.jobs.get_mut(&job) {
            j.state = JobState::Preempted;
        }
        self.eligible_at.insert(job, now.saturating_add(self.config.resume_delay));
        let pos = self
            .waiting
            .iter()
            .position(|w| self.jobs.get(w).is_some_and(|j| j.state == JobState::Queued))
            .unwrap_or(self.waiting.len());
        self.waiting.insert(pos, job);
        self.preemptions += 1;
        self.changed.insert(job);
        self.log.push((now, Happening::Preempted { job, gpu: a.gpu }));
        Ok(())
    }

    /// Marks a running job done and frees its grant.
    pub fn complete_job(&mut self, job: JobId) -> Result<(), ComputeError> {
        self.settle_progress(job);
        if let Some(r) = self.running.remove(&job) {
            let a = r.assignment;
            if let Some(gpu) = self.gpu_mut(a.gpu) {
                gpu.release(a.instance, TenantClass::Ai, a.fraction)?;
            }
        }
        if let Some(j) = self.jobs.get_mut(&job) {
            j.remaining_compute_seconds = 0.0;
            j.state = JobState::Done;
        }
        self.changed.insert(job);
        Ok(())
    }

    /// Applies a placement decision made against this state.
    pub fn apply_placement(&mut self, decision: &PlacementDecision) -> Result<(), ComputeError> {
        for (&job, &a) in &decision.assignments {
            self.start_job(job, a)?;
        }
        for &(job, _) in &decision.rejected {
            self.waiting.retain(|&w| w != job);
            if let Some(j) = self.jobs.get_mut(&job) {
                j.state = JobState::Rejected;
            }
            self.log.push((self.clock, Happening::Rejected { job }));
        }
        Ok(())
    }
}

/// Assigns waiting jobs to AI-usable slices.
///
/// Interactive jobs go first, in arrival order, and only where the slice
/// can run them fast enough for their latency bound. Batch jobs follow
/// first-fit-decreasing by requested fraction. Servers are scanned by id
/// and, within a server, GPUs by AI headroom descending with ties to the
/// lowest id. Unplaced jobs stay queued until the queue bound is exceeded.
pub fn plan_placement(jobs: &[JobId], state: &ClusterState) -> PlacementDecision {
    let mut decision = PlacementDecision::default();
    let mut slices = state.slice_headroom();
    let mut budget: BTreeMap<GpuId, f64> = slices.iter().map(|(_, g, _)| (*g, state.budget(*g))).collect();

    let mut order: Vec<&AiJob> = jobs.iter().filter_map(|j| state.jobs.get(j)).collect();
    order.sort_by(|a, b| {
        let rank = |j: &AiJob| matches!(j.slo_class, SloClass::Batch) as u8;
        rank(a).cmp(&rank(b)).then_with(|| match a.slo_class {
            SloClass::Interactive { .. } => a.arrival_time.cmp(&b.arrival_time).then(a.id.cmp(&b.id)),
            SloClass::Batch => b
                .demand_fraction
                .total_cmp(&a.demand_fraction)
                .then(b.remaining_compute_seconds.total_cmp(&a.remaining_compute_seconds))
                .then(a.id.cmp(&b.id)),
        })
    });

    let mut unplaced = Vec::new();
    for job in order {
        let required = job.required_fraction();
        if required > 1.0 + FRACTION_EPS {
            decision.rejected.push((job.id, RejectReason::Unschedulable));
            continue;
        }
        let mut placed = None;
        let mut servers: Vec<ServerId> = slices.iter().map(|(s, _, _)| *s).collect();
        servers.dedup();
        'search: for server in servers {
            let mut gpus: Vec<usize> = (0..slices.len()).filter(|&i| slices[i].0 == server).collect();
            let avail = |i: usize| -> f64 {
                let (_, g, ref sl) = slices[i];
                sl.iter().map(|s| s.1).sum::<f64>().min(budget[&g])
            };
            gpus.sort_by(|&a, &b| avail(b).total_cmp(&avail(a)).then(slices[a].1.cmp(&slices[b].1)));
            for gi in gpus {
                let gpu = slices[gi].1;
                let cap = budget[&gpu];
                let step = state.gpu(gpu).map(|g| g.device().granularity.step()).unwrap_or(FRACTION_EPS);
                for si in 0..slices[gi].2.len() {
                    let room = slices[gi].2[si].1.min(cap);
                    let fraction = if job.elastic {
                        if room + FRACTION_EPS < required.min(step) {
                            continue;
                        }
                        required.min(room)
                    } else {
                        if room + FRACTION_EPS < required {
                            continue;
                        }
                        required
                    };
                    if fraction <= FRACTION_EPS {
                        continue;
                    }
                    slices[gi].2[si].1 = (slices[gi].2[si].1 - fraction).max(0.0);
                    if let Some(b) = budget.get_mut(&gpu) {
                        *b = (*b - fraction).max(0.0);
                    }
                    placed = Some(Assignment {
                        server,
                        gpu,
                        instance: slices[gi].2[si].0,
                        fraction,
                    });
                    break 'search;
                }
            }
        }
        match placed {
            Some(a) => {
                decision.assignments.insert(job.id, a);
            }
            None => unplaced.push(job),
        }
    }

    let waiting_after = state.waiting.len() - decision.assignments.len().min(state.waiting.len());
    if waiting_after > state.config.queue_bound {
        let mut excess = waiting_after - state.config.queue_bound;
        unplaced.sort_by(|a, b| b.arrival_time.cmp(&a.arrival_time).then(b.id.cmp(&a.id)));
        for job in unplaced {
            if excess == 0 {
                break;
            }
            if job.state == JobState::Queued {
                decision.rejected.push((job.id, RejectReason::QueueFull));
                excess -= 1;
            }
        }
    }
    decision
}

/// Actions the policy wants at time `t`.
pub fn policy_epoch(state: &ClusterState, t: SimTime) -> Result<Vec<ScaleAction>, OrchestratorError> {
    let cfg = &state.config;
    let mut actions = Vec::new();
    match &cfg.policy {
        Policy::StaticSplit { .. } => {}
        Policy::TimeSplit { schedule } => {
            if !(t == SimTime::ZERO || t.is_multiple_of(cfg.slot)) {
                return Err(OrchestratorError::InvalidEpoch(t));
            }
            if let Some(w) = schedule.iter().find(|w| w.start == t) {
                let (fractions, classes) = split_layout(w.ran_fraction, 1.0 - w.ran_fraction);
                for gpu in state.pool() {
                    actions.push(ScaleAction::Repartition {
                        gpu,
                        fractions: fractions.clone(),
                        classes: classes.clone(),
                    });
                }
            }
        }
        Policy::DynamicBackfill { epoch, .. } => {
            if !(t == SimTime::ZERO || t.is_multiple_of(*epoch)) {
                return Err(OrchestratorError::InvalidEpoch(t));
            }
            let waiting = !state.eligible_waiting().is_empty();
            for gpu in state.pool() {
                let ceiling = state.ai_ceiling(gpu);
                let current = state.ai_granted(gpu);
                let hungry = waiting
                    || state
                        .running
                        .iter()
                        .filter(|(_, r)| r.assignment.gpu == gpu)
                        .any(|(j, r)| state.jobs[j].demand_fraction > r.assignment.fraction + FRACTION_EPS);
                if current > ceiling + FRACTION_EPS {
                    actions.push(ScaleAction::ReclaimAi { gpu, fraction: current - ceiling });
                } else if hungry && ceiling - current > FRACTION_EPS {
                    actions.push(ScaleAction::GrantAi { gpu, fraction: ceiling - current });
                }
            }
        }
    }
    if actions.is_empty() {
        actions.push(ScaleAction::NoOp);
    }
    Ok(actions)
}

/// Carries out scale actions and returns the resulting state.
pub fn apply_actions(mut state: ClusterState, actions: &[ScaleAction]) -> Result<ClusterState, OrchestratorError> {
    apply_actions_in_place(&mut state, actions)?;
    Ok(state)
}

/// [`apply_actions`] on a borrowed state. On error the state may be partly updated.
pub fn apply_actions_in_place(state: &mut ClusterState, actions: &[ScaleAction]) -> Result<(), OrchestratorError> {
    for action in actions {
        match action {
            ScaleAction::NoOp => {}
            ScaleAction::ReclaimAi { gpu, fraction } => reclaim(state, *gpu, *fraction)?,
            ScaleAction::GrantAi { gpu, fraction } => grant(state, *gpu, *fraction)?,
            ScaleAction::Repartition { gpu, fractions, classes } => {
                let Some(g) = state.gpu(*gpu) else { continue };
                let same = {
                    let units: Vec<(u32, TenantClass)> =
                        g.instances().iter().map(|i| (i.units, i.tenant_class)).collect();
                    let granularity = g.device().granularity;
                    let mut wanted = Vec::new();
                    for (&f, &c) in fractions.iter().zip(classes) {
                        wanted.push((granularity.fraction_to_units(f)?, c));
                    }
                    let used: u32 = wanted.iter().map(|w| w.0).sum();
                    if used < granularity.units_per_gpu() {
                        wanted.push((granularity.units_per_gpu() - used, TenantClass::Free));
                    }
                    units == wanted
                };
                if same {
                    continue;
                }
                let on_gpu: Vec<JobId> = state
                    .running
                    .iter()
                    .filter(|(_, r)| r.assignment.gpu == *gpu)
                    .map(|(&j, _)| j)
                    .collect();
                for job in on_gpu {
                    state.preempt_job(job)?;
                }
                let now = state.clock;
                let settle = state.config.repartition_settle;
                if let Some(g) = state.gpu_mut(*gpu) {
                    g.repartition(fractions, classes, now, settle)?;
                }
                state.log.push((now, Happening::Repartitioned { gpu: *gpu }));
            }
        }
    }
    Ok(())
}

fn reclaim(state: &mut ClusterState, gpu: GpuId, fraction: f64) -> Result<(), OrchestratorError> {
    let now = state.clock;
    state.log.push((now, Happening::Reclaimed { gpu, fraction }));
    let mut victims: Vec<(SimTime, JobId, f64)> = state
        .running
        .iter()
        .filter(|(_, r)| r.assignment.gpu == gpu)
        .map(|(&j, r)| (state.jobs[&j].arrival_time, j, r.assignment.fraction))
        .collect();
    victims.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)));
    let mut left = fraction;
    for (_, job, held) in victims {
        if left <= FRACTION_EPS {
            break;
        }
        if held <= left + FRACTION_EPS {
            state.preempt_job(job)?;
            left -= held;
        } else {
            state.resize_job(job, held - left)?;
            state.log.push((now, Happening::Trimmed { job, gpu, fraction: held - left }));
            left = 0.0;
        }
    }
    Ok(())
}

fn grant(state: &mut ClusterState, gpu: GpuId, fraction: f64) -> Result<(), OrchestratorError> {
    let now = state.clock;
    let mut budget = fraction;
    let mut given = 0.0;

    let mut running: Vec<(SimTime, JobId)> = state
        .running
        .iter()
        .filter(|(_, r)| r.assignment.gpu == gpu)
        .map(|(&j, _)| (state.jobs[&j].arrival_time, j))
        .collect();
    running.sort();
    for (_, job) in running {
        if budget <= FRACTION_EPS {
            break;
        }
        let a = state.running[&job].assignment;
        let want = state.jobs[&job].demand_fraction - a.fraction;
        let room = state.gpu(gpu).map(|g| g.headroom(a.instance)).unwrap_or(0.0);
        let add = want.min(room).min(budget);
        if add > FRACTION_EPS {
            state.resize_job(job, a.fraction + add)?;
            state.log.push((now, Happening::ToppedUp { job, gpu, fraction: a.fraction + add }));
            budget -= add;
            given += add;
        }
    }

    let Some(server) = state.server_of(gpu) else { return Ok(()) };
    for job in state.eligible_waiting() {
        if budget <= FRACTION_EPS {
            break;
        }
        let j = &state.jobs[&job];
        let required = j.required_fraction();
        let elastic = j.elastic;
        let Some(g) = state.gpu(gpu) else { break };
        if !g.is_settled(now) {
            break;
        }
        let slot = g
            .instances()
            .iter()
            .filter(|i| i.accepts(TenantClass::Ai))
            .map(|i| (i.id, g.headroom(i.id).min(budget)))
            .find(|&(_, room)| if elastic { room > FRACTION_EPS } else { room + FRACTION_EPS >= required });
        if let Some((instance, room)) = slot {
            let fraction = required.min(room);
            state.start_job(job, Assignment { server, gpu, instance, fraction })?;
            budget -= fraction;
            given += fraction;
        }
    }
    if given > FRACTION_EPS {
        state.log.push((now, Happening::Granted { gpu, fraction: given }));
    }
    Ok(())
}

/// Grants this slot's RAN demand on every pool GPU ahead of any AI change
/// and reports each GPU whose RAN work could not be fully served.
pub fn enforce_ran_priority(state: &mut ClusterState) -> Vec<DeadlineMiss> {
    let now = state.clock;
    let demands: Vec<(GpuId, f64)> = state.ran.iter().map(|(&g, r)| (g, r.demand)).collect();
    let mut misses = Vec::new();
    for (gpu_id, demand) in demands {
        let Some(gpu) = state.gpu_mut(gpu_id) else { continue };
        gpu.clear_class(TenantClass::Ran);
        let granted = match gpu.home_instance(TenantClass::Ran).map(|i| i.id) {
            Some(inst) => gpu
                .allocate(inst, demand, TenantClass::Ran, now)
                .map(|a| a.granted_fraction)
                .unwrap_or(0.0),
            None => 0.0,
        };
        let shortfall = demand - granted;
        if shortfall > FRACTION_EPS {
            misses.push(DeadlineMiss { time: now, gpu: gpu_id, shortfall });
        }
    }
    misses
}
