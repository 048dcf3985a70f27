//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::cell::Cell;
use std::time::{Duration, Instant};

use airan_core::compute::{GpuDevice, GpuId, Granularity, NfBundle, Server, ServerId, ServerState};
use airan_core::engine;
use airan_core::fabric::{
    build_ptp_tree, build_reference_fabric, route_flows, validate_topology, Flow, FlowId, FlowKind, ReferenceFabric, RuId,
    SwitchRole,
};
use airan_core::metrics::{EventKind, MetricsReport, PPM};
use airan_core::orchestrator::{enforce_ran_priority, plan_placement, ClusterState, Forecast, OrchestratorConfig, Policy};
use airan_core::scenario::Scenario;
use airan_core::time::SimTime;
use airan_core::workload::{AiJob, AiWorkload, Arrival, CellConfig, JobId, JobSize, JobState, LoadProfile, SloClass};
use airan_sim::config::parse_scenario;
use airan_sim::records::{write_report, ReportFormat};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

const POC: &str = include_str!("../../../scenarios/poc.scenario");
const UPLIFT: &str = include_str!("../../../scenarios/uplift.scenario");
const BASE: &str = include_str!("../../../scenarios/base.scenario");

// Pinned tolerances.
const RAN_PEAK: f64 = 0.400;
const RAN_PEAK_TOL: f64 = 0.001;
const POC_TOTAL_TOL: f64 = 0.01;
const POC_RUNTIME: Duration = Duration::from_secs(10);
const BASELINE_RANGE: (f64, f64) = (0.30, 0.40);
const UPLIFT_TARGET: f64 = 0.95;
const UPLIFT_RUNTIME: Duration = Duration::from_secs(30);
const MEAN_TOL: f64 = 1e-9;
const ISOLATION_SCENARIOS: u64 = 100;
const PLACEMENT_INSTANCES: u64 = 200;
const PLACEMENT_SUCCESS: f64 = 0.95;
const CONSERVATION_TOL: f64 = 1e-9;
const FRACTION_TOL: f64 = 1e-9;

thread_local! {
    static WORST_TOTAL: Cell<f64> = const { Cell::new(0.0) };
    static SAMPLES: Cell<u64> = const { Cell::new(0) };
}

/// Runs a scenario and folds its trace into the conservation check.
fn run(s: &Scenario) -> MetricsReport {
    let report = engine::run(s).expect("scenario runs");
    for t in &report.trace {
        let total = t.ran_fraction() + t.ai_fraction();
        WORST_TOTAL.with(|w| w.set(w.get().max(total)));
    }
    SAMPLES.with(|n| n.set(n.get() + report.trace.len() as u64));
    report
}

fn gpu_samples(r: &MetricsReport, gpu: u32) -> impl Iterator<Item = &airan_core::metrics::TraceSample> {
    r.trace.iter().filter(move |t| t.gpu == gpu)
}

fn all_gpus(r: &MetricsReport) -> Vec<u32> {
    (0..r.gpus.len() as u32).collect()
}

fn secs(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn poc_replication() -> Outcome {
    let s = parse_scenario(POC).unwrap();
    let started = Instant::now();
    let r = run(&s);
    let elapsed = started.elapsed();

    let g1 = r.gpu_index("server1/gpu1").unwrap();
    let g2 = r.gpu_index("server1/gpu2").unwrap();
    let peak = gpu_samples(&r, g1).map(|t| t.ran_fraction()).fold(0.0, f64::max);
    let (lo, hi) = gpu_samples(&r, g1)
        .map(|t| t.total_fraction())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let backlog = r.jobs.running_at_end + r.jobs.waiting_at_end > 0;
    let gpu2_idle = gpu_samples(&r, g2).all(|t| t.ran_ppm == 0 && t.ai_ppm == 0);
    let misses = r.deadline_misses.len();

    let pass = (peak - RAN_PEAK).abs() <= RAN_PEAK_TOL
        && backlog
        && (lo - 1.0).abs() <= POC_TOTAL_TOL
        && (hi - 1.0).abs() <= POC_TOTAL_TOL
        && gpu2_idle
        && misses == 0
        && s.horizon == secs(600.0)
        && elapsed < POC_RUNTIME;
    outcome(
        pass,
        format!(
            "GPU1 RAN peak {peak:.3}, GPU1 total in [{lo:.4}, {hi:.4}], GPU2 idle {gpu2_idle}, misses {misses}, {:.2} s for a {:.0} s horizon",
            elapsed.as_secs_f64(),
            s.horizon.as_secs_f64()
        ),
    )
}

fn utilization_uplift() -> Outcome {
    let s = parse_scenario(UPLIFT).unwrap();
    let dynamic = matches!(
        s.policy,
        Policy::DynamicBackfill { safety_margin, forecast: Forecast::MaxOverWindow { .. }, .. } if safety_margin == 0.05
    );
    let saturating = s.ai_workloads.iter().any(|w| w.arrival == Arrival::Saturating);

    let started = Instant::now();
    let baseline = run(&s.without_ai());
    let shared = run(&s);
    let elapsed = started.elapsed();

    let base_mean = baseline.mean_total(&all_gpus(&baseline)).unwrap();
    let mean = shared.mean_total(&all_gpus(&shared)).unwrap();
    let (base_misses, misses) = (baseline.deadline_misses.len(), shared.deadline_misses.len());
    let pass = dynamic
        && saturating
        && (BASELINE_RANGE.0..=BASELINE_RANGE.1).contains(&base_mean)
        && mean >= UPLIFT_TARGET - MEAN_TOL
        && base_misses == 0
        && misses == 0
        && elapsed < UPLIFT_RUNTIME;
    outcome(
        pass,
        format!(
            "baseline mean {base_mean:.4} -> {mean:.4} with backfill, misses {base_misses} -> {misses}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn random_profile(rng: &mut Pcg64, horizon_s: f64) -> LoadProfile {
    if rng.random_bool(0.5) {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        LoadProfile::DiurnalSinusoid {
            min: a.min(b),
            max: a.max(b),
            period_s: rng.random_range(0.2..2.0),
            phase_rad: rng.random_range(0.0..std::f64::consts::TAU),
        }
    } else {
        let steps = rng.random_range(1..6);
        let mut points: Vec<(f64, f64)> =
            (0..steps).map(|i| (if i == 0 { 0.0 } else { rng.random_range(0.0..horizon_s) }, rng.random())).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        LoadProfile::Trace { points }
    }
}

fn random_batch(rng: &mut Pcg64) -> AiWorkload {
    AiWorkload {
        arrival: Arrival::Poisson { rate_per_s: rng.random_range(1.0..40.0) },
        job_size: JobSize::Exponential { mean_compute_seconds: rng.random_range(0.01..0.3) },
        slo_class: if rng.random_bool(0.3) {
            SloClass::Interactive { latency_bound_s: rng.random_range(0.05..1.0) }
        } else {
            SloClass::Batch
        },
        demand_fraction: rng.random_range(1..=20) as f64 * 0.05,
    }
}

fn isolation() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(0xA11CE);
    let base = parse_scenario(POC).unwrap();
    let mut identical = 0;
    let mut with_misses = 0;
    let mut total_misses = 0;
    for i in 0..ISOLATION_SCENARIOS {
        let mut s = base.clone();
        let ran_units: u32 = rng.random_range(2..=18);
        let r = ran_units as f64 * 0.05;
        s.policy = Policy::StaticSplit { ran_fraction: r, ai_fraction: 1.0 - r };
        s.horizon = secs(1.0);
        s.sample_interval = SimTime::from_millis(50);
        s.seed = i;
        let bw = [20.0, 40.0, 60.0, 80.0, 100.0][rng.random_range(0..5)];
        s.cells[0].config = CellConfig::new(bw, 30, 4, 4).unwrap();
        s.cells[0].profile = random_profile(&mut rng, 1.0);
        s.ai_workloads.push(random_batch(&mut rng));
        s.validate().unwrap();
        let with_ai = run(&s).deadline_misses;
        let without = run(&s.without_ai()).deadline_misses;
        if with_ai == without {
            identical += 1;
        }
        if !without.is_empty() {
            with_misses += 1;
            total_misses += without.len();
        }
    }
    outcome(
        identical == ISOLATION_SCENARIOS,
        format!(
            "{identical}/{ISOLATION_SCENARIOS} miss sequences identical ({with_misses} scenarios with misses, {total_misses} misses in total)"
        ),
    )
}

/// Exhaustive search: can every job fit, in whole granularity units, into
/// the per-GPU free capacity?
fn fits(jobs: &[u32], free: &mut [u32]) -> bool {
    let Some((&first, rest)) = jobs.split_first() else { return true };
    for g in 0..free.len() {
        if free[g] >= first {
            free[g] -= first;
            let ok = fits(rest, free);
            free[g] += first;
            if ok {
                return true;
            }
        }
    }
    false
}

fn placement_oracle() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(0x9A7C);
    let mut infeasible_emitted = 0;
    let mut solvable = 0;
    let mut solved = 0;
    for _ in 0..PLACEMENT_INSTANCES {
        let n_servers = rng.random_range(1..=2u32);
        let per_server = rng.random_range(1..=2u32);
        let mut servers = Vec::new();
        let mut gpu_ids = Vec::new();
        for s in 0..n_servers {
            let devices: Vec<GpuDevice> = (0..per_server)
                .map(|g| {
                    let id = GpuId(s * per_server + g);
                    gpu_ids.push((ServerId(s), id));
                    GpuDevice::new(id, 80, Granularity::default())
                })
                .collect();
            servers.push(ServerState::new(Server::new(ServerId(s), devices, 32, NfBundle::DuCu, 100.0, 100.0).unwrap()));
        }
        let pool: Vec<GpuId> = gpu_ids.iter().map(|g| g.1).collect();
        let cfg = OrchestratorConfig::new(Policy::dynamic(0.0), pool.clone(), SimTime::from_micros(500));
        let mut st = ClusterState::new(servers, cfg).unwrap();
        let ran: Vec<u32> = pool.iter().map(|_| rng.random_range(0..=14)).collect();
        for (g, &u) in pool.iter().zip(&ran) {
            st.set_ran_demand(*g, u as f64 * 0.05);
        }
        enforce_ran_priority(&mut st);
        let n_jobs = rng.random_range(1..=6);
        let units: Vec<u32> = (0..n_jobs).map(|_| rng.random_range(1..=12)).collect();
        for (i, &u) in units.iter().enumerate() {
            st.enqueue(AiJob {
                id: JobId(i as u64),
                workload: 0,
                arrival_time: SimTime::ZERO,
                remaining_compute_seconds: 1.0,
                demand_fraction: u as f64 * 0.05,
                elastic: false,
                slo_class: SloClass::Batch,
                state: JobState::Queued,
            });
        }

        let decision = plan_placement(&st.eligible_waiting(), &st);
        let mut used = vec![0.0; pool.len()];
        let mut feasible = decision.rejected.is_empty();
        for (job, a) in &decision.assignments {
            let Some(g) = pool.iter().position(|&p| p == a.gpu) else {
                feasible = false;
                continue;
            };
            let want = units[job.0 as usize] as f64 * 0.05;
            if gpu_ids[g].0 != a.server || st.gpu(a.gpu).and_then(|s| s.instance(a.instance)).is_none() {
                feasible = false;
            }
            if (a.fraction - want).abs() > FRACTION_TOL {
                feasible = false;
            }
            used[g] += a.fraction;
        }
        for (g, &u) in used.iter().enumerate() {
            if u > (20 - ran[g]) as f64 * 0.05 + FRACTION_TOL {
                feasible = false;
            }
        }
        if !feasible {
            infeasible_emitted += 1;
        }

        let mut free: Vec<u32> = ran.iter().map(|r| 20 - r).collect();
        if fits(&units, &mut free) {
            solvable += 1;
            if feasible && decision.assignments.len() == units.len() {
                solved += 1;
            }
        }
    }
    let rate = solved as f64 / solvable.max(1) as f64;
    outcome(
        infeasible_emitted == 0 && rate >= PLACEMENT_SUCCESS,
        format!(
            "{infeasible_emitted} infeasible placements in {PLACEMENT_INSTANCES} instances; placed everything in {solved}/{solvable} solvable instances ({:.1}%)",
            100.0 * rate
        ),
    )
}

fn fabric_invariants() -> Outcome {
    let rus: Vec<RuId> = (0..8).map(RuId).collect();
    let servers: Vec<Server> = (0..4)
        .map(|i| {
            let gpus = vec![GpuDevice::new(GpuId(2 * i), 80, Granularity::default()), GpuDevice::new(GpuId(2 * i + 1), 80, Granularity::default())];
            Server::new(ServerId(i), gpus, 64, NfBundle::DuCu, 100.0, 100.0).unwrap()
        })
        .collect();
    let reference = ReferenceFabric::default();
    let topo = build_reference_fabric(&reference, &rus, &servers).unwrap();
    let poc_topo = parse_scenario(POC).unwrap().topology().unwrap();

    let violations = validate_topology(&topo).len() + validate_topology(&poc_topo).len();

    let spines: Vec<_> =
        topo.switches(SwitchRole::ComputeSpine).chain(topo.switches(SwitchRole::ConvergedSpine)).collect();
    let spine_loss_ok = spines.iter().filter(|&&s| topo.without_node(s).leaves_mutually_reachable()).count();

    let tree = build_ptp_tree(&topo).unwrap();
    let endpoints: Vec<_> = topo.rus.iter().map(|r| r.node).chain(topo.servers.iter().map(|s| s.frontend)).collect();
    let covered = endpoints.iter().filter(|e| tree.paths.contains_key(e)).count();

    let compute_spines: Vec<_> = topo.switches(SwitchRole::ComputeSpine).collect();
    let rate = 10.0;
    let flow = Flow::new(FlowId(0), topo.rus[0].node, topo.servers[0].frontend, FlowKind::Fronthaul, rate);
    let routing = route_flows(&topo, &[flow]).unwrap();
    // Traffic through a spine enters on one link and leaves on another.
    let through: Vec<f64> = compute_spines
        .iter()
        .map(|&s| topo.links.iter().filter(|l| l.a == s || l.b == s).map(|l| routing.load(l.id)).sum::<f64>() / 2.0)
        .collect();
    let split_ok = compute_spines.len() == 2 && through.iter().all(|&t| t == rate / 2.0);

    let pass = violations == 0 && spine_loss_ok == spines.len() && covered == endpoints.len() && split_ok;
    outcome(
        pass,
        format!(
            "{violations} topology violations, {spine_loss_ok}/{} single-spine losses keep leaves connected, PTP covers {covered}/{} endpoints, spine split {:?} Gbps of {rate}",
            spines.len(),
            endpoints.len(),
            through
        ),
    )
}

fn determinism_and_conservation() -> Outcome {
    let mut scenarios = Vec::new();
    let mut poc = parse_scenario(POC).unwrap();
    poc.horizon = secs(60.0);
    scenarios.push(poc);
    scenarios.push(parse_scenario(UPLIFT).unwrap());
    let base = parse_scenario(BASE).unwrap();
    for seed in 0..8 {
        scenarios.push(Scenario { seed, ..base.clone() });
    }
    let mut identical = 0;
    for s in &scenarios {
        let a = write_report(&run(s), ReportFormat::Records);
        let b = write_report(&run(s), ReportFormat::Records);
        if a == b {
            identical += 1;
        }
    }
    let worst = WORST_TOTAL.with(Cell::get);
    let samples = SAMPLES.with(Cell::get);
    outcome(
        identical == scenarios.len() && worst <= 1.0 + CONSERVATION_TOL,
        format!(
            "{identical}/{} scenarios byte-identical across two runs; max ran+ai {worst:.6} over {samples} samples from every run in this suite",
            scenarios.len()
        ),
    )
}

fn reclaim_latency() -> Outcome {
    let base = parse_scenario(UPLIFT).unwrap();
    let epoch = secs(0.1);
    let margin = 0.05;
    let cases = [
        (0.25, 0.75, 1.05, true),
        (0.25, 0.75, 1.05, false),
        (0.0, 1.0, 0.5, true),
        (0.5, 0.9, 1.3335, true),
        (0.1, 0.6, 0.7005, false),
    ];
    let mut ok = 0;
    let mut worst = Duration::ZERO;
    for &(from, to, at, windowed) in &cases {
        let mut s = base.clone();
        s.cells[0].profile = LoadProfile::Trace { points: vec![(0.0, from), (at, to)] };
        s.policy = Policy::DynamicBackfill {
            epoch,
            safety_margin: margin,
            forecast: if windowed { Forecast::MaxOverWindow { window: secs(0.2) } } else { Forecast::LastValue },
        };
        s.horizon = secs(2.0);
        s.sample_interval = SimTime::from_millis(5);
        s.validate().unwrap();
        let r = run(&s);
        // The forecast sees the new level at the first slot at or after the step.
        let step = secs(at);
        let seen = SimTime::from_micros(step.as_micros().div_ceil(s.slot().as_micros()) * s.slot().as_micros());
        let ceiling = (1.0 - 0.4 * to - margin).max(0.0);
        let Some(reclaim) = r
            .events
            .iter()
            .find(|e| e.time >= seen && e.gpu == Some(0) && matches!(e.kind, EventKind::Reclaimed { .. }))
        else {
            continue;
        };
        let latency = reclaim.time.saturating_sub(seen);
        worst = worst.max(Duration::from_micros(latency.as_micros()));
        let held = r.trace.iter().filter(|t| t.gpu == 0 && t.time >= reclaim.time).all(|t| t.ai_ppm as f64 <= (ceiling + FRACTION_TOL) * PPM as f64);
        let before = r.trace.iter().rfind(|t| t.gpu == 0 && t.time < seen).map(|t| t.ai_fraction()).unwrap_or(0.0);
        if latency <= epoch && held && before > ceiling {
            ok += 1;
        }
    }
    outcome(
        ok == cases.len(),
        format!("{ok}/{} step rises reclaimed to the new ceiling; worst latency {:.1} ms (epoch {:.0} ms)", cases.len(), worst.as_secs_f64() * 1e3, epoch.as_secs_f64() * 1e3),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("PoC replication", poc_replication),
        ("utilization uplift", utilization_uplift),
        ("hard-split isolation", isolation),
        ("placement vs exhaustive oracle", placement_oracle),
        ("fabric invariants", fabric_invariants),
        ("determinism and conservation", determinism_and_conservation),
        ("reclaim latency", reclaim_latency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
