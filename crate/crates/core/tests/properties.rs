mod common;

use std::collections::VecDeque;

use airan_core::compute::{
    partition_gpu, GpuDevice, GpuId, GpuState, Granularity, NfBundle, Server, ServerId, ServerState, TenantClass,
};
use airan_core::engine::{run, SimEventKind, Simulation};
use airan_core::fabric::{
    build_ptp_tree, build_reference_fabric, route_flows, FabricTopology, Flow, FlowId, FlowKind, NodeId,
    ReferenceFabric, RuId, SwitchRole,
};
use airan_core::metrics::quantize_pair;
use airan_core::orchestrator::{
    apply_actions, plan_placement, ClusterState, OrchestratorConfig, Policy, ScaleAction, TimeWindow,
};
use airan_core::time::SimTime;
use airan_core::workload::{
    sample_load, AiJob, Arrival, JobId, JobSize, JobState, LoadProfile, SloClass,
};
use common::*;
use proptest::prelude::*;

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

fn diurnal() -> impl Strategy<Value = LoadProfile> {
    (0.0..1.0f64, 0.0..1.0f64, 0.5..4.0f64, 0.0..std::f64::consts::TAU).prop_map(|(a, b, period_s, phase_rad)| {
        LoadProfile::DiurnalSinusoid { min: a.min(b), max: a.max(b), period_s, phase_rad }
    })
}

fn step_trace() -> impl Strategy<Value = LoadProfile> {
    prop::collection::vec(0.0..1.0f64, 1..8).prop_map(|levels| LoadProfile::Trace {
        points: levels.into_iter().enumerate().map(|(i, l)| (i as f64 * 0.3, l)).collect(),
    })
}

fn any_profile() -> impl Strategy<Value = LoadProfile> {
    prop_oneof![diurnal(), step_trace(), (0.0..=1.0f64).prop_map(|level| LoadProfile::Constant { level })]
}

fn any_policy() -> impl Strategy<Value = Policy> {
    prop_oneof![
        (1u32..20).prop_map(|r| Policy::StaticSplit { ran_fraction: r as f64 * 0.05, ai_fraction: (20 - r) as f64 * 0.05 }),
        (0.0..0.3f64).prop_map(Policy::dynamic),
        (8u32..=20, 8u32..=20).prop_map(|(a, b)| Policy::TimeSplit {
            schedule: vec![
                TimeWindow { start: SimTime::ZERO, end: SimTime::from_millis(700), ran_fraction: a as f64 * 0.05 },
                TimeWindow { start: SimTime::from_millis(700), end: SimTime::from_millis(5000), ran_fraction: b as f64 * 0.05 },
            ],
        }),
    ]
}

fn batch_workload(rate: f64, size: f64, fraction: f64) -> airan_core::workload::AiWorkload {
    airan_core::workload::AiWorkload {
        arrival: Arrival::Poisson { rate_per_s: rate },
        job_size: JobSize::Exponential { mean_compute_seconds: size },
        slo_class: SloClass::Batch,
        demand_fraction: fraction,
    }
}

fn miss_times(s: &airan_core::scenario::Scenario) -> Vec<(SimTime, u32, u32)> {
    run(s).unwrap().deadline_misses.iter().map(|m| (m.time, m.gpu, m.shortfall_ppm)).collect()
}

/// Node-level BFS oracle for shortest path length where only switches forward.
fn hop_count(topo: &FabricTopology, src: NodeId, dst: NodeId) -> u32 {
    let adj = topo.adjacency();
    let mut dist = vec![u32::MAX; topo.nodes.len()];
    dist[src.0 as usize] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        if u == dst {
            return dist[u.0 as usize];
        }
        if u != src && !topo.nodes[u.0 as usize].forwards() {
            continue;
        }
        for &(v, _) in &adj[u.0 as usize] {
            if dist[v.0 as usize] == u32::MAX {
                dist[v.0 as usize] = dist[u.0 as usize] + 1;
                q.push_back(v);
            }
        }
    }
    panic!("unreachable");
}

fn site(spines: usize, leaf_pairs: usize, n_rus: u32, n_servers: u32) -> FabricTopology {
    let params = ReferenceFabric {
        compute_spines: spines,
        compute_leaves: 2 * leaf_pairs,
        converged_spines: spines,
        converged_leaves: 2 * leaf_pairs,
        link_capacity_gbps: 100.0,
    };
    let rus: Vec<RuId> = (0..n_rus).map(RuId).collect();
    let servers: Vec<Server> = (0..n_servers)
        .map(|i| {
            Server::new(
                ServerId(i),
                vec![GpuDevice::new(GpuId(i), 80, Granularity::default())],
                32,
                NfBundle::DuCu,
                100.0,
                100.0,
            )
            .unwrap()
        })
        .collect();
    build_reference_fabric(&params, &rus, &servers).unwrap()
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn partition_units_cover_the_gpu(units in prop::collection::vec(1u32..=20, 1..6)) {
        let total: u32 = units.iter().sum();
        prop_assume!(total <= 20);
        let gpu = GpuDevice::new(GpuId(0), 80, Granularity::default());
        let fractions: Vec<f64> = units.iter().map(|&u| u as f64 * 0.05).collect();
        let classes = vec![TenantClass::Ai; units.len()];
        let slices = partition_gpu(&gpu, &fractions, &classes).unwrap();
        prop_assert_eq!(slices.iter().map(|s| s.units).sum::<u32>(), 20);
        let sum: f64 = slices.iter().map(|s| s.compute_fraction()).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        for (s, &u) in slices.iter().zip(&units) {
            prop_assert_eq!(s.units, u);
        }
    }

    #[test]
    fn load_samples_stay_in_unit_interval(p in any_profile(), t in 0.0..100.0f64) {
        let v = sample_load(&p, t).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn quantized_trace_is_conservative(ran in 0.0..=1.0f64, ai_share in 0.0..=1.0f64) {
        let ai = (1.0 - ran) * ai_share;
        let (r, a) = quantize_pair(ran, ai);
        prop_assert!(r + a <= 1_000_000);
        prop_assert!((r as f64 / 1e6 - ran).abs() <= 0.5e-6 + 1e-12);
    }

    #[test]
    fn grants_never_exceed_a_gpu_and_trace_matches_ledger(
        policy in any_policy(),
        profile in any_profile(),
        rate in 0.0..30.0f64,
        fraction in 0.05..1.0f64,
        seed in any::<u64>(),
    ) {
        let mut s = poc(policy, profile, 2);
        s.ai_workloads = vec![batch_workload(rate, 0.2, fraction), saturating_ai()];
        s.seed = seed;
        let mut sim = Simulation::new(&s).unwrap();
        let mut last = SimTime::ZERO;
        let mut samples = 0;
        while let Some(ev) = sim.next_event() {
            prop_assert!(ev.time >= last);
            last = ev.time;
            let emitted = sim.step(ev).unwrap();
            for g in [GpuId(0), GpuId(1)] {
                let gpu = sim.state().gpu(g).unwrap();
                prop_assert!(gpu.granted_total() <= 1.0 + 1e-9);
                for inst in gpu.instances() {
                    let grants = gpu.grants(inst.id).unwrap();
                    prop_assert!(grants.total() <= inst.compute_fraction() + 1e-9);
                }
            }
            if ev.kind == SimEventKind::Sample {
                samples += 1;
            }
            for e in emitted {
                prop_assert!(e.time >= ev.time);
                sim.schedule(e);
            }
        }
        prop_assert!(samples > 0);
        let report = run(&s).unwrap();
        for t in &report.trace {
            prop_assert!(t.ran_ppm + t.ai_ppm <= 1_000_000);
        }
    }

    #[test]
    fn sampled_trace_equals_granted_sums(profile in any_profile(), margin in 0.0..0.2f64) {
        let s = poc(Policy::dynamic(margin), profile, 1);
        let mut sim = Simulation::new(&s).unwrap();
        let mut expected = Vec::new();
        while let Some(ev) = sim.next_event() {
            let emitted = sim.step(ev).unwrap();
            if ev.kind == SimEventKind::Sample {
                for g in [GpuId(0), GpuId(1)] {
                    let gpu = sim.state().gpu(g).unwrap();
                    expected.push(quantize_pair(gpu.granted(TenantClass::Ran), gpu.granted(TenantClass::Ai)));
                }
            }
            for e in emitted {
                sim.schedule(e);
            }
        }
        let got: Vec<(u32, u32)> = run(&s).unwrap().trace.iter().map(|t| (t.ran_ppm, t.ai_ppm)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn hard_split_ran_ignores_ai(profile in any_profile(), ran_units in 1u32..20) {
        let r = ran_units as f64 * 0.05;
        let s = poc(Policy::StaticSplit { ran_fraction: r, ai_fraction: 1.0 - r }, profile, 1);
        prop_assert_eq!(miss_times(&s), miss_times(&s.without_ai()));
    }

    #[test]
    fn dynamic_ran_priority_with_covered_rise(
        levels in prop::collection::vec(0.0..1.0f64, 1..6),
        margin in 0.0..0.3f64,
        rate in 0.0..20.0f64,
    ) {
        // Steps land two epochs apart and rise by at most the margin.
        let mut points = Vec::new();
        let mut level: f64 = levels[0];
        for (i, l) in levels.iter().enumerate() {
            let bounded = l.min(level + margin / 0.4);
            level = bounded;
            points.push((i as f64 * 0.2, bounded));
        }
        let mut s = poc(Policy::dynamic(margin), LoadProfile::Trace { points }, 2);
        s.ai_workloads.push(batch_workload(rate, 0.1, 0.25));
        prop_assert_eq!(miss_times(&s).len(), miss_times(&s.without_ai()).len());
    }

    #[test]
    fn dynamic_never_below_static_at_zero_margin(profile in any_profile()) {
        let sample = |p: &LoadProfile| -> f64 {
            (0..=20_000).map(|i| sample_load(p, i as f64 * 1e-4 * 2.0).unwrap()).fold(0.0, f64::max)
        };
        let peak = 0.4 * sample(&profile);
        let ran_slice = ((peak / 0.05 - 1e-9).ceil().max(1.0)) * 0.05;
        let stat = poc(Policy::StaticSplit { ran_fraction: ran_slice, ai_fraction: 1.0 - ran_slice }, profile.clone(), 2);
        let dynm = poc(Policy::dynamic(0.0), profile, 2);
        let u_static = run(&stat).unwrap().mean_total(&[0]).unwrap();
        let u_dynamic = run(&dynm).unwrap().mean_total(&[0]).unwrap();
        prop_assert!(u_dynamic >= u_static - 1e-6, "dynamic {u_dynamic} < static {u_static}");
    }

    #[test]
    fn same_inputs_same_report(policy in any_policy(), profile in any_profile(), seed in any::<u64>()) {
        let mut s = poc(policy, profile, 1);
        s.ai_workloads.push(batch_workload(15.0, 0.05, 0.2));
        s.seed = seed;
        prop_assert_eq!(run(&s).unwrap(), run(&s).unwrap());
    }

    #[test]
    fn preemption_keeps_remaining_work(
        jobs in prop::collection::vec((1u32..=10, 0.1..50.0f64), 1..8),
        reclaim_units in 1u32..=20,
    ) {
        let server = Server::new(
            ServerId(0),
            vec![GpuDevice::new(GpuId(0), 80, Granularity::default())],
            32,
            NfBundle::DuCuCn,
            100.0,
            100.0,
        )
        .unwrap();
        let cfg = OrchestratorConfig::new(Policy::dynamic(0.0), vec![GpuId(0)], SimTime::from_micros(500));
        let mut st = ClusterState::new(vec![ServerState::new(server)], cfg).unwrap();
        for (i, &(units, size)) in jobs.iter().enumerate() {
            st.enqueue(AiJob {
                id: JobId(i as u64),
                workload: 0,
                arrival_time: SimTime::ZERO,
                remaining_compute_seconds: size,
                demand_fraction: units as f64 * 0.05,
                elastic: false,
                slo_class: SloClass::Batch,
                state: JobState::Queued,
            });
        }
        let d = plan_placement(&st.eligible_waiting(), &st);
        st.apply_placement(&d).unwrap();
        let work = |st: &ClusterState| st.jobs.values().map(|j| j.remaining_compute_seconds).sum::<f64>();
        let before = work(&st);
        let st = apply_actions(st, &[ScaleAction::ReclaimAi { gpu: GpuId(0), fraction: reclaim_units as f64 * 0.05 }]).unwrap();
        prop_assert_eq!(work(&st), before);
        let st = apply_actions(st, &[ScaleAction::GrantAi { gpu: GpuId(0), fraction: 1.0 }]).unwrap();
        prop_assert_eq!(work(&st), before);
        prop_assert!(st.gpu(GpuId(0)).unwrap().granted_total() <= 1.0 + 1e-9);
    }

    #[test]
    fn placement_respects_free_capacity(
        gpus in 1u32..4,
        ran_units in prop::collection::vec(0u32..=20, 3),
        jobs in prop::collection::vec(1u32..=20, 1..12),
    ) {
        let devices: Vec<GpuDevice> = (0..gpus).map(|g| GpuDevice::new(GpuId(g), 80, Granularity::default())).collect();
        let server = Server::new(ServerId(0), devices, 32, NfBundle::DuCuCn, 100.0, 100.0).unwrap();
        let pool: Vec<GpuId> = (0..gpus).map(GpuId).collect();
        let cfg = OrchestratorConfig::new(Policy::dynamic(0.0), pool, SimTime::from_micros(500));
        let mut st = ClusterState::new(vec![ServerState::new(server)], cfg).unwrap();
        for g in 0..gpus {
            st.set_ran_demand(GpuId(g), ran_units[g as usize] as f64 * 0.05);
        }
        airan_core::orchestrator::enforce_ran_priority(&mut st);
        for (i, &u) in jobs.iter().enumerate() {
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
        let free_before: Vec<f64> = (0..gpus).map(|g| st.gpu(GpuId(g)).unwrap().free_capacity(true)).collect();
        let d = plan_placement(&st.eligible_waiting(), &st);
        let mut per_gpu = vec![0.0; gpus as usize];
        for a in d.assignments.values() {
            per_gpu[a.gpu.0 as usize] += a.fraction;
        }
        for g in 0..gpus as usize {
            prop_assert!(per_gpu[g] <= free_before[g] + 1e-9);
        }
        st.apply_placement(&d).unwrap();
        for g in 0..gpus {
            let gpu: &GpuState = st.gpu(GpuId(g)).unwrap();
            prop_assert!(gpu.granted_total() <= 1.0 + 1e-9);
            prop_assert!((gpu.granted(TenantClass::Ran) - ran_units[g as usize] as f64 * 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn routed_load_equals_rate_times_path_length(
        spines in 1usize..4,
        pairs in 1usize..4,
        n_rus in 1u32..5,
        n_servers in 1u32..5,
        demands in prop::collection::vec((0u32..16, 0u32..16, 0.1..40.0f64), 1..10),
    ) {
        let topo = site(spines, pairs, n_rus, n_servers);
        let flows: Vec<Flow> = demands
            .iter()
            .enumerate()
            .map(|(i, &(r, s, rate))| {
                let ru = topo.rus[(r % n_rus) as usize].node;
                let srv = &topo.servers[(s % n_servers) as usize];
                if i % 2 == 0 {
                    Flow::new(FlowId(i as u32), ru, srv.frontend, FlowKind::Fronthaul, rate)
                } else {
                    Flow::new(FlowId(i as u32), srv.backend, topo.uplink.unwrap(), FlowKind::Backhaul, rate)
                }
            })
            .collect();
        let routing = route_flows(&topo, &flows).unwrap();
        let injected: f64 = routing.loads.values().sum();
        let expected: f64 = flows.iter().map(|f| f.rate_gbps * hop_count(&topo, f.src, f.dst) as f64).sum();
        prop_assert!((injected - expected).abs() < 1e-6 * expected.max(1.0));
    }

    #[test]
    fn single_flow_splits_evenly_over_spines(spines in 2usize..5, pairs in 2usize..4) {
        let topo = site(spines, pairs, 1, 1);
        let ru = topo.rus[0].node;
        let dst = topo.servers[0].frontend;
        let routing = route_flows(&topo, &[Flow::new(FlowId(0), ru, dst, FlowKind::Fronthaul, 12.0)]).unwrap();
        let spine_ids: Vec<NodeId> = topo.switches(SwitchRole::ComputeSpine).collect();
        let per_spine: Vec<f64> = spine_ids
            .iter()
            .map(|&s| topo.links.iter().filter(|l| l.a == s || l.b == s).map(|l| routing.load(l.id)).sum::<f64>())
            .collect();
        let first = per_spine[0];
        prop_assert!(first > 0.0);
        for p in &per_spine {
            prop_assert_eq!(*p, first);
        }
    }

    #[test]
    fn losing_one_spine_keeps_leaves_connected(spines in 2usize..5, pairs in 1usize..4) {
        let topo = site(spines, pairs, 2, 2);
        for s in topo.switches(SwitchRole::ComputeSpine).chain(topo.switches(SwitchRole::ConvergedSpine)).collect::<Vec<_>>() {
            prop_assert!(topo.without_node(s).leaves_mutually_reachable());
        }
    }

    #[test]
    fn sync_tree_covers_every_endpoint(spines in 1usize..4, pairs in 1usize..4, n_rus in 1u32..8, n_servers in 1u32..6) {
        let topo = site(spines, pairs, n_rus, n_servers);
        let tree = build_ptp_tree(&topo).unwrap();
        prop_assert_eq!(tree.paths.len(), (n_rus + n_servers) as usize);
    }
}
