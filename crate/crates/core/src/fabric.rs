//! Spine-leaf compute and converged fabrics.
//!
//! The compute fabric carries fronthaul east-west: RUs reach a fronthaul
//! leaf pair through a transport aggregation router, and server frontends
//! hang off server leaf pairs. The converged fabric carries north-south
//! traffic from server backends to an external uplink. Each tier is a full
//! bipartite spine-leaf mesh and the two tiers share no switches.
//!
//! Routing is a fluid ECMP model: at every hop a flow splits equally over
//! all next hops that stay on a shortest path. Only switches forward
//! traffic; RUs, server ports and the uplink are always path endpoints.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::compute::{NfBundle, Server, ServerId};
use crate::error::FabricError;
use crate::workload::CellConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SwitchRole {
    FronthaulLeaf,
    ServerLeaf,
    ComputeSpine,
    ConvergedLeaf,
    ConvergedSpine,
    AggregationRouter,
}

impl SwitchRole {
    fn is_compute_leaf(self) -> bool {
        matches!(self, SwitchRole::FronthaulLeaf | SwitchRole::ServerLeaf)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Switch { role: SwitchRole, port_capacity_gbps: f64 },
    Ru(RuId),
    ServerFrontend(ServerId),
    ServerBackend(ServerId),
    /// Midhaul, backhaul and internet side of the converged fabric.
    Uplink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
}

impl Node {
    pub fn role(&self) -> Option<SwitchRole> {
        match self.kind {
            NodeKind::Switch { role, .. } => Some(role),
            _ => None,
        }
    }

    /// Whether traffic may pass through this node.
    pub fn forwards(&self) -> bool {
        matches!(self.kind, NodeKind::Switch { .. })
    }
}

/// Bidirectional link with symmetric capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub capacity_gbps: f64,
}

impl Link {
    pub fn other(&self, n: NodeId) -> Option<NodeId> {
        if self.a == n {
            Some(self.b)
        } else if self.b == n {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuHoming {
    pub ru: RuId,
    pub node: NodeId,
    pub leaves: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerAttachment {
    pub server: ServerId,
    pub bundle: NfBundle,
    pub frontend: NodeId,
    pub backend: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FabricTopology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub rus: Vec<RuHoming>,
    pub servers: Vec<ServerAttachment>,
    pub gm_switches: Vec<NodeId>,
    pub uplink: Option<NodeId>,
}

/// Inputs for the reference two-tier build.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFabric {
    pub compute_spines: usize,
    pub compute_leaves: usize,
    pub converged_spines: usize,
    pub converged_leaves: usize,
    pub link_capacity_gbps: f64,
}

impl Default for ReferenceFabric {
    fn default() -> Self {
        ReferenceFabric {
            compute_spines: 2,
            compute_leaves: 4,
            converged_spines: 2,
            converged_leaves: 4,
            link_capacity_gbps: 100.0,
        }
    }
}

struct Builder {
    nodes: Vec<Node>,
    links: Vec<Link>,
}

impl Builder {
    fn node(&mut self, kind: NodeKind, label: String) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, kind, label });
        id
    }

    fn switch(&mut self, role: SwitchRole, capacity: f64, label: String) -> NodeId {
        self.node(NodeKind::Switch { role, port_capacity_gbps: capacity }, label)
    }

    fn link(&mut self, a: NodeId, b: NodeId, capacity_gbps: f64) {
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link { id, a, b, capacity_gbps });
    }
}

/// Builds both fabric tiers with full spine-leaf meshes.
///
/// Compute leaves are split into fronthaul pairs (the first half, rounded
/// up) and server pairs; with a single pair it serves both roles. Converged
/// leaves are split the same way into server-facing and uplink pairs. RUs
/// and servers are spread round-robin over their pairs, and every fronthaul
/// leaf hosts a PTP grandmaster.
pub fn build_reference_fabric(
    params: &ReferenceFabric,
    rus: &[RuId],
    servers: &[Server],
) -> Result<FabricTopology, FabricError> {
    let ReferenceFabric {
        compute_spines,
        compute_leaves,
        converged_spines,
        converged_leaves,
        link_capacity_gbps: cap,
    } = *params;
    if compute_spines == 0 || compute_leaves == 0 || converged_spines == 0 || converged_leaves == 0 {
        return Err(FabricError::InvalidCounts);
    }
    if rus.is_empty() || servers.is_empty() {
        return Err(FabricError::InvalidCounts);
    }
    if compute_leaves % 2 != 0 {
        return Err(FabricError::OddLeafCount { tier: "compute", count: compute_leaves });
    }
    if converged_leaves % 2 != 0 {
        return Err(FabricError::OddLeafCount { tier: "converged", count: converged_leaves });
    }

    let mut b = Builder { nodes: Vec::new(), links: Vec::new() };
    let spines: Vec<NodeId> = (0..compute_spines)
        .map(|i| b.switch(SwitchRole::ComputeSpine, cap, alloc::format!("compute-spine-{}", i + 1)))
        .collect();

    let pairs = compute_leaves / 2;
    let fh_pairs = pairs.div_ceil(2).max(1);
    let mut leaves = Vec::with_capacity(compute_leaves);
    for i in 0..compute_leaves {
        let role = if i / 2 < fh_pairs { SwitchRole::FronthaulLeaf } else { SwitchRole::ServerLeaf };
        leaves.push(b.switch(role, cap, alloc::format!("compute-leaf-{}", i + 1)));
    }
    let fh_leaf_pairs: Vec<[NodeId; 2]> = (0..fh_pairs).map(|p| [leaves[2 * p], leaves[2 * p + 1]]).collect();
    let mut srv_leaf_pairs: Vec<[NodeId; 2]> = (fh_pairs..pairs).map(|p| [leaves[2 * p], leaves[2 * p + 1]]).collect();
    if srv_leaf_pairs.is_empty() {
        srv_leaf_pairs = fh_leaf_pairs.clone();
    }

    let cspines: Vec<NodeId> = (0..converged_spines)
        .map(|i| b.switch(SwitchRole::ConvergedSpine, cap, alloc::format!("converged-spine-{}", i + 1)))
        .collect();
    let cleaves: Vec<NodeId> = (0..converged_leaves)
        .map(|i| b.switch(SwitchRole::ConvergedLeaf, cap, alloc::format!("converged-leaf-{}", i + 1)))
        .collect();
    let cpairs = converged_leaves / 2;
    let facing = cpairs.div_ceil(2).max(1);
    let facing_pairs: Vec<[NodeId; 2]> = (0..facing).map(|p| [cleaves[2 * p], cleaves[2 * p + 1]]).collect();
    let uplink_pair = if cpairs > facing {
        [cleaves[2 * (cpairs - 1)], cleaves[2 * (cpairs - 1) + 1]]
    } else {
        facing_pairs[facing - 1]
    };

    let aggs: Vec<NodeId> = (0..fh_pairs)
        .map(|i| b.switch(SwitchRole::AggregationRouter, cap, alloc::format!("aggregation-router-{}", i + 1)))
        .collect();

    for &s in &spines {
        for &l in &leaves {
            b.link(s, l, cap);
        }
    }
    for &s in &cspines {
        for &l in &cleaves {
            b.link(s, l, cap);
        }
    }
    for (agg, pair) in aggs.iter().zip(&fh_leaf_pairs) {
        b.link(*agg, pair[0], cap);
        b.link(*agg, pair[1], cap);
    }

    let mut ru_homing = Vec::with_capacity(rus.len());
    for (i, &ru) in rus.iter().enumerate() {
        let node = b.node(NodeKind::Ru(ru), alloc::format!("ru-{}", ru.0));
        let p = i % fh_pairs;
        b.link(node, aggs[p], cap);
        ru_homing.push(RuHoming { ru, node, leaves: fh_leaf_pairs[p].to_vec() });
    }

    let mut attachments = Vec::with_capacity(servers.len());
    for (i, server) in servers.iter().enumerate() {
        let frontend = b.node(NodeKind::ServerFrontend(server.id), alloc::format!("server-{}-frontend", server.id.0));
        let backend = b.node(NodeKind::ServerBackend(server.id), alloc::format!("server-{}-backend", server.id.0));
        for &leaf in &srv_leaf_pairs[i % srv_leaf_pairs.len()] {
            b.link(frontend, leaf, server.frontend_port_gbps);
        }
        for &leaf in &facing_pairs[i % facing_pairs.len()] {
            b.link(backend, leaf, server.backend_port_gbps);
        }
        attachments.push(ServerAttachment {
            server: server.id,
            bundle: server.hosted_nf_bundle,
            frontend,
            backend,
        });
    }

    let uplink = b.node(NodeKind::Uplink, String::from("uplink"));
    b.link(uplink, uplink_pair[0], cap);
    b.link(uplink, uplink_pair[1], cap);

    let gm_switches = fh_leaf_pairs.iter().flatten().copied().collect();
    Ok(FabricTopology {
        nodes: b.nodes,
        links: b.links,
        rus: ru_homing,
        servers: attachments,
        gm_switches,
        uplink: Some(uplink),
    })
}

/// A structural rule the topology breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BipartiteIncomplete { spine: NodeId, leaf: NodeId },
    /// An RU or server port reaches fewer than two leaves of its pair.
    RedundancyViolation { endpoint: NodeId, leaves: Vec<NodeId> },
    MissingAttachment { server: ServerId, side: &'static str },
    MissingGrandmaster { leaf: NodeId },
    MisplacedGrandmaster { node: NodeId },
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::BipartiteIncomplete { .. } => "BipartiteIncomplete",
            Violation::RedundancyViolation { .. } => "RedundancyViolation",
            Violation::MissingAttachment { .. } => "MissingAttachment",
            Violation::MissingGrandmaster { .. } => "MissingGrandmaster",
            Violation::MisplacedGrandmaster { .. } => "MisplacedGrandmaster",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BipartiteIncomplete { spine, leaf } => {
                write!(f, "BipartiteIncomplete: spine {spine} has no link to leaf {leaf}")
            }
            Violation::RedundancyViolation { endpoint, leaves } => {
                write!(f, "RedundancyViolation: {endpoint} is homed to {} leaf switch(es)", leaves.len())
            }
            Violation::MissingAttachment { server, side } => {
                write!(f, "MissingAttachment: server {} has no {side} attachment", server.0)
            }
            Violation::MissingGrandmaster { leaf } => write!(f, "MissingGrandmaster: fronthaul leaf {leaf}"),
            Violation::MisplacedGrandmaster { node } => {
                write!(f, "MisplacedGrandmaster: {node} is not a fronthaul leaf")
            }
        }
    }
}

impl FabricTopology {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize).filter(|n| n.id == id)
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn ru_node(&self, ru: RuId) -> Option<NodeId> {
        self.rus.iter().find(|h| h.ru == ru).map(|h| h.node)
    }

    pub fn server(&self, server: ServerId) -> Option<&ServerAttachment> {
        self.servers.iter().find(|s| s.server == server)
    }

    pub fn switches(&self, role: SwitchRole) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.role() == Some(role)).map(|n| n.id)
    }

    /// Neighbour lists sorted by neighbour id; parallel links appear once each.
    pub fn adjacency(&self) -> Vec<Vec<(NodeId, LinkId)>> {
        let mut adj = alloc::vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            if (l.a.0 as usize) < adj.len() && (l.b.0 as usize) < adj.len() {
                adj[l.a.0 as usize].push((l.b, l.id));
                adj[l.b.0 as usize].push((l.a, l.id));
            }
        }
        for list in &mut adj {
            list.sort();
        }
        adj
    }

    /// Drops every link touching `node`; the node itself stays, isolated.
    pub fn without_node(&self, node: NodeId) -> FabricTopology {
        let mut t = self.clone();
        t.links.retain(|l| l.a != node && l.b != node);
        t
    }

    pub fn without_link(&self, a: NodeId, b: NodeId) -> FabricTopology {
        let mut t = self.clone();
        if let Some(pos) = t.links.iter().position(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a)) {
            t.links.remove(pos);
        }
        t
    }

    /// Hop distances from `root`, expanding only through forwarding nodes.
    fn distances(&self, adj: &[Vec<(NodeId, LinkId)>], root: NodeId) -> Vec<Option<u32>> {
        let mut dist = alloc::vec![None; self.nodes.len()];
        let Some(slot) = dist.get_mut(root.0 as usize) else {
            return dist;
        };
        *slot = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.0 as usize].unwrap_or(0);
            if u != root && !self.nodes[u.0 as usize].forwards() {
                continue;
            }
            for &(v, _) in &adj[u.0 as usize] {
                if dist[v.0 as usize].is_none() {
                    dist[v.0 as usize] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        let adj = self.adjacency();
        self.distances(&adj, a).get(b.0 as usize).copied().flatten().is_some()
    }

    /// Every pair of leaves within each tier can still reach each other.
    pub fn leaves_mutually_reachable(&self) -> bool {
        let adj = self.adjacency();
        let tiers: [Vec<NodeId>; 2] = [
            self.nodes
                .iter()
                .filter(|n| n.role().is_some_and(SwitchRole::is_compute_leaf))
                .map(|n| n.id)
                .collect(),
            self.switches(SwitchRole::ConvergedLeaf).collect(),
        ];
        tiers.iter().all(|leaves| {
            leaves.iter().all(|&a| {
                let d = self.distances(&adj, a);
                leaves.iter().all(|&b| d[b.0 as usize].is_some())
            })
        })
    }

    fn linked(&self, a: NodeId, b: NodeId) -> bool {
        self.links.iter().any(|l| l.other(a) == Some(b))
    }

    fn neighbours(&self, n: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.links.iter().filter_map(move |l| l.other(n))
    }
}

/// Lists every structural rule the topology breaks; empty means valid.
pub fn validate_topology(topology: &FabricTopology) -> Vec<Violation> {
    let mut out = Vec::new();
    let role_of = |n: NodeId| topology.node(n).and_then(Node::role);

    let tiers = [
        (SwitchRole::ComputeSpine, true),
        (SwitchRole::ConvergedSpine, false),
    ];
    for (spine_role, compute) in tiers {
        let spines: Vec<NodeId> = topology.switches(spine_role).collect();
        let leaves: Vec<NodeId> = topology
            .nodes
            .iter()
            .filter(|n| match n.role() {
                Some(r) if compute => r.is_compute_leaf(),
                Some(r) => r == SwitchRole::ConvergedLeaf,
                None => false,
            })
            .map(|n| n.id)
            .collect();
        for &spine in &spines {
            for &leaf in &leaves {
                if !topology.linked(spine, leaf) {
                    out.push(Violation::BipartiteIncomplete { spine, leaf });
                }
            }
        }
    }

    for homing in &topology.rus {
        let mut leaves = BTreeSet::new();
        for n in topology.neighbours(homing.node) {
            match role_of(n) {
                Some(SwitchRole::FronthaulLeaf) => {
                    leaves.insert(n);
                }
                Some(SwitchRole::AggregationRouter) => {
                    leaves.extend(topology.neighbours(n).filter(|&m| role_of(m) == Some(SwitchRole::FronthaulLeaf)));
                }
                _ => {}
            }
        }
        if leaves.len() < 2 {
            out.push(Violation::RedundancyViolation {
                endpoint: homing.node,
                leaves: leaves.into_iter().collect(),
            });
        }
    }

    for att in &topology.servers {
        let sides = [
            (att.frontend, "frontend", SwitchRole::is_compute_leaf as fn(SwitchRole) -> bool),
            (att.backend, "backend", |r| r == SwitchRole::ConvergedLeaf),
        ];
        for (port, side, is_leaf) in sides {
            let leaves: BTreeSet<NodeId> =
                topology.neighbours(port).filter(|&n| role_of(n).is_some_and(is_leaf)).collect();
            match leaves.len() {
                0 => out.push(Violation::MissingAttachment { server: att.server, side }),
                1 => out.push(Violation::RedundancyViolation {
                    endpoint: port,
                    leaves: leaves.into_iter().collect(),
                }),
                _ => {}
            }
        }
    }

    for leaf in topology.switches(SwitchRole::FronthaulLeaf) {
        if !topology.gm_switches.contains(&leaf) {
            out.push(Violation::MissingGrandmaster { leaf });
        }
    }
    for &gm in &topology.gm_switches {
        if role_of(gm) != Some(SwitchRole::FronthaulLeaf) {
            out.push(Violation::MisplacedGrandmaster { node: gm });
        }
    }
    out
}

/// PTP distribution: one path per RU and per DU server, each starting at
/// the grandmaster that times it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncTree {
    pub grandmasters: Vec<NodeId>,
    pub paths: BTreeMap<NodeId, Vec<NodeId>>,
    pub max_hops: u32,
}

impl SyncTree {
    pub fn hops(&self, endpoint: NodeId, topology: &FabricTopology) -> Option<u32> {
        self.paths.get(&endpoint).map(|p| ptp_hops(topology, p))
    }
}

/// PTP hop count of a path. The transport aggregation router does not
/// take part in timing and is not counted.
pub fn ptp_hops(topology: &FabricTopology, path: &[NodeId]) -> u32 {
    let transparent = path
        .iter()
        .filter(|&&n| topology.node(n).and_then(Node::role) == Some(SwitchRole::AggregationRouter))
        .count();
    (path.len().saturating_sub(1) - transparent) as u32
}

/// Builds the timing tree. Both RUs and DU servers take time from a
/// fronthaul-leaf grandmaster: an RU from the lowest-id grandmaster on its
/// homing pair, a server from the nearest grandmaster. Paths follow
/// shortest routes, breaking ties toward the lowest node id.
pub fn build_ptp_tree(topology: &FabricTopology) -> Result<SyncTree, FabricError> {
    let adj = topology.adjacency();
    let mut gms: Vec<NodeId> = topology.gm_switches.clone();
    gms.sort();
    gms.dedup();
    let dist_from: BTreeMap<NodeId, Vec<Option<u32>>> =
        gms.iter().map(|&g| (g, topology.distances(&adj, g))).collect();

    let path_from = |gm: NodeId, endpoint: NodeId| -> Vec<NodeId> {
        let dist = &dist_from[&gm];
        let mut path = alloc::vec![endpoint];
        let mut cur = endpoint;
        while cur != gm {
            let d = dist[cur.0 as usize].unwrap_or(0);
            let prev = adj[cur.0 as usize]
                .iter()
                .map(|&(n, _)| n)
                .filter(|&n| dist[n.0 as usize] == Some(d - 1) && (n == gm || topology.nodes[n.0 as usize].forwards()))
                .min()
                .expect("a node at distance d has a neighbour at d - 1");
            path.push(prev);
            cur = prev;
        }
        path.reverse();
        path
    };

    let nearest = |endpoint: NodeId, candidates: &[NodeId]| -> Option<NodeId> {
        candidates
            .iter()
            .filter_map(|g| dist_from.get(g).and_then(|d| d[endpoint.0 as usize]).map(|d| (d, *g)))
            .min()
            .map(|(_, g)| g)
    };

    let mut paths = BTreeMap::new();
    let mut used = BTreeSet::new();
    for homing in &topology.rus {
        let own: Vec<NodeId> = homing.leaves.iter().copied().filter(|l| gms.contains(l)).collect();
        let gm = own
            .iter()
            .copied()
            .filter(|g| dist_from[g][homing.node.0 as usize].is_some())
            .min()
            .or_else(|| nearest(homing.node, &gms))
            .ok_or(FabricError::UnreachableEndpoint(homing.node))?;
        paths.insert(homing.node, path_from(gm, homing.node));
        used.insert(gm);
    }
    for att in &topology.servers {
        let gm = nearest(att.frontend, &gms).ok_or(FabricError::UnreachableEndpoint(att.frontend))?;
        paths.insert(att.frontend, path_from(gm, att.frontend));
        used.insert(gm);
    }
    let max_hops = paths.values().map(|p| ptp_hops(topology, p)).max().unwrap_or(0);
    Ok(SyncTree {
        grandmasters: used.into_iter().collect(),
        paths,
        max_hops,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    EastWest,
    NorthSouth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowKind {
    Fronthaul,
    Midhaul,
    Backhaul,
    N6,
    AiWired,
}

impl FlowKind {
    pub fn direction(self) -> Direction {
        match self {
            FlowKind::Fronthaul => Direction::EastWest,
            _ => Direction::NorthSouth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub direction: Direction,
    pub rate_gbps: f64,
    pub kind: FlowKind,
}

impl Flow {
    /// Direction follows from the kind: fronthaul is east-west, the rest north-south.
    pub fn new(id: FlowId, src: NodeId, dst: NodeId, kind: FlowKind, rate_gbps: f64) -> Self {
        Flow {
            id,
            src,
            dst,
            direction: kind.direction(),
            rate_gbps: rate_gbps.max(0.0),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityViolation {
    pub link: LinkId,
    pub load_gbps: f64,
    pub capacity_gbps: f64,
    pub flows: Vec<FlowId>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Routing {
    /// Load on every link, including idle ones.
    pub loads: BTreeMap<LinkId, f64>,
    pub violations: Vec<CapacityViolation>,
}

impl Routing {
    pub fn load(&self, link: LinkId) -> f64 {
        self.loads.get(&link).copied().unwrap_or(0.0)
    }
}

/// Routes every flow over its shortest paths with equal splitting at each
/// hop and reports links loaded past capacity.
pub fn route_flows(topology: &FabricTopology, flows: &[Flow]) -> Result<Routing, FabricError> {
    let adj = topology.adjacency();
    let mut loads: BTreeMap<LinkId, f64> = topology.links.iter().map(|l| (l.id, 0.0)).collect();
    let mut users: BTreeMap<LinkId, BTreeSet<FlowId>> = BTreeMap::new();

    for flow in flows {
        for n in [flow.src, flow.dst] {
            if topology.node(n).is_none() {
                return Err(FabricError::UnknownNode(n));
            }
        }
        if flow.src == flow.dst {
            continue;
        }
        let dist = topology.distances(&adj, flow.dst);
        let Some(hops) = dist[flow.src.0 as usize] else {
            return Err(FabricError::NoPath { src: flow.src, dst: flow.dst });
        };
        let mut mass: BTreeMap<NodeId, f64> = BTreeMap::from([(flow.src, flow.rate_gbps)]);
        for d in (1..=hops).rev() {
            let frontier: Vec<(NodeId, f64)> = mass
                .iter()
                .filter(|(n, _)| dist[n.0 as usize] == Some(d))
                .map(|(&n, &m)| (n, m))
                .collect();
            for (u, m) in frontier {
                mass.remove(&u);
                let next: Vec<(NodeId, LinkId)> = adj[u.0 as usize]
                    .iter()
                    .copied()
                    .filter(|&(v, _)| {
                        dist[v.0 as usize] == Some(d - 1) && (v == flow.dst || topology.nodes[v.0 as usize].forwards())
                    })
                    .collect();
                let share = m / next.len() as f64;
                for (v, link) in next {
                    *loads.entry(link).or_insert(0.0) += share;
                    users.entry(link).or_default().insert(flow.id);
                    *mass.entry(v).or_insert(0.0) += share;
                }
            }
        }
    }

    let violations = topology
        .links
        .iter()
        .filter(|l| loads[&l.id] > l.capacity_gbps + 1e-9)
        .map(|l| CapacityViolation {
            link: l.id,
            load_gbps: loads[&l.id],
            capacity_gbps: l.capacity_gbps,
            flows: users.get(&l.id).map(|s| s.iter().copied().collect()).unwrap_or_default(),
        })
        .collect();
    Ok(Routing { loads, violations })
}

/// Fronthaul sizing constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FronthaulCalibration {
    pub gbps_per_mhz_per_port: f64,
    /// North-south rate as a share of the fronthaul rate it serves.
    pub northbound_ratio: f64,
}

impl Default for FronthaulCalibration {
    fn default() -> Self {
        FronthaulCalibration {
            gbps_per_mhz_per_port: 0.05,
            northbound_ratio: 0.1,
        }
    }
}

/// Fronthaul rate of a cell at full load.
pub fn fronthaul_rate(cell: &CellConfig, calib: &FronthaulCalibration) -> f64 {
    calib.gbps_per_mhz_per_port * cell.bandwidth_mhz * cell.tx_antennas.max(cell.rx_antennas) as f64
}

/// North-south flow kind a server's traffic leaves on.
pub fn egress_target(bundle: NfBundle) -> FlowKind {
    match bundle {
        NfBundle::DuOnly => FlowKind::Midhaul,
        NfBundle::DuCu => FlowKind::Backhaul,
        NfBundle::DuCuCn => FlowKind::N6,
    }
}
