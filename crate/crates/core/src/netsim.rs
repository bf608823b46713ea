//! Deterministic flow-level network simulator.
//!
//! Contention happens only on NIC links; switches are non-blocking. Every
//! NIC is full duplex, so each (node, channel) pair contributes one `tx` and
//! one `rx` link of tier bandwidth. Active flows share links max-min fairly,
//! rates are recomputed whenever a flow starts or drains, and a flow
//! completes `hop_count · latency` after its last bit leaves the bottleneck
//! (cut-through pipeline).
//!
//! Conventional clusters relay every data flow through the shared master
//! (`src.tx → master.rx → master.tx → dst.rx`, two hops). Independent
//! clusters send directly on the flow's channel (`src.tx → dst.rx`, one hop).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::topology::{ChannelKind, ClusterState, Mode, NetworkTier, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u64);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Tx,
    Rx,
}

/// One direction of one NIC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId {
    pub node: NodeId,
    pub channel: ChannelKind,
    pub dir: Direction,
}

impl LinkId {
    pub fn tx(node: NodeId, channel: ChannelKind) -> Self {
        LinkId {
            node,
            channel,
            dir: Direction::Tx,
        }
    }

    pub fn rx(node: NodeId, channel: ChannelKind) -> Self {
        LinkId {
            node,
            channel,
            dir: Direction::Rx,
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.dir {
            Direction::Tx => "tx",
            Direction::Rx => "rx",
        };
        write!(f, "{}.{}.{}", self.node, self.channel, dir)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub links: Vec<LinkId>,
    /// Channel the path actually runs on.
    pub channel: ChannelKind,
    pub hop_count: u32,
}

impl Path {
    pub fn touches(&self, node: NodeId) -> bool {
        self.links.iter().any(|l| l.node == node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bytes: u64,
    pub channel: ChannelKind,
    pub start_us: f64,
}

impl Flow {
    pub fn new(id: u64, src: NodeId, dst: NodeId, size_bytes: u64) -> Self {
        Flow {
            id: FlowId(id),
            src,
            dst,
            size_bytes,
            channel: ChannelKind::Io,
            start_us: 0.0,
        }
    }

    pub fn starting_at(mut self, start_us: f64) -> Self {
        self.start_us = start_us;
        self
    }

    pub fn on(mut self, channel: ChannelKind) -> Self {
        self.channel = channel;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowStatus {
    Completed,
    FailedUnreliable,
}

impl FlowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowStatus::Completed => "completed",
            FlowStatus::FailedUnreliable => "failed_unreliable",
        }
    }
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub flow: FlowId,
    pub status: FlowStatus,
    pub start_us: f64,
    /// Absolute completion time; `None` for failed transfers.
    pub completion_us: Option<f64>,
    pub path: Path,
}

impl FlowOutcome {
    pub fn duration_us(&self) -> Option<f64> {
        self.completion_us.map(|c| c - self.start_us)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("flow endpoints must differ (both {0})")]
    SameEndpoint(NodeId),
    #[error("node {0} is not part of any running block")]
    NodeNotAllocated(NodeId),
    #[error("cross-block flow {src} -> {dst} breaks block isolation")]
    CrossBlockFlow { src: NodeId, dst: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("flow {flow}: {source}")]
    Route {
        flow: FlowId,
        #[source]
        source: RouteError,
    },
    #[error("duplicate flow id {0}")]
    DuplicateFlow(FlowId),
    #[error("flow {0}: start time must be finite and non-negative")]
    InvalidStart(FlowId),
}

/// Uncontended one-way time of a `size_bytes` message over `hop_count` hops.
pub fn closed_form_time(size_bytes: u64, tier: &NetworkTier, hop_count: u32) -> f64 {
    f64::from(hop_count) * tier.latency_us + tier.transmission_us(size_bytes)
}

/// Picks the links a data flow crosses.
///
/// Both endpoints must compute in the same running block. In independent
/// mode the IO server may also be an endpoint of an IO-channel flow (home
/// directory traffic).
pub fn route_flow(state: &ClusterState, flow: &Flow) -> Result<Path, RouteError> {
    for id in [flow.src, flow.dst] {
        if state.node(id).is_none() {
            return Err(RouteError::UnknownNode(id));
        }
    }
    if flow.src == flow.dst {
        return Err(RouteError::SameEndpoint(flow.src));
    }

    let io_server = state.io_server();
    let nfs = |a: NodeId, b: NodeId| {
        state.mode() == Mode::Independent
            && flow.channel == ChannelKind::Io
            && Some(a) == io_server
            && state.block_of(b).is_some()
    };
    if !(nfs(flow.src, flow.dst) || nfs(flow.dst, flow.src)) {
        let src_block = state
            .block_of(flow.src)
            .ok_or(RouteError::NodeNotAllocated(flow.src))?;
        let dst_block = state
            .block_of(flow.dst)
            .ok_or(RouteError::NodeNotAllocated(flow.dst))?;
        if src_block.id != dst_block.id {
            return Err(RouteError::CrossBlockFlow {
                src: flow.src,
                dst: flow.dst,
            });
        }
    }

    Ok(match state.mode() {
        Mode::Conventional => {
            let master = state
                .shared_master()
                .expect("conventional cluster has a shared master");
            let ch = ChannelKind::Io;
            Path {
                links: vec![
                    LinkId::tx(flow.src, ch),
                    LinkId::rx(master, ch),
                    LinkId::tx(master, ch),
                    LinkId::rx(flow.dst, ch),
                ],
                channel: ch,
                hop_count: 2,
            }
        }
        Mode::Independent => Path {
            links: vec![
                LinkId::tx(flow.src, flow.channel),
                LinkId::rx(flow.dst, flow.channel),
            ],
            channel: flow.channel,
            hop_count: 1,
        },
    })
}

/// Max-min fair rates by progressive filling.
///
/// Repeatedly finds the link with the smallest equal share of its remaining
/// capacity among its unfrozen flows, freezes those flows at that share, and
/// charges the share to every link they cross. Ties go to the smallest link.
/// A flow with an empty path gets an infinite rate.
///
/// # Panics
///
/// If a path references a link missing from `capacities`.
pub fn max_min_rates<L: Ord>(
    flows: &[(FlowId, &[L])],
    capacities: &BTreeMap<L, f64>,
) -> BTreeMap<FlowId, f64> {
    let index: BTreeMap<&L, usize> = capacities.keys().enumerate().map(|(i, l)| (l, i)).collect();
    let mut remaining: Vec<f64> = capacities.values().copied().collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); remaining.len()];
    let mut unfrozen = vec![0usize; remaining.len()];

    let flow_links: Vec<Vec<usize>> = flows
        .iter()
        .enumerate()
        .map(|(fi, (_, path))| {
            path.iter()
                .map(|l| {
                    let li = *index.get(l).expect("path link has no capacity");
                    members[li].push(fi);
                    unfrozen[li] += 1;
                    li
                })
                .collect()
        })
        .collect();

    let mut rates = vec![f64::INFINITY; flows.len()];
    let mut frozen: Vec<bool> = flow_links.iter().map(Vec::is_empty).collect();

    loop {
        let bottleneck = (0..remaining.len())
            .filter(|&l| unfrozen[l] > 0)
            .map(|l| (l, remaining[l] / unfrozen[l] as f64))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((link, share)) = bottleneck else {
            break;
        };
        let share = share.max(0.0);
        for &fi in &members[link] {
            if frozen[fi] {
                continue;
            }
            frozen[fi] = true;
            rates[fi] = share;
            for &l in &flow_links[fi] {
                remaining[l] -= share;
                unfrozen[l] -= 1;
            }
        }
    }

    flows
        .iter()
        .zip(rates)
        .map(|((id, _), r)| (*id, r))
        .collect()
}

/// Constant-rate stretch of the simulation between two consecutive events.
#[derive(Debug, Clone, PartialEq)]
pub struct RateInterval {
    pub from_us: f64,
    pub to_us: f64,
    /// Bits per second of every flow transmitting during the interval.
    pub rates: Vec<(FlowId, f64)>,
}

/// Outcomes plus the piecewise-constant rate history that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub outcomes: Vec<FlowOutcome>,
    pub intervals: Vec<RateInterval>,
    /// Capacity of every link any transmitting flow used.
    pub capacities: BTreeMap<LinkId, f64>,
}

struct Pending {
    idx: usize,
    start: f64,
    bits: f64,
}

struct Active {
    idx: usize,
    left_bits: f64,
    seg_start: f64,
    rate: f64,
}

impl Active {
    fn drain_at(&self) -> f64 {
        self.seg_start + self.left_bits * 1e6 / self.rate
    }
}

/// Runs the flows to completion and reports one outcome per flow, ordered by id.
pub fn simulate(state: &ClusterState, flows: &[Flow]) -> Result<Vec<FlowOutcome>, SimError> {
    simulate_traced(state, flows).map(|t| t.outcomes)
}

/// [`simulate`], also returning the rate history.
pub fn simulate_traced(state: &ClusterState, flows: &[Flow]) -> Result<SimTrace, SimError> {
    let mut ids = BTreeSet::new();
    for f in flows {
        if !ids.insert(f.id) {
            return Err(SimError::DuplicateFlow(f.id));
        }
        if !(f.start_us.is_finite() && f.start_us >= 0.0) {
            return Err(SimError::InvalidStart(f.id));
        }
    }

    let mut outcomes: Vec<FlowOutcome> = Vec::with_capacity(flows.len());
    let mut tiers = Vec::with_capacity(flows.len());
    let mut pending = Vec::new();
    let mut capacities = BTreeMap::new();

    for (idx, f) in flows.iter().enumerate() {
        let path = route_flow(state, f).map_err(|source| SimError::Route { flow: f.id, source })?;
        let tier = state.channel(path.channel).tier;
        let reliable = tier.is_reliable_for(f.size_bytes);
        let latency = f64::from(path.hop_count) * tier.latency_us;
        outcomes.push(FlowOutcome {
            flow: f.id,
            status: if reliable {
                FlowStatus::Completed
            } else {
                FlowStatus::FailedUnreliable
            },
            start_us: f.start_us,
            completion_us: (reliable && f.size_bytes == 0).then_some(f.start_us + latency),
            path,
        });
        tiers.push(tier);
        if reliable && f.size_bytes > 0 {
            for &l in &outcomes[idx].path.links {
                capacities.insert(l, tier.bandwidth());
            }
            pending.push(Pending {
                idx,
                start: f.start_us,
                bits: f.size_bytes as f64 * 8.0,
            });
        }
    }
    pending.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(flows[a.idx].id.cmp(&flows[b.idx].id))
    });

    let mut intervals = Vec::new();
    let mut active: Vec<Active> = Vec::new();
    let mut next = 0;
    let mut now = 0.0_f64;

    loop {
        let next_start = pending.get(next).map(|p| p.start);
        let next_drain = active
            .iter()
            .map(Active::drain_at)
            .min_by(|a, b| a.total_cmp(b));
        let t = match (next_start, next_drain) {
            (None, None) => break,
            (Some(s), None) => s,
            (None, Some(d)) => d,
            (Some(s), Some(d)) => s.min(d),
        };

        if !active.is_empty() && t > now {
            intervals.push(RateInterval {
                from_us: now,
                to_us: t,
                rates: active.iter().map(|a| (flows[a.idx].id, a.rate)).collect(),
            });
        }
        now = t;

        active.retain(|a| {
            if a.drain_at() <= t {
                let o = &mut outcomes[a.idx];
                let latency = f64::from(o.path.hop_count) * tiers[a.idx].latency_us;
                o.completion_us = Some(t + latency);
                false
            } else {
                true
            }
        });

        while let Some(p) = pending.get(next).filter(|p| p.start <= t) {
            active.push(Active {
                idx: p.idx,
                left_bits: p.bits,
                seg_start: p.start,
                rate: 0.0,
            });
            next += 1;
        }
        active.sort_by_key(|a| flows[a.idx].id);

        if active.is_empty() {
            continue;
        }
        let paths: Vec<(FlowId, &[LinkId])> = active
            .iter()
            .map(|a| (flows[a.idx].id, outcomes[a.idx].path.links.as_slice()))
            .collect();
        let rates = max_min_rates(&paths, &capacities);
        for a in &mut active {
            let rate = rates[&flows[a.idx].id];
            assert!(rate > 0.0 && rate.is_finite(), "non-positive fair share");
            if a.rate == 0.0 {
                a.rate = rate;
            } else if rate != a.rate {
                // settle progress at the old rate before switching
                a.left_bits = (a.left_bits - a.rate * (t - a.seg_start) / 1e6).max(0.0);
                a.seg_start = t;
                a.rate = rate;
            }
        }
    }

    outcomes.sort_by_key(|o| o.flow);
    Ok(SimTrace {
        outcomes,
        intervals,
        capacities,
    })
}
