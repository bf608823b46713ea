//! Cluster layout: nodes, network tiers, channels and the two architecture modes.
//!
//! A cluster is either *conventional* (every block fronted by one shared
//! master, one physical network) or *independent* (a gateway plus dedicated
//! service and IO servers, each block with its own master, and separate
//! service and IO networks). Dedicated servers are extra nodes outside the
//! worker pool. Node ids are assigned deterministically: servers first, then
//! the pool in ascending order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::allocation::{Block, BlockId, BlockStatus};
use crate::config::ConfigError;

/// Identifies one of the two supported network technologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TierName {
    /// Fast ethernet.
    Fe,
    /// Gigabit ethernet.
    Ge,
}

impl TierName {
    pub const ALL: [TierName; 2] = [TierName::Fe, TierName::Ge];

    pub fn as_str(self) -> &'static str {
        match self {
            TierName::Fe => "FE",
            TierName::Ge => "GE",
        }
    }
}

impl fmt::Display for TierName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TierName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fe" => Ok(TierName::Fe),
            "ge" => Ok(TierName::Ge),
            _ => Err(format!("unknown tier `{s}` (expected fe or ge)")),
        }
    }
}

/// Bandwidth, per-hop latency and reliability envelope of a network tier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkTier {
    pub name: TierName,
    pub bandwidth_bps: u64,
    /// One-way latency per hop, in microseconds.
    pub latency_us: f64,
    /// Largest message that still completes successfully.
    pub max_reliable_bytes: u64,
}

impl NetworkTier {
    /// 100 Mb/s, 100 µs per hop, reliable up to 2^25 bytes.
    pub const fn fast_ethernet() -> Self {
        NetworkTier {
            name: TierName::Fe,
            bandwidth_bps: 100_000_000,
            latency_us: 100.0,
            max_reliable_bytes: 1 << 25,
        }
    }

    /// 1 Gb/s, 50 µs per hop, reliable up to 2^30 bytes.
    pub const fn gigabit() -> Self {
        NetworkTier {
            name: TierName::Ge,
            bandwidth_bps: 1_000_000_000,
            latency_us: 50.0,
            max_reliable_bytes: 1 << 30,
        }
    }

    pub fn default_for(name: TierName) -> Self {
        match name {
            TierName::Fe => Self::fast_ethernet(),
            TierName::Ge => Self::gigabit(),
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_bps as f64
    }

    /// Serialization time of `bytes` at full tier bandwidth, in microseconds.
    pub fn transmission_us(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 * 1e6 / self.bandwidth()
    }

    pub fn is_reliable_for(&self, bytes: u64) -> bool {
        bytes <= self.max_reliable_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelKind {
    Service,
    Io,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Service => "service",
            ChannelKind::Io => "io",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A physical network. In conventional mode the single channel is reported
/// with kind [`ChannelKind::Io`] and carries both commands and data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub kind: ChannelKind,
    pub tier: NetworkTier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Conventional,
    Independent,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Conventional => "conventional",
            Mode::Independent => "independent",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" => Ok(Mode::Conventional),
            "independent" => Ok(Mode::Independent),
            _ => Err(format!(
                "unknown mode `{s}` (expected conventional or independent)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Free,
    Worker,
    BlockMaster,
    SharedMaster,
    Gateway,
    ServiceServer,
    IoServer,
}

impl Role {
    pub fn is_dedicated_server(self) -> bool {
        matches!(
            self,
            Role::SharedMaster | Role::Gateway | Role::ServiceServer | Role::IoServer
        )
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Free => "free",
            Role::Worker => "worker",
            Role::BlockMaster => "block_master",
            Role::SharedMaster => "shared_master",
            Role::Gateway => "gateway",
            Role::ServiceServer => "service_server",
            Role::IoServer => "io_server",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub has_storage: bool,
    pub role: Role,
    /// Channels this node has a NIC on. One NIC per channel.
    pub nics: BTreeSet<ChannelKind>,
}

/// Everything needed to build a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub mode: Mode,
    pub worker_pool_size: usize,
    pub fe: NetworkTier,
    pub ge: NetworkTier,
    pub service_tier: TierName,
    /// Tier of the IO channel; in conventional mode this is the tier of the
    /// single shared network.
    pub io_tier: TierName,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            mode: Mode::Independent,
            worker_pool_size: 8,
            fe: NetworkTier::fast_ethernet(),
            ge: NetworkTier::gigabit(),
            service_tier: TierName::Fe,
            io_tier: TierName::Ge,
        }
    }
}

impl ClusterConfig {
    pub fn tier(&self, name: TierName) -> &NetworkTier {
        match name {
            TierName::Fe => &self.fe,
            TierName::Ge => &self.ge,
        }
    }

    /// Channels that physically exist in the configured mode.
    pub fn channels(&self) -> Vec<Channel> {
        match self.mode {
            Mode::Conventional => vec![Channel {
                kind: ChannelKind::Io,
                tier: *self.tier(self.io_tier),
            }],
            Mode::Independent => vec![
                Channel {
                    kind: ChannelKind::Service,
                    tier: *self.tier(self.service_tier),
                },
                Channel {
                    kind: ChannelKind::Io,
                    tier: *self.tier(self.io_tier),
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.worker_pool_size == 0 {
            return Err(ConfigError::ZeroPool);
        }
        for (expected, tier) in [(TierName::Fe, &self.fe), (TierName::Ge, &self.ge)] {
            if tier.name != expected {
                return Err(ConfigError::InvalidTier {
                    tier: expected,
                    reason: format!("parameters are labelled {}", tier.name),
                });
            }
            if tier.bandwidth_bps == 0 {
                return Err(ConfigError::InvalidTier {
                    tier: expected,
                    reason: "bandwidth must be positive".into(),
                });
            }
            if !(tier.latency_us.is_finite() && tier.latency_us >= 0.0) {
                return Err(ConfigError::InvalidTier {
                    tier: expected,
                    reason: "latency must be finite and non-negative".into(),
                });
            }
            if tier.max_reliable_bytes == 0 {
                return Err(ConfigError::InvalidTier {
                    tier: expected,
                    reason: "max_reliable_bytes must be positive".into(),
                });
            }
        }
        if self.ge.bandwidth_bps <= self.fe.bandwidth_bps {
            return Err(ConfigError::TierOrdering(
                "GE bandwidth must exceed FE bandwidth".into(),
            ));
        }
        if self.ge.latency_us > self.fe.latency_us {
            return Err(ConfigError::TierOrdering(
                "GE latency must not exceed FE latency".into(),
            ));
        }
        if self.ge.max_reliable_bytes <= self.fe.max_reliable_bytes {
            return Err(ConfigError::TierOrdering(
                "GE max_reliable_bytes must exceed FE max_reliable_bytes".into(),
            ));
        }
        Ok(())
    }
}

/// Snapshot of a cluster: inventory, free pool and blocks (running and
/// released). A plain value; every transition returns a new state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub config: ClusterConfig,
    /// Indexed by `NodeId.0`.
    pub nodes: Vec<Node>,
    pub free_pool: BTreeSet<NodeId>,
    pub blocks: BTreeMap<BlockId, Block>,
    pub next_block_id: u32,
}

impl ClusterState {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0 as usize).filter(|n| n.id == id)
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.role == role)
            .map(|n| n.id)
            .collect()
    }

    fn single_role(&self, role: Role) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.role == role).map(|n| n.id)
    }

    pub fn shared_master(&self) -> Option<NodeId> {
        self.single_role(Role::SharedMaster)
    }

    pub fn gateway(&self) -> Option<NodeId> {
        self.single_role(Role::Gateway)
    }

    pub fn service_server(&self) -> Option<NodeId> {
        self.single_role(Role::ServiceServer)
    }

    pub fn io_server(&self) -> Option<NodeId> {
        self.single_role(Role::IoServer)
    }

    /// Node users talk to: the gateway, or the shared master in conventional mode.
    pub fn command_endpoint(&self) -> Option<NodeId> {
        match self.mode() {
            Mode::Conventional => self.shared_master(),
            Mode::Independent => self.gateway(),
        }
    }

    /// Channel of the given kind. Conventional mode has one channel which
    /// carries every kind of traffic.
    pub fn channel(&self, kind: ChannelKind) -> Channel {
        match self.mode() {
            Mode::Conventional => Channel {
                kind: ChannelKind::Io,
                tier: *self.config.tier(self.config.io_tier),
            },
            Mode::Independent => {
                let tier = match kind {
                    ChannelKind::Service => self.config.service_tier,
                    ChannelKind::Io => self.config.io_tier,
                };
                Channel {
                    kind,
                    tier: *self.config.tier(tier),
                }
            }
        }
    }

    pub fn running_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks
            .values()
            .filter(|b| b.status == BlockStatus::Running)
    }

    /// Running block that `node` computes in. In conventional mode the shared
    /// master belongs to no block.
    pub fn block_of(&self, node: NodeId) -> Option<&Block> {
        let mode = self.mode();
        self.running_blocks()
            .find(|b| b.members(mode).contains(&node))
    }

    /// Number of nodes every cluster built from this config contains.
    pub fn total_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dedicated_server_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.role.is_dedicated_server())
            .count()
    }
}

fn dedicated_roles(mode: Mode) -> &'static [Role] {
    match mode {
        Mode::Conventional => &[Role::SharedMaster],
        Mode::Independent => &[Role::Gateway, Role::ServiceServer, Role::IoServer],
    }
}

/// Builds a fresh cluster with every pool node free.
pub fn build_cluster(config: &ClusterConfig) -> Result<ClusterState, ConfigError> {
    config.validate()?;
    let nics: BTreeSet<ChannelKind> = config.channels().iter().map(|c| c.kind).collect();
    let servers = dedicated_roles(config.mode);

    let mut nodes = Vec::with_capacity(servers.len() + config.worker_pool_size);
    for &role in servers {
        nodes.push(Node {
            id: NodeId(nodes.len() as u32),
            has_storage: true,
            role,
            nics: nics.clone(),
        });
    }
    let mut free_pool = BTreeSet::new();
    for _ in 0..config.worker_pool_size {
        let id = NodeId(nodes.len() as u32);
        nodes.push(Node {
            id,
            has_storage: true,
            role: Role::Free,
            nics: nics.clone(),
        });
        free_pool.insert(id);
    }

    Ok(ClusterState {
        config: config.clone(),
        nodes,
        free_pool,
        blocks: BTreeMap::new(),
        next_block_id: 0,
    })
}

/// Where a node was found when checking the partition invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Holder {
    FreePool,
    Block(BlockId),
    Server(Role),
}

impl fmt::Display for Holder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Holder::FreePool => f.write_str("free pool"),
            Holder::Block(b) => write!(f, "block {b}"),
            Holder::Server(r) => write!(f, "{r}"),
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("partition violation: {node} held by {}", join(.holders))]
    PartitionViolation { node: NodeId, holders: Vec<Holder> },
    #[error("unaccounted node: {node} (role {role}) is neither free, in a block, nor a server")]
    UnaccountedNode { node: NodeId, role: Role },
    #[error("role mismatch: {node} has role {found}, expected {expected}")]
    RoleMismatch {
        node: NodeId,
        expected: Role,
        found: Role,
    },
    #[error("master cardinality violation: expected {expected} shared master(s), found [{}]", join(.found))]
    MasterCardinalityViolation { expected: usize, found: Vec<NodeId> },
    #[error("server cardinality violation: expected {expected} {role}, found [{}]", join(.found))]
    ServerCardinalityViolation {
        role: Role,
        expected: usize,
        found: Vec<NodeId>,
    },
    #[error("missing NIC: {node} has no NIC on the {channel} channel")]
    MissingNic { node: NodeId, channel: ChannelKind },
    #[error("unknown node: {node} referenced by block {block}")]
    UnknownNode { node: NodeId, block: BlockId },
    #[error("empty block: {block} has no workers")]
    EmptyBlock { block: BlockId },
    #[error("duplicate worker: {node} listed twice in block {block}")]
    DuplicateWorker { block: BlockId, node: NodeId },
    #[error("master in workers: block {block} lists its master {master} as a worker")]
    MasterInWorkers { block: BlockId, master: NodeId },
    #[error("block master mismatch: block {block} uses {master} instead of the shared master")]
    BlockMasterMismatch { block: BlockId, master: NodeId },
    #[error("shared block master: {master} fronts blocks {}", join(.blocks))]
    SharedBlockMaster {
        master: NodeId,
        blocks: Vec<BlockId>,
    },
}

/// Checks every node and cluster invariant. An empty list means the state is valid.
pub fn validate_topology(state: &ClusterState) -> Vec<Violation> {
    let mut out = Vec::new();
    let mode = state.mode();
    let channels: Vec<ChannelKind> = state.config.channels().iter().map(|c| c.kind).collect();

    for (idx, node) in state.nodes.iter().enumerate() {
        debug_assert_eq!(node.id.0 as usize, idx);
        for &ch in &channels {
            if !node.nics.contains(&ch) {
                out.push(Violation::MissingNic {
                    node: node.id,
                    channel: ch,
                });
            }
        }
    }

    let masters = state.nodes_with_role(Role::SharedMaster);
    let expected_masters = usize::from(mode == Mode::Conventional);
    if masters.len() != expected_masters {
        out.push(Violation::MasterCardinalityViolation {
            expected: expected_masters,
            found: masters,
        });
    }
    for role in [Role::Gateway, Role::ServiceServer, Role::IoServer] {
        let found = state.nodes_with_role(role);
        let expected = usize::from(mode == Mode::Independent);
        if found.len() != expected {
            out.push(Violation::ServerCardinalityViolation {
                role,
                expected,
                found,
            });
        }
    }

    let mut holders: BTreeMap<NodeId, Vec<Holder>> = BTreeMap::new();
    for node in &state.nodes {
        if node.role.is_dedicated_server() {
            holders
                .entry(node.id)
                .or_default()
                .push(Holder::Server(node.role));
        }
    }
    for &id in &state.free_pool {
        holders.entry(id).or_default().push(Holder::FreePool);
        if let Some(node) = state.node(id) {
            if node.role != Role::Free {
                out.push(Violation::RoleMismatch {
                    node: id,
                    expected: Role::Free,
                    found: node.role,
                });
            }
        }
    }

    let shared = state.shared_master();
    let mut by_master: BTreeMap<NodeId, Vec<BlockId>> = BTreeMap::new();
    for block in state.running_blocks() {
        if block.workers.is_empty() {
            out.push(Violation::EmptyBlock { block: block.id });
        }
        let mut seen = BTreeSet::new();
        for &w in &block.workers {
            if !seen.insert(w) {
                out.push(Violation::DuplicateWorker {
                    block: block.id,
                    node: w,
                });
            }
        }
        if block.workers.contains(&block.master) {
            out.push(Violation::MasterInWorkers {
                block: block.id,
                master: block.master,
            });
        }
        match mode {
            Mode::Conventional => {
                if Some(block.master) != shared {
                    out.push(Violation::BlockMasterMismatch {
                        block: block.id,
                        master: block.master,
                    });
                }
            }
            Mode::Independent => {
                by_master.entry(block.master).or_default().push(block.id);
            }
        }

        let expected_roles = block
            .workers
            .iter()
            .map(|&w| (w, Role::Worker))
            .chain((mode == Mode::Independent).then_some((block.master, Role::BlockMaster)));
        for (id, expected) in expected_roles {
            match state.node(id) {
                None => out.push(Violation::UnknownNode {
                    node: id,
                    block: block.id,
                }),
                Some(node) => {
                    if node.role != expected {
                        out.push(Violation::RoleMismatch {
                            node: id,
                            expected,
                            found: node.role,
                        });
                    }
                }
            }
        }
        for id in seen.into_iter().chain(
            (mode == Mode::Independent && !block.workers.contains(&block.master))
                .then_some(block.master),
        ) {
            holders.entry(id).or_default().push(Holder::Block(block.id));
        }
    }
    for (master, blocks) in by_master {
        if blocks.len() > 1 {
            out.push(Violation::SharedBlockMaster { master, blocks });
        }
    }

    for node in &state.nodes {
        match holders.get(&node.id) {
            None => out.push(Violation::UnaccountedNode {
                node: node.id,
                role: node.role,
            }),
            Some(h) if h.len() > 1 => out.push(Violation::PartitionViolation {
                node: node.id,
                holders: h.clone(),
            }),
            Some(_) => {}
        }
    }
    out
}
