//! Block lifecycle: allocate, resize, release, authorize and whole-cluster
//! mode switching.
//!
//! All transitions are pure: they take a state by reference and return a new
//! one. Nodes are handed out lowest id first and taken back highest id first.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::ConfigError;
use crate::topology::{build_cluster, ClusterState, Mode, NodeId, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub String);

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_string())
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkloadType {
    ProcessorIntensive,
    IoIntensive,
}

impl fmt::Display for WorkloadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadType::ProcessorIntensive => "processor_intensive",
            WorkloadType::IoIntensive => "io_intensive",
        })
    }
}

impl FromStr for WorkloadType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "processor" | "processor_intensive" | "cpu" => Ok(WorkloadType::ProcessorIntensive),
            "io" | "io_intensive" => Ok(WorkloadType::IoIntensive),
            _ => Err(format!("unknown workload `{s}` (expected processor or io)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Running,
    Released,
}

/// Logical runtime-daemon endpoint of a block, hosted on its master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpdEndpoint {
    pub host: NodeId,
    pub block: BlockId,
}

/// A user's isolated slice of the cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub owner: UserId,
    pub master: NodeId,
    pub workers: Vec<NodeId>,
    /// Recorded for reporting; does not constrain allocation.
    pub workload: WorkloadType,
    pub status: BlockStatus,
}

impl Block {
    pub fn is_running(&self) -> bool {
        self.status == BlockStatus::Running
    }

    /// Compute nodes of the block, in order. In independent mode the
    /// dedicated master comes first; in conventional mode the shared master
    /// is not a member.
    pub fn members(&self, mode: Mode) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.workers.len() + 1);
        if mode == Mode::Independent {
            out.push(self.master);
        }
        out.extend_from_slice(&self.workers);
        out
    }

    pub fn mpd_endpoint(&self) -> MpdEndpoint {
        MpdEndpoint {
            host: self.master,
            block: self.id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationRequest {
    pub owner: UserId,
    pub n_workers: usize,
    pub workload: WorkloadType,
}

impl AllocationRequest {
    pub fn new(owner: impl Into<String>, n_workers: usize, workload: WorkloadType) -> Self {
        AllocationRequest {
            owner: UserId(owner.into()),
            n_workers,
            workload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("insufficient nodes: need {needed}, {available} free")]
    InsufficientNodes { needed: usize, available: usize },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("block {0} is already released")]
    AlreadyReleased(BlockId),
    #[error("cannot change cluster mode while blocks are running: {}", fmt_ids(.0))]
    BlocksActive(Vec<BlockId>),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn fmt_ids(ids: &[BlockId]) -> String {
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn take_free(state: &mut ClusterState, n: usize, role: Role) -> Result<Vec<NodeId>, AllocError> {
    if state.free_pool.len() < n {
        return Err(AllocError::InsufficientNodes {
            needed: n,
            available: state.free_pool.len(),
        });
    }
    let taken: Vec<NodeId> = state.free_pool.iter().take(n).copied().collect();
    for id in &taken {
        state.free_pool.remove(id);
        state.nodes[id.0 as usize].role = role;
    }
    Ok(taken)
}

fn give_back(state: &mut ClusterState, ids: impl IntoIterator<Item = NodeId>) {
    for id in ids {
        state.nodes[id.0 as usize].role = Role::Free;
        state.free_pool.insert(id);
    }
}

fn running_block(state: &ClusterState, id: BlockId) -> Result<&Block, AllocError> {
    let block = state.blocks.get(&id).ok_or(AllocError::UnknownBlock(id))?;
    if !block.is_running() {
        return Err(AllocError::AlreadyReleased(id));
    }
    Ok(block)
}

/// Carves a new running block out of the free pool. Independent mode takes
/// one extra node to serve as the block's own master.
pub fn allocate_block(
    state: &ClusterState,
    req: &AllocationRequest,
) -> Result<(ClusterState, Block), AllocError> {
    if req.n_workers == 0 {
        return Err(AllocError::InvalidRequest(
            "a block needs at least one worker".into(),
        ));
    }
    let mode = state.mode();
    let needed = req.n_workers + usize::from(mode == Mode::Independent);
    if state.free_pool.len() < needed {
        return Err(AllocError::InsufficientNodes {
            needed,
            available: state.free_pool.len(),
        });
    }

    let mut next = state.clone();
    let master = match mode {
        Mode::Conventional => next
            .shared_master()
            .ok_or_else(|| AllocError::InvalidRequest("cluster has no shared master".into()))?,
        Mode::Independent => take_free(&mut next, 1, Role::BlockMaster)?[0],
    };
    let workers = take_free(&mut next, req.n_workers, Role::Worker)?;

    let block = Block {
        id: BlockId(next.next_block_id),
        owner: req.owner.clone(),
        master,
        workers,
        workload: req.workload,
        status: BlockStatus::Running,
    };
    next.next_block_id += 1;
    next.blocks.insert(block.id, block.clone());
    Ok((next, block))
}

/// Returns every node the block consumed to the free pool.
pub fn release_block(state: &ClusterState, id: BlockId) -> Result<ClusterState, AllocError> {
    let block = running_block(state, id)?.clone();
    let mut next = state.clone();
    give_back(&mut next, block.workers.iter().copied());
    if next.mode() == Mode::Independent {
        give_back(&mut next, [block.master]);
    }
    if let Some(b) = next.blocks.get_mut(&id) {
        b.status = BlockStatus::Released;
    }
    Ok(next)
}

/// Grows or shrinks a running block's worker set. The master never moves.
pub fn resize_block(
    state: &ClusterState,
    id: BlockId,
    new_n_workers: usize,
) -> Result<(ClusterState, Block), AllocError> {
    if new_n_workers == 0 {
        return Err(AllocError::InvalidRequest(
            "a block needs at least one worker".into(),
        ));
    }
    let block = running_block(state, id)?;
    let old_n = block.workers.len();
    let mut next = state.clone();
    let mut workers = block.workers.clone();

    if new_n_workers > old_n {
        workers.extend(take_free(&mut next, new_n_workers - old_n, Role::Worker)?);
    } else if new_n_workers < old_n {
        let mut by_id = workers.clone();
        by_id.sort_unstable_by(|a, b| b.cmp(a));
        let returned: Vec<NodeId> = by_id.into_iter().take(old_n - new_n_workers).collect();
        workers.retain(|w| !returned.contains(w));
        give_back(&mut next, returned);
    }

    let updated = next.blocks.get_mut(&id).expect("block checked above");
    updated.workers = workers;
    let updated = updated.clone();
    Ok((next, updated))
}

/// True iff the block exists, is running and belongs to `user`.
pub fn authorize(state: &ClusterState, user: &UserId, id: BlockId) -> bool {
    state
        .blocks
        .get(&id)
        .is_some_and(|b| b.is_running() && &b.owner == user)
}

/// Rebuilds the whole cluster in `mode`. The architecture is cluster-wide,
/// so this is refused while any block is running.
pub fn set_cluster_mode(state: &ClusterState, mode: Mode) -> Result<ClusterState, AllocError> {
    let active: Vec<BlockId> = state.running_blocks().map(|b| b.id).collect();
    if !active.is_empty() {
        return Err(AllocError::BlocksActive(active));
    }
    if state.mode() == mode {
        return Ok(state.clone());
    }
    let mut config = state.config.clone();
    config.mode = mode;
    Ok(build_cluster(&config)?)
}
