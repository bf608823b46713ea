//! Control plane and flow-level network model for a public cluster split
//! into isolated blocks.
//!
//! * [`topology`]: nodes, tiers, channels and cluster construction
//! * [`config`]: the INI configuration format
//! * [`allocation`]: block lifecycle and ownership checks
//! * [`gateway`]: command forwarding to block masters
//! * [`netsim`]: max-min fair flow simulation
//! * [`bench`]: ping-pong sweeps, CSV output and twin/single comparison

pub mod allocation;
pub mod bench;
pub mod config;
pub mod gateway;
pub mod netsim;
pub mod topology;

pub use allocation::{
    allocate_block, authorize, release_block, resize_block, set_cluster_mode, AllocError,
    AllocationRequest, Block, BlockId, BlockStatus, UserId, WorkloadType,
};
pub use bench::{BenchError, BenchSample, BenchSpec, CompareReport};
pub use config::ConfigError;
pub use gateway::{route_command, Command, GatewayError, RoutedResult, Verb};
pub use netsim::{
    closed_form_time, max_min_rates, route_flow, simulate, Flow, FlowId, FlowOutcome, FlowStatus,
    LinkId, Path, RouteError, SimError,
};
pub use topology::{
    build_cluster, validate_topology, ChannelKind, ClusterConfig, ClusterState, Mode, NetworkTier,
    Node, NodeId, Role, TierName, Violation,
};
