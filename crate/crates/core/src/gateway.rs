//! Command forwarding from the user-facing endpoint to block masters.
//!
//! Commands travel one hop each way over the service channel and are
//! modelled by payload size only. They never enter the flow simulator.

use std::fmt;

use thiserror::Error;

use crate::allocation::{authorize, BlockId, UserId};
use crate::topology::{ChannelKind, ClusterState, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Submit,
    Status,
    Cancel,
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verb::Submit => "submit",
            Verb::Status => "status",
            Verb::Cancel => "cancel",
        })
    }
}

impl std::str::FromStr for Verb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "submit" => Ok(Verb::Submit),
            "status" => Ok(Verb::Status),
            "cancel" => Ok(Verb::Cancel),
            _ => Err(format!(
                "unknown verb `{s}` (expected submit, status or cancel)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub user: UserId,
    pub block: BlockId,
    pub verb: Verb,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutedResult {
    pub verb: Verb,
    /// Request leg plus response leg, in microseconds.
    pub transit_us: f64,
    pub delivered_to: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("block {0} is not running")]
    BlockNotRunning(BlockId),
    #[error("user {user} is not authorized for block {block}")]
    Unauthorized { user: UserId, block: BlockId },
}

/// Forwards `cmd` to the master of its block and times the round trip on the
/// service channel: `(L + req·8/B) + (L + resp·8/B)`.
pub fn route_command(state: &ClusterState, cmd: &Command) -> Result<RoutedResult, GatewayError> {
    let block = state
        .blocks
        .get(&cmd.block)
        .ok_or(GatewayError::UnknownBlock(cmd.block))?;
    if !block.is_running() {
        return Err(GatewayError::BlockNotRunning(cmd.block));
    }
    if !authorize(state, &cmd.user, cmd.block) {
        return Err(GatewayError::Unauthorized {
            user: cmd.user.clone(),
            block: cmd.block,
        });
    }

    let tier = state.channel(ChannelKind::Service).tier;
    let leg = |bytes: u64| tier.latency_us + tier.transmission_us(bytes);
    Ok(RoutedResult {
        verb: cmd.verb,
        transit_us: leg(cmd.request_bytes) + leg(cmd.response_bytes),
        delivered_to: block.master,
    })
}
