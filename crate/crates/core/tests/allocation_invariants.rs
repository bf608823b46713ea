use std::collections::BTreeSet;

use multiblock_core::gateway::{route_command, Command, GatewayError, Verb};
use multiblock_core::netsim::{route_flow, Flow};
use multiblock_core::{
    allocate_block, authorize, build_cluster, release_block, resize_block, set_cluster_mode,
    validate_topology, AllocError, AllocationRequest, BlockId, ClusterConfig, ClusterState, Mode,
    UserId, WorkloadType,
};
use proptest::prelude::*;

const USERS: [&str; 3] = ["alice", "bob", "carol"];

#[derive(Debug, Clone)]
enum Op {
    Allocate { user: usize, n: usize },
    Resize { pick: usize, n: usize },
    Release { pick: usize },
    Route { user: usize, pick: usize },
    SwitchMode,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..3usize, 0..5usize).prop_map(|(user, n)| Op::Allocate { user, n }),
        2 => (0..16usize, 0..6usize).prop_map(|(pick, n)| Op::Resize { pick, n }),
        2 => (0..16usize).prop_map(|pick| Op::Release { pick }),
        2 => (0..3usize, 0..16usize).prop_map(|(user, pick)| Op::Route { user, pick }),
        1 => Just(Op::SwitchMode),
    ]
}

fn pick_block(state: &ClusterState, pick: usize) -> BlockId {
    // includes released and never-allocated ids so error paths get exercised
    BlockId((pick % (state.next_block_id as usize + 2)) as u32)
}

fn check(state: &ClusterState, initial_nodes: usize) -> Result<(), TestCaseError> {
    prop_assert_eq!(validate_topology(state), vec![]);
    let mode = state.mode();
    let mut seen = BTreeSet::new();
    let mut in_blocks = 0;
    for b in state.running_blocks() {
        for n in b.members(mode) {
            prop_assert!(seen.insert(n), "{} in two blocks", n);
            prop_assert!(!state.free_pool.contains(&n));
            in_blocks += 1;
        }
    }
    prop_assert_eq!(
        state.free_pool.len() + in_blocks + state.dedicated_server_count(),
        initial_nodes
    );
    let masters: BTreeSet<_> = state.running_blocks().map(|b| b.master).collect();
    let running = state.running_blocks().count();
    match mode {
        Mode::Conventional => prop_assert!(masters.len() <= 1),
        Mode::Independent => prop_assert_eq!(masters.len(), running),
    }
    for b in state.blocks.values() {
        for u in USERS {
            let user = UserId::from(u);
            prop_assert_eq!(
                authorize(state, &user, b.id),
                b.is_running() && b.owner == user
            );
        }
    }
    Ok(())
}

fn run(mode: Mode, ops: Vec<Op>) -> Result<(), TestCaseError> {
    let mut state = build_cluster(&ClusterConfig {
        mode,
        worker_pool_size: 12,
        ..ClusterConfig::default()
    })
    .unwrap();
    for op in ops {
        match op {
            Op::Allocate { user, n } => {
                let req = AllocationRequest::new(USERS[user], n, WorkloadType::IoIntensive);
                match allocate_block(&state, &req) {
                    Ok((next, block)) => {
                        prop_assert!(block.is_running());
                        state = next;
                    }
                    Err(AllocError::InsufficientNodes { .. })
                    | Err(AllocError::InvalidRequest(_)) => {}
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
            Op::Resize { pick, n } => {
                if let Ok((next, block)) = resize_block(&state, pick_block(&state, pick), n) {
                    prop_assert_eq!(block.workers.len(), n);
                    state = next;
                }
            }
            Op::Release { pick } => {
                let id = pick_block(&state, pick);
                let before = state.free_pool.len();
                if let Ok(next) = release_block(&state, id) {
                    let b = &state.blocks[&id];
                    prop_assert_eq!(next.free_pool.len(), before + b.members(state.mode()).len());
                    state = next;
                }
            }
            Op::Route { user, pick } => {
                let id = pick_block(&state, pick);
                let cmd = Command {
                    user: USERS[user].into(),
                    block: id,
                    verb: Verb::Submit,
                    request_bytes: 512,
                    response_bytes: 64,
                };
                let authorized = authorize(&state, &cmd.user, id);
                match route_command(&state, &cmd) {
                    Ok(r) => {
                        prop_assert!(authorized);
                        prop_assert_eq!(r.delivered_to, state.blocks[&id].master);
                    }
                    Err(GatewayError::Unauthorized { .. }) => {
                        prop_assert!(!authorized);
                        prop_assert!(state.blocks[&id].is_running());
                    }
                    Err(_) => prop_assert!(!authorized),
                }
                // data flows never leave a block
                if let Some(b) = state.blocks.get(&id).filter(|b| b.is_running()) {
                    let m = b.members(state.mode());
                    if m.len() >= 2 {
                        let path = route_flow(&state, &Flow::new(0, m[0], m[1], 1)).unwrap();
                        for l in &path.links {
                            prop_assert!(
                                m.contains(&l.node) || Some(l.node) == state.shared_master()
                            );
                        }
                    }
                }
            }
            Op::SwitchMode => {
                let target = match state.mode() {
                    Mode::Conventional => Mode::Independent,
                    Mode::Independent => Mode::Conventional,
                };
                let busy = state.running_blocks().count() > 0;
                match set_cluster_mode(&state, target) {
                    Ok(next) => {
                        prop_assert!(!busy);
                        state = next;
                    }
                    Err(AllocError::BlocksActive(ids)) => {
                        prop_assert!(busy);
                        prop_assert!(!ids.is_empty());
                    }
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
        }
        let expected_total = state.config.worker_pool_size + state.dedicated_server_count();
        prop_assert_eq!(state.total_nodes(), expected_total);
        check(&state, state.total_nodes())?;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conventional_sequences_hold_invariants(ops in prop::collection::vec(op(), 1..200)) {
        run(Mode::Conventional, ops)?;
    }

    #[test]
    fn independent_sequences_hold_invariants(ops in prop::collection::vec(op(), 1..200)) {
        run(Mode::Independent, ops)?;
    }
}

#[test]
fn authorization_exhaustive_small_instance() {
    let mut state = build_cluster(&ClusterConfig {
        worker_pool_size: 10,
        ..ClusterConfig::default()
    })
    .unwrap();
    for (i, u) in USERS.iter().enumerate() {
        let (s, _) = allocate_block(
            &state,
            &AllocationRequest::new(*u, 1 + i, WorkloadType::ProcessorIntensive),
        )
        .unwrap();
        state = s;
    }
    state = release_block(&state, BlockId(1)).unwrap();
    for id in 0..5 {
        for u in USERS.iter().chain(&["dave"]) {
            let user = UserId::from(*u);
            let expected = state
                .blocks
                .get(&BlockId(id))
                .is_some_and(|b| b.is_running() && b.owner == user);
            assert_eq!(authorize(&state, &user, BlockId(id)), expected, "{u} b{id}");
        }
    }
}
