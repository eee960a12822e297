//! Sequential arc-selection environment over an [`ArcGraph`].
//!
//! The state starts at the depot arc. Choosing a service arc marks it and its
//! twin as served and consumes capacity. Choosing the depot arc resets the
//! capacity; it may be chosen repeatedly but never twice in a row. Rewards are
//! negative deadhead costs, so `R(tau)` is minus the total deadheading.

use crate::arc_graph::{ArcGraph, DEPOT_ARC};
use crate::error::{CarpError, Result};
use crate::instance::Instance;
use crate::shortest_path::DistanceMatrix;
use crate::solution::{evaluate_solution, Solution};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    /// Chosen arcs after the implicit initial depot arc.
    pub sequence: Vec<usize>,
    pub remaining_capacity: u32,
    /// `true` while the arc may still be served. Always `true` for arc 0.
    pub serve_flags: Vec<bool>,
    pub step: usize,
    pub done: bool,
    unserved: usize,
}

impl EnvState {
    pub fn initial(graph: &ArcGraph) -> EnvState {
        let unserved = graph.service_arc_count() / 2;
        EnvState {
            sequence: Vec::new(),
            remaining_capacity: graph.capacity,
            serve_flags: vec![true; graph.len()],
            step: 0,
            done: unserved == 0,
            unserved,
        }
    }

    /// Most recently chosen arc, the depot arc before the first move.
    pub fn last(&self) -> usize {
        self.sequence.last().copied().unwrap_or(DEPOT_ARC)
    }

    pub fn unserved_edges(&self) -> usize {
        self.unserved
    }

    pub fn depot_allowed(&self) -> bool {
        self.step >= 1 && self.last() != DEPOT_ARC
    }

    /// The closing depot return once every edge is served.
    pub fn forced_action(&self) -> Option<usize> {
        (!self.done && self.unserved == 0).then_some(DEPOT_ARC)
    }
}

/// Legal-action mask for the next step.
pub fn legal_actions(state: &EnvState, graph: &ArcGraph, constrained: bool) -> Vec<bool> {
    let mut mask = vec![false; graph.len()];
    if state.done {
        return mask;
    }
    mask[DEPOT_ARC] = state.depot_allowed();
    for arc in &graph.arcs[1..] {
        mask[arc.id] = state.serve_flags[arc.id]
            && (!constrained || arc.demand <= state.remaining_capacity);
    }
    mask
}

/// Applies `action` and returns the next state with its reward.
pub fn step(
    state: &EnvState,
    action: usize,
    graph: &ArcGraph,
    constrained: bool,
) -> Result<(EnvState, i64)> {
    let mut next = state.clone();
    let reward = apply(&mut next, action, graph, constrained)?;
    Ok((next, reward))
}

/// In-place variant of [`step`].
pub fn apply(
    state: &mut EnvState,
    action: usize,
    graph: &ArcGraph,
    constrained: bool,
) -> Result<i64> {
    let illegal = |s: &EnvState| CarpError::IllegalAction {
        action,
        step: s.step,
        last: s.last(),
        remaining: s.remaining_capacity,
    };
    if state.done || action >= graph.len() {
        return Err(illegal(state));
    }
    let last = state.last();
    if action == DEPOT_ARC {
        if !state.depot_allowed() {
            return Err(illegal(state));
        }
        state.remaining_capacity = graph.capacity;
    } else {
        let arc = &graph.arcs[action];
        if !state.serve_flags[action] || (constrained && arc.demand > state.remaining_capacity) {
            return Err(illegal(state));
        }
        state.serve_flags[action] = false;
        state.serve_flags[arc.reverse_id] = false;
        state.remaining_capacity = state.remaining_capacity.saturating_sub(arc.demand);
        state.unserved -= 1;
    }
    state.sequence.push(action);
    state.step += 1;
    state.done = state.unserved == 0 && action == DEPOT_ARC;
    Ok(-graph.weight(last, action))
}

/// A complete or partial decision sequence with per-step rewards.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub rewards: Vec<i64>,
}

impl Trajectory {
    pub fn total_reward(&self) -> i64 {
        self.rewards.iter().sum()
    }
}

/// Splits an arc sequence at depot arcs into routes.
pub fn routes_from_sequence(sequence: &[usize]) -> Vec<Vec<usize>> {
    sequence
        .split(|&a| a == DEPOT_ARC)
        .filter(|r| !r.is_empty())
        .map(|r| r.to_vec())
        .collect()
}

/// Replays `actions` from the initial state.
pub fn replay(graph: &ArcGraph, actions: &[usize], constrained: bool) -> Result<(EnvState, Trajectory)> {
    let mut state = EnvState::initial(graph);
    let mut traj = Trajectory::default();
    for &a in actions {
        let r = apply(&mut state, a, graph, constrained)?;
        traj.actions.push(a);
        traj.rewards.push(r);
    }
    Ok((state, traj))
}

/// Both sides of the cost identity: the evaluated solution cost and
/// `service_cost - R(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostIdentity {
    pub evaluated: i64,
    pub from_reward: i64,
}

/// Checks that a finished trajectory's reward accounts for its whole cost.
pub fn rollout_cost_identity(
    instance: &Instance,
    dist: &DistanceMatrix,
    trajectory: &Trajectory,
) -> Result<CostIdentity> {
    let sol = Solution {
        routes: routes_from_sequence(&trajectory.actions),
        ..Default::default()
    };
    let eval = evaluate_solution(instance, dist, &sol)?;
    let identity = CostIdentity {
        evaluated: eval.total_cost,
        from_reward: instance.service_cost() - trajectory.total_reward(),
    };
    if identity.evaluated != identity.from_reward {
        return Err(CarpError::RewardMismatch {
            evaluated: identity.evaluated,
            expected: identity.from_reward,
        });
    }
    Ok(identity)
}
