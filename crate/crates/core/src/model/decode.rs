use std::cmp::Ordering;

use rand::Rng;

use super::{InstanceContext, Policy};
use crate::autodiff::Tape;
use crate::env::{apply, legal_actions, routes_from_sequence, EnvState};
use crate::error::{CarpError, Result};
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

/// One complete episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub actions: Vec<usize>,
    /// Log-probability of each action; `0` for forced steps.
    pub log_probs: Vec<f64>,
    /// Steps whose action was dictated by the environment.
    pub forced: Vec<bool>,
    pub rewards: Vec<i64>,
    pub final_state: EnvState,
}

impl Rollout {
    pub fn total_reward(&self) -> i64 {
        self.rewards.iter().sum()
    }

    /// Total solution cost: service cost minus the accumulated reward.
    /// Meaningful for episodes started at the initial state.
    pub fn cost(&self, ctx: &InstanceContext) -> i64 {
        ctx.instance.service_cost() - self.total_reward()
    }

    pub fn routes(&self) -> Vec<Vec<usize>> {
        routes_from_sequence(&self.actions)
    }
}

fn argmax(probs: &[f64], mask: &[bool]) -> usize {
    let mut best = None;
    for (i, (&p, &m)) in probs.iter().zip(mask).enumerate() {
        if m && best.map_or(true, |b: usize| p > probs[b]) {
            best = Some(i);
        }
    }
    best.expect("mask has a legal entry")
}

fn sample<R: Rng>(probs: &[f64], mask: &[bool], rng: &mut R) -> usize {
    let total: f64 = probs.iter().zip(mask).filter(|(_, &m)| m).map(|(p, _)| p).sum();
    let mut u = rng.gen::<f64>() * total;
    let mut fallback = 0;
    for (i, (&p, &m)) in probs.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        fallback = i;
        if u < p {
            return i;
        }
        u -= p;
    }
    fallback
}

/// Chooses the next action and returns it with its log-probability.
/// A forced depot return is taken without evaluating the network.
pub fn act<R: Rng>(
    policy: &Policy,
    ctx: &InstanceContext,
    state: &EnvState,
    constrained: bool,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<(usize, f64, bool)> {
    if let Some(a) = state.forced_action() {
        return Ok((a, 0.0, true));
    }
    let mask = legal_actions(state, &ctx.graph, constrained);
    if !mask.iter().any(|&m| m) {
        return Err(CarpError::NoLegalAction { step: state.step });
    }
    let mut tape = Tape::new();
    let logp = policy.forward(&mut tape, ctx, state, &mask)?;
    let logp = &tape.value(logp).data;
    let probs: Vec<f64> = logp.iter().map(|x| x.exp()).collect();
    let a = match mode {
        DecodeMode::Greedy => argmax(&probs, &mask),
        DecodeMode::Sample => sample(&probs, &mask, rng),
    };
    Ok((a, logp[a], false))
}

/// Runs the policy from the initial state until the episode ends.
pub fn rollout<R: Rng>(
    policy: &Policy,
    ctx: &InstanceContext,
    constrained: bool,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Rollout> {
    rollout_from(policy, ctx, EnvState::initial(&ctx.graph), constrained, mode, rng)
}

/// Continues an episode from `state`; only the steps taken here are recorded.
pub fn rollout_from<R: Rng>(
    policy: &Policy,
    ctx: &InstanceContext,
    mut state: EnvState,
    constrained: bool,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<Rollout> {
    let mut out = Rollout {
        actions: Vec::new(),
        log_probs: Vec::new(),
        forced: Vec::new(),
        rewards: Vec::new(),
        final_state: state.clone(),
    };
    while !state.done {
        let (a, lp, forced) = act(policy, ctx, &state, constrained, mode, rng)?;
        let r = apply(&mut state, a, &ctx.graph, constrained)?;
        out.actions.push(a);
        out.log_probs.push(lp);
        out.forced.push(forced);
        out.rewards.push(r);
    }
    out.final_state = state;
    Ok(out)
}

/// Greedy decode turned into a costed solution.
pub fn greedy_solution(policy: &Policy, ctx: &InstanceContext, constrained: bool) -> Result<Solution> {
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let r = rollout(policy, ctx, constrained, DecodeMode::Greedy, &mut rng)?;
    Solution::from_routes(&ctx.instance, &ctx.dist, r.routes())
}

/// A partial or finished beam-search hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub state: EnvState,
    pub actions: Vec<usize>,
    /// Sum of action log-probabilities.
    pub score: f64,
}

/// Beam search of the given width. Returns every finished hypothesis, best
/// score first. Width 1 reproduces the greedy decode.
pub fn beam_search(
    policy: &Policy,
    ctx: &InstanceContext,
    width: usize,
    constrained: bool,
) -> Result<Vec<Beam>> {
    let width = width.max(1);
    let mut alive = vec![Beam {
        state: EnvState::initial(&ctx.graph),
        actions: Vec::new(),
        score: 0.0,
    }];
    let mut finished = Vec::new();
    if alive[0].state.done {
        return Ok(alive);
    }
    while !alive.is_empty() {
        // (beam index, action, step log-prob, new score)
        let mut cands: Vec<(usize, usize, f64, f64)> = Vec::new();
        for (b, beam) in alive.iter().enumerate() {
            if let Some(a) = beam.state.forced_action() {
                cands.push((b, a, 0.0, beam.score));
                continue;
            }
            let mask = legal_actions(&beam.state, &ctx.graph, constrained);
            if !mask.iter().any(|&m| m) {
                return Err(CarpError::NoLegalAction { step: beam.state.step });
            }
            let mut tape = Tape::new();
            let logp = policy.forward(&mut tape, ctx, &beam.state, &mask)?;
            for (a, &lp) in tape.value(logp).data.iter().enumerate() {
                if mask[a] {
                    cands.push((b, a, lp, beam.score + lp));
                }
            }
        }
        cands.sort_by(|x, y| {
            y.3.partial_cmp(&x.3)
                .unwrap_or(Ordering::Equal)
                .then(y.2.partial_cmp(&x.2).unwrap_or(Ordering::Equal))
                .then(x.1.cmp(&y.1))
                .then(x.0.cmp(&y.0))
        });
        cands.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (b, a, _, score) in cands {
            let mut beam = alive[b].clone();
            apply(&mut beam.state, a, &ctx.graph, constrained)?;
            beam.actions.push(a);
            beam.score = score;
            if beam.state.done {
                finished.push(beam);
            } else {
                next.push(beam);
            }
        }
        alive = next;
    }
    finished.sort_by(|x, y| y.score.partial_cmp(&x.score).unwrap_or(Ordering::Equal));
    Ok(finished)
}
