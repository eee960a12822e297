//! Label sources for supervised pre-training: an exact solver for tiny
//! instances, an iterated local search for everything else, and the replay
//! that turns a solution into per-step arc targets.

use std::fmt::Write as _;

use rand::Rng;

use crate::arc_graph::{ArcGraph, DEPOT_ARC};
use crate::baselines::ps_best_of_rules;
use crate::env::{apply, EnvState};
use crate::error::{CarpError, Result};
use crate::instance::Instance;
use crate::path_opt::{dp_split, reconstruct, ServiceOrder};
use crate::shortest_path::DistanceMatrix;
use crate::solution::{evaluate_solution, Solution};

/// Largest number of required edges [`exact_solve`] accepts.
pub const EXACT_EDGE_CAP: usize = 8;

/// Minimum-cost solution by dynamic programming over
/// (served edges, last arc, current load).
pub fn exact_solve(instance: &Instance, dist: &DistanceMatrix, graph: &ArcGraph) -> Result<Solution> {
    let m = instance.required_count();
    if m > EXACT_EDGE_CAP {
        return Err(CarpError::TooLarge {
            required: m,
            cap: EXACT_EDGE_CAP,
        });
    }
    if m == 0 {
        return Ok(Solution::default());
    }
    let q = (instance.capacity as u64).min(instance.total_demand()) as usize;
    let arcs = graph.len();
    let loads = q + 1;
    let idx = |mask: usize, last: usize, load: usize| (mask * arcs + last) * loads + load;
    let size = (1 << m) * arcs * loads;
    let mut cost = vec![i64::MAX; size];
    // (previous state index, returned to depot before this arc)
    let mut parent = vec![(usize::MAX, false); size];
    cost[idx(0, DEPOT_ARC, 0)] = 0;
    for mask in 0..(1usize << m) {
        for last in 0..arcs {
            for load in 0..loads {
                let here = idx(mask, last, load);
                let c = cost[here];
                if c == i64::MAX {
                    continue;
                }
                for e in 0..m {
                    if mask >> e & 1 == 1 {
                        continue;
                    }
                    let next_mask = mask | 1 << e;
                    for a in [2 * e + 1, 2 * e + 2] {
                        let arc = &graph.arcs[a];
                        let d = arc.demand as usize;
                        let mut relax = |nl: usize, extra: i64, via: bool| {
                            let t = idx(next_mask, a, nl);
                            if c + extra < cost[t] {
                                cost[t] = c + extra;
                                parent[t] = (here, via);
                            }
                        };
                        if load + d <= q {
                            relax(load + d, graph.weight(last, a) + arc.cost, false);
                        }
                        if last != DEPOT_ARC {
                            relax(d, graph.weight(last, DEPOT_ARC) + graph.weight(DEPOT_ARC, a) + arc.cost, true);
                        }
                    }
                }
            }
        }
    }
    let full = (1 << m) - 1;
    let mut best = (i64::MAX, usize::MAX);
    for last in 1..arcs {
        for load in 0..loads {
            let i = idx(full, last, load);
            if cost[i] != i64::MAX {
                let total = cost[i] + graph.weight(last, DEPOT_ARC);
                if total < best.0 {
                    best = (total, i);
                }
            }
        }
    }
    let mut seq = Vec::new();
    let mut at = best.1;
    while parent[at].0 != usize::MAX {
        let arc = (at / loads) % arcs;
        let (prev, via) = parent[at];
        seq.push(arc);
        if via {
            seq.push(DEPOT_ARC);
        }
        at = prev;
    }
    seq.reverse();
    let routes = crate::env::routes_from_sequence(&seq);
    let sol = Solution::from_routes(instance, dist, routes)?;
    debug_assert_eq!(sol.total_cost, best.0);
    Ok(sol)
}

/// Knobs of the iterated local search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalSearchConfig {
    pub iterations: usize,
    /// Non-improving iterations before a perturbation.
    pub patience: usize,
    pub perturb_moves: usize,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        LocalSearchConfig {
            iterations: 10_000,
            patience: 500,
            perturb_moves: 3,
        }
    }
}

fn relocate<R: Rng>(order: &mut Vec<usize>, rng: &mut R) {
    let n = order.len();
    let from = rng.gen_range(0..n);
    let arc = order.remove(from);
    let to = rng.gen_range(0..n);
    order.insert(to, arc);
}

fn random_move<R: Rng>(order: &[usize], graph: &ArcGraph, rng: &mut R) -> Vec<usize> {
    let mut next = order.to_vec();
    let n = next.len();
    match rng.gen_range(0..4) {
        0 => relocate(&mut next, rng),
        1 => {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            next.swap(i, j);
        }
        2 => {
            let (mut i, mut j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i > j {
                std::mem::swap(&mut i, &mut j);
            }
            next[i..=j].reverse();
            for a in &mut next[i..=j] {
                *a = graph.arcs[*a].reverse_id;
            }
        }
        _ => {
            let i = rng.gen_range(0..n);
            next[i] = graph.arcs[next[i]].reverse_id;
        }
    }
    next
}

/// Iterated local search on the giant service order, re-splitting optimally
/// after every move. Starts from the best Path-Scanning rule and accepts only
/// strict improvements; stagnation triggers a random perturbation of the
/// best order so far.
pub fn local_search_solve<R: Rng>(
    instance: &Instance,
    dist: &DistanceMatrix,
    graph: &ArcGraph,
    config: LocalSearchConfig,
    rng: &mut R,
) -> Result<Solution> {
    let (start, _) = ps_best_of_rules(instance, dist, graph, 0)?;
    if start.routes.is_empty() {
        return Ok(start);
    }
    let split_cost = |arcs: &[usize]| -> Result<i64> {
        Ok(dp_split(&ServiceOrder { arcs: arcs.to_vec() }, graph)?.total())
    };
    let mut best = start.giant_tour();
    let mut best_cost = split_cost(&best)?;
    let mut cur = best.clone();
    let mut cur_cost = best_cost;
    let mut stale = 0;
    for _ in 0..config.iterations {
        let cand = random_move(&cur, graph, rng);
        let c = split_cost(&cand)?;
        if c < cur_cost {
            cur = cand;
            cur_cost = c;
            stale = 0;
            if c < best_cost {
                best = cur.clone();
                best_cost = c;
            }
        } else {
            stale += 1;
        }
        if stale >= config.patience && cur.len() > 1 {
            cur = best.clone();
            for _ in 0..config.perturb_moves {
                relocate(&mut cur, rng);
            }
            cur_cost = split_cost(&cur)?;
            stale = 0;
        }
    }
    let order = ServiceOrder { arcs: best };
    let split = dp_split(&order, graph)?;
    let sol = Solution::from_routes(instance, dist, reconstruct(&order, &split.positions))?;
    if sol.total_cost <= start.total_cost {
        Ok(sol)
    } else {
        Ok(start)
    }
}

/// Order in which a solution's routes are replayed into labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelOrder {
    /// Routes and directions exactly as the solver returned them.
    #[default]
    AsSolved,
    /// Each route driven in the direction whose first service starts closer
    /// to the depot, routes sorted by that distance (then by first arc id).
    NearestFirst,
}

/// Equal-cost rewrite of `sol` in the given label order.
pub fn canonicalize(sol: &Solution, graph: &ArcGraph, order: LabelOrder) -> Solution {
    if order == LabelOrder::AsSolved {
        return sol.clone();
    }
    let mut routes: Vec<Vec<usize>> = sol
        .routes
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let reversed: Vec<usize> = r.iter().rev().map(|&a| graph.arcs[a].reverse_id).collect();
            let key = |x: &[usize]| (graph.weight(DEPOT_ARC, x[0]), x[0]);
            if key(&reversed) < key(r) {
                reversed
            } else {
                r.clone()
            }
        })
        .collect();
    routes.sort_by_key(|r| (graph.weight(DEPOT_ARC, r[0]), r[0]));
    Solution {
        routes,
        ..sol.clone()
    }
}

/// A teacher trajectory: the arc chosen at every step, depot returns and the
/// final forced return included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub instance_name: String,
    pub cost: i64,
    pub actions: Vec<usize>,
}

impl LabelSet {
    /// State before each action, obtained by replaying the sequence.
    pub fn states(&self, graph: &ArcGraph) -> Result<Vec<EnvState>> {
        let mut state = EnvState::initial(graph);
        let mut out = Vec::with_capacity(self.actions.len());
        for &a in &self.actions {
            out.push(state.clone());
            apply(&mut state, a, graph, true)?;
        }
        Ok(out)
    }

    /// One-hot target of step `t` over `arc_count` arcs.
    pub fn target(&self, t: usize, arc_count: usize) -> Vec<f64> {
        let mut y = vec![0.0; arc_count];
        y[self.actions[t]] = 1.0;
        y
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("LABEL {} {}\n", self.instance_name, self.cost);
        for a in &self.actions {
            let _ = writeln!(s, "{a}");
        }
        s
    }

    /// Parses one or more concatenated label blocks.
    pub fn parse_many(text: &str) -> Result<Vec<LabelSet>> {
        let mut out: Vec<LabelSet> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| CarpError::Format { line: i + 1, message };
            if let Some(rest) = line.strip_prefix("LABEL ") {
                let mut parts = rest.split_whitespace();
                let (Some(name), Some(cost), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(bad("expected `LABEL <name> <cost>`".into()));
                };
                let cost = cost.parse().map_err(|_| bad(format!("bad cost `{cost}`")))?;
                out.push(LabelSet {
                    instance_name: name.to_string(),
                    cost,
                    actions: Vec::new(),
                });
            } else {
                let a = line.parse().map_err(|_| bad(format!("bad arc id `{line}`")))?;
                out.last_mut()
                    .ok_or_else(|| bad("arc id before any `LABEL` header".into()))?
                    .actions
                    .push(a);
            }
        }
        Ok(out)
    }
}

/// Replays a feasible solution through the environment, routes in order,
/// each closed by a depot return.
pub fn labelize(instance: &Instance, dist: &DistanceMatrix, graph: &ArcGraph, sol: &Solution) -> Result<LabelSet> {
    let eval = evaluate_solution(instance, dist, sol)?;
    if !eval.feasible {
        return Err(CarpError::InvalidInstance(format!(
            "solution is infeasible: {}",
            eval.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
        )));
    }
    let mut actions = Vec::new();
    for route in sol.routes.iter().filter(|r| !r.is_empty()) {
        actions.extend_from_slice(route);
        actions.push(DEPOT_ARC);
    }
    let mut state = EnvState::initial(graph);
    let mut reward = 0;
    for &a in &actions {
        reward += apply(&mut state, a, graph, true)?;
    }
    let cost = instance.service_cost() - reward;
    if cost != eval.total_cost {
        return Err(CarpError::RewardMismatch {
            evaluated: eval.total_cost,
            expected: cost,
        });
    }
    Ok(LabelSet {
        instance_name: instance.name.clone(),
        cost,
        actions,
    })
}
