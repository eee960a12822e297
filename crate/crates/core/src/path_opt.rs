//! Depot-return re-optimization for a fixed service order, and the dual
//! beam decode built on top of it.
//!
//! For an order `x_0 .. x_{T-1}`, inserting a return after `x_i` adds
//! `SC(x_i, depot) + SC(depot, x_{i+1}) - SC(x_i, x_{i+1})`. The split
//! minimizes the sum of these deltas subject to every segment fitting in the
//! vehicle, with a zero-cost base case for any prefix that already fits.
//! Ties prefer fewer returns, then the lexicographically smallest positions.

use std::cmp::Ordering;

use crate::arc_graph::{ArcGraph, DEPOT_ARC};
use crate::error::{CarpError, Result};
use crate::model::{beam_search, greedy_solution, InstanceContext, Policy};
use crate::solution::Solution;

/// Depot-free service order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ServiceOrder {
    pub arcs: Vec<usize>,
}

impl ServiceOrder {
    /// Drops every depot arc from a decoded sequence.
    pub fn from_sequence(sequence: &[usize]) -> ServiceOrder {
        ServiceOrder {
            arcs: sequence.iter().copied().filter(|&a| a != DEPOT_ARC).collect(),
        }
    }

    pub fn from_solution(sol: &Solution) -> ServiceOrder {
        ServiceOrder { arcs: sol.giant_tour() }
    }

    /// Every required edge exactly once, no depot arcs.
    pub fn is_valid(&self, graph: &ArcGraph) -> bool {
        let mut seen = vec![false; graph.len()];
        for &a in &self.arcs {
            if a == DEPOT_ARC || a >= graph.len() || seen[a] {
                return false;
            }
            seen[a] = true;
            seen[graph.arcs[a].reverse_id] = true;
        }
        self.arcs.len() * 2 == graph.service_arc_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    /// Indices `i` such that a depot return follows `arcs[i]`.
    pub positions: Vec<usize>,
    /// Added cost of the returns.
    pub f_value: i64,
    /// Cost of the order as a single route.
    pub g_value: i64,
}

impl SplitResult {
    pub fn total(&self) -> i64 {
        self.f_value + self.g_value
    }
}

/// Cost of the order driven as one route.
pub fn unsplit_cost(order: &ServiceOrder, graph: &ArcGraph) -> i64 {
    let mut g = 0;
    let mut prev = DEPOT_ARC;
    for &a in &order.arcs {
        g += graph.weight(prev, a) + graph.arcs[a].cost;
        prev = a;
    }
    if prev != DEPOT_ARC {
        g += graph.weight(prev, DEPOT_ARC);
    }
    g
}

/// Extra cost of returning to the depot between `a` and `b`.
pub fn insertion_delta(graph: &ArcGraph, a: usize, b: usize) -> i64 {
    graph.weight(a, DEPOT_ARC) + graph.weight(DEPOT_ARC, b) - graph.weight(a, b)
}

fn check_demands(order: &ServiceOrder, graph: &ArcGraph) -> Result<()> {
    for &a in &order.arcs {
        let arc = graph.arcs.get(a).filter(|x| !x.is_depot).ok_or(CarpError::UnknownArc { arc: a })?;
        if arc.demand > graph.capacity {
            return Err(CarpError::DemandExceedsCapacity {
                arc: a,
                demand: arc.demand,
                capacity: graph.capacity,
            });
        }
    }
    Ok(())
}

fn better(a: &(i64, Vec<usize>), b: &(i64, Vec<usize>)) -> bool {
    match a.0.cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match a.1.len().cmp(&b.1.len()) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.1 < b.1,
        },
    }
}

/// Optimal depot-return insertion for a fixed service order.
pub fn dp_split(order: &ServiceOrder, graph: &ArcGraph) -> Result<SplitResult> {
    check_demands(order, graph)?;
    let x = &order.arcs;
    let t = x.len();
    let q = graph.capacity as u64;
    // best[j]: segments cover x[0..j] and a segment ends at x[j-1]
    let mut best: Vec<Option<(i64, Vec<usize>)>> = vec![None; t + 1];
    best[0] = Some((0, Vec::new()));
    for j in 1..=t {
        let mut load = 0u64;
        let mut cur: Option<(i64, Vec<usize>)> = None;
        for k in (0..j).rev() {
            load += graph.arcs[x[k]].demand as u64;
            if load > q {
                break;
            }
            let Some((cost, pos)) = &best[k] else { continue };
            let cand = if k == 0 {
                (*cost, pos.clone())
            } else {
                let mut p = pos.clone();
                p.push(k - 1);
                (cost + insertion_delta(graph, x[k - 1], x[k]), p)
            };
            if cur.as_ref().map_or(true, |c| better(&cand, c)) {
                cur = Some(cand);
            }
        }
        best[j] = cur;
    }
    let (f_value, positions) = best[t].clone().expect("every arc fits on its own");
    Ok(SplitResult {
        positions,
        f_value,
        g_value: unsplit_cost(order, graph),
    })
}

/// Routes obtained by cutting `order` after each position.
pub fn reconstruct(order: &ServiceOrder, positions: &[usize]) -> Vec<Vec<usize>> {
    let mut routes = Vec::new();
    let mut start = 0;
    for &p in positions {
        routes.push(order.arcs[start..=p].to_vec());
        start = p + 1;
    }
    if start < order.arcs.len() {
        routes.push(order.arcs[start..].to_vec());
    }
    routes
}

/// Splits `order` optimally and returns the costed solution.
pub fn split_solution(order: &ServiceOrder, ctx: &InstanceContext) -> Result<(Solution, SplitResult)> {
    let split = dp_split(order, &ctx.graph)?;
    let sol = Solution::from_routes(&ctx.instance, &ctx.dist, reconstruct(order, &split.positions))?;
    Ok((sol, split))
}

/// Beam search with and without the capacity mask, each result re-split
/// optimally; the cheaper solution wins, the constrained one on ties. The
/// constrained greedy order is re-split as well, so the result never costs
/// more than the plain greedy decode.
pub fn dual_beam_decode(policy: &Policy, ctx: &InstanceContext, width: usize) -> Result<Solution> {
    let mut orders = Vec::with_capacity(3);
    for constrained in [true, false] {
        if let Some(top) = beam_search(policy, ctx, width, constrained)?.first() {
            orders.push(ServiceOrder::from_sequence(&top.actions));
        }
    }
    orders.push(ServiceOrder::from_solution(&greedy_solution(policy, ctx, true)?));
    let mut best: Option<Solution> = None;
    for order in &orders {
        let (sol, _) = split_solution(order, ctx)?;
        if best.as_ref().map_or(true, |b| sol.total_cost < b.total_cost) {
            best = Some(sol);
        }
    }
    Ok(best.unwrap_or_default())
}
