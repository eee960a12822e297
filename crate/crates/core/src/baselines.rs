//! Path-Scanning: repeatedly extend the current route with the nearest
//! unserved arc that still fits, using a rule to break distance ties.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arc_graph::{Arc, ArcGraph, DEPOT_ARC};
use crate::error::Result;
use crate::instance::Instance;
use crate::shortest_path::DistanceMatrix;
use crate::solution::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PsRule {
    MaximizeDepotDistance,
    MinimizeDepotDistance,
    MaximizeDemandCostRatio,
    MinimizeDemandCostRatio,
    HybridHalfCapacity,
}

impl PsRule {
    pub const ALL: [PsRule; 5] = [
        PsRule::MaximizeDepotDistance,
        PsRule::MinimizeDepotDistance,
        PsRule::MaximizeDemandCostRatio,
        PsRule::MinimizeDemandCostRatio,
        PsRule::HybridHalfCapacity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PsRule::MaximizeDepotDistance => "max-depot-distance",
            PsRule::MinimizeDepotDistance => "min-depot-distance",
            PsRule::MaximizeDemandCostRatio => "max-demand-cost-ratio",
            PsRule::MinimizeDemandCostRatio => "min-demand-cost-ratio",
            PsRule::HybridHalfCapacity => "hybrid-half-capacity",
        }
    }

    /// `Greater` when `a` is preferred over `b`.
    fn compare(self, a: &Arc, b: &Arc, graph: &ArcGraph, remaining: u32) -> Ordering {
        let back = |x: &Arc| graph.weight(x.id, DEPOT_ARC);
        // demand / cost compared without division
        let ratio = |x: &Arc, y: &Arc| (x.demand as i64 * y.cost.max(1)).cmp(&(y.demand as i64 * x.cost.max(1)));
        match self {
            PsRule::MaximizeDepotDistance => back(a).cmp(&back(b)),
            PsRule::MinimizeDepotDistance => back(b).cmp(&back(a)),
            PsRule::MaximizeDemandCostRatio => ratio(a, b),
            PsRule::MinimizeDemandCostRatio => ratio(b, a),
            PsRule::HybridHalfCapacity => {
                if 2 * remaining > graph.capacity {
                    PsRule::MaximizeDepotDistance.compare(a, b, graph, remaining)
                } else {
                    PsRule::MinimizeDepotDistance.compare(a, b, graph, remaining)
                }
            }
        }
    }
}

/// One Path-Scanning construction. Ties left after the rule are broken
/// uniformly at random.
pub fn path_scanning<R: Rng>(
    instance: &Instance,
    dist: &DistanceMatrix,
    graph: &ArcGraph,
    rule: PsRule,
    rng: &mut R,
) -> Result<Solution> {
    let mut served = vec![false; graph.len()];
    let mut left = graph.service_arc_count() / 2;
    let mut routes = Vec::new();
    while left > 0 {
        let mut route = Vec::new();
        let mut remaining = graph.capacity;
        let mut last = DEPOT_ARC;
        loop {
            let mut best: Vec<&Arc> = Vec::new();
            for arc in &graph.arcs[1..] {
                if served[arc.id] || arc.demand > remaining {
                    continue;
                }
                let ord = match best.first() {
                    None => Ordering::Greater,
                    Some(b) => graph
                        .weight(last, b.id)
                        .cmp(&graph.weight(last, arc.id))
                        .then_with(|| rule.compare(arc, b, graph, remaining)),
                };
                match ord {
                    Ordering::Greater => {
                        best.clear();
                        best.push(arc);
                    }
                    Ordering::Equal => best.push(arc),
                    Ordering::Less => {}
                }
            }
            if best.is_empty() {
                break;
            }
            let pick = if best.len() == 1 { best[0] } else { best[rng.gen_range(0..best.len())] };
            served[pick.id] = true;
            served[pick.reverse_id] = true;
            remaining -= pick.demand;
            left -= 1;
            last = pick.id;
            route.push(pick.id);
        }
        if route.is_empty() {
            // only possible when some demand exceeds capacity, which check() rejects
            break;
        }
        routes.push(route);
    }
    Solution::from_routes(instance, dist, routes)
}

/// Runs all five rules with per-rule seeds derived from `seed` and keeps the
/// cheapest solution (earlier rule on ties).
pub fn ps_best_of_rules(
    instance: &Instance,
    dist: &DistanceMatrix,
    graph: &ArcGraph,
    seed: u64,
) -> Result<(Solution, PsRule)> {
    let mut best: Option<(Solution, PsRule)> = None;
    for (k, rule) in PsRule::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(k as u64));
        let sol = path_scanning(instance, dist, graph, rule, &mut rng)?;
        if best.as_ref().map_or(true, |(b, _)| sol.total_cost < b.total_cost) {
            best = Some((sol, rule));
        }
    }
    Ok(best.expect("five rules ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Edge;
    use crate::shortest_path::all_pairs_shortest_paths;
    use crate::solution::evaluate_solution;

    fn star() -> Instance {
        Instance {
            name: "star".into(),
            node_count: 4,
            depot: 0,
            capacity: 100,
            edges: vec![
                Edge::required(0, 1, 4, 10),
                Edge::required(0, 2, 5, 10),
                Edge::required(0, 3, 6, 10),
            ],
        }
    }

    fn setup(inst: &Instance) -> (DistanceMatrix, ArcGraph) {
        let dist = all_pairs_shortest_paths(inst).unwrap();
        let graph = ArcGraph::transform(inst, &dist);
        (dist, graph)
    }

    #[test]
    fn star_costs_twice_each_spoke() {
        let inst = star();
        let (dist, graph) = setup(&inst);
        for rule in PsRule::ALL {
            let sol = path_scanning(&inst, &dist, &graph, rule, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(sol.routes.len(), 1);
            assert_eq!(sol.total_cost, 30);
        }
    }

    #[test]
    fn capacity_splits_routes() {
        let mut inst = star();
        for e in &mut inst.edges {
            e.demand = 60;
        }
        let (dist, graph) = setup(&inst);
        let (sol, _) = ps_best_of_rules(&inst, &dist, &graph, 3).unwrap();
        assert_eq!(sol.routes.len(), 3);
        assert!(evaluate_solution(&inst, &dist, &sol).unwrap().feasible);
    }

    #[test]
    fn best_of_rules_is_minimum_and_deterministic() {
        let inst = Instance {
            name: "grid".into(),
            node_count: 5,
            depot: 2,
            capacity: 25,
            edges: vec![
                Edge::required(0, 1, 3, 9),
                Edge::required(1, 2, 4, 8),
                Edge::required(2, 3, 2, 7),
                Edge::required(3, 4, 6, 10),
                Edge::required(4, 0, 5, 6),
                Edge::deadhead(1, 3, 3),
            ],
        };
        let (dist, graph) = setup(&inst);
        let (best, _) = ps_best_of_rules(&inst, &dist, &graph, 9).unwrap();
        for (k, rule) in PsRule::ALL.into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(9u64 * 31 + k as u64);
            let sol = path_scanning(&inst, &dist, &graph, rule, &mut rng).unwrap();
            assert!(best.total_cost <= sol.total_cost);
            assert!(evaluate_solution(&inst, &dist, &sol).unwrap().feasible);
        }
        assert_eq!(ps_best_of_rules(&inst, &dist, &graph, 9).unwrap().0, best);
    }

    #[test]
    fn ample_capacity_gives_one_route() {
        let mut inst = star();
        inst.capacity = 1000;
        inst.edges.push(Edge::required(1, 2, 2, 50));
        let (dist, graph) = setup(&inst);
        let (sol, _) = ps_best_of_rules(&inst, &dist, &graph, 0).unwrap();
        assert_eq!(sol.routes.len(), 1);
    }
}
