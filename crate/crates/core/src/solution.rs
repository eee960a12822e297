//! Route sets, cost accounting and the solution text format.

use std::fmt;
use std::fmt::Write as _;

use crate::arc_graph::{decompose, Arc};
use crate::error::{CarpError, Result};
use crate::instance::Instance;
use crate::shortest_path::DistanceMatrix;

/// Routes of served arcs. Deadhead legs between arcs, from the depot and back
/// to it are implied by the distance matrix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Solution {
    pub routes: Vec<Vec<usize>>,
    pub total_cost: i64,
    pub deadhead_cost: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolutionViolation {
    Overload { route: usize, demand: u64, capacity: u32 },
    Duplicate { edge: usize },
    Missing { edge: usize },
}

impl fmt::Display for SolutionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolutionViolation::Overload {
                route,
                demand,
                capacity,
            } => write!(f, "route {route} carries {demand} > capacity {capacity}"),
            SolutionViolation::Duplicate { edge } => write!(f, "edge {edge} served more than once"),
            SolutionViolation::Missing { edge } => write!(f, "edge {edge} never served"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub total_cost: i64,
    pub deadhead_cost: i64,
    pub feasible: bool,
    pub violations: Vec<SolutionViolation>,
}

pub fn evaluate_solution(
    instance: &Instance,
    dist: &DistanceMatrix,
    sol: &Solution,
) -> Result<Evaluation> {
    let arcs = decompose(instance);
    evaluate_routes(instance, dist, &arcs, &sol.routes)
}

pub(crate) fn evaluate_routes(
    instance: &Instance,
    dist: &DistanceMatrix,
    arcs: &[Arc],
    routes: &[Vec<usize>],
) -> Result<Evaluation> {
    let depot = instance.depot;
    let mut served = vec![0usize; instance.edges.len()];
    let mut violations = Vec::new();
    let mut service = 0i64;
    let mut deadhead = 0i64;
    for (r, route) in routes.iter().enumerate() {
        let mut at = depot;
        let mut load = 0u64;
        for &id in route {
            let arc = arcs
                .get(id)
                .filter(|a| !a.is_depot)
                .ok_or(CarpError::UnknownArc { arc: id })?;
            deadhead += dist.get(at, arc.start);
            service += arc.cost;
            load += arc.demand as u64;
            at = arc.end;
            if let Some(e) = arc.edge {
                served[e] += 1;
            }
        }
        deadhead += dist.get(at, depot);
        if load > instance.capacity as u64 {
            violations.push(SolutionViolation::Overload {
                route: r,
                demand: load,
                capacity: instance.capacity,
            });
        }
    }
    for (e, edge) in instance.edges.iter().enumerate() {
        if !edge.required {
            continue;
        }
        match served[e] {
            0 => violations.push(SolutionViolation::Missing { edge: e }),
            1 => {}
            _ => violations.push(SolutionViolation::Duplicate { edge: e }),
        }
    }
    Ok(Evaluation {
        total_cost: service + deadhead,
        deadhead_cost: deadhead,
        feasible: violations.is_empty(),
        violations,
    })
}

impl Solution {
    /// Builds a solution from routes and fills in its costs.
    pub fn from_routes(
        instance: &Instance,
        dist: &DistanceMatrix,
        routes: Vec<Vec<usize>>,
    ) -> Result<Solution> {
        let mut sol = Solution {
            routes,
            ..Default::default()
        };
        let eval = evaluate_solution(instance, dist, &sol)?;
        sol.total_cost = eval.total_cost;
        sol.deadhead_cost = eval.deadhead_cost;
        Ok(sol)
    }

    /// Concatenated service order with depot arcs removed.
    pub fn giant_tour(&self) -> Vec<usize> {
        self.routes.iter().flatten().copied().collect()
    }

    /// Text export: one `ROUTE` record per route listing `(start,end)` of each
    /// served arc, followed by a `WALK` line with the full node sequence.
    pub fn to_text(&self, instance: &Instance, dist: &DistanceMatrix) -> String {
        let arcs = decompose(instance);
        let mut s = String::new();
        let _ = writeln!(s, "SOLUTION {}", instance.name);
        let _ = writeln!(s, "TOTAL_COST {}", self.total_cost);
        let _ = writeln!(s, "DEADHEAD_COST {}", self.deadhead_cost);
        let _ = writeln!(s, "ROUTES {}", self.routes.len());
        for route in &self.routes {
            s.push_str("ROUTE");
            for &id in route {
                let _ = write!(s, " ({},{})", arcs[id].start, arcs[id].end);
            }
            s.push('\n');
            s.push_str("WALK");
            let mut at = instance.depot;
            let mut walk = vec![at];
            for &id in route {
                walk.extend(dist.path(at, arcs[id].start).into_iter().skip(1));
                walk.push(arcs[id].end);
                at = arcs[id].end;
            }
            walk.extend(dist.path(at, instance.depot).into_iter().skip(1));
            for n in walk {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
        s.push_str("END\n");
        s
    }

    /// Parses the export format back into arc ids. Costs are recomputed.
    pub fn parse(text: &str, instance: &Instance, dist: &DistanceMatrix) -> Result<Solution> {
        let arcs = decompose(instance);
        let mut used = vec![false; instance.edges.len()];
        let mut routes = Vec::new();
        let mut saw_end = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| CarpError::Format {
                line: line_no,
                message,
            };
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "SOLUTION" | "TOTAL_COST" | "DEADHEAD_COST" | "ROUTES" | "WALK" => {}
                "END" => {
                    saw_end = true;
                    break;
                }
                "ROUTE" => {
                    let mut route = Vec::new();
                    for tok in rest.split_whitespace() {
                        let inner = tok
                            .strip_prefix('(')
                            .and_then(|t| t.strip_suffix(')'))
                            .ok_or_else(|| bad(format!("malformed arc `{tok}`")))?;
                        let (a, b) = inner
                            .split_once(',')
                            .ok_or_else(|| bad(format!("malformed arc `{tok}`")))?;
                        let a: usize = a.trim().parse().map_err(|_| bad(format!("bad node `{a}`")))?;
                        let b: usize = b.trim().parse().map_err(|_| bad(format!("bad node `{b}`")))?;
                        let mut candidates = arcs
                            .iter()
                            .filter(|arc| !arc.is_depot && arc.start == a && arc.end == b);
                        let first = candidates.clone().next().ok_or_else(|| {
                            bad(format!("({a},{b}) is not a required edge"))
                        })?;
                        let pick = candidates
                            .find(|arc| !used[arc.edge.unwrap()])
                            .unwrap_or(first);
                        used[pick.edge.unwrap()] = true;
                        route.push(pick.id);
                    }
                    routes.push(route);
                }
                other => return Err(bad(format!("unknown record `{other}`"))),
            }
        }
        if !saw_end {
            return Err(CarpError::Format {
                line: 0,
                message: "missing `END`".into(),
            });
        }
        Solution::from_routes(instance, dist, routes)
    }
}
