//! Edge-to-arc decomposition.
//!
//! Every required edge becomes two twin arcs of opposite direction. Arc 0 is
//! a zero-cost, zero-demand self-loop at the depot that stands for a return
//! trip. The `k`-th required edge `(u, v)` in input order becomes arcs
//! `2k + 1` (`u -> v`) and `2k + 2` (`v -> u`).

use crate::instance::Instance;
use crate::shortest_path::DistanceMatrix;

pub const DEPOT_ARC: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub id: usize,
    pub start: usize,
    pub end: usize,
    pub cost: i64,
    pub demand: u32,
    pub is_depot: bool,
    pub reverse_id: usize,
    /// Index of the source edge in `Instance::edges`; `None` for the depot arc.
    pub edge: Option<usize>,
}

/// Arc list of an instance, without the arc-to-arc weight matrix.
pub fn decompose(instance: &Instance) -> Vec<Arc> {
    let mut arcs = vec![Arc {
        id: DEPOT_ARC,
        start: instance.depot,
        end: instance.depot,
        cost: 0,
        demand: 0,
        is_depot: true,
        reverse_id: DEPOT_ARC,
        edge: None,
    }];
    for (idx, e) in instance.required_edges() {
        let fwd = arcs.len();
        arcs.push(Arc {
            id: fwd,
            start: e.u,
            end: e.v,
            cost: e.cost,
            demand: e.demand,
            is_depot: false,
            reverse_id: fwd + 1,
            edge: Some(idx),
        });
        arcs.push(Arc {
            id: fwd + 1,
            start: e.v,
            end: e.u,
            cost: e.cost,
            demand: e.demand,
            is_depot: false,
            reverse_id: fwd,
            edge: Some(idx),
        });
    }
    arcs
}

/// The directed complete graph over arcs. `weight(i, j)` is the shortest-path
/// cost from the end node of arc `i` to the start node of arc `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArcGraph {
    pub arcs: Vec<Arc>,
    weights: Vec<i64>,
    pub depot: usize,
    pub capacity: u32,
}

impl ArcGraph {
    pub fn transform(instance: &Instance, dist: &DistanceMatrix) -> ArcGraph {
        let arcs = decompose(instance);
        let n = arcs.len();
        let mut weights = vec![0; n * n];
        for (i, a) in arcs.iter().enumerate() {
            for (j, b) in arcs.iter().enumerate() {
                weights[i * n + j] = dist.get(a.end, b.start);
            }
        }
        ArcGraph {
            arcs,
            weights,
            depot: instance.depot,
            capacity: instance.capacity,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    #[inline]
    pub fn weight(&self, from: usize, to: usize) -> i64 {
        self.weights[from * self.arcs.len() + to]
    }

    pub fn max_weight(&self) -> i64 {
        self.weights.iter().copied().max().unwrap_or(0)
    }

    /// Number of service arcs, i.e. twice the number of required edges.
    pub fn service_arc_count(&self) -> usize {
        self.arcs.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Edge;
    use crate::shortest_path::all_pairs_shortest_paths;

    fn path_graph() -> Instance {
        Instance {
            name: "path".into(),
            node_count: 3,
            depot: 0,
            capacity: 100,
            edges: vec![Edge::deadhead(0, 1, 2), Edge::required(1, 2, 3, 4)],
        }
    }

    #[test]
    fn arc_count_is_twice_required_plus_one() {
        let inst = Instance {
            edges: vec![Edge::required(0, 1, 2, 1), Edge::required(1, 2, 3, 1)],
            ..path_graph()
        };
        let g = ArcGraph::transform(&inst, &all_pairs_shortest_paths(&inst).unwrap());
        assert_eq!(g.len(), 5);
        assert!(g.arcs[0].is_depot);
        assert_eq!((g.arcs[1].start, g.arcs[1].end), (0, 1));
        assert_eq!((g.arcs[2].start, g.arcs[2].end), (1, 0));
        assert_eq!((g.arcs[3].start, g.arcs[3].end), (1, 2));
    }

    #[test]
    fn twins_and_depot_weights() {
        let inst = path_graph();
        let dist = all_pairs_shortest_paths(&inst).unwrap();
        let g = ArcGraph::transform(&inst, &dist);
        // arc 1 = 1->2, arc 2 = 2->1
        assert_eq!(g.weight(1, 2), 0);
        assert_eq!(g.weight(2, 1), 0);
        assert_eq!(g.weight(DEPOT_ARC, 1), 2);
        for a in &g.arcs {
            assert_eq!(g.weight(a.id, a.reverse_id), 0);
            assert_eq!(g.weight(DEPOT_ARC, a.id), dist.get(inst.depot, a.start));
            let twin = g.arcs[a.reverse_id];
            assert_eq!((twin.start, twin.end), (a.end, a.start));
            assert_eq!((twin.cost, twin.demand), (a.cost, a.demand));
        }
    }
}
