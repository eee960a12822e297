use crate::error::{CarpError, Result};
use crate::instance::Instance;

const UNREACHABLE: i64 = i64::MAX / 4;

/// All-pairs shortest-path costs over the undirected instance graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    dist: Vec<i64>,
    next_hop: Vec<usize>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> i64 {
        self.dist[a * self.n + b]
    }

    pub fn next_hop(&self, a: usize, b: usize) -> usize {
        self.next_hop[a * self.n + b]
    }

    pub fn max_entry(&self) -> i64 {
        self.dist.iter().copied().max().unwrap_or(0)
    }

    /// Node sequence of one shortest path from `a` to `b`, both ends included.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let mut out = vec![a];
        let mut cur = a;
        while cur != b {
            cur = self.next_hop(cur, b);
            out.push(cur);
        }
        out
    }
}

/// Floyd–Warshall over the instance edges. Parallel edges keep the cheapest.
pub fn all_pairs_shortest_paths(instance: &Instance) -> Result<DistanceMatrix> {
    let n = instance.node_count;
    let mut dist = vec![UNREACHABLE; n * n];
    let mut next_hop = vec![usize::MAX; n * n];
    for i in 0..n {
        dist[i * n + i] = 0;
        next_hop[i * n + i] = i;
    }
    for e in &instance.edges {
        if e.u >= n || e.v >= n {
            return Err(CarpError::InvalidInstance(format!(
                "edge ({}, {}) references a node outside 0..{n}",
                e.u, e.v
            )));
        }
        if e.cost < dist[e.u * n + e.v] {
            dist[e.u * n + e.v] = e.cost;
            dist[e.v * n + e.u] = e.cost;
            next_hop[e.u * n + e.v] = e.v;
            next_hop[e.v * n + e.u] = e.u;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik >= UNREACHABLE {
                continue;
            }
            for j in 0..n {
                let through = dik + dist[k * n + j];
                if through < dist[i * n + j] {
                    dist[i * n + j] = through;
                    next_hop[i * n + j] = next_hop[i * n + k];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if dist[i * n + j] >= UNREACHABLE {
                return Err(CarpError::Disconnected { from: i, to: j });
            }
        }
    }
    Ok(DistanceMatrix { n, dist, next_hop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Edge;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize, i64)]) -> Instance {
        Instance {
            name: "g".into(),
            node_count: n,
            depot: 0,
            capacity: 100,
            edges: edges
                .iter()
                .map(|&(u, v, c)| Edge::deadhead(u, v, c))
                .collect(),
        }
    }

    #[test]
    fn triangle_prefers_two_hop_path() {
        let d = all_pairs_shortest_paths(&graph(3, &[(0, 1, 2), (1, 2, 3), (0, 2, 10)])).unwrap();
        assert_eq!(d.get(0, 2), 5);
        assert_eq!(d.path(0, 2), vec![0, 1, 2]);
        for a in 0..3 {
            assert_eq!(d.get(a, a), 0);
        }
    }

    #[test]
    fn single_edge() {
        let d = all_pairs_shortest_paths(&graph(2, &[(0, 1, 7)])).unwrap();
        assert_eq!(d.get(0, 1), 7);
        assert_eq!(d.get(1, 0), 7);
    }

    #[test]
    fn disconnected_graph_names_pair() {
        let err = all_pairs_shortest_paths(&graph(3, &[(0, 1, 1)])).unwrap_err();
        assert_eq!(err, CarpError::Disconnected { from: 0, to: 2 });
    }

    /// Exhaustive simple-path enumeration by DFS.
    fn brute_force(n: usize, edges: &[(usize, usize, i64)], a: usize, b: usize) -> i64 {
        fn dfs(
            cur: usize,
            b: usize,
            cost: i64,
            seen: &mut Vec<bool>,
            adj: &[Vec<(usize, i64)>],
            best: &mut i64,
        ) {
            if cur == b {
                *best = (*best).min(cost);
                return;
            }
            for &(m, c) in &adj[cur] {
                if !seen[m] {
                    seen[m] = true;
                    dfs(m, b, cost + c, seen, adj, best);
                    seen[m] = false;
                }
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v, c) in edges {
            adj[u].push((v, c));
            adj[v].push((u, c));
        }
        let mut seen = vec![false; n];
        seen[a] = true;
        let mut best = i64::MAX;
        dfs(a, b, 0, &mut seen, &adj, &mut best);
        best
    }

    fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, i64)>)> {
        (2usize..=7).prop_flat_map(|n| {
            let tree = proptest::collection::vec((any::<prop::sample::Index>(), 1i64..20), n - 1);
            let extra = proptest::collection::vec((0..n, 0..n, 1i64..20), 0..8);
            (Just(n), tree, extra).prop_map(|(n, tree, extra)| {
                let mut edges: Vec<(usize, usize, i64)> = tree
                    .into_iter()
                    .enumerate()
                    .map(|(k, (idx, c))| (k + 1, idx.index(k + 1), c))
                    .collect();
                edges.extend(extra.into_iter().filter(|(u, v, _)| u != v));
                (n, edges)
            })
        })
    }

    proptest! {
        #[test]
        fn matches_path_enumeration((n, edges) in connected_graph()) {
            let d = all_pairs_shortest_paths(&graph(n, &edges)).unwrap();
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(d.get(a, b), brute_force(n, &edges, a, b));
                    prop_assert_eq!(d.get(a, b), d.get(b, a));
                    let path = d.path(a, b);
                    let walked: i64 = path.windows(2).map(|w| d.get(w[0], w[1])).sum();
                    prop_assert_eq!(walked, d.get(a, b));
                }
            }
        }
    }
}
