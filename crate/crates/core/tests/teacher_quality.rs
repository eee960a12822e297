use carp_core::arc_graph::ArcGraph;
use carp_core::baselines::ps_best_of_rules;
use carp_core::bench::{dataset_instance, DatasetSpec};
use carp_core::shortest_path::all_pairs_shortest_paths;
use carp_core::teacher::{exact_solve, local_search_solve, LocalSearchConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn local_search_finds_the_optimum_on_tiny_instances() {
    let mut matches = 0;
    let total = 200;
    for i in 0..total {
        let required = 2 + i % 5;
        let spec = DatasetSpec {
            name: "tiny".into(),
            train_count: 0,
            test_count: total,
            nodes: (required + 1, required + 4),
            required,
            demand: (5, 15),
            capacity: 30,
            seed: 7,
        };
        let inst = dataset_instance(&spec, true, i).unwrap();
        let dist = all_pairs_shortest_paths(&inst).unwrap();
        let graph = ArcGraph::transform(&inst, &dist);
        let exact = exact_solve(&inst, &dist, &graph).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let ls = local_search_solve(&inst, &dist, &graph, LocalSearchConfig::default(), &mut rng).unwrap();
        let (ps, _) = ps_best_of_rules(&inst, &dist, &graph, 0).unwrap();
        assert!(ls.total_cost >= exact.total_cost, "{}: below the optimum", inst.name);
        assert!(ls.total_cost <= ps.total_cost, "{}: worse than its start", inst.name);
        matches += (ls.total_cost == exact.total_cost) as usize;
    }
    assert!(matches * 100 >= 95 * total, "optimum matched on {matches}/{total}");
}
