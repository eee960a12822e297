//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns plain strings so the page needs no glue
//! beyond what `wasm-bindgen` generates. Instances travel in the text format,
//! results as JSON.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use carp_core::bench::{generate_instance, DatasetSpec};
use carp_core::features::classical_mds;
use carp_core::instance::Instance;
use carp_core::model::InstanceContext;
use carp_core::path_opt::{split_solution, ServiceOrder};
use carp_core::solution::Solution;
use carp_core::baselines::{path_scanning, ps_best_of_rules, PsRule};
use carp_core::teacher::{local_search_solve, LocalSearchConfig};

fn fail(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A random road-like instance with `required` required edges, as text.
#[wasm_bindgen]
pub fn generate(required: usize, seed: u64) -> Result<String, JsValue> {
    generate_text(required, seed).map_err(fail)
}

/// Planar node coordinates recovered from shortest-path distances, plus the
/// edge list, as JSON.
#[wasm_bindgen]
pub fn layout(instance: &str) -> Result<String, JsValue> {
    layout_json(instance).map(|v| v.to_string()).map_err(fail)
}

/// Solves with `ps`, `ps-split` or `teacher` and returns routes as node walks.
#[wasm_bindgen]
pub fn solve(instance: &str, method: &str, seed: u64) -> Result<String, JsValue> {
    solve_json(instance, method, seed).map(|v| v.to_string()).map_err(fail)
}

pub fn generate_text(required: usize, seed: u64) -> Result<String, String> {
    let lo = required + required / 4 + 2;
    let spec = DatasetSpec {
        name: "demo".into(),
        train_count: 1,
        test_count: 0,
        nodes: (lo, lo + 5),
        required,
        demand: (5, 10),
        capacity: 100,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = generate_instance(&spec, &format!("demo-{seed}"), &mut rng).map_err(|e| e.to_string())?;
    Ok(inst.to_text())
}

pub fn layout_json(text: &str) -> Result<Value, String> {
    let inst = Instance::parse(text).map_err(|e| e.to_string())?;
    let dist = carp_core::shortest_path::all_pairs_shortest_paths(&inst).map_err(|e| e.to_string())?;
    let mds = classical_mds(&dist, 2);
    let nodes: Vec<Value> = (0..inst.node_count)
        .map(|n| json!({ "x": mds.node(n)[0], "y": mds.node(n)[1] }))
        .collect();
    let edges: Vec<Value> = inst
        .edges
        .iter()
        .map(|e| json!({ "u": e.u, "v": e.v, "cost": e.cost, "demand": e.demand, "required": e.required }))
        .collect();
    Ok(json!({ "depot": inst.depot, "capacity": inst.capacity, "nodes": nodes, "edges": edges }))
}

pub fn solve_json(text: &str, method: &str, seed: u64) -> Result<Value, String> {
    let inst = Instance::parse(text).map_err(|e| e.to_string())?;
    let ctx = InstanceContext::new(inst, 2).map_err(|e| e.to_string())?;
    let (inst, dist, graph) = (&ctx.instance, &ctx.dist, &ctx.graph);
    let sol = match method {
        "ps" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            path_scanning(inst, dist, graph, PsRule::HybridHalfCapacity, &mut rng)
        }
        "ps-split" => ps_best_of_rules(inst, dist, graph, seed)
            .and_then(|(s, _)| split_solution(&ServiceOrder::from_solution(&s), &ctx).map(|(t, _)| t)),
        "teacher" => {
            let cfg = LocalSearchConfig {
                iterations: 3000,
                ..Default::default()
            };
            local_search_solve(inst, dist, graph, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
        }
        other => return Err(format!("unknown method `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    Ok(routes_json(&ctx, &sol))
}

fn routes_json(ctx: &InstanceContext, sol: &Solution) -> Value {
    let arcs = &ctx.graph.arcs;
    let routes: Vec<Value> = sol
        .routes
        .iter()
        .map(|route| {
            let mut at = ctx.instance.depot;
            let mut walk = vec![at];
            let mut served = Vec::new();
            let mut load = 0;
            for &id in route {
                walk.extend(ctx.dist.path(at, arcs[id].start).into_iter().skip(1));
                walk.push(arcs[id].end);
                served.push(json!([arcs[id].start, arcs[id].end]));
                load += arcs[id].demand;
                at = arcs[id].end;
            }
            walk.extend(ctx.dist.path(at, ctx.instance.depot).into_iter().skip(1));
            json!({ "walk": walk, "served": served, "load": load })
        })
        .collect();
    json!({
        "total_cost": sol.total_cost,
        "deadhead_cost": sol.deadhead_cost,
        "routes": routes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_layout_solve() {
        let text = generate_text(12, 3).unwrap();
        assert_eq!(text, generate_text(12, 3).unwrap());
        let lay = layout_json(&text).unwrap();
        assert_eq!(lay["edges"].as_array().unwrap().iter().filter(|e| e["required"] == true).count(), 12);
        let mut costs = Vec::new();
        for m in ["ps", "ps-split", "teacher"] {
            let out = solve_json(&text, m, 1).unwrap();
            let routes = out["routes"].as_array().unwrap();
            let served: usize = routes.iter().map(|r| r["served"].as_array().unwrap().len()).sum();
            assert_eq!(served, 12);
            assert!(routes.iter().all(|r| r["load"].as_u64().unwrap() <= 100));
            costs.push(out["total_cost"].as_i64().unwrap());
        }
        assert!(costs[2] <= costs[1]);
        assert!(solve_json(&text, "magic", 0).is_err());
    }
}
