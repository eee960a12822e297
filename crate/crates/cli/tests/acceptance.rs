//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stderr, so the summary survives output capture.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use carp_core::arc_graph::{ArcGraph, DEPOT_ARC};
use carp_core::autodiff::{Matrix, ParamSet, Tape};
use carp_core::baselines::ps_best_of_rules;
use carp_core::bench::{dataset_instance, generate_dataset, parse_instances, DatasetSpec};
use carp_core::env::{apply, legal_actions, rollout_cost_identity, EnvState, Trajectory};
use carp_core::features::{build_features, classical_mds, double_center};
use carp_core::instance::{Edge, Instance};
use carp_core::model::{decode_logits, encode, gat_encode, greedy_solution, InstanceContext, ModelConfig, Policy};
use carp_core::path_opt::{dp_split, dual_beam_decode, ServiceOrder};
use carp_core::shortest_path::{all_pairs_shortest_paths, DistanceMatrix};
use carp_core::solution::{evaluate_solution, Solution};
use carp_core::teacher::{
    canonicalize, exact_solve, labelize, local_search_solve, LabelOrder, LabelSet, LocalSearchConfig,
};
use carp_core::training::{evaluate_policy, finetune_ppo, pretrain_sl_restarts, teacher_match, PpoConfig, SlConfig};

fn report(n: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

fn gate(n: usize, pass: bool, detail: String) {
    report(n, pass, &detail);
    assert!(pass, "criterion {n}: {detail}");
}

fn small_spec(seed: u64, required: usize, capacity: u32) -> DatasetSpec {
    DatasetSpec {
        name: format!("s{seed}"),
        train_count: 0,
        test_count: 0,
        nodes: (required.max(3), required.max(3) + 4),
        required,
        demand: (5, 20),
        capacity,
        seed,
    }
}

fn prepared(inst: Instance) -> (Instance, DistanceMatrix, ArcGraph) {
    let dist = all_pairs_shortest_paths(&inst).unwrap();
    let graph = ArcGraph::transform(&inst, &dist);
    (inst, dist, graph)
}

/// One arc per required edge, `(forward, reverse)`.
fn arc_pairs(graph: &ArcGraph) -> Vec<(usize, usize)> {
    (0..graph.len())
        .filter(|&a| !graph.arcs[a].is_depot && a < graph.arcs[a].reverse_id)
        .map(|a| (a, graph.arcs[a].reverse_id))
        .collect()
}

fn cost_of(inst: &Instance, dist: &DistanceMatrix, routes: Vec<Vec<usize>>) -> (i64, bool) {
    let sol = Solution {
        routes,
        ..Default::default()
    };
    let eval = evaluate_solution(inst, dist, &sol).unwrap();
    (eval.total_cost, eval.feasible)
}

/// Cheapest feasible cut of `order` into routes, found by trying every
/// subset of cut points and pricing each with `evaluate_solution`.
fn best_cut(inst: &Instance, dist: &DistanceMatrix, order: &[usize]) -> Option<i64> {
    let t = order.len();
    let mut best: Option<i64> = None;
    for mask in 0u32..(1 << (t.max(1) - 1)) {
        let mut routes = vec![Vec::new()];
        for (i, &a) in order.iter().enumerate() {
            routes.last_mut().unwrap().push(a);
            if i + 1 < t && mask & (1 << i) != 0 {
                routes.push(Vec::new());
            }
        }
        let (cost, feasible) = cost_of(inst, dist, routes);
        if feasible && best.map_or(true, |b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

#[test]
fn criterion_01_split_matches_subset_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut multi_route = 0;
    for i in 0..500 {
        let required = rng.gen_range(1..=10);
        let inst = dataset_instance(&small_spec(100 + i as u64, required, 40), true, i).unwrap();
        let (inst, dist, graph) = prepared(inst);
        let mut order: Vec<usize> = arc_pairs(&graph)
            .into_iter()
            .map(|(f, r)| if rng.gen() { f } else { r })
            .collect();
        order.shuffle(&mut rng);
        let split = dp_split(&ServiceOrder { arcs: order.clone() }, &graph).unwrap();
        let oracle = best_cut(&inst, &dist, &order).unwrap();
        mismatches += (split.total() != oracle) as usize;
        multi_route += !split.positions.is_empty() as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    gate(
        1,
        mismatches == 0 && secs < 10.0,
        format!("500 orders, {mismatches} mismatches, {multi_route} needed returns, {secs:.2}s"),
    );
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Every edge order, every direction choice and every set of depot returns.
fn brute_force(inst: &Instance, dist: &DistanceMatrix, graph: &ArcGraph) -> i64 {
    let pairs = arc_pairs(graph);
    let m = pairs.len();
    let mut best = i64::MAX;
    for perm in permutations(&(0..m).collect::<Vec<_>>()) {
        for dirs in 0u32..(1 << m) {
            let order: Vec<usize> = perm
                .iter()
                .map(|&k| if dirs & (1 << k) != 0 { pairs[k].1 } else { pairs[k].0 })
                .collect();
            if let Some(c) = best_cut(inst, dist, &order) {
                best = best.min(c);
            }
        }
    }
    best
}

#[test]
fn criterion_02_exact_solver_matches_brute_force() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for i in 0..200 {
        let required = rng.gen_range(1..=4);
        let inst = dataset_instance(&small_spec(900 + i as u64, required, 30), true, i).unwrap();
        let (inst, dist, graph) = prepared(inst);
        let exact = exact_solve(&inst, &dist, &graph).unwrap();
        let eval = evaluate_solution(&inst, &dist, &exact).unwrap();
        let ok = eval.feasible && eval.total_cost == exact.total_cost && exact.total_cost == brute_force(&inst, &dist, &graph);
        mismatches += !ok as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    gate(
        2,
        mismatches == 0 && secs < 60.0,
        format!("200 instances, {mismatches} mismatches, {secs:.2}s"),
    );
}

const FD_STEP: f64 = 1e-4;

fn grad_config() -> ModelConfig {
    ModelConfig {
        d_h: 4,
        n_layers: 1,
        n_heads: 2,
        clip_c: 10.0,
        mds_dim: 2,
    }
}

fn grad_instance(seed: u64) -> InstanceContext {
    let inst = dataset_instance(&small_spec(seed, 3, 30), true, 0).unwrap();
    InstanceContext::new(inst, grad_config().mds_dim).unwrap()
}

/// `||analytic - fd|| / max(||analytic||, ||fd||)` over every parameter,
/// plus the number of coordinates skipped because the two probes landed on
/// different sides of a ReLU-style breakpoint.
fn gradient_error(
    policy: &Policy,
    loss: &dyn Fn(&Policy, &mut Tape) -> carp_core::Result<carp_core::autodiff::Var>,
) -> (f64, usize, usize) {
    let mut tape = Tape::new();
    let l = loss(policy, &mut tape).unwrap();
    tape.backward(l).unwrap();
    let mut grads: ParamSet = policy.params.clone();
    grads.zero_grad();
    grads.accumulate(&tape, 1.0);
    let probe_at = |p: &Policy| {
        let mut t = Tape::new();
        let l = loss(p, &mut t).unwrap();
        (t.scalar(l), t.kink_pattern())
    };
    let (mut diff, mut g_norm, mut fd_norm) = (0.0, 0.0, 0.0);
    let (mut checked, mut skipped) = (0, 0);
    let mut probe = policy.clone();
    for id in 0..policy.params.len() {
        for k in 0..policy.params.value(id).data.len() {
            let orig = probe.params.value(id).data[k];
            probe.params.value_mut(id).data[k] = orig + FD_STEP;
            let (up, up_kinks) = probe_at(&probe);
            probe.params.value_mut(id).data[k] = orig - FD_STEP;
            let (down, down_kinks) = probe_at(&probe);
            probe.params.value_mut(id).data[k] = orig;
            if up_kinks != down_kinks {
                skipped += 1;
                continue;
            }
            checked += 1;
            let fd = (up - down) / (2.0 * FD_STEP);
            let g = grads.grad(id).data[k];
            diff += (g - fd).powi(2);
            g_norm += g * g;
            fd_norm += fd * fd;
        }
    }
    let scale = g_norm.sqrt().max(fd_norm.sqrt());
    assert!(scale > 1e-8, "gradient vanished");
    (diff.sqrt() / scale, checked, skipped)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn mid_state(ctx: &InstanceContext, rng: &mut ChaCha8Rng) -> EnvState {
    let mut state = EnvState::initial(&ctx.graph);
    for _ in 0..rng.gen_range(0..3) {
        if state.forced_action().is_some() {
            break;
        }
        let legal: Vec<usize> = legal_actions(&state, &ctx.graph, true)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(a, _)| a)
            .collect();
        apply(&mut state, *legal.choose(rng).unwrap(), &ctx.graph, true).unwrap();
    }
    let choices = legal_actions(&state, &ctx.graph, true).iter().filter(|&&m| m).count();
    if choices < 2 {
        return EnvState::initial(&ctx.graph);
    }
    state
}

#[test]
fn criterion_03_gradients_match_finite_differences() {
    let cfg = grad_config();
    let draws = 20;
    let mut worst = [0.0f64; 4];
    let (mut checked, mut skipped) = (0usize, 0usize);
    for draw in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + draw);
        let policy = Policy::new(cfg, &mut rng).unwrap();
        let ctx = grad_instance(300 + draw);
        let state = mid_state(&ctx, &mut rng);
        let n = ctx.graph.len();
        let features = build_features(&ctx.graph, &ctx.mds, ctx.scale, &state);
        let incoming = ctx.incoming_weights().clone();
        let weights = random_matrix(n, cfg.d_h, &mut rng);
        let h_input = random_matrix(n, cfg.d_h, &mut rng);
        let mask = legal_actions(&state, &ctx.graph, true);
        let mut logit_weights = random_matrix(1, n, &mut rng);
        for (a, keep) in mask.iter().enumerate() {
            if !keep {
                logit_weights.data[a] = 0.0;
            }
        }
        let gat = |p: &Policy, t: &mut Tape| {
            let f = t.constant(features.clone());
            let e = t.constant(incoming.clone());
            let h = gat_encode(t, p, f, e)?;
            let w = t.constant(weights.clone());
            let prod = t.mul(h, w)?;
            Ok(t.sum(prod))
        };
        let layer = |p: &Policy, t: &mut Tape| {
            let h0 = t.constant(h_input.clone());
            let h = encode(t, p, h0)?;
            let w = t.constant(weights.clone());
            let prod = t.mul(h, w)?;
            Ok(t.sum(prod))
        };
        let remaining = state.remaining_capacity as f64 / ctx.graph.capacity as f64;
        let half = if 2 * state.remaining_capacity > ctx.graph.capacity { 1.0 } else { 0.0 };
        let head = |p: &Policy, t: &mut Tape| {
            let h = t.constant(h_input.clone());
            let logp = decode_logits(t, p, h, state.last(), remaining, half, &mask)?;
            let w = t.constant(logit_weights.clone());
            let prod = t.mul(logp, w)?;
            Ok(t.sum(prod))
        };
        let labels = {
            let (sol, _) = ps_best_of_rules(&ctx.instance, &ctx.dist, &ctx.graph, draw).unwrap();
            labelize(&ctx.instance, &ctx.dist, &ctx.graph, &sol).unwrap()
        };
        let states = labels.states(&ctx.graph).unwrap();
        let full = |p: &Policy, t: &mut Tape| {
            let mut total = None;
            for (s, &a) in states.iter().zip(&labels.actions) {
                if s.forced_action().is_some() {
                    continue;
                }
                let mask = legal_actions(s, &ctx.graph, true);
                let logp = p.forward(t, &ctx, s, &mask)?;
                let pick = t.pick(logp, 0, a)?;
                let nll = t.scale(pick, -1.0);
                total = Some(match total {
                    None => nll,
                    Some(acc) => t.add(acc, nll)?,
                });
            }
            Ok(total.expect("at least one free step"))
        };
        let results = [
            gradient_error(&policy, &gat),
            gradient_error(&policy, &layer),
            gradient_error(&policy, &head),
            gradient_error(&policy, &full),
        ];
        for (w, (e, c, s)) in worst.iter_mut().zip(results) {
            *w = w.max(e);
            checked += c;
            skipped += s;
        }
    }
    let pass = worst.iter().all(|&e| e < 1e-4) && skipped * 100 <= checked;
    gate(
        3,
        pass,
        format!(
            "{draws} draws each, h = {FD_STEP:e}, worst relative error: gat {:.2e}, encoder {:.2e}, decoder {:.2e}, loss {:.2e}; {checked} coordinates checked, {skipped} skipped at breakpoints",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

#[test]
fn criterion_04_rollout_cost_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    for i in 0..1000 {
        let required = rng.gen_range(1..=25);
        let inst = dataset_instance(&small_spec(4000 + i as u64, required, 60), true, i).unwrap();
        let (inst, dist, graph) = prepared(inst);
        let constrained = i % 4 != 0;
        let mut state = EnvState::initial(&graph);
        let mut traj = Trajectory::default();
        loop {
            let a = match state.forced_action() {
                Some(a) => a,
                None => {
                    let legal: Vec<usize> = legal_actions(&state, &graph, constrained)
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m)
                        .map(|(a, _)| a)
                        .collect();
                    *legal.choose(&mut rng).unwrap()
                }
            };
            let r = apply(&mut state, a, &graph, constrained).unwrap();
            traj.actions.push(a);
            traj.rewards.push(r);
            if a == DEPOT_ARC && state.unserved_edges() == 0 {
                break;
            }
        }
        let mut routes = vec![Vec::new()];
        for &a in &traj.actions {
            if a == DEPOT_ARC {
                routes.push(Vec::new());
            } else {
                routes.last_mut().unwrap().push(a);
            }
        }
        routes.retain(|r| !r.is_empty());
        let (evaluated, _) = cost_of(&inst, &dist, routes);
        let service: i64 = inst.edges.iter().filter(|e| e.required).map(|e| e.cost).sum();
        let reward: i64 = traj.rewards.iter().sum();
        let ok = evaluated == service - reward && rollout_cost_identity(&inst, &dist, &traj).is_ok();
        failures += !ok as usize;
    }
    gate(4, failures == 0, format!("1000 random rollouts, {failures} identity failures"));
}

fn small_model() -> ModelConfig {
    ModelConfig {
        d_h: 16,
        n_layers: 1,
        n_heads: 2,
        ..ModelConfig::default()
    }
}

#[test]
fn criterion_05_path_optimizer_never_loses_to_greedy() {
    let (mut worse, mut better) = (0, 0);
    let total = 1000;
    for i in 0..total {
        let required = [4, 6, 8, 10, 12][i % 5];
        let inst = dataset_instance(&small_spec(5000 + i as u64, required, 30), true, i).unwrap();
        let cfg = small_model();
        let policy = Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
        let ctx = InstanceContext::new(inst, cfg.mds_dim).unwrap();
        let greedy = greedy_solution(&policy, &ctx, true).unwrap();
        let po = dual_beam_decode(&policy, &ctx, 2).unwrap();
        let g = evaluate_solution(&ctx.instance, &ctx.dist, &greedy).unwrap();
        let p = evaluate_solution(&ctx.instance, &ctx.dist, &po).unwrap();
        assert!(g.feasible && p.feasible);
        worse += (p.total_cost > g.total_cost) as usize;
        better += (p.total_cost < g.total_cost) as usize;
    }
    gate(
        5,
        worse == 0 && better > 0,
        format!("{total} decodes: {worse} worse than greedy, {better} strictly better"),
    );
}

#[test]
fn criterion_06_every_method_is_feasible() {
    let cfg = small_model();
    let policy = Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let ls = LocalSearchConfig {
        iterations: 200,
        patience: 50,
        ..LocalSearchConfig::default()
    };
    let mut violations = 0;
    let mut solved = 0;
    for (s, required) in [20, 30, 40, 50, 60].into_iter().enumerate() {
        let mut spec = DatasetSpec::mini(required).unwrap();
        spec.seed = 600 + s as u64;
        for i in 0..400 {
            let inst = dataset_instance(&spec, true, i).unwrap();
            let ctx = InstanceContext::new(inst, cfg.mds_dim).unwrap();
            let (inst, dist, graph) = (&ctx.instance, &ctx.dist, &ctx.graph);
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let sols = [
                ps_best_of_rules(inst, dist, graph, i as u64).unwrap().0,
                local_search_solve(inst, dist, graph, ls, &mut rng).unwrap(),
                greedy_solution(&policy, &ctx, true).unwrap(),
                dual_beam_decode(&policy, &ctx, 2).unwrap(),
            ];
            for sol in &sols {
                let eval = evaluate_solution(inst, dist, sol).unwrap();
                violations += (!eval.feasible || eval.total_cost != sol.total_cost) as usize;
                solved += 1;
            }
        }
    }
    let mut exact_solved = 0;
    for i in 0..200 {
        let required = 1 + i % 8;
        let inst = dataset_instance(&small_spec(6600 + i as u64, required, 40), true, i).unwrap();
        let (inst, dist, graph) = prepared(inst);
        let sol = exact_solve(&inst, &dist, &graph).unwrap();
        let eval = evaluate_solution(&inst, &dist, &sol).unwrap();
        violations += (!eval.feasible || eval.total_cost != sol.total_cost) as usize;
        exact_solved += 1;
    }
    gate(
        6,
        violations == 0,
        format!(
            "2000 instances (Task20..60-mini) x 4 methods = {solved} solutions plus {exact_solved} exact solves on |E_R| <= 8, {violations} violations"
        ),
    );
}

const PIPE_MODEL: ModelConfig = ModelConfig {
    d_h: 64,
    n_layers: 2,
    n_heads: 4,
    clip_c: 10.0,
    mds_dim: 8,
};
const PIPE_SL_EPOCHS: usize = 10;
const PIPE_SL_LR: f64 = 1e-3;
const PIPE_SL_RESTARTS: usize = 4;
const PIPE_SL_PROBE_EPOCHS: usize = 2;
const PIPE_PPO_EPISODES: usize = 200;
const PIPE_PPO_LR: f64 = 1e-4;
const PIPE_VALIDATION: usize = 64;

struct Pipeline {
    greedy: f64,
    po: f64,
    ps: f64,
    teacher: f64,
    random: f64,
    sl_greedy: f64,
    heldout_accuracy: f64,
    restart_accuracy: Vec<f64>,
    chosen: usize,
    swaps: usize,
    seconds: f64,
}

fn label_all(contexts: &[InstanceContext]) -> (Vec<LabelSet>, f64) {
    let mut costs = 0.0;
    let labels = contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| {
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let (inst, dist, graph) = (&ctx.instance, &ctx.dist, &ctx.graph);
            let sol = local_search_solve(inst, dist, graph, LocalSearchConfig::default(), &mut rng).unwrap();
            costs += sol.total_cost as f64;
            let sol = canonicalize(&sol, graph, LabelOrder::NearestFirst);
            labelize(inst, dist, graph, &sol).unwrap()
        })
        .collect();
    (labels, costs / contexts.len() as f64)
}

fn random_policy_mean(contexts: &[InstanceContext]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total = 0i64;
    for ctx in contexts {
        let mut state = EnvState::initial(&ctx.graph);
        let mut reward = 0;
        loop {
            let a = match state.forced_action() {
                Some(a) => a,
                None => {
                    let legal: Vec<usize> = legal_actions(&state, &ctx.graph, true)
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m)
                        .map(|(a, _)| a)
                        .collect();
                    *legal.choose(&mut rng).unwrap()
                }
            };
            reward += apply(&mut state, a, &ctx.graph, true).unwrap();
            if a == DEPOT_ARC && state.unserved_edges() == 0 {
                break;
            }
        }
        total += ctx.instance.service_cost() - reward;
    }
    total as f64 / contexts.len() as f64
}

fn mean(xs: impl Iterator<Item = i64>) -> f64 {
    let v: Vec<i64> = xs.collect();
    v.iter().sum::<i64>() as f64 / v.len() as f64
}

fn run_pipeline() -> Pipeline {
    let start = Instant::now();
    let spec = DatasetSpec::preset("Task20-mini").unwrap();
    let (train, test) = generate_dataset(&spec).unwrap();
    let mut held = spec.clone();
    held.seed += 1000;
    let validation: Vec<Instance> = (0..PIPE_VALIDATION).map(|i| dataset_instance(&held, true, i).unwrap()).collect();
    let ctx = |v: Vec<Instance>| -> Vec<InstanceContext> {
        v.into_iter().map(|i| InstanceContext::new(i, PIPE_MODEL.mds_dim).unwrap()).collect()
    };
    let (train, test, validation) = (ctx(train), ctx(test), ctx(validation));
    let (train_labels, _) = label_all(&train);
    let (test_labels, teacher) = label_all(&test);
    let (validation_labels, _) = label_all(&validation);

    let sl = SlConfig {
        epochs: PIPE_SL_EPOCHS,
        learning_rate: PIPE_SL_LR,
        ..SlConfig::default()
    };
    let (policy, restarts) = pretrain_sl_restarts(
        PIPE_MODEL,
        &train,
        &train_labels,
        sl,
        PIPE_SL_RESTARTS,
        PIPE_SL_PROBE_EPOCHS,
        (&validation, &validation_labels),
        &mut |_| {},
    )
    .unwrap();
    let (heldout_accuracy, _) = teacher_match(&policy, &test, &test_labels).unwrap();
    let sl_greedy = evaluate_policy(&policy, &test).unwrap().mean;

    let ppo = PpoConfig {
        episodes: PIPE_PPO_EPISODES,
        learning_rate: PIPE_PPO_LR,
        eval_pool: PIPE_VALIDATION,
        greedy_continuation: true,
        seed: 7,
        ..PpoConfig::default()
    };
    let (policy, rl) = finetune_ppo(&policy, &train, &validation, ppo, &mut |_| {}).unwrap();

    let greedy = evaluate_policy(&policy, &test).unwrap().mean;
    let po = mean(test.iter().map(|c| dual_beam_decode(&policy, c, 2).unwrap().total_cost));
    let ps = mean(
        test.iter()
            .map(|c| ps_best_of_rules(&c.instance, &c.dist, &c.graph, 0).unwrap().0.total_cost),
    );
    Pipeline {
        greedy,
        po,
        ps,
        teacher,
        random: random_policy_mean(&test),
        sl_greedy,
        heldout_accuracy,
        restart_accuracy: restarts.accuracies,
        chosen: restarts.chosen,
        swaps: rl.swaps,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn pipeline() -> &'static Pipeline {
    static PIPELINE: OnceLock<Pipeline> = OnceLock::new();
    PIPELINE.get_or_init(run_pipeline)
}

#[test]
fn criterion_07_training_beats_random_and_tracks_path_scanning() {
    let p = pipeline();
    let vs_random = 100.0 * (p.random - p.greedy) / p.random;
    let greedy_ratio = 100.0 * p.greedy / p.ps;
    let po_ratio = 100.0 * p.po / p.ps;
    let pass = vs_random >= 15.0 && greedy_ratio <= 105.0 && po_ratio <= 100.0;
    gate(
        7,
        pass,
        format!(
            "Task20-mini test means: random {:.1}, PS {:.1}, teacher {:.1}, SL greedy {:.1}, SL+RL greedy {:.1} ({vs_random:.1}% below random, {greedy_ratio:.1}% of PS), PO {:.1} ({po_ratio:.1}% of PS); {} baseline swaps; {:.0}s",
            p.random, p.ps, p.teacher, p.sl_greedy, p.greedy, p.po, p.swaps, p.seconds
        ),
    );
}

#[test]
fn criterion_08_held_out_teacher_match() {
    let p = pipeline();
    gate(
        8,
        p.heldout_accuracy > 0.60,
        format!(
            "held-out teacher-match accuracy {:.1}% (restart {} of {:?} by validation accuracy after {PIPE_SL_PROBE_EPOCHS} epochs)",
            100.0 * p.heldout_accuracy,
            p.chosen,
            p.restart_accuracy.iter().map(|a| format!("{:.1}%", 100.0 * a)).collect::<Vec<_>>()
        ),
    );
}

fn carp(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_carp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("carp runs");
    assert!(out.status.success(), "carp {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn criterion_09_cli_is_deterministic() {
    let dir = scratch("determinism");
    let cfg = small_model();
    Policy::new(cfg, &mut ChaCha8Rng::seed_from_u64(9))
        .unwrap()
        .save(&dir.join("model.ckpt"))
        .unwrap();
    let mut differing = Vec::new();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let gen_dir = format!("gen{run}");
        carp(&dir, &["gen", "--preset", "Task20-mini", "--train", "3", "--test", "3", "--seed", "5", "--out", &gen_dir]);
        let train = std::fs::read(dir.join(&gen_dir).join("train.txt")).unwrap();
        let test = std::fs::read(dir.join(&gen_dir).join("test.txt")).unwrap();
        let data = format!("{gen_dir}/test.txt");
        let label = carp(&dir, &["label", "--data", &data, "--seed", "5"]);
        let first = parse_instances(std::str::from_utf8(&test).unwrap()).unwrap().remove(0);
        std::fs::write(dir.join("one.txt"), first.to_text()).unwrap();
        let greedy = carp(&dir, &["solve", "--instance", "one.txt", "--method", "daam", "--mode", "greedy", "--model", "model.ckpt"]);
        let beam = carp(&dir, &["solve", "--instance", "one.txt", "--method", "daam", "--mode", "beam", "--model", "model.ckpt"]);
        outputs.push([train, test, label, greedy, beam]);
    }
    for (name, (a, b)) in ["gen train", "gen test", "label", "solve greedy", "solve beam"]
        .iter()
        .zip(outputs[0].iter().zip(&outputs[1]))
    {
        if a != b || a.is_empty() {
            differing.push(*name);
        }
    }
    gate(
        9,
        differing.is_empty(),
        format!("gen, label, solve greedy, solve beam twice each; differing: {differing:?}"),
    );
}

fn collinear_path(gaps: &[i64]) -> Instance {
    Instance {
        name: "line".into(),
        node_count: gaps.len() + 1,
        depot: 0,
        capacity: 100,
        edges: gaps
            .iter()
            .enumerate()
            .map(|(k, &g)| Edge::required(k, k + 1, g, 1))
            .collect(),
    }
}

#[test]
fn criterion_10_mds_reconstructs_collinear_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst_rel, mut worst_center) = (0.0f64, 0.0f64);
    for trial in 0..200 {
        let n = 2 + trial % 19;
        let gaps: Vec<i64> = (1..n).map(|_| rng.gen_range(1..=9)).collect();
        let inst = collinear_path(&gaps);
        let dist = all_pairs_shortest_paths(&inst).unwrap();
        let mds = classical_mds(&dist, 1 + trial % 4);
        let mut err: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: f64 = mds
                    .node(i)
                    .iter()
                    .zip(mds.node(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                err = err.max((d - dist.get(i, j) as f64).abs());
            }
        }
        worst_rel = worst_rel.max(err / dist.max_entry() as f64);
        let b = double_center(&dist);
        for c in 0..n {
            worst_center = worst_center.max(b.column(c).sum().abs());
        }
    }
    gate(
        10,
        worst_rel <= 1e-6 && worst_center <= 1e-9,
        format!("200 path graphs (n <= 20): worst relative error {worst_rel:.2e}, worst column sum {worst_center:.2e}"),
    );
}
