use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::ps_best_of_rules;
use crate::env::routes_from_sequence;
use crate::error::{CarpError, Result};
use crate::model::{beam_search, greedy_solution, rollout, DecodeMode, InstanceContext, Policy};
use crate::path_opt::dual_beam_decode;
use crate::solution::{evaluate_solution, Solution};
use crate::teacher::{exact_solve, local_search_solve, LocalSearchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Daam,
    DaamPo,
    Ps,
    Teacher,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Daam => "daam",
            Method::DaamPo => "daam-po",
            Method::Ps => "ps",
            Method::Teacher => "teacher",
            Method::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [Method::Daam, Method::DaamPo, Method::Ps, Method::Teacher, Method::Exact]
            .into_iter()
            .find(|m| m.name() == s)
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, Method::Daam | Method::DaamPo)
    }
}

/// How [`solve_with`] runs each method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    /// Decoding used by plain `daam`.
    pub mode: DecodeChoice,
    pub beam_width: usize,
    pub local_search: LocalSearchConfig,
    pub seed: u64,
    /// Timed repetitions per instance; the median is reported.
    pub timing_runs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeChoice {
    Greedy,
    Sample,
    Beam,
}

impl DecodeChoice {
    pub fn parse(s: &str) -> Option<DecodeChoice> {
        match s {
            "greedy" => Some(DecodeChoice::Greedy),
            "sample" => Some(DecodeChoice::Sample),
            "beam" => Some(DecodeChoice::Beam),
            _ => None,
        }
    }
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            mode: DecodeChoice::Greedy,
            beam_width: 2,
            local_search: LocalSearchConfig::default(),
            seed: 0,
            timing_runs: 3,
        }
    }
}

/// Solves one instance with `method`.
pub fn solve_with(
    method: Method,
    ctx: &InstanceContext,
    policy: Option<&Policy>,
    settings: &SolveSettings,
) -> Result<Solution> {
    let need = || policy.ok_or_else(|| CarpError::Checkpoint(format!("method {} needs a model", method.name())));
    let (inst, dist, graph) = (&ctx.instance, &ctx.dist, &ctx.graph);
    match method {
        Method::Ps => Ok(ps_best_of_rules(inst, dist, graph, settings.seed)?.0),
        Method::Exact => exact_solve(inst, dist, graph),
        Method::Teacher => {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            local_search_solve(inst, dist, graph, settings.local_search, &mut rng)
        }
        Method::DaamPo => dual_beam_decode(need()?, ctx, settings.beam_width),
        Method::Daam => {
            let p = need()?;
            match settings.mode {
                DecodeChoice::Greedy => greedy_solution(p, ctx, true),
                DecodeChoice::Sample => {
                    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                    let r = rollout(p, ctx, true, DecodeMode::Sample, &mut rng)?;
                    Solution::from_routes(inst, dist, r.routes())
                }
                DecodeChoice::Beam => {
                    let beams = beam_search(p, ctx, settings.beam_width, true)?;
                    let routes = beams.first().map(|b| routes_from_sequence(&b.actions)).unwrap_or_default();
                    Solution::from_routes(inst, dist, routes)
                }
            }
        }
    }
}

/// `100 (cost - reference) / reference`.
pub fn gap_percent(cost: f64, reference: f64) -> f64 {
    100.0 * (cost - reference) / reference
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub mean_cost: f64,
    pub gap_percent: f64,
    pub mean_seconds: f64,
    /// Instances on which this method failed or returned an infeasible
    /// solution, with the reason.
    pub disqualified: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub reference: String,
    /// Instances solved feasibly by every method; means are taken over these.
    pub compared: usize,
    pub total: usize,
    pub rows: Vec<MethodRow>,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "reference: {}   instances compared: {}/{}",
            self.reference, self.compared, self.total
        );
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>9} {:>12} {:>6}",
            "method", "cost", "gap(%)", "sec/inst", "dq"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>12.2} {:>9.2} {:>12.5} {:>6}",
                r.method,
                r.mean_cost,
                r.gap_percent,
                r.mean_seconds,
                r.disqualified.len()
            );
        }
        for r in &self.rows {
            for (inst, why) in &r.disqualified {
                let _ = writeln!(s, "disqualified {} on {}: {}", r.method, inst, why);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,mean_cost,gap_percent,mean_seconds,disqualified\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.4},{:.2},{:.6},{}",
                r.method,
                r.mean_cost,
                r.gap_percent,
                r.mean_seconds,
                r.disqualified.len()
            );
        }
        s
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    if xs.is_empty() {
        0.0
    } else {
        xs[xs.len() / 2]
    }
}

/// Runs every method serially on every instance and reports mean cost and
/// gap against `reference`.
pub fn run_benchmark(
    methods: &[Method],
    contexts: &[InstanceContext],
    reference: Method,
    policy: Option<&Policy>,
    settings: &SolveSettings,
) -> Result<BenchReport> {
    let mut all = methods.to_vec();
    if !all.contains(&reference) {
        all.insert(0, reference);
    }
    let mut costs = vec![vec![None; contexts.len()]; all.len()];
    let mut times = vec![Vec::new(); all.len()];
    let mut dq: Vec<Vec<(String, String)>> = vec![Vec::new(); all.len()];
    for (m, &method) in all.iter().enumerate() {
        for (i, ctx) in contexts.iter().enumerate() {
            let mut runs = Vec::new();
            let mut outcome = None;
            for _ in 0..settings.timing_runs.max(1) {
                let start = Instant::now();
                let r = solve_with(method, ctx, policy, settings);
                runs.push(start.elapsed().as_secs_f64());
                outcome = Some(r);
            }
            times[m].push(median(runs));
            let name = ctx.instance.name.clone();
            match outcome.expect("at least one run") {
                Err(e) => dq[m].push((name, e.to_string())),
                Ok(sol) => {
                    let eval = evaluate_solution(&ctx.instance, &ctx.dist, &sol)?;
                    if eval.feasible {
                        costs[m][i] = Some(eval.total_cost);
                    } else {
                        let why: Vec<String> = eval.violations.iter().map(|v| v.to_string()).collect();
                        dq[m].push((name, why.join("; ")));
                    }
                }
            }
        }
    }
    let common: Vec<usize> = (0..contexts.len())
        .filter(|&i| costs.iter().all(|c| c[i].is_some()))
        .collect();
    let mean_of = |m: usize| {
        if common.is_empty() {
            f64::NAN
        } else {
            common.iter().map(|&i| costs[m][i].unwrap() as f64).sum::<f64>() / common.len() as f64
        }
    };
    let r = all.iter().position(|&m| m == reference).unwrap();
    let ref_mean = mean_of(r);
    let rows = all
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let mean = mean_of(m);
            MethodRow {
                method: method.name().to_string(),
                mean_cost: mean,
                gap_percent: gap_percent(mean, ref_mean),
                mean_seconds: times[m].iter().sum::<f64>() / times[m].len().max(1) as f64,
                disqualified: std::mem::take(&mut dq[m]),
            }
        })
        .collect();
    Ok(BenchReport {
        reference: reference.name().to_string(),
        compared: common.len(),
        total: contexts.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(gap_percent(550.0, 500.0), 10.0);
        assert_eq!(gap_percent(500.0, 500.0), 0.0);
        assert_eq!(format!("{:.2}", gap_percent(474.0, 474.0)), "0.00");
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Daam, Method::DaamPo, Method::Ps, Method::Teacher, Method::Exact] {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("maens"), None);
    }
}
