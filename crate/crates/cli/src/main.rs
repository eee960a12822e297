use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use carp_core::arc_graph::ArcGraph;
use carp_core::bench::{
    generate_dataset, instances_to_text, parse_instances, run_benchmark, solve_with, DatasetSpec, DecodeChoice, Method,
};
use carp_core::config::RunConfig;
use carp_core::env::{replay, rollout_cost_identity};
use carp_core::instance::Instance;
use carp_core::model::{InstanceContext, Policy};
use carp_core::path_opt::{dp_split, reconstruct, ServiceOrder};
use carp_core::shortest_path::all_pairs_shortest_paths;
use carp_core::solution::{evaluate_solution, Solution};
use carp_core::teacher::{canonicalize, exact_solve, labelize, local_search_solve, LabelOrder, LabelSet};
use carp_core::training::{finetune_ppo, pretrain_sl, pretrain_sl_restarts, teacher_match};

#[derive(Parser)]
#[command(name = "carp", version, about = "Capacitated arc routing toolkit")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Decoding for the `daam` method.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Greedy,
    Sample,
    Beam,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Daam,
    DaamPo,
    Ps,
    Teacher,
    Exact,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Daam => Method::Daam,
            MethodArg::DaamPo => Method::DaamPo,
            MethodArg::Ps => Method::Ps,
            MethodArg::Teacher => Method::Teacher,
            MethodArg::Exact => Method::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    AsSolved,
    NearestFirst,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset; writes `train.txt` and `test.txt` into `--out`.
    Gen {
        /// Preset name such as `Task20-mini`; overrides the config dataset.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Label every instance of a dataset file with a teacher solution.
    Label {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "teacher")]
        method: MethodArg,
        /// Route order inside each label.
        #[arg(long, value_enum, default_value = "as-solved")]
        order: OrderArg,
    },
    /// Supervised pre-training on labels; writes a checkpoint to `--out`.
    TrainSl {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Held-out instances and labels for a teacher-match report.
        #[arg(long, requires = "heldout_labels")]
        heldout: Option<PathBuf>,
        #[arg(long)]
        heldout_labels: Option<PathBuf>,
        /// Random initializations to try; the best on the selection set is trained on.
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        /// Epochs each restart trains before selection.
        #[arg(long, default_value_t = 2)]
        probe_epochs: usize,
        /// Selection instances and labels for `--restarts`.
        #[arg(long, requires = "select_labels")]
        select: Option<PathBuf>,
        #[arg(long)]
        select_labels: Option<PathBuf>,
    },
    /// PPO fine-tuning; writes a checkpoint to `--out`.
    TrainRl {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Starting checkpoint; fresh parameters when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Solve one instance file and print or write the solution.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare methods on a dataset file; `--out` receives `<out>.txt` and `<out>.csv`.
    Bench {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', value_enum, required = true)]
        methods: Vec<MethodArg>,
        #[arg(long, value_enum, default_value = "teacher")]
        reference: MethodArg,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use only the first N instances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Re-optimize the depot returns of a solution file.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Run the invariant checks on every instance of a dataset file.
    Check {
        #[arg(long)]
        data: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    parse_instances(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn contexts(instances: Vec<Instance>, mds_dim: usize) -> Result<Vec<InstanceContext>> {
    instances
        .into_iter()
        .map(|i| InstanceContext::new(i, mds_dim).map_err(Into::into))
        .collect()
}

fn load_policy(path: &Option<PathBuf>) -> Result<Option<Policy>> {
    path.as_ref()
        .map(|p| Policy::load(p).with_context(|| format!("loading model {}", p.display())))
        .transpose()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&read(p)?).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solve.seed = seed;
        cfg.sl.shuffle_seed = seed;
        cfg.ppo.seed = seed;
        cfg.dataset.seed = seed;
    }
    if let Some(m) = cli.mode {
        cfg.solve.mode = match m {
            Mode::Greedy => DecodeChoice::Greedy,
            Mode::Sample => DecodeChoice::Sample,
            Mode::Beam => DecodeChoice::Beam,
        };
    }
    let mut log = |r: carp_core::training::LogRecord| eprintln!("{r}");
    match cli.command {
        Command::Gen { preset, train, test } => {
            let mut spec = match preset {
                Some(name) => {
                    let mut s = DatasetSpec::preset(&name).ok_or_else(|| anyhow!("unknown preset `{name}`"))?;
                    if let Some(seed) = cli.seed {
                        s.seed = seed;
                    }
                    s
                }
                None => cfg.dataset.clone(),
            };
            if let Some(n) = train {
                spec.train_count = n;
            }
            if let Some(n) = test {
                spec.test_count = n;
            }
            let (tr, te) = generate_dataset(&spec)?;
            let dir = cli.out.ok_or_else(|| anyhow!("`gen` needs --out <dir>"))?;
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("train.txt"), instances_to_text(&tr))?;
            fs::write(dir.join("test.txt"), instances_to_text(&te))?;
            eprintln!("wrote {} train and {} test instances to {}", tr.len(), te.len(), dir.display());
        }
        Command::Label { data, method, order } => {
            let mut text = String::new();
            for (i, inst) in load_instances(&data)?.into_iter().enumerate() {
                let dist = all_pairs_shortest_paths(&inst)?;
                let graph = ArcGraph::transform(&inst, &dist);
                let sol = match method {
                    MethodArg::Exact => exact_solve(&inst, &dist, &graph)?,
                    MethodArg::Teacher => {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.solve.seed.wrapping_add(i as u64));
                        local_search_solve(&inst, &dist, &graph, cfg.solve.local_search, &mut rng)?
                    }
                    _ => bail!("labels come from `teacher` or `exact`"),
                };
                let order = match order {
                    OrderArg::AsSolved => LabelOrder::AsSolved,
                    OrderArg::NearestFirst => LabelOrder::NearestFirst,
                };
                let sol = canonicalize(&sol, &graph, order);
                text.push_str(&labelize(&inst, &dist, &graph, &sol)?.to_text());
            }
            emit(&cli.out, &text)?;
        }
        Command::TrainSl {
            data,
            labels,
            heldout,
            heldout_labels,
            restarts,
            probe_epochs,
            select,
            select_labels,
        } => {
            let out = cli.out.ok_or_else(|| anyhow!("`train-sl` needs --out <checkpoint>"))?;
            let ctxs = contexts(load_instances(&data)?, cfg.model.mds_dim)?;
            let labs = LabelSet::parse_many(&read(&labels)?)?;
            if labs.len() != ctxs.len() {
                bail!("{} instances but {} labels", ctxs.len(), labs.len());
            }
            if restarts > 1 && select.is_none() {
                bail!("`--restarts` above 1 needs --select and --select-labels");
            }
            let policy = match (select, select_labels) {
                (Some(sd), Some(sl)) if restarts > 1 => {
                    let sctx = contexts(load_instances(&sd)?, cfg.model.mds_dim)?;
                    let slab = LabelSet::parse_many(&read(&sl)?)?;
                    if slab.len() != sctx.len() {
                        bail!("{} selection instances but {} labels", sctx.len(), slab.len());
                    }
                    let selection = (sctx.as_slice(), slab.as_slice());
                    pretrain_sl_restarts(cfg.model, &ctxs, &labs, cfg.sl, restarts, probe_epochs, selection, &mut log)?.0
                }
                _ => {
                    let mut policy = Policy::new(cfg.model, &mut ChaCha8Rng::seed_from_u64(cfg.sl.shuffle_seed))?;
                    pretrain_sl(&mut policy, &ctxs, &labs, cfg.sl, &mut log)?;
                    policy
                }
            };
            policy.save(&out)?;
            if let (Some(h), Some(hl)) = (heldout, heldout_labels) {
                let hctx = contexts(load_instances(&h)?, cfg.model.mds_dim)?;
                let hlab = LabelSet::parse_many(&read(&hl)?)?;
                let (acc, loss) = teacher_match(&policy, &hctx, &hlab)?;
                eprintln!(r#"{{"stage":"sl","heldout_accuracy":{acc:.4},"heldout_loss":{loss:.6}}}"#);
            }
        }
        Command::TrainRl { data, test, init } => {
            let out = cli.out.ok_or_else(|| anyhow!("`train-rl` needs --out <checkpoint>"))?;
            let policy = match load_policy(&init)? {
                Some(p) => p,
                None => Policy::new(cfg.model, &mut ChaCha8Rng::seed_from_u64(cfg.ppo.seed))?,
            };
            let mds = policy.config.mds_dim;
            let pool = contexts(load_instances(&data)?, mds)?;
            let tests = contexts(load_instances(&test)?, mds)?;
            let (trained, _) = finetune_ppo(&policy, &pool, &tests, cfg.ppo, &mut log)?;
            trained.save(&out)?;
        }
        Command::Solve { instance, method, model } => {
            let policy = load_policy(&model)?;
            let mds = policy.as_ref().map_or(cfg.model.mds_dim, |p| p.config.mds_dim);
            let inst = Instance::parse(&read(&instance)?)?;
            let ctx = InstanceContext::new(inst, mds)?;
            let sol = solve_with(method.into(), &ctx, policy.as_ref(), &cfg.solve)?;
            let eval = evaluate_solution(&ctx.instance, &ctx.dist, &sol)?;
            if !eval.feasible {
                bail!("solver returned an infeasible solution");
            }
            emit(&cli.out, &sol.to_text(&ctx.instance, &ctx.dist))?;
        }
        Command::Bench {
            data,
            methods,
            reference,
            model,
            limit,
        } => {
            let policy = load_policy(&model)?;
            let mds = policy.as_ref().map_or(cfg.model.mds_dim, |p| p.config.mds_dim);
            let mut insts = load_instances(&data)?;
            if let Some(n) = limit {
                insts.truncate(n);
            }
            let ctxs = contexts(insts, mds)?;
            let methods: Vec<Method> = methods.into_iter().map(Into::into).collect();
            let report = run_benchmark(&methods, &ctxs, reference.into(), policy.as_ref(), &cfg.solve)?;
            match &cli.out {
                Some(p) => {
                    fs::write(p.with_extension("txt"), report.to_table())?;
                    fs::write(p.with_extension("csv"), report.to_csv())?;
                    print!("{}", report.to_table());
                }
                None => print!("{}", report.to_table()),
            }
        }
        Command::Opt { instance, solution } => {
            let inst = Instance::parse(&read(&instance)?)?;
            let dist = all_pairs_shortest_paths(&inst)?;
            let graph = ArcGraph::transform(&inst, &dist);
            let sol = Solution::parse(&read(&solution)?, &inst, &dist)?;
            let order = ServiceOrder::from_solution(&sol);
            let split = dp_split(&order, &graph)?;
            let best = Solution::from_routes(&inst, &dist, reconstruct(&order, &split.positions))?;
            let best = if best.total_cost <= sol.total_cost { best } else { sol.clone() };
            eprintln!("cost {} -> {}", sol.total_cost, best.total_cost);
            emit(&cli.out, &best.to_text(&inst, &dist))?;
        }
        Command::Check { data } => {
            let insts = load_instances(&data)?;
            let mut failures = 0usize;
            for inst in &insts {
                let problems = check_instance(inst, &cfg)?;
                for p in &problems {
                    println!("{}: {p}", inst.name);
                }
                failures += problems.len();
            }
            println!("checked {} instances, {} violations", insts.len(), failures);
            if failures > 0 {
                bail!("invariant violations found");
            }
        }
    }
    Ok(())
}

/// Validation, feasibility of the heuristic solvers, the reward identity
/// and split dominance on one instance.
fn check_instance(inst: &Instance, cfg: &RunConfig) -> Result<Vec<String>> {
    let mut out: Vec<String> = inst.validate().iter().map(|v| v.to_string()).collect();
    if !out.is_empty() {
        return Ok(out);
    }
    let ctx = InstanceContext::new(inst.clone(), cfg.model.mds_dim)?;
    let mut settings = cfg.solve;
    settings.local_search.iterations = settings.local_search.iterations.min(2000);
    let mut methods = vec![Method::Ps, Method::Teacher];
    if inst.required_count() <= carp_core::teacher::EXACT_EDGE_CAP {
        methods.push(Method::Exact);
    }
    for m in methods {
        let sol = solve_with(m, &ctx, None, &settings)?;
        let eval = evaluate_solution(&ctx.instance, &ctx.dist, &sol)?;
        if !eval.feasible {
            out.push(format!("{} infeasible", m.name()));
        }
        let label = labelize(&ctx.instance, &ctx.dist, &ctx.graph, &sol)?;
        let (_, traj) = replay(&ctx.graph, &label.actions, true)?;
        let id = rollout_cost_identity(&ctx.instance, &ctx.dist, &traj)?;
        if id.evaluated != id.from_reward {
            out.push(format!("{} reward identity {} != {}", m.name(), id.evaluated, id.from_reward));
        }
        let split = dp_split(&ServiceOrder::from_solution(&sol), &ctx.graph)?;
        if split.total() > sol.total_cost {
            out.push(format!("{} split {} worse than {}", m.name(), split.total(), sol.total_cost));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
