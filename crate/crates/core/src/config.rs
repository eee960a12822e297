//! Line-oriented `key = value` run configuration. `#` starts a comment.
//! Unknown keys and malformed values are errors naming the line.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::bench::{DatasetSpec, DecodeChoice, SolveSettings};
use crate::error::{CarpError, Result};
use crate::model::ModelConfig;
use crate::training::{PpoConfig, SlConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub sl: SlConfig,
    pub ppo: PpoConfig,
    pub solve: SolveSettings,
    pub dataset: DatasetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            sl: SlConfig::default(),
            ppo: PpoConfig::default(),
            solve: SolveSettings::default(),
            dataset: DatasetSpec::mini(20).expect("Task20 preset"),
        }
    }
}

fn mode_name(m: DecodeChoice) -> &'static str {
    match m {
        DecodeChoice::Greedy => "greedy",
        DecodeChoice::Sample => "sample",
        DecodeChoice::Beam => "beam",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let no = i + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| CarpError::Config {
                line: no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|message| CarpError::Config { line: no, message })?;
        }
        cfg.model.validate().map_err(|e| CarpError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        cfg.ppo.validate().map_err(|e| CarpError::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}`"))
        }
        let d = &mut self.dataset;
        match key {
            "model.d_h" => self.model.d_h = num(value)?,
            "model.n_layers" => self.model.n_layers = num(value)?,
            "model.n_heads" => self.model.n_heads = num(value)?,
            "model.clip_c" => self.model.clip_c = num(value)?,
            "model.mds_dim" => self.model.mds_dim = num(value)?,
            "sl.batch_size" => self.sl.batch_size = num(value)?,
            "sl.epochs" => self.sl.epochs = num(value)?,
            "sl.learning_rate" => self.sl.learning_rate = num(value)?,
            "sl.shuffle_seed" => self.sl.shuffle_seed = num(value)?,
            "ppo.batch_size" => self.ppo.batch_size = num(value)?,
            "ppo.episodes" => self.ppo.episodes = num(value)?,
            "ppo.clip_epsilon" => self.ppo.clip_epsilon = num(value)?,
            "ppo.gamma" => self.ppo.gamma = num(value)?,
            "ppo.inner_epochs" => self.ppo.inner_epochs = num(value)?,
            "ppo.eval_pool" => self.ppo.eval_pool = num(value)?,
            "ppo.learning_rate" => self.ppo.learning_rate = num(value)?,
            "ppo.constrained" => self.ppo.constrained = num(value)?,
            "ppo.anchor_action" => self.ppo.anchor_action = num(value)?,
            "ppo.greedy_continuation" => self.ppo.greedy_continuation = num(value)?,
            "ppo.seed" => self.ppo.seed = num(value)?,
            "solve.mode" => {
                self.solve.mode = DecodeChoice::parse(value).ok_or_else(|| format!("unknown mode `{value}`"))?
            }
            "solve.beam_width" => self.solve.beam_width = num(value)?,
            "solve.seed" => self.solve.seed = num(value)?,
            "solve.timing_runs" => self.solve.timing_runs = num(value)?,
            "teacher.iterations" => self.solve.local_search.iterations = num(value)?,
            "teacher.patience" => self.solve.local_search.patience = num(value)?,
            "teacher.perturb_moves" => self.solve.local_search.perturb_moves = num(value)?,
            "dataset.preset" => {
                *d = DatasetSpec::preset(value).ok_or_else(|| format!("unknown preset `{value}`"))?
            }
            "dataset.name" => d.name = value.to_string(),
            "dataset.train_count" => d.train_count = num(value)?,
            "dataset.test_count" => d.test_count = num(value)?,
            "dataset.node_lo" => d.nodes.0 = num(value)?,
            "dataset.node_hi" => d.nodes.1 = num(value)?,
            "dataset.required" => d.required = num(value)?,
            "dataset.demand_lo" => d.demand.0 = num(value)?,
            "dataset.demand_hi" => d.demand.1 = num(value)?,
            "dataset.capacity" => d.capacity = num(value)?,
            "dataset.seed" => d.seed = num(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Every setting, in a form [`RunConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "model.d_h = {}", m.d_h);
        let _ = writeln!(s, "model.n_layers = {}", m.n_layers);
        let _ = writeln!(s, "model.n_heads = {}", m.n_heads);
        let _ = writeln!(s, "model.clip_c = {}", m.clip_c);
        let _ = writeln!(s, "model.mds_dim = {}", m.mds_dim);
        let l = &self.sl;
        let _ = writeln!(s, "sl.batch_size = {}", l.batch_size);
        let _ = writeln!(s, "sl.epochs = {}", l.epochs);
        let _ = writeln!(s, "sl.learning_rate = {}", l.learning_rate);
        let _ = writeln!(s, "sl.shuffle_seed = {}", l.shuffle_seed);
        let p = &self.ppo;
        let _ = writeln!(s, "ppo.batch_size = {}", p.batch_size);
        let _ = writeln!(s, "ppo.episodes = {}", p.episodes);
        let _ = writeln!(s, "ppo.clip_epsilon = {}", p.clip_epsilon);
        let _ = writeln!(s, "ppo.gamma = {}", p.gamma);
        let _ = writeln!(s, "ppo.inner_epochs = {}", p.inner_epochs);
        let _ = writeln!(s, "ppo.eval_pool = {}", p.eval_pool);
        let _ = writeln!(s, "ppo.learning_rate = {}", p.learning_rate);
        let _ = writeln!(s, "ppo.constrained = {}", p.constrained);
        let _ = writeln!(s, "ppo.anchor_action = {}", p.anchor_action);
        let _ = writeln!(s, "ppo.greedy_continuation = {}", p.greedy_continuation);
        let _ = writeln!(s, "ppo.seed = {}", p.seed);
        let v = &self.solve;
        let _ = writeln!(s, "solve.mode = {}", mode_name(v.mode));
        let _ = writeln!(s, "solve.beam_width = {}", v.beam_width);
        let _ = writeln!(s, "solve.seed = {}", v.seed);
        let _ = writeln!(s, "solve.timing_runs = {}", v.timing_runs);
        let _ = writeln!(s, "teacher.iterations = {}", v.local_search.iterations);
        let _ = writeln!(s, "teacher.patience = {}", v.local_search.patience);
        let _ = writeln!(s, "teacher.perturb_moves = {}", v.local_search.perturb_moves);
        let d = &self.dataset;
        let _ = writeln!(s, "dataset.name = {}", d.name);
        let _ = writeln!(s, "dataset.train_count = {}", d.train_count);
        let _ = writeln!(s, "dataset.test_count = {}", d.test_count);
        let _ = writeln!(s, "dataset.node_lo = {}", d.nodes.0);
        let _ = writeln!(s, "dataset.node_hi = {}", d.nodes.1);
        let _ = writeln!(s, "dataset.required = {}", d.required);
        let _ = writeln!(s, "dataset.demand_lo = {}", d.demand.0);
        let _ = writeln!(s, "dataset.demand_hi = {}", d.demand.1);
        let _ = writeln!(s, "dataset.capacity = {}", d.capacity);
        let _ = writeln!(s, "dataset.seed = {}", d.seed);
        s
    }
}
