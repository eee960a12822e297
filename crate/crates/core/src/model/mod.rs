//! Direction-aware attention policy.
//!
//! One graph-attention layer folds the arc-to-arc weights into initial arc
//! embeddings, `N` transformer-style layers refine them, and a single-head
//! pointer decoder scores every arc against a context built from the mean
//! embedding, the last chosen arc and the remaining capacity. The whole
//! pipeline runs again at every step.

mod context;
mod decode;
mod network;

pub use context::InstanceContext;
pub use decode::{act, beam_search, greedy_solution, rollout, rollout_from, Beam, DecodeMode, Rollout};
pub use network::{decode_logits, encode, gat_encode};

use std::path::Path;

use rand::Rng;

use crate::autodiff::{checkpoint, Matrix, ParamSet, Tape, Var};
use crate::env::{legal_actions, EnvState};
use crate::error::{CarpError, Result};
use crate::features::{build_features, feature_dim};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_h: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub clip_c: f64,
    pub mds_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_h: 128,
            n_layers: 3,
            n_heads: 8,
            clip_c: 10.0,
            mds_dim: 8,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        feature_dim(self.mds_dim)
    }

    pub fn ff_hidden(&self) -> usize {
        4 * self.d_h
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h == 0 || self.n_heads == 0 || self.d_h % self.n_heads != 0 {
            return Err(CarpError::InvalidInstance(format!(
                "d_h {} must be a positive multiple of n_heads {}",
                self.d_h, self.n_heads
            )));
        }
        if self.clip_c <= 0.0 || self.mds_dim == 0 {
            return Err(CarpError::InvalidInstance("clip_c and mds_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn to_manifest(&self) -> String {
        format!(
            "format_version = {}\nmds_dim = {}\nd_h = {}\nn_layers = {}\nn_heads = {}\nclip_c = {}\n",
            checkpoint::FORMAT_VERSION,
            self.mds_dim,
            self.d_h,
            self.n_layers,
            self.n_heads,
            self.clip_c
        )
    }

    pub fn from_manifest(text: &str) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| CarpError::Config { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || v.parse::<usize>().map_err(|_| bad(format!("`{v}` is not an integer")));
            match k {
                "format_version" => {}
                "mds_dim" => cfg.mds_dim = int()?,
                "d_h" => cfg.d_h = int()?,
                "n_layers" => cfg.n_layers = int()?,
                "n_heads" => cfg.n_heads = int()?,
                "clip_c" => cfg.clip_c = v.parse().map_err(|_| bad(format!("`{v}` is not a number")))?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Indices of every tensor inside the [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamIds {
    pub gat_w: usize,
    pub gat_a_src: usize,
    pub gat_a_dst: usize,
    pub gat_a_edge: usize,
    pub layers: Vec<LayerIds>,
    pub dec_wq: usize,
    pub dec_wk: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LayerIds {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub norm1_gamma: usize,
    pub norm1_beta: usize,
    pub ff_w1: usize,
    pub ff_b1: usize,
    pub ff_w2: usize,
    pub ff_b2: usize,
    pub norm2_gamma: usize,
    pub norm2_beta: usize,
}

/// Configuration and learnable tensors of the policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub(crate) ids: ParamIds,
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, usize, usize, usize)> {
    // (name, rows, cols, fan_in); fan_in 0 marks a norm tensor
    let (d, f, h) = (cfg.d_h, cfg.feature_dim(), cfg.ff_hidden());
    let mut v = vec![
        ("gat.w".to_string(), f, d, f),
        ("gat.a_src".to_string(), d, 1, d),
        ("gat.a_dst".to_string(), 1, d, d),
        ("gat.a_edge".to_string(), 1, 1, 1),
    ];
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("encoder.{l}.{s}");
        v.extend([
            (p("wq"), d, d, d),
            (p("wk"), d, d, d),
            (p("wv"), d, d, d),
            (p("wo"), d, d, d),
            (p("norm1.gamma"), 1, d, 0),
            (p("norm1.beta"), 1, d, 0),
            (p("ff.w1"), d, h, d),
            (p("ff.b1"), 1, h, d),
            (p("ff.w2"), h, d, h),
            (p("ff.b2"), 1, d, h),
            (p("norm2.gamma"), 1, d, 0),
            (p("norm2.beta"), 1, d, 0),
        ]);
    }
    v.push(("decoder.wq".to_string(), 2 * d + 2, d, 2 * d + 2));
    v.push(("decoder.wk".to_string(), d, d, d));
    v
}

impl Policy {
    /// Fresh parameters, uniform in `±1/sqrt(fan_in)`; norms start at
    /// scale 1 and shift 0.
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Policy> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, rows, cols, fan_in) in expected_shapes(&config) {
            if fan_in == 0 {
                let fill = if name.ends_with("gamma") { 1.0 } else { 0.0 };
                params.push(name, Matrix::filled(rows, cols, fill));
            } else {
                params.push_uniform(name, rows, cols, fan_in, rng);
            }
        }
        Policy::from_params(config, params)
    }

    /// Wraps loaded tensors, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Policy> {
        config.validate()?;
        let shapes = expected_shapes(&config);
        let mut ids = Vec::with_capacity(shapes.len());
        for (name, rows, cols, _) in &shapes {
            let id = params
                .find(name)
                .ok_or_else(|| CarpError::Checkpoint(format!("missing tensor `{name}`")))?;
            if params.value(id).shape() != (*rows, *cols) {
                return Err(CarpError::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    params.value(id).shape(),
                    (rows, cols)
                )));
            }
            ids.push(id);
        }
        if params.len() != shapes.len() {
            return Err(CarpError::Checkpoint(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        let mut it = ids.into_iter();
        let mut next = || it.next().unwrap();
        let (gat_w, gat_a_src, gat_a_dst, gat_a_edge) = (next(), next(), next(), next());
        let layers = (0..config.n_layers)
            .map(|_| LayerIds {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                norm1_gamma: next(),
                norm1_beta: next(),
                ff_w1: next(),
                ff_b1: next(),
                ff_w2: next(),
                ff_b2: next(),
                norm2_gamma: next(),
                norm2_beta: next(),
            })
            .collect();
        let ids = ParamIds {
            gat_w,
            gat_a_src,
            gat_a_dst,
            gat_a_edge,
            layers,
            dec_wq: next(),
            dec_wk: next(),
        };
        Ok(Policy { config, params, ids })
    }

    /// Log-probabilities (`1 x |A_R|`) of the next arc at `state`.
    pub fn forward(&self, tape: &mut Tape, ctx: &InstanceContext, state: &EnvState, mask: &[bool]) -> Result<Var> {
        let features = build_features(&ctx.graph, &ctx.mds, ctx.scale, state);
        let f = tape.constant(features);
        let e = tape.constant(ctx.incoming_weights().clone());
        let h0 = gat_encode(tape, self, f, e)?;
        let h = encode(tape, self, h0)?;
        let remaining = state.remaining_capacity as f64 / ctx.graph.capacity as f64;
        let half = if 2 * state.remaining_capacity > ctx.graph.capacity { 1.0 } else { 0.0 };
        decode_logits(tape, self, h, state.last(), remaining, half, mask)
    }

    /// Action distribution at `state` under the given legality mode.
    pub fn probabilities(&self, ctx: &InstanceContext, state: &EnvState, constrained: bool) -> Result<Vec<f64>> {
        let mask = legal_actions(state, &ctx.graph, constrained);
        if !mask.iter().any(|&m| m) {
            return Err(CarpError::NoLegalAction { step: state.step });
        }
        let mut tape = Tape::new();
        let logp = self.forward(&mut tape, ctx, state, &mask)?;
        Ok(tape.value(logp).data.iter().map(|x| x.exp()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, checkpoint::encode(&self.params))?;
        std::fs::write(manifest_path(path), self.config.to_manifest())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Policy> {
        let manifest = std::fs::read_to_string(manifest_path(path))?;
        let config = ModelConfig::from_manifest(&manifest)?;
        let params = checkpoint::decode(&std::fs::read(path)?)?;
        Policy::from_params(config, params)
    }
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    s.into()
}
