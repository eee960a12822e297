use super::Policy;
use crate::autodiff::{Matrix, Tape, Var};
use crate::error::Result;

const GAT_SLOPE: f64 = 0.2;

/// Graph attention over the complete arc graph.
///
/// `features` is `|A_R| x feature_dim`; `incoming` holds the normalized
/// weight from arc `j` into arc `i` at `(i, j)`. The attention score of `j`
/// for `i` is a learned linear map of `[W F_i, W F_j, |e_ji|]` passed through
/// a leaky ReLU; rows are softmax-normalized over `j` and the result is
/// `elu(sum_j c_ij W F_j)`.
pub fn gat_encode(tape: &mut Tape, policy: &Policy, features: Var, incoming: Var) -> Result<Var> {
    let ids = &policy.ids;
    let w = tape.param(&policy.params, ids.gat_w);
    let a_src = tape.param(&policy.params, ids.gat_a_src);
    let a_dst = tape.param(&policy.params, ids.gat_a_dst);
    let a_edge = tape.param(&policy.params, ids.gat_a_edge);
    let wf = tape.matmul(features, w)?;
    let src = tape.matmul(wf, a_src)?;
    let dst = tape.matmul_t(a_dst, wf)?;
    let pair = tape.add_outer(src, dst)?;
    let edge = tape.mul_scalar(incoming, a_edge)?;
    let scores = tape.add(pair, edge)?;
    let scores = tape.leaky_relu(scores, GAT_SLOPE);
    let attn = tape.softmax_rows(scores);
    let agg = tape.matmul(attn, wf)?;
    Ok(tape.elu(agg))
}

/// `N` layers of multi-head self-attention and feed-forward sublayers, each
/// wrapped in a skip connection and normalization across arcs.
pub fn encode(tape: &mut Tape, policy: &Policy, h0: Var) -> Result<Var> {
    let cfg = &policy.config;
    let head_dim = cfg.d_h / cfg.n_heads;
    let inv_sqrt = 1.0 / (head_dim as f64).sqrt();
    let mut h = h0;
    for layer in &policy.ids.layers {
        let p = |tape: &mut Tape, id| tape.param(&policy.params, id);
        let (wq, wk, wv, wo) = (p(tape, layer.wq), p(tape, layer.wk), p(tape, layer.wv), p(tape, layer.wo));
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(h, wk)?;
        let v = tape.matmul(h, wv)?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for head in 0..cfg.n_heads {
            let start = head * head_dim;
            let qh = tape.slice_cols(q, start, head_dim)?;
            let kh = tape.slice_cols(k, start, head_dim)?;
            let vh = tape.slice_cols(v, start, head_dim)?;
            let s = tape.matmul_t(qh, kh)?;
            let s = tape.scale(s, inv_sqrt);
            let a = tape.softmax_rows(s);
            heads.push(tape.matmul(a, vh)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        let mha = tape.matmul(cat, wo)?;
        let res = tape.add(h, mha)?;
        let (g1, b1) = (p(tape, layer.norm1_gamma), p(tape, layer.norm1_beta));
        let hat = tape.normalize_across_rows(res, g1, b1)?;

        let (w1, bias1, w2, bias2) = (p(tape, layer.ff_w1), p(tape, layer.ff_b1), p(tape, layer.ff_w2), p(tape, layer.ff_b2));
        let f = tape.matmul(hat, w1)?;
        let f = tape.add_row(f, bias1)?;
        let f = tape.relu(f);
        let f = tape.matmul(f, w2)?;
        let f = tape.add_row(f, bias2)?;
        let res = tape.add(hat, f)?;
        let (g2, b2) = (p(tape, layer.norm2_gamma), p(tape, layer.norm2_beta));
        h = tape.normalize_across_rows(res, g2, b2)?;
    }
    Ok(h)
}

/// Masked, clipped pointer logits turned into log-probabilities.
///
/// The context row is `[mean_i h_i, h_last, remaining / Q, remaining > Q/2]`.
pub fn decode_logits(
    tape: &mut Tape,
    policy: &Policy,
    h: Var,
    last: usize,
    remaining_fraction: f64,
    above_half: f64,
    mask: &[bool],
) -> Result<Var> {
    let cfg = &policy.config;
    let mean = tape.mean_rows(h);
    let last_row = tape.gather_rows(h, &[last])?;
    let scalars = tape.constant(Matrix::from_vec(1, 2, vec![remaining_fraction, above_half]));
    let ctx = tape.concat_cols(&[mean, last_row, scalars])?;
    let wq = tape.param(&policy.params, policy.ids.dec_wq);
    let wk = tape.param(&policy.params, policy.ids.dec_wk);
    let q = tape.matmul(ctx, wq)?;
    let k = tape.matmul(h, wk)?;
    let compat = tape.matmul_t(q, k)?;
    let compat = tape.scale(compat, 1.0 / (cfg.d_h as f64).sqrt());
    let u = tape.tanh(compat);
    let u = tape.scale(u, cfg.clip_c);
    let masked = tape.masked_fill(u, mask)?;
    Ok(tape.log_softmax_rows(masked))
}
