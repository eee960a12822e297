//! Reverse-mode tape over dense matrices.
//!
//! Every operation appends a node holding its value and the indices of its
//! inputs. [`Tape::backward`] walks the nodes in reverse and accumulates
//! adjoints. A tape is used for one forward pass and one backward pass.

use super::matrix::{gemm, Matrix};
use super::params::ParamSet;
use crate::error::{CarpError, Result};

/// Stand-in for negative infinity in masked logits.
pub const MASK_VALUE: f64 = -1e9;
const NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: usize, b: usize, trans_b: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow { a: usize, row: usize },
    AddOuter { col: usize, row: usize },
    MulScalar { a: usize, s: usize },
    Scale(usize, f64),
    ConcatCols(Vec<usize>),
    SliceCols { a: usize, start: usize },
    GatherRows { a: usize, idx: Vec<usize> },
    MeanRows(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    MaskedFill { a: usize, keep: Vec<bool> },
    Tanh(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Elu(usize),
    Exp(usize),
    Normalize {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Sum(usize),
    Pick { a: usize, r: usize, c: usize },
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    param: Option<usize>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
}

fn shape_err(op: &'static str, l: &Matrix, r: &Matrix) -> CarpError {
    CarpError::Shape {
        op,
        left: l.shape(),
        right: r.shape(),
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    /// A leaf; gradients are tracked when `requires_grad` is set.
    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    /// Loads parameter `id` of `params` as a differentiable leaf.
    pub fn param(&mut self, params: &ParamSet, id: usize) -> Var {
        let v = self.leaf(params.value(id).clone(), true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (k2, n) = if trans_b { (bv.cols, bv.rows) } else { (bv.rows, bv.cols) };
        if av.cols != k2 {
            return Err(shape_err("matmul", av, bv));
        }
        let mut out = Matrix::zeros(av.rows, n);
        gemm(1.0, av, false, bv, trans_b, 0.0, &mut out);
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMul { a: a.0, b: b.0, trans_b }, rg))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av, bv));
        }
        let data = av.data.iter().zip(&bv.data).map(|(&x, &y)| f(x, y)).collect();
        Ok(Matrix::from_vec(av.rows, av.cols, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Sub(a.0, b.0), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "minimum", f64::min)?;
        let rg = self.rg(&[a.0, b.0]);
        Ok(self.push(out, Op::Minimum(a.0, b.0), rg))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        if rv.rows != 1 || rv.cols != av.cols {
            return Err(shape_err("add_row", av, rv));
        }
        let mut out = av.clone();
        for r in 0..out.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&rv.data) {
                *x += b;
            }
        }
        let rg = self.rg(&[a.0, row.0]);
        Ok(self.push(out, Op::AddRow { a: a.0, row: row.0 }, rg))
    }

    /// `out[i][j] = col[i] + row[j]` for an `n x 1` column and `1 x m` row.
    pub fn add_outer(&mut self, col: Var, row: Var) -> Result<Var> {
        let (cv, rv) = (&self.nodes[col.0].value, &self.nodes[row.0].value);
        if cv.cols != 1 || rv.rows != 1 {
            return Err(shape_err("add_outer", cv, rv));
        }
        let mut out = Matrix::zeros(cv.rows, rv.cols);
        for i in 0..cv.rows {
            for j in 0..rv.cols {
                out.data[i * rv.cols + j] = cv.data[i] + rv.data[j];
            }
        }
        let rg = self.rg(&[col.0, row.0]);
        Ok(self.push(out, Op::AddOuter { col: col.0, row: row.0 }, rg))
    }

    /// Multiplies `a` by a `1 x 1` variable.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let (av, sv) = (&self.nodes[a.0].value, &self.nodes[s.0].value);
        if sv.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", av, sv));
        }
        let k = sv.data[0];
        let out = av.map(|x| x * k);
        let rg = self.rg(&[a.0, s.0]);
        Ok(self.push(out, Op::MulScalar { a: a.0, s: s.0 }, rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.nodes[a.0].value.map(|x| x * k);
        let rg = self.rg(&[a.0]);
        self.push(out, Op::Scale(a.0, k), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = &self.nodes[parts[0].0].value;
        let rows = first.rows;
        for p in parts {
            let v = &self.nodes[p.0].value;
            if v.rows != rows {
                return Err(shape_err("concat_cols", first, v));
            }
        }
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let v = &self.nodes[p.0].value;
                out.data[r * cols + off..r * cols + off + v.cols].copy_from_slice(v.row(r));
                off += v.cols;
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(out, Op::ConcatCols(ids), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if start + len > av.cols {
            return Err(shape_err("slice_cols", av, &Matrix::zeros(av.rows, start + len)));
        }
        let mut out = Matrix::zeros(av.rows, len);
        for r in 0..av.rows {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::SliceCols { a: a.0, start }, rg))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.rows) {
            return Err(shape_err("gather_rows", av, &Matrix::zeros(bad + 1, av.cols)));
        }
        let mut out = Matrix::zeros(idx.len(), av.cols);
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(av.row(i));
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::GatherRows { a: a.0, idx: idx.to_vec() }, rg))
    }

    /// Column means as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let mut out = Matrix::zeros(1, av.cols);
        for r in 0..av.rows {
            for (o, x) in out.data.iter_mut().zip(av.row(r)) {
                *o += x;
            }
        }
        let n = av.rows.max(1) as f64;
        out.data.iter_mut().for_each(|x| *x /= n);
        let rg = self.rg(&[a.0]);
        self.push(out, Op::MeanRows(a.0), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let mut out = av.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        let rg = self.rg(&[a.0]);
        self.push(out, Op::SoftmaxRows(a.0), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = &self.nodes[a.0].value;
        let mut out = av.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let rg = self.rg(&[a.0]);
        self.push(out, Op::LogSoftmaxRows(a.0), rg)
    }

    /// Replaces columns where `keep` is false with [`MASK_VALUE`].
    pub fn masked_fill(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if keep.len() != av.cols {
            return Err(shape_err("masked_fill", av, &Matrix::zeros(1, keep.len())));
        }
        let mut out = av.clone();
        for r in 0..out.rows {
            for (x, &k) in out.row_mut(r).iter_mut().zip(keep) {
                if !k {
                    *x = MASK_VALUE;
                }
            }
        }
        let rg = self.rg(&[a.0]);
        Ok(self.push(out, Op::MaskedFill { a: a.0, keep: keep.to_vec() }, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.nodes[a.0].value.map(f);
        let rg = self.rg(&[a.0]);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a.0, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.0, lo, hi))
    }

    /// Normalizes each column across the rows of `x`, then applies the
    /// learned `1 x c` scale `gamma` and shift `beta`.
    pub fn normalize_across_rows(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        for p in [gamma, beta] {
            let pv = &self.nodes[p.0].value;
            if pv.shape() != (1, xv.cols) {
                return Err(shape_err("normalize", xv, pv));
            }
        }
        let (n, c) = xv.shape();
        let mut mean = vec![0.0; c];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(xv.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var
            .iter()
            .map(|s| 1.0 / (s / n.max(1) as f64 + NORM_EPS).sqrt())
            .collect();
        let mut xhat = Matrix::zeros(n, c);
        for r in 0..n {
            for j in 0..c {
                xhat.data[r * c + j] = (xv.data[r * c + j] - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        let mut out = xhat.clone();
        for r in 0..n {
            for j in 0..c {
                out.data[r * c + j] = out.data[r * c + j] * g.data[j] + b.data[j];
            }
        }
        let rg = self.rg(&[x.0, gamma.0, beta.0]);
        Ok(self.push(
            out,
            Op::Normalize {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(&[a.0]);
        self.push(Matrix::scalar(s), Op::Sum(a.0), rg)
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if r >= av.rows || c >= av.cols {
            return Err(shape_err("pick", av, &Matrix::zeros(r + 1, c + 1)));
        }
        let v = av.get(r, c);
        let rg = self.rg(&[a.0]);
        Ok(self.push(Matrix::scalar(v), Op::Pick { a: a.0, r, c }, rg))
    }

    /// Side of the breakpoint for every element entering a piecewise op
    /// (ReLU, leaky ReLU, ELU, clamp, minimum). Two passes with equal
    /// patterns were evaluated on the same smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(a) | Op::LeakyRelu(a, _) | Op::Elu(a) => {
                    out.extend(self.nodes[a].value.data.iter().map(|&x| x > 0.0));
                }
                Op::Clamp(a, lo, hi) => {
                    for &x in &self.nodes[a].value.data {
                        out.push(x < lo);
                        out.push(x > hi);
                    }
                }
                Op::Minimum(a, b) => {
                    let (x, y) = (&self.nodes[a].value.data, &self.nodes[b].value.data);
                    out.extend(x.iter().zip(y).map(|(p, q)| p <= q));
                }
                _ => {}
            }
        }
        out
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of parameter leaves as `(param id, grad)`.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &Matrix)> + '_ {
        self.nodes
            .iter()
            .zip(&self.grads)
            .filter_map(|(n, g)| Some((n.param?, g.as_ref()?)))
    }

    fn acc(grads: &mut [Option<Matrix>], i: usize, g: Matrix) {
        match &mut grads[i] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn acc_with(grads: &mut [Option<Matrix>], i: usize, shape: (usize, usize), f: impl FnOnce(&mut Matrix)) {
        let slot = grads[i].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
        f(slot);
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(CarpError::BackwardTwice);
        }
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != (1, 1) {
            return Err(shape_err("backward", lv, &Matrix::scalar(0.0)));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let nodes = &self.nodes;
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let needs = |j: usize| nodes[j].requires_grad;
            let val = |j: usize| &nodes[j].value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul { a, b, trans_b } => {
                    let (av, bv) = (val(*a), val(*b));
                    if needs(*a) {
                        Self::acc_with(&mut grads, *a, av.shape(), |ga| {
                            // dA = G * op(B)^T
                            gemm(1.0, &g, false, bv, !*trans_b, 1.0, ga)
                        });
                    }
                    if needs(*b) {
                        Self::acc_with(&mut grads, *b, bv.shape(), |gb| {
                            if *trans_b {
                                // C = A B^T  =>  dB = G^T A
                                gemm(1.0, &g, true, av, false, 1.0, gb)
                            } else {
                                gemm(1.0, av, true, &g, false, 1.0, gb)
                            }
                        });
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) {
                        Self::acc(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        Self::acc(&mut grads, *b, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if needs(*a) {
                        Self::acc(&mut grads, *a, g.clone());
                    }
                    if needs(*b) {
                        Self::acc(&mut grads, *b, g.map(|x| -x));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(*a) {
                        let d = g.data.iter().zip(&val(*b).data).map(|(x, y)| x * y).collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                    if needs(*b) {
                        let d = g.data.iter().zip(&val(*a).data).map(|(x, y)| x * y).collect();
                        Self::acc(&mut grads, *b, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Minimum(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let mut ga = Matrix::zeros(g.rows, g.cols);
                    let mut gb = Matrix::zeros(g.rows, g.cols);
                    for k in 0..g.data.len() {
                        if av.data[k] <= bv.data[k] {
                            ga.data[k] = g.data[k];
                        } else {
                            gb.data[k] = g.data[k];
                        }
                    }
                    if needs(*a) {
                        Self::acc(&mut grads, *a, ga);
                    }
                    if needs(*b) {
                        Self::acc(&mut grads, *b, gb);
                    }
                }
                Op::AddRow { a, row } => {
                    if needs(*a) {
                        Self::acc(&mut grads, *a, g.clone());
                    }
                    if needs(*row) {
                        let mut gr = Matrix::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, x) in gr.data.iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        Self::acc(&mut grads, *row, gr);
                    }
                }
                Op::AddOuter { col, row } => {
                    if needs(*col) {
                        let d = (0..g.rows).map(|r| g.row(r).iter().sum()).collect();
                        Self::acc(&mut grads, *col, Matrix::from_vec(g.rows, 1, d));
                    }
                    if needs(*row) {
                        let mut gr = Matrix::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, x) in gr.data.iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        Self::acc(&mut grads, *row, gr);
                    }
                }
                Op::MulScalar { a, s } => {
                    let k = val(*s).data[0];
                    if needs(*a) {
                        Self::acc(&mut grads, *a, g.map(|x| x * k));
                    }
                    if needs(*s) {
                        let d: f64 = g.data.iter().zip(&val(*a).data).map(|(x, y)| x * y).sum();
                        Self::acc(&mut grads, *s, Matrix::scalar(d));
                    }
                }
                Op::Scale(a, k) => {
                    if needs(*a) {
                        Self::acc(&mut grads, *a, g.map(|x| x * k));
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let cols = val(p).cols;
                        if needs(p) {
                            let mut gp = Matrix::zeros(g.rows, cols);
                            for r in 0..g.rows {
                                gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                            }
                            Self::acc(&mut grads, p, gp);
                        }
                        off += cols;
                    }
                }
                Op::SliceCols { a, start } => {
                    if needs(*a) {
                        let shape = val(*a).shape();
                        Self::acc_with(&mut grads, *a, shape, |ga| {
                            for r in 0..g.rows {
                                for (o, x) in ga.row_mut(r)[*start..*start + g.cols].iter_mut().zip(g.row(r)) {
                                    *o += x;
                                }
                            }
                        });
                    }
                }
                Op::GatherRows { a, idx } => {
                    if needs(*a) {
                        let shape = val(*a).shape();
                        Self::acc_with(&mut grads, *a, shape, |ga| {
                            for (k, &src) in idx.iter().enumerate() {
                                for (o, x) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                                    *o += x;
                                }
                            }
                        });
                    }
                }
                Op::MeanRows(a) => {
                    if needs(*a) {
                        let (rows, cols) = val(*a).shape();
                        let n = rows.max(1) as f64;
                        let mut ga = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            for (o, x) in ga.row_mut(r).iter_mut().zip(&g.data) {
                                *o = x / n;
                            }
                        }
                        Self::acc(&mut grads, *a, ga);
                    }
                }
                Op::SoftmaxRows(a) => {
                    if needs(*a) {
                        let y = &node.value;
                        let mut ga = Matrix::zeros(y.rows, y.cols);
                        for r in 0..y.rows {
                            let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, d)| p * d).sum();
                            for c in 0..y.cols {
                                ga.data[r * y.cols + c] = y.get(r, c) * (g.get(r, c) - dot);
                            }
                        }
                        Self::acc(&mut grads, *a, ga);
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    if needs(*a) {
                        let y = &node.value;
                        let mut ga = Matrix::zeros(y.rows, y.cols);
                        for r in 0..y.rows {
                            let s: f64 = g.row(r).iter().sum();
                            for c in 0..y.cols {
                                ga.data[r * y.cols + c] = g.get(r, c) - y.get(r, c).exp() * s;
                            }
                        }
                        Self::acc(&mut grads, *a, ga);
                    }
                }
                Op::MaskedFill { a, keep } => {
                    if needs(*a) {
                        let mut ga = g.clone();
                        for r in 0..ga.rows {
                            for (x, &k) in ga.row_mut(r).iter_mut().zip(keep) {
                                if !k {
                                    *x = 0.0;
                                }
                            }
                        }
                        Self::acc(&mut grads, *a, ga);
                    }
                }
                Op::Tanh(a) => {
                    if needs(*a) {
                        let d = g.data.iter().zip(&node.value.data).map(|(g, y)| g * (1.0 - y * y)).collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Relu(a) => {
                    if needs(*a) {
                        let d = g
                            .data
                            .iter()
                            .zip(&val(*a).data)
                            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                            .collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::LeakyRelu(a, slope) => {
                    if needs(*a) {
                        let d = g
                            .data
                            .iter()
                            .zip(&val(*a).data)
                            .map(|(g, x)| if *x > 0.0 { *g } else { g * slope })
                            .collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Elu(a) => {
                    if needs(*a) {
                        let d = g
                            .data
                            .iter()
                            .zip(&val(*a).data)
                            .zip(&node.value.data)
                            .map(|((g, x), y)| if *x > 0.0 { *g } else { g * (y + 1.0) })
                            .collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Exp(a) => {
                    if needs(*a) {
                        let d = g.data.iter().zip(&node.value.data).map(|(g, y)| g * y).collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    if needs(*a) {
                        let d = g
                            .data
                            .iter()
                            .zip(&val(*a).data)
                            .map(|(g, x)| if x >= lo && x <= hi { *g } else { 0.0 })
                            .collect();
                        Self::acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, d));
                    }
                }
                Op::Normalize {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (n, c) = xhat.shape();
                    let gv = val(*gamma);
                    if needs(*gamma) {
                        let mut gg = Matrix::zeros(1, c);
                        for r in 0..n {
                            for j in 0..c {
                                gg.data[j] += g.data[r * c + j] * xhat.data[r * c + j];
                            }
                        }
                        Self::acc(&mut grads, *gamma, gg);
                    }
                    if needs(*beta) {
                        let mut gb = Matrix::zeros(1, c);
                        for r in 0..n {
                            for j in 0..c {
                                gb.data[j] += g.data[r * c + j];
                            }
                        }
                        Self::acc(&mut grads, *beta, gb);
                    }
                    if needs(*x) {
                        let nf = n as f64;
                        let mut sum_d = vec![0.0; c];
                        let mut sum_dx = vec![0.0; c];
                        for r in 0..n {
                            for j in 0..c {
                                let d = g.data[r * c + j] * gv.data[j];
                                sum_d[j] += d;
                                sum_dx[j] += d * xhat.data[r * c + j];
                            }
                        }
                        let mut gx = Matrix::zeros(n, c);
                        for r in 0..n {
                            for j in 0..c {
                                let d = g.data[r * c + j] * gv.data[j];
                                gx.data[r * c + j] = inv_std[j] / nf
                                    * (nf * d - sum_d[j] - xhat.data[r * c + j] * sum_dx[j]);
                            }
                        }
                        Self::acc(&mut grads, *x, gx);
                    }
                }
                Op::Sum(a) => {
                    if needs(*a) {
                        let (r, c) = val(*a).shape();
                        Self::acc(&mut grads, *a, Matrix::filled(r, c, g.data[0]));
                    }
                }
                Op::Pick { a, r, c } => {
                    if needs(*a) {
                        let shape = val(*a).shape();
                        let (r, c, gv) = (*r, *c, g.data[0]);
                        Self::acc_with(&mut grads, *a, shape, |ga| {
                            ga.data[r * shape.1 + c] += gv;
                        });
                    }
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}
