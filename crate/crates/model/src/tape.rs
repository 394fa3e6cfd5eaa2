//! Minimal reverse-mode differentiation over row-major f64 matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Calling
//! [`Graph::backward`] with seed gradients for some outputs returns the
//! gradient of every recorded node.

use std::sync::Arc;

use physdyn_core::par;

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = beta * c + op(a) * op(b)` where `op` optionally transposes.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    // a is m x k (or k x m when transposed), b is k x n (or n x k).
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices hold at least the addressed elements (checked above)
    // and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Row group marker for rows that an op leaves unmodulated (or zeroes).
pub const NO_GROUP: u32 = u32::MAX;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    /// `y = x * (1 + scale[g]) + shift[g]`; rows in [`NO_GROUP`] pass through.
    Modulate { x: Var, shift: Var, scale: Var, groups: Arc<Vec<u32>> },
    /// `y = x * gate[g]`; rows in [`NO_GROUP`] become zero.
    GateRows { x: Var, gate: Var, groups: Arc<Vec<u32>> },
    LayerNorm(Var),
    Gelu(Var),
    Silu(Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    SliceCols(Var, usize, usize),
    RepeatRows(Var),
    /// Multi-head self-attention within each row set. Input is packed
    /// `[q | k | v]`; rows outside every set produce zero.
    Attention { qkv: Var, seqs: Arc<Vec<Vec<usize>>>, heads: usize },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    /// Op-specific forward results reused by the backward pass.
    cache: Vec<f64>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-6;

fn gelu(x: f64) -> (f64, f64) {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let du = c * (1.0 + 3.0 * 0.044715 * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (y, dy)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct SeqAttention {
    out: Vec<f64>,
    probs: Vec<f64>,
}

fn attention_seq(qkv: &Tensor, rows: &[usize], heads: usize) -> SeqAttention {
    let d = qkv.cols / 3;
    let dh = d / heads;
    let l = rows.len();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; l * d];
    let mut probs = vec![0.0; heads * l * l];
    for h in 0..heads {
        let p = &mut probs[h * l * l..(h + 1) * l * l];
        for (i, &ri) in rows.iter().enumerate() {
            let q = &qkv.row(ri)[h * dh..(h + 1) * dh];
            let mut max = f64::NEG_INFINITY;
            for (j, &rj) in rows.iter().enumerate() {
                let k = &qkv.row(rj)[d + h * dh..d + (h + 1) * dh];
                let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                p[i * l + j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for j in 0..l {
                let e = (p[i * l + j] - max).exp();
                p[i * l + j] = e;
                sum += e;
            }
            for j in 0..l {
                p[i * l + j] /= sum;
            }
            let o = &mut out[i * d + h * dh..i * d + (h + 1) * dh];
            for (j, &rj) in rows.iter().enumerate() {
                let w = p[i * l + j];
                let v = &qkv.row(rj)[2 * d + h * dh..2 * d + (h + 1) * dh];
                for (a, b) in o.iter_mut().zip(v) {
                    *a += w * b;
                }
            }
        }
    }
    SeqAttention { out, probs }
}

/// Gradient of one sequence's attention with respect to its packed qkv rows.
fn attention_seq_grad(qkv: &Tensor, rows: &[usize], heads: usize, probs: &[f64], dout: &Tensor) -> Vec<f64> {
    let d = qkv.cols / 3;
    let dh = d / heads;
    let l = rows.len();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut g = vec![0.0; l * 3 * d];
    let mut dp = vec![0.0; l];
    for h in 0..heads {
        let p = &probs[h * l * l..(h + 1) * l * l];
        for (i, &ri) in rows.iter().enumerate() {
            let dor = &dout.row(ri)[h * dh..(h + 1) * dh];
            // dV and dP
            for (j, &rj) in rows.iter().enumerate() {
                let w = p[i * l + j];
                let v = &qkv.row(rj)[2 * d + h * dh..2 * d + (h + 1) * dh];
                dp[j] = dor.iter().zip(v).map(|(a, b)| a * b).sum();
                let gv = &mut g[j * 3 * d + 2 * d + h * dh..j * 3 * d + 2 * d + (h + 1) * dh];
                for (a, b) in gv.iter_mut().zip(dor) {
                    *a += w * b;
                }
            }
            let dot: f64 = (0..l).map(|j| p[i * l + j] * dp[j]).sum();
            let q = &qkv.row(ri)[h * dh..(h + 1) * dh];
            for (j, &rj) in rows.iter().enumerate() {
                let ds = p[i * l + j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                let k = &qkv.row(rj)[d + h * dh..d + (h + 1) * dh];
                for c in 0..dh {
                    g[i * 3 * d + h * dh + c] += ds * k[c];
                    g[j * 3 * d + d + h * dh + c] += ds * q[c];
                }
            }
        }
    }
    g
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Tensor, cache: Vec<f64>) -> Var {
        self.nodes.push(Node { op, value, cache });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input that receives a gradient but is not a parameter.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, Vec::new())
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Param, t, Vec::new())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul shapes {}x{} * {}x{}", ta.rows, ta.cols, tb.rows, tb.cols);
        let mut out = Tensor::zeros(ta.rows, tb.cols);
        gemm(ta.rows, ta.cols, tb.cols, &ta.data, false, &tb.data, false, &mut out.data, 0.0);
        self.push(Op::MatMul(a, b), out, Vec::new())
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(bias));
        assert_eq!((tb.rows, tb.cols), (1, ta.cols), "bias shape");
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&tb.data) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, bias), out, Vec::new())
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "add shapes");
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(Op::Add(a, b), out, Vec::new())
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        self.push(Op::Scale(a, s), out, Vec::new())
    }

    pub fn modulate(&mut self, x: Var, shift: Var, scale: Var, groups: Arc<Vec<u32>>) -> Var {
        let (tx, tsh, tsc) = (self.value(x), self.value(shift), self.value(scale));
        assert_eq!(groups.len(), tx.rows);
        assert_eq!(tsh.cols, tx.cols);
        assert_eq!((tsh.rows, tsh.cols), (tsc.rows, tsc.cols));
        let mut out = tx.clone();
        for (r, &g) in groups.iter().enumerate() {
            if g == NO_GROUP {
                continue;
            }
            let (sh, sc) = (tsh.row(g as usize), tsc.row(g as usize));
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * (1.0 + sc[c]) + sh[c];
            }
        }
        self.push(Op::Modulate { x, shift, scale, groups }, out, Vec::new())
    }

    pub fn gate_rows(&mut self, x: Var, gate: Var, groups: Arc<Vec<u32>>) -> Var {
        let (tx, tg) = (self.value(x), self.value(gate));
        assert_eq!(groups.len(), tx.rows);
        assert_eq!(tg.cols, tx.cols);
        let mut out = tx.clone();
        for (r, &g) in groups.iter().enumerate() {
            let row = out.row_mut(r);
            if g == NO_GROUP {
                row.iter_mut().for_each(|v| *v = 0.0);
            } else {
                for (v, s) in row.iter_mut().zip(tg.row(g as usize)) {
                    *v *= s;
                }
            }
        }
        self.push(Op::GateRows { x, gate, groups }, out, Vec::new())
    }

    /// Per-row normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut out = tx.clone();
        let mut rstd = Vec::with_capacity(tx.rows);
        let c = tx.cols as f64;
        for r in 0..tx.rows {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
            let s = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            rstd.push(s);
        }
        self.push(Op::LayerNorm(x), out, rstd)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v = gelu(*v).0);
        self.push(Op::Gelu(x), out, Vec::new())
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data.iter_mut().for_each(|v| *v *= sigmoid(*v));
        self.push(Op::Silu(x), out, Vec::new())
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols, cols, "concat column mismatch");
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::from_vec(rows, cols, data), Vec::new())
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Var {
        let tx = self.value(x);
        let mut data = Vec::with_capacity(idx.len() * tx.cols);
        for &i in idx.iter() {
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::from_vec(idx.len(), tx.cols, data);
        self.push(Op::GatherRows(x, idx), out, Vec::new())
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.value(x);
        assert!(start + len <= tx.cols);
        let mut data = Vec::with_capacity(tx.rows * len);
        for r in 0..tx.rows {
            data.extend_from_slice(&tx.row(r)[start..start + len]);
        }
        let out = Tensor::from_vec(tx.rows, len, data);
        self.push(Op::SliceCols(x, start, len), out, Vec::new())
    }

    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.rows, 1);
        let out = Tensor::from_vec(n, tx.cols, tx.data.repeat(n));
        self.push(Op::RepeatRows(x), out, Vec::new())
    }

    /// Self-attention inside each row set of `seqs`. Each row may belong to
    /// at most one set.
    pub fn attention(&mut self, qkv: Var, seqs: Arc<Vec<Vec<usize>>>, heads: usize) -> Var {
        let t = self.value(qkv);
        assert_eq!(t.cols % 3, 0);
        let d = t.cols / 3;
        assert_eq!(d % heads, 0, "latent size must divide into heads");
        let results = par::map_range(seqs.len(), |s| attention_seq(t, &seqs[s], heads));
        let mut out = Tensor::zeros(t.rows, d);
        let mut cache = Vec::new();
        for (rows, res) in seqs.iter().zip(results) {
            for (i, &r) in rows.iter().enumerate() {
                out.row_mut(r).copy_from_slice(&res.out[i * d..(i + 1) * d]);
            }
            cache.extend_from_slice(&res.probs);
        }
        self.push(Op::Attention { qkv, seqs, heads }, out, cache)
    }

    /// Reverse pass. `seeds` gives the gradient of the objective with
    /// respect to selected nodes; the result holds a gradient for every node
    /// (`None` where nothing flowed).
    pub fn backward(&self, seeds: &[(Var, Tensor)]) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            let t = self.value(*v);
            assert_eq!((g.rows, g.cols), (t.rows, t.cols), "seed shape");
            accumulate(&mut grads, *v, g.clone());
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut ga = Tensor::zeros(ta.rows, ta.cols);
                gemm(ta.rows, g.cols, ta.cols, &g.data, false, &tb.data, true, &mut ga.data, 0.0);
                let mut gb = Tensor::zeros(tb.rows, tb.cols);
                gemm(ta.cols, ta.rows, g.cols, &ta.data, true, &g.data, false, &mut gb.data, 0.0);
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::AddRow(a, b) => {
                let mut gb = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                        *x += y;
                    }
                }
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Scale(a, s) => {
                let mut ga = g.clone();
                ga.data.iter_mut().for_each(|v| *v *= s);
                accumulate(grads, *a, ga);
            }
            Op::Modulate { x, shift, scale, groups } => {
                let (tx, tsc) = (self.value(*x), self.value(*scale));
                let mut gx = g.clone();
                let mut gsh = Tensor::zeros(tsc.rows, tsc.cols);
                let mut gsc = Tensor::zeros(tsc.rows, tsc.cols);
                for (r, &grp) in groups.iter().enumerate() {
                    if grp == NO_GROUP {
                        continue;
                    }
                    let gi = grp as usize;
                    let sc = tsc.row(gi);
                    let gr = g.row(r);
                    let xr = tx.row(r);
                    for c in 0..g.cols {
                        gsh.data[gi * g.cols + c] += gr[c];
                        gsc.data[gi * g.cols + c] += gr[c] * xr[c];
                    }
                    for (c, v) in gx.row_mut(r).iter_mut().enumerate() {
                        *v *= 1.0 + sc[c];
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *shift, gsh);
                accumulate(grads, *scale, gsc);
            }
            Op::GateRows { x, gate, groups } => {
                let (tx, tg) = (self.value(*x), self.value(*gate));
                let mut gx = Tensor::zeros(tx.rows, tx.cols);
                let mut gg = Tensor::zeros(tg.rows, tg.cols);
                for (r, &grp) in groups.iter().enumerate() {
                    if grp == NO_GROUP {
                        continue;
                    }
                    let gi = grp as usize;
                    let gr = g.row(r);
                    let xr = tx.row(r);
                    let gate_row = tg.row(gi);
                    for c in 0..g.cols {
                        gx.data[r * g.cols + c] = gr[c] * gate_row[c];
                        gg.data[gi * g.cols + c] += gr[c] * xr[c];
                    }
                }
                accumulate(grads, *x, gx);
                accumulate(grads, *gate, gg);
            }
            Op::LayerNorm(x) => {
                let y = &node.value;
                let c = y.cols as f64;
                let mut gx = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let mg = gr.iter().sum::<f64>() / c;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c;
                    let s = node.cache[r];
                    for (k, v) in gx.row_mut(r).iter_mut().enumerate() {
                        *v = s * (gr[k] - mg - yr[k] * mgy);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let data = tx.data.iter().zip(&g.data).map(|(v, gv)| gelu(*v).1 * gv).collect();
                accumulate(grads, *x, Tensor::from_vec(tx.rows, tx.cols, data));
            }
            Op::Silu(x) => {
                let tx = self.value(*x);
                let data = tx
                    .data
                    .iter()
                    .zip(&g.data)
                    .map(|(v, gv)| {
                        let s = sigmoid(*v);
                        gv * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                accumulate(grads, *x, Tensor::from_vec(tx.rows, tx.cols, data));
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let t = self.value(*p);
                    let n = t.rows * t.cols;
                    let part = Tensor::from_vec(t.rows, t.cols, g.data[start..start + n].to_vec());
                    accumulate(grads, *p, part);
                    start += n;
                }
            }
            Op::GatherRows(x, idx) => {
                let tx = self.value(*x);
                let mut gx = Tensor::zeros(tx.rows, tx.cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (a, b) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                        *a += b;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceCols(x, start, len) => {
                let tx = self.value(*x);
                let mut gx = Tensor::zeros(tx.rows, tx.cols);
                for r in 0..tx.rows {
                    gx.row_mut(r)[*start..start + len].copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::RepeatRows(x) => {
                let mut gx = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (a, b) in gx.data.iter_mut().zip(g.row(r)) {
                        *a += b;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Attention { qkv, seqs, heads } => {
                let t = self.value(*qkv);
                let mut offsets = Vec::with_capacity(seqs.len());
                let mut off = 0;
                for s in seqs.iter() {
                    offsets.push(off);
                    off += heads * s.len() * s.len();
                }
                let parts = par::map_range(seqs.len(), |s| {
                    let l = seqs[s].len();
                    let probs = &node.cache[offsets[s]..offsets[s] + heads * l * l];
                    attention_seq_grad(t, &seqs[s], *heads, probs, g)
                });
                let mut gq = Tensor::zeros(t.rows, t.cols);
                for (rows, part) in seqs.iter().zip(parts) {
                    for (i, &r) in rows.iter().enumerate() {
                        for (a, b) in gq.row_mut(r).iter_mut().zip(&part[i * t.cols..(i + 1) * t.cols]) {
                            *a += b;
                        }
                    }
                }
                accumulate(grads, *qkv, gq);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}
