//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Operations are recorded in call order on a [`Graph`]; each call returns a
//! [`Var`] handle. [`Graph::backward`] walks the tape in reverse recording
//! order, so gradient accumulation order is fixed and results are
//! reproducible bit for bit.
//!
//! Shape misuse is a programming error and panics. Data-dependent failures
//! (a zero-norm row under normalization, a non-scalar loss) return
//! [`Error`].

use super::gemm::gemm;
use super::ops::{gelu, gelu_grad, layer_norm_row, log_sum_exp, softmax_in_place};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Contiguous row range belonging to one sequence in a packed token matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    MulScalar { x: Var, s: Var },
    Exp { x: Var },
    Gelu { x: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    SoftmaxRows { x: Var },
    Attention { qkv: Var, segments: Vec<Segment>, heads: usize, probs: Vec<f64> },
    GatherRows { table: Var, idx: Vec<usize> },
    ScatterRows { src: Var, idx: Vec<usize> },
    L2NormalizeRows { x: Var, norms: Vec<f64> },
    RowDot { a: Var, b: Var },
    ConcatCols { a: Var, b: Var },
    Reshape { x: Var },
    GroupWeightedSum { weights: Var, values: Var },
    CrossEntropyRows { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A recorded computation. Not `Sync`-shared: build, run backward, drop.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by the [`Var`]s of the graph that produced them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` is a parameter or
    /// depends on one and the loss depends on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn dims2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `a[m,k] x b[k,n]`, or `a[m,k] x b[n,k]^T` when `trans_b`.
    pub fn matmul_ex(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let (m, k) = dims2(self.value(a));
        let (br, bc) = dims2(self.value(b));
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        assert_eq!(k, kb, "matmul inner dims {k} vs {kb}");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), trans_b, 0.0, &mut out);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMul { a, b, trans_b }, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_ex(a, b, false)
    }

    /// Adds a length-`n` bias to every row of `x[m,n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (m, n) = dims2(self.value(x));
        assert_eq!(self.value(bias).len(), n, "bias width");
        let mut out = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        let ng = self.ng(x) || self.ng(bias);
        self.push(Tensor::matrix(m, n, out), Op::AddBias { x, bias }, ng)
    }

    /// `x W + b` with `W` stored `[in, out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let y = self.matmul(x, weight);
        self.add_bias(y, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "add lengths");
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let dims = self.value(a).dims().to_vec();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(dims, out).expect("dims"), Op::Add { a, b }, ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).len(), self.value(b).len(), "sub lengths");
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let dims = self.value(a).dims().to_vec();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(dims, out).expect("dims"), Op::Sub { a, b }, ng)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v * c).collect();
        let dims = self.value(x).dims().to_vec();
        let ng = self.ng(x);
        self.push(Tensor::new(dims, out).expect("dims"), Op::Scale { x, c }, ng)
    }

    /// Multiplies every element of `x` by the single value held in `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        assert_eq!(self.value(s).len(), 1, "mul_scalar expects a one-element scale");
        let c = self.value(s).data()[0];
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v * c).collect();
        let dims = self.value(x).dims().to_vec();
        let ng = self.ng(x) || self.ng(s);
        self.push(Tensor::new(dims, out).expect("dims"), Op::MulScalar { x, s }, ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|v| v.exp()).collect();
        let dims = self.value(x).dims().to_vec();
        let ng = self.ng(x);
        self.push(Tensor::new(dims, out).expect("dims"), Op::Exp { x }, ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.value(x).data().iter().map(|&v| gelu(v)).collect();
        let dims = self.value(x).dims().to_vec();
        let ng = self.ng(x);
        self.push(Tensor::new(dims, out).expect("dims"), Op::Gelu { x }, ng)
    }

    /// Row-wise layer normalization of `x[m,n]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let (m, n) = dims2(self.value(x));
        assert_eq!(self.value(gain).len(), n, "layer_norm gain width");
        assert_eq!(self.value(bias).len(), n, "layer_norm bias width");
        let ones = vec![1.0; n];
        let zeros = vec![0.0; n];
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let xv = self.value(x).data();
        for i in 0..m {
            rstd[i] = layer_norm_row(&xv[i * n..(i + 1) * n], &ones, &zeros, eps, &mut xhat[i * n..(i + 1) * n]);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = xhat.clone();
        for row in out.chunks_mut(n) {
            for j in 0..n {
                row[j] = row[j] * g[j] + b[j];
            }
        }
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        self.push(
            Tensor::matrix(m, n, out),
            Op::LayerNorm { x, gain, bias, xhat, rstd },
            ng,
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (m, n) = dims2(self.value(x));
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let ng = self.ng(x);
        self.push(Tensor::matrix(m, n, out), Op::SoftmaxRows { x }, ng)
    }

    /// Multi-head scaled dot-product self-attention over packed sequences.
    ///
    /// `qkv` is `[tokens, 3w]` holding queries, keys and values side by side;
    /// each segment attends only within itself. Output is `[tokens, w]` with
    /// heads concatenated along columns.
    pub fn attention(&mut self, qkv: Var, segments: &[Segment], heads: usize) -> Var {
        let (n_tok, three_w) = dims2(self.value(qkv));
        assert_eq!(three_w % 3, 0, "qkv width must be 3w");
        let w = three_w / 3;
        assert!(heads > 0 && w % heads == 0, "width {w} not divisible by {heads} heads");
        let dh = w / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let x = self.value(qkv).data();
        let mut out = vec![0.0; n_tok * w];
        let mut probs = Vec::with_capacity(segments.iter().map(|s| s.len * s.len).sum::<usize>() * heads);
        for seg in segments {
            assert!(seg.start + seg.len <= n_tok, "segment out of range");
            let l = seg.len;
            for h in 0..heads {
                let base = probs.len();
                probs.resize(base + l * l, 0.0);
                let p = &mut probs[base..];
                for i in 0..l {
                    let qi = &x[(seg.start + i) * three_w + h * dh..][..dh];
                    for j in 0..l {
                        let kj = &x[(seg.start + j) * three_w + w + h * dh..][..dh];
                        p[i * l + j] = super::ops::dot(qi, kj) * scale;
                    }
                    softmax_in_place(&mut p[i * l..(i + 1) * l]);
                }
                for i in 0..l {
                    let o = &mut out[(seg.start + i) * w + h * dh..][..dh];
                    for j in 0..l {
                        let pij = p[i * l + j];
                        let vj = &x[(seg.start + j) * three_w + 2 * w + h * dh..][..dh];
                        for (ov, vv) in o.iter_mut().zip(vj) {
                            *ov += pij * vv;
                        }
                    }
                }
            }
        }
        let ng = self.ng(qkv);
        self.push(
            Tensor::matrix(n_tok, w, out),
            Op::Attention { qkv, segments: segments.to_vec(), heads, probs },
            ng,
        )
    }

    /// `out[i] = table[idx[i]]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let (r, n) = dims2(self.value(table));
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < r, "gather index {i} out of {r} rows");
            out.extend_from_slice(&t[i * n..(i + 1) * n]);
        }
        let ng = self.ng(table);
        self.push(Tensor::matrix(idx.len(), n, out), Op::GatherRows { table, idx: idx.to_vec() }, ng)
    }

    /// Places row `i` of `src` at row `idx[i]` of an `[n_out, n]` zero matrix.
    /// Indices must be distinct.
    pub fn scatter_rows(&mut self, src: Var, idx: &[usize], n_out: usize) -> Var {
        let (r, n) = dims2(self.value(src));
        assert_eq!(r, idx.len(), "scatter index count");
        let s = self.value(src).data();
        let mut out = vec![0.0; n_out * n];
        for (i, &d) in idx.iter().enumerate() {
            assert!(d < n_out, "scatter index {d} out of {n_out}");
            out[d * n..(d + 1) * n].copy_from_slice(&s[i * n..(i + 1) * n]);
        }
        let ng = self.ng(src);
        self.push(Tensor::matrix(n_out, n, out), Op::ScatterRows { src, idx: idx.to_vec() }, ng)
    }

    /// Divides each row by its Euclidean norm. Fails on a row with norm ≤ 1e-12.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = dims2(self.value(x));
        let mut out = self.value(x).data().to_vec();
        let mut norms = Vec::with_capacity(m);
        for (i, row) in out.chunks_mut(n).enumerate() {
            let norm = super::ops::l2_norm(row);
            if !(norm > 1e-12) {
                return Err(Error::Degenerate(format!("row {i} has norm {norm}")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::matrix(m, n, out), Op::L2NormalizeRows { x, norms }, ng))
    }

    /// Row-wise dot products of two `[m,n]` matrices, giving `[m,1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (m, n) = dims2(self.value(a));
        assert_eq!(dims2(self.value(b)), (m, n), "row_dot shapes");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let out: Vec<f64> = (0..m).map(|i| super::ops::dot(&av[i * n..(i + 1) * n], &bv[i * n..(i + 1) * n])).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, 1, out), Op::RowDot { a, b }, ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (m, p) = dims2(self.value(a));
        let (mb, q) = dims2(self.value(b));
        assert_eq!(m, mb, "concat_cols rows");
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&av[i * p..(i + 1) * p]);
            out.extend_from_slice(&bv[i * q..(i + 1) * q]);
        }
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::matrix(m, p + q, out), Op::ConcatCols { a, b }, ng)
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(dims).expect("reshape element count");
        let ng = self.ng(x);
        self.push(t, Op::Reshape { x }, ng)
    }

    /// For `weights[b,g]` and `values[b*g, d]`, returns `[b, d]` where row `i`
    /// is `sum_j weights[i,j] * values[i*g + j]`.
    pub fn group_weighted_sum(&mut self, weights: Var, values: Var) -> Var {
        let (b, g) = dims2(self.value(weights));
        let (r, d) = dims2(self.value(values));
        assert_eq!(r, b * g, "group_weighted_sum rows");
        let wv = self.value(weights).data();
        let vv = self.value(values).data();
        let mut out = vec![0.0; b * d];
        for i in 0..b {
            let o = &mut out[i * d..(i + 1) * d];
            for j in 0..g {
                let w = wv[i * g + j];
                for (ov, x) in o.iter_mut().zip(&vv[(i * g + j) * d..(i * g + j + 1) * d]) {
                    *ov += w * x;
                }
            }
        }
        let ng = self.ng(weights) || self.ng(values);
        self.push(Tensor::matrix(b, d, out), Op::GroupWeightedSum { weights, values }, ng)
    }

    /// Mean over rows of softmax cross-entropy with one target index per row.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (m, n) = dims2(self.value(logits));
        assert_eq!(targets.len(), m, "one target per row");
        let lv = self.value(logits).data();
        let mut probs = lv.to_vec();
        let mut total = 0.0;
        for (i, row) in lv.chunks(n).enumerate() {
            assert!(targets[i] < n, "target out of range");
            total += log_sum_exp(row) - row[targets[i]];
            softmax_in_place(&mut probs[i * n..(i + 1) * n]);
        }
        let ng = self.ng(logits);
        self.push(
            Tensor::scalar(total / m as f64),
            Op::CrossEntropyRows { logits, targets: targets.to_vec(), probs },
            ng,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, ng)
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0].value;
        if out.len() != 1 {
            return Err(Error::Shape(format!("backward needs a scalar output, got dims {:?}", out.dims())));
        }
        if !out.data()[0].is_finite() {
            return Err(Error::InvalidArgument("backward from a non-finite output".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::new(n.value.dims().to_vec(), g).expect("grad dims")))
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = dims2(self.value(*a));
                let n = node.value.cols();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(ga) = self.acc(grads, *a) {
                    // dA = dC op(B)^T
                    gemm(m, n, k, g, false, bv, !*trans_b, 1.0, ga);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    if *trans_b {
                        // B is [n,k]: dB = dC^T A
                        gemm(n, m, k, g, true, av, false, 1.0, gb);
                    } else {
                        // dB = A^T dC
                        gemm(k, m, n, av, true, g, false, 1.0, gb);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                let n = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        gv.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Sub { a, b } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
                }
            }
            Op::Scale { x, c } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b);
                }
            }
            Op::MulScalar { x, s } => {
                let c = self.value(*s).data()[0];
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b);
                }
                let xv = self.value(*x).data();
                if let Some(gs) = self.acc(grads, *s) {
                    gs[0] += super::ops::dot(g, xv);
                }
            }
            Op::Exp { x } => {
                let y = node.value.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * y[i];
                    }
                }
            }
            Op::Gelu { x } => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..gx.len() {
                        gx[i] += g[i] * gelu_grad(xv[i]);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let n = node.value.cols();
                let gain_v = self.value(*gain).data();
                if let Some(gg) = self.acc(grads, *gain) {
                    for (grow, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for grow in g.chunks(n) {
                        gb.iter_mut().zip(grow).for_each(|(a, b)| *a += b);
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let mut dxhat = vec![0.0; n];
                    for (i, (grow, hrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for j in 0..n {
                            dxhat[j] = grow[j] * gain_v[j];
                            mean_d += dxhat[j];
                            mean_dh += dxhat[j] * hrow[j];
                        }
                        mean_d /= n as f64;
                        mean_dh /= n as f64;
                        let out = &mut gx[i * n..(i + 1) * n];
                        for j in 0..n {
                            out[j] += rstd[i] * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                        }
                    }
                }
            }
            Op::SoftmaxRows { x } => {
                let n = node.value.cols();
                let y = node.value.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for (i, (grow, yrow)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let s = super::ops::dot(grow, yrow);
                        for j in 0..n {
                            gx[i * n + j] += yrow[j] * (grow[j] - s);
                        }
                    }
                }
            }
            Op::Attention { qkv, segments, heads, probs } => {
                let three_w = self.value(*qkv).cols();
                let w = three_w / 3;
                let dh = w / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let x = self.value(*qkv).data();
                let Some(gx) = self.acc(grads, *qkv) else { return };
                let mut off = 0;
                let mut dp = Vec::new();
                for seg in segments {
                    let l = seg.len;
                    for h in 0..*heads {
                        let p = &probs[off..off + l * l];
                        off += l * l;
                        dp.clear();
                        dp.resize(l * l, 0.0);
                        // dP = dO V^T, dV = P^T dO
                        for i in 0..l {
                            let go = &g[(seg.start + i) * w + h * dh..][..dh];
                            for j in 0..l {
                                let vj = &x[(seg.start + j) * three_w + 2 * w + h * dh..][..dh];
                                dp[i * l + j] = super::ops::dot(go, vj);
                                let pij = p[i * l + j];
                                let gv = &mut gx[(seg.start + j) * three_w + 2 * w + h * dh..][..dh];
                                for (a, b) in gv.iter_mut().zip(go) {
                                    *a += pij * b;
                                }
                            }
                        }
                        // dS = P * (dP - rowsum(dP * P)), then into Q and K
                        for i in 0..l {
                            let s: f64 = (0..l).map(|j| dp[i * l + j] * p[i * l + j]).sum();
                            for j in 0..l {
                                let ds = p[i * l + j] * (dp[i * l + j] - s) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                let qi = (seg.start + i) * three_w + h * dh;
                                let kj = (seg.start + j) * three_w + w + h * dh;
                                for t in 0..dh {
                                    gx[qi + t] += ds * x[kj + t];
                                    gx[kj + t] += ds * x[qi + t];
                                }
                            }
                        }
                    }
                }
            }
            Op::GatherRows { table, idx } => {
                let n = node.value.cols();
                if let Some(gt) = self.acc(grads, *table) {
                    for (i, &r) in idx.iter().enumerate() {
                        for j in 0..n {
                            gt[r * n + j] += g[i * n + j];
                        }
                    }
                }
            }
            Op::ScatterRows { src, idx } => {
                let n = node.value.cols();
                if let Some(gs) = self.acc(grads, *src) {
                    for (i, &r) in idx.iter().enumerate() {
                        for j in 0..n {
                            gs[i * n + j] += g[r * n + j];
                        }
                    }
                }
            }
            Op::L2NormalizeRows { x, norms } => {
                let n = node.value.cols();
                let y = node.value.data();
                if let Some(gx) = self.acc(grads, *x) {
                    for (i, (grow, yrow)) in g.chunks(n).zip(y.chunks(n)).enumerate() {
                        let s = super::ops::dot(grow, yrow);
                        for j in 0..n {
                            gx[i * n + j] += (grow[j] - yrow[j] * s) / norms[i];
                        }
                    }
                }
            }
            Op::RowDot { a, b } => {
                let n = self.value(*a).cols();
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for (i, gi) in g.iter().enumerate() {
                        for j in 0..n {
                            ga[i * n + j] += gi * bv[i * n + j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (i, gi) in g.iter().enumerate() {
                        for j in 0..n {
                            gb[i * n + j] += gi * av[i * n + j];
                        }
                    }
                }
            }
            Op::ConcatCols { a, b } => {
                let p = self.value(*a).cols();
                let q = self.value(*b).cols();
                if let Some(ga) = self.acc(grads, *a) {
                    for (i, row) in g.chunks(p + q).enumerate() {
                        ga[i * p..(i + 1) * p].iter_mut().zip(&row[..p]).for_each(|(x, y)| *x += y);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (i, row) in g.chunks(p + q).enumerate() {
                        gb[i * q..(i + 1) * q].iter_mut().zip(&row[p..]).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            Op::GroupWeightedSum { weights, values } => {
                let (b, gsz) = dims2(self.value(*weights));
                let d = node.value.cols();
                let wv = self.value(*weights).data();
                let vv = self.value(*values).data();
                if let Some(gw) = self.acc(grads, *weights) {
                    for i in 0..b {
                        for j in 0..gsz {
                            let r = i * gsz + j;
                            gw[r] += super::ops::dot(&g[i * d..(i + 1) * d], &vv[r * d..(r + 1) * d]);
                        }
                    }
                }
                if let Some(gv) = self.acc(grads, *values) {
                    for i in 0..b {
                        for j in 0..gsz {
                            let r = i * gsz + j;
                            let w = wv[r];
                            for t in 0..d {
                                gv[r * d + t] += w * g[i * d + t];
                            }
                        }
                    }
                }
            }
            Op::CrossEntropyRows { logits, targets, probs } => {
                let n = self.value(*logits).cols();
                let m = targets.len() as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..n {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            gl[i * n + j] += g[0] * (probs[i * n + j] - onehot) / m;
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
        }
    }
}
