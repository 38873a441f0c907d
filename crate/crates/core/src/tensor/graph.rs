use super::gemm::{gemm, Transpose};
use super::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    MulConst(Var, Vec<f64>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    SoftmaxRows(Var),
    Reshape(Var),
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        seq_len: usize,
        kernel: usize,
    },
    SegmentMean(Var, usize),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    ColMean(Var),
    BceWithLogits(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>),
    StraightThrough(Var),
    GradScale(Var, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::MulConst(..) => "mul_const",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Ln(..) => "ln",
            Op::SoftmaxRows(..) => "softmax",
            Op::Reshape(..) => "reshape",
            Op::Conv1d { .. } => "conv1d",
            Op::SegmentMean(..) => "segment_mean",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::ColMean(..) => "col_mean",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::CrossEntropy(..) => "cross_entropy",
            Op::StraightThrough(..) => "straight_through",
            Op::GradScale(..) => "grad_scale",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Lower clamp applied inside `ln`.
pub const LN_FLOOR: f64 = 1e-12;

/// A recorded forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    poisoned: Option<&'static str>,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row ranges `(dst, src)` touched by one convolution tap.
fn tap_rows(batch: usize, seq_len: usize, offset: isize) -> Vec<(usize, usize)> {
    let l = seq_len as isize;
    let lo = (-offset).max(0);
    let hi = (l - offset).min(l);
    let mut rows = Vec::new();
    if hi <= lo {
        return rows;
    }
    for b in 0..batch {
        for t in lo..hi {
            let dst = b * seq_len + t as usize;
            let src = (b as isize * l + t + offset) as usize;
            rows.push((dst, src));
        }
    }
    rows
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        if self.poisoned.is_none() && !value.is_finite() {
            self.poisoned = Some(op.name());
        }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// First op that produced a non-finite value, if any.
    pub fn poisoned(&self) -> Option<&'static str> {
        self.poisoned
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.poisoned {
            Some(op) => Err(TensorError::NonFinite { op }),
            None => Ok(()),
        }
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let t = self.value(v);
        if t.len() != 1 {
            return Err(TensorError::NonScalarLoss(t.shape().to_vec()));
        }
        self.check_finite()?;
        Ok(t.data()[0])
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2, "matmul needs 2-D operands");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        assert_eq!(k, sb[0], "matmul inner dims {sa:?} x {sb:?}");
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            Transpose::No,
            self.value(b).data(),
            Transpose::No,
            0.0,
            &mut out,
        );
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), ng)
    }

    /// `x [r, c] + bias [c]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let c = self.value(x).cols();
        assert_eq!(self.value(bias).len(), c, "add_row bias width");
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c) {
            row.iter_mut().zip(b).for_each(|(o, bv)| *o += bv);
        }
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x) || self.ng(bias);
        self.push(Tensor::from_parts(shape, out), Op::AddRow(x, bias), ng)
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "{} shape mismatch", op.name());
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_parts(shape, out), op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).data().iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push(Tensor::from_parts(shape, out), op, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    /// Add a constant tensor of identical shape (no gradient to the constant).
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Var {
        assert_eq!(self.value(x).len(), c.len(), "add_const length");
        let out = self.value(x).data().iter().zip(c).map(|(a, b)| a + b).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push(Tensor::from_parts(shape, out), Op::AddConst(x), ng)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let c = vec![s; self.value(x).len()];
        self.add_const(x, &c)
    }

    /// Elementwise product with a constant mask.
    pub fn mul_const(&mut self, x: Var, mask: Vec<f64>) -> Var {
        assert_eq!(self.value(x).len(), mask.len(), "mul_const length");
        let out = self.value(x).data().iter().zip(&mask).map(|(a, b)| a * b).collect();
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push(Tensor::from_parts(shape, out), Op::MulConst(x, mask), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    /// Natural log with inputs clamped below at [`LN_FLOOR`].
    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(LN_FLOOR).ln(), Op::Ln(x))
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let c = self.value(x).cols();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let shape = self.shape(x).to_vec();
        let ng = self.ng(x);
        self.push(Tensor::from_parts(shape, out), Op::SoftmaxRows(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x);
        assert_eq!(
            shape.iter().product::<usize>(),
            t.len(),
            "reshape {:?} -> {shape:?}",
            t.shape()
        );
        let out = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        let ng = self.ng(x);
        self.push(out, Op::Reshape(x), ng)
    }

    /// Same-padded 1-D convolution over sequences stored as row blocks.
    ///
    /// `input` is `[batch * seq_len, c_in]`, `weight` is
    /// `[kernel * c_in, c_out]` (tap-major), `bias` is `[c_out]`. The kernel
    /// must be odd. Taps falling outside a sequence contribute nothing.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, seq_len: usize, kernel: usize) -> Var {
        assert!(kernel % 2 == 1, "conv1d kernel must be odd");
        let xs = self.value(input);
        let (rows, c_in) = (xs.rows(), xs.cols());
        assert!(seq_len > 0 && rows % seq_len == 0, "conv1d rows {rows} not a multiple of {seq_len}");
        let ws = self.value(weight);
        assert_eq!(ws.rows(), kernel * c_in, "conv1d weight rows");
        let c_out = ws.cols();
        assert_eq!(self.value(bias).len(), c_out, "conv1d bias");
        let batch = rows / seq_len;
        let pad = (kernel / 2) as isize;

        let mut out = vec![0.0; rows * c_out];
        let b = self.value(bias).data();
        for row in out.chunks_mut(c_out) {
            row.copy_from_slice(b);
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        for j in 0..kernel {
            let offset = j as isize - pad;
            let wj = &w[j * c_in * c_out..(j + 1) * c_in * c_out];
            if offset == 0 {
                gemm(rows, c_in, c_out, 1.0, x, Transpose::No, wj, Transpose::No, 1.0, &mut out);
                continue;
            }
            let pairs = tap_rows(batch, seq_len, offset);
            if pairs.is_empty() {
                continue;
            }
            let mut gathered = Vec::with_capacity(pairs.len() * c_in);
            for &(_, src) in &pairs {
                gathered.extend_from_slice(&x[src * c_in..(src + 1) * c_in]);
            }
            let mut tmp = vec![0.0; pairs.len() * c_out];
            gemm(pairs.len(), c_in, c_out, 1.0, &gathered, Transpose::No, wj, Transpose::No, 0.0, &mut tmp);
            for (i, &(dst, _)) in pairs.iter().enumerate() {
                let o = &mut out[dst * c_out..(dst + 1) * c_out];
                o.iter_mut().zip(&tmp[i * c_out..(i + 1) * c_out]).for_each(|(a, b)| *a += b);
            }
        }
        let ng = self.ng(input) || self.ng(weight) || self.ng(bias);
        self.push(
            Tensor::from_parts(vec![rows, c_out], out),
            Op::Conv1d {
                input,
                weight,
                bias,
                seq_len,
                kernel,
            },
            ng,
        )
    }

    /// Mean over consecutive blocks of `seg` rows: `[b * seg, c] -> [b, c]`.
    pub fn segment_mean(&mut self, x: Var, seg: usize) -> Var {
        let t = self.value(x);
        let (rows, c) = (t.rows(), t.cols());
        assert!(seg > 0 && rows % seg == 0, "segment_mean rows");
        let b = rows / seg;
        let mut out = vec![0.0; b * c];
        for (r, row) in t.data().chunks(c).enumerate() {
            let o = &mut out[(r / seg) * c..(r / seg + 1) * c];
            o.iter_mut().zip(row).for_each(|(a, v)| *a += v / seg as f64);
        }
        let ng = self.ng(x);
        self.push(Tensor::from_parts(vec![b, c], out), Op::SegmentMean(x, seg), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        assert!(parts.iter().all(|p| self.value(*p).rows() == rows), "concat_cols rows");
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let ng = parts.iter().any(|p| self.ng(*p));
        self.push(Tensor::from_parts(vec![rows, total], out), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (rows, c) = (t.rows(), t.cols());
        assert!(start + len <= c, "slice_cols out of range");
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let ng = self.ng(x);
        self.push(Tensor::from_parts(vec![rows, len], out), Op::SliceCols(x, start), ng)
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let ng = self.ng(x);
        self.push(
            Tensor::from_parts(vec![idx.len(), c], out),
            Op::GatherRows(x, idx.to_vec()),
            ng,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Mean over rows: `[r, c] -> [1, c]`.
    pub fn col_mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; c];
        for row in t.data().chunks(c) {
            out.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        out.iter_mut().for_each(|v| *v /= rows as f64);
        let ng = self.ng(x);
        self.push(Tensor::from_parts(vec![1, c], out), Op::ColMean(x), ng)
    }

    /// Elementwise binary cross-entropy of sigmoid(logits) against fixed
    /// targets in [0, 1], computed in the numerically stable form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Vec<f64>) -> Var {
        assert_eq!(self.value(logits).len(), targets.len(), "bce targets length");
        let out = self
            .value(logits)
            .data()
            .iter()
            .zip(&targets)
            .map(|(z, y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .collect();
        let shape = self.shape(logits).to_vec();
        let ng = self.ng(logits);
        self.push(Tensor::from_parts(shape, out), Op::BceWithLogits(logits, targets), ng)
    }

    /// Per-row softmax cross-entropy: `[r, c]` logits -> `[r, 1]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let t = self.value(logits);
        let (rows, c) = (t.rows(), t.cols());
        assert_eq!(rows, labels.len(), "cross_entropy labels");
        let mut out = Vec::with_capacity(rows);
        for (r, &y) in labels.iter().enumerate() {
            assert!(y < c, "label {y} out of range");
            let row = t.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            out.push(lse - row[y]);
        }
        let ng = self.ng(logits);
        self.push(
            Tensor::from_parts(vec![rows, 1], out),
            Op::CrossEntropy(logits, labels.to_vec()),
            ng,
        )
    }

    /// Forward: one-hot argmax of each row. Backward: identity.
    pub fn straight_through(&mut self, soft: Var) -> Var {
        let t = self.value(soft);
        let c = t.cols();
        let mut out = vec![0.0; t.len()];
        for (row, o) in t.data().chunks(c).zip(out.chunks_mut(c)) {
            o[argmax(row)] = 1.0;
        }
        let shape = t.shape().to_vec();
        let ng = self.ng(soft);
        self.push(Tensor::from_parts(shape, out), Op::StraightThrough(soft), ng)
    }

    /// Forward: identity. Backward: gradient multiplied by `factor`.
    pub fn grad_scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x).clone();
        let ng = self.ng(x);
        self.push(t, Op::GradScale(x, factor), ng)
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.ng(loss) {
            return Ok(Grads { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if gy.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFiniteGrad { op: node.op.name() });
            }
            self.backprop_node(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Grads { grads })
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.ng(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn backprop_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |ga| {
                    gemm(m, n, k, 1.0, gy, Transpose::No, bv, Transpose::Yes, 1.0, ga)
                });
                self.acc(grads, *b, |gb| {
                    gemm(k, m, n, 1.0, av, Transpose::Yes, gy, Transpose::No, 1.0, gb)
                });
            }
            Op::AddRow(x, bias) => {
                self.acc(grads, *x, |g| add_into(g, gy));
                let c = self.value(*bias).len();
                self.acc(grads, *bias, |g| {
                    for row in gy.chunks(c) {
                        add_into(g, row);
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |g| add_into(g, gy));
                self.acc(grads, *b, |g| add_into(g, gy));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |g| add_into(g, gy));
                self.acc(grads, *b, |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a -= d));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * bv[i];
                    }
                });
                self.acc(grads, *b, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * av[i];
                    }
                });
            }
            Op::Scale(x, s) => self.acc(grads, *x, |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a += s * d)),
            Op::AddConst(x) | Op::Reshape(x) => self.acc(grads, *x, |g| add_into(g, gy)),
            Op::MulConst(x, mask) => self.acc(grads, *x, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * mask[i];
                }
            }),
            Op::Relu(x) => self.acc(grads, *x, |g| {
                for i in 0..g.len() {
                    if y[i] > 0.0 {
                        g[i] += gy[i];
                    }
                }
            }),
            Op::Tanh(x) => self.acc(grads, *x, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Sigmoid(x) => self.acc(grads, *x, |g| {
                for i in 0..g.len() {
                    g[i] += gy[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Ln(x) => {
                let xv = self.value(*x).data();
                self.acc(grads, *x, |g| {
                    for i in 0..g.len() {
                        if xv[i] > LN_FLOOR {
                            g[i] += gy[i] / xv[i];
                        }
                    }
                })
            }
            Op::SoftmaxRows(x) => {
                let c = node.value.cols();
                self.acc(grads, *x, |g| {
                    for ((gr, yr), dr) in g.chunks_mut(c).zip(y.chunks(c)).zip(gy.chunks(c)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                })
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                seq_len,
                kernel,
            } => self.backprop_conv(*input, *weight, *bias, *seq_len, *kernel, gy, grads),
            Op::SegmentMean(x, seg) => {
                let c = node.value.cols();
                self.acc(grads, *x, |g| {
                    for (r, row) in g.chunks_mut(c).enumerate() {
                        let d = &gy[(r / seg) * c..(r / seg + 1) * c];
                        row.iter_mut().zip(d).for_each(|(a, v)| *a += v / *seg as f64);
                    }
                })
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    self.acc(grads, *p, |g| {
                        for r in 0..rows {
                            add_into(&mut g[r * w..(r + 1) * w], &gy[r * total + start..r * total + start + w]);
                        }
                    });
                    start += w;
                }
            }
            Op::SliceCols(x, start) => {
                let c = self.value(*x).cols();
                let w = node.value.cols();
                self.acc(grads, *x, |g| {
                    for (r, d) in gy.chunks(w).enumerate() {
                        add_into(&mut g[r * c + start..r * c + start + w], d);
                    }
                })
            }
            Op::GatherRows(x, idx) => {
                let c = node.value.cols();
                self.acc(grads, *x, |g| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut g[i * c..(i + 1) * c], &gy[r * c..(r + 1) * c]);
                    }
                })
            }
            Op::Sum(x) => self.acc(grads, *x, |g| g.iter_mut().for_each(|a| *a += gy[0])),
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                self.acc(grads, *x, |g| g.iter_mut().for_each(|a| *a += gy[0] / n))
            }
            Op::ColMean(x) => {
                let rows = self.value(*x).rows() as f64;
                let c = node.value.cols();
                self.acc(grads, *x, |g| {
                    for row in g.chunks_mut(c) {
                        row.iter_mut().zip(gy).for_each(|(a, d)| *a += d / rows);
                    }
                })
            }
            Op::BceWithLogits(x, targets) => {
                let z = self.value(*x).data();
                self.acc(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * (sigmoid(z[i]) - targets[i]);
                    }
                })
            }
            Op::CrossEntropy(x, labels) => {
                let t = self.value(*x);
                let c = t.cols();
                self.acc(grads, *x, |g| {
                    for (r, &lab) in labels.iter().enumerate() {
                        let row = t.row(r);
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let s: f64 = row.iter().map(|v| (v - m).exp()).sum();
                        for j in 0..c {
                            let p = (row[j] - m).exp() / s;
                            let ind = if j == lab { 1.0 } else { 0.0 };
                            g[r * c + j] += gy[r] * (p - ind);
                        }
                    }
                })
            }
            Op::StraightThrough(x) => self.acc(grads, *x, |g| add_into(g, gy)),
            Op::GradScale(x, f) => self.acc(grads, *x, |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a += f * d)),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv(
        &self,
        input: Var,
        weight: Var,
        bias: Var,
        seq_len: usize,
        kernel: usize,
        gy: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let xt = self.value(input);
        let (rows, c_in) = (xt.rows(), xt.cols());
        let x = xt.data();
        let w = self.value(weight).data();
        let c_out = self.value(weight).cols();
        let batch = rows / seq_len;
        let pad = (kernel / 2) as isize;

        self.acc(grads, bias, |g| {
            for row in gy.chunks(c_out) {
                add_into(g, row);
            }
        });
        for j in 0..kernel {
            let offset = j as isize - pad;
            let wrange = j * c_in * c_out..(j + 1) * c_in * c_out;
            if offset == 0 {
                self.acc(grads, weight, |g| {
                    gemm(c_in, rows, c_out, 1.0, x, Transpose::Yes, gy, Transpose::No, 1.0, &mut g[wrange.clone()])
                });
                self.acc(grads, input, |g| {
                    gemm(rows, c_out, c_in, 1.0, gy, Transpose::No, &w[wrange.clone()], Transpose::Yes, 1.0, g)
                });
                continue;
            }
            let pairs = tap_rows(batch, seq_len, offset);
            if pairs.is_empty() {
                continue;
            }
            let n = pairs.len();
            let mut gy_g = Vec::with_capacity(n * c_out);
            for &(dst, _) in &pairs {
                gy_g.extend_from_slice(&gy[dst * c_out..(dst + 1) * c_out]);
            }
            if self.ng(weight) {
                let mut x_g = Vec::with_capacity(n * c_in);
                for &(_, src) in &pairs {
                    x_g.extend_from_slice(&x[src * c_in..(src + 1) * c_in]);
                }
                self.acc(grads, weight, |g| {
                    gemm(c_in, n, c_out, 1.0, &x_g, Transpose::Yes, &gy_g, Transpose::No, 1.0, &mut g[wrange.clone()])
                });
            }
            if self.ng(input) {
                let mut tmp = vec![0.0; n * c_in];
                gemm(n, c_out, c_in, 1.0, &gy_g, Transpose::No, &w[wrange.clone()], Transpose::Yes, 0.0, &mut tmp);
                self.acc(grads, input, |g| {
                    for (i, &(_, src)) in pairs.iter().enumerate() {
                        add_into(&mut g[src * c_in..(src + 1) * c_in], &tmp[i * c_in..(i + 1) * c_in]);
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

/// Index of the largest entry; first wins on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let sq = g.mul(w, w);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_has_no_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let c = g.constant(Tensor::new(vec![2], vec![5.0, 6.0]).unwrap());
        let loss = g.sum(c);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        assert!(matches!(g.backward(w), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn nan_is_reported_with_op_name() {
        let mut g = Graph::new();
        let w = g.leaf(Tensor::new(vec![2], vec![f64::INFINITY, 1.0]).unwrap());
        let z = g.scale(w, 0.0);
        let loss = g.sum(z);
        let err = g.backward(loss).unwrap_err();
        assert_eq!(err, TensorError::NonFinite { op: "leaf" });
    }

    #[test]
    fn straight_through_forward_is_one_hot() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2, 3], vec![0.1, 0.7, 0.2, 0.5, 0.2, 0.3]).unwrap());
        let h = g.straight_through(x);
        assert_eq!(g.value(h).data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_with_single_frame_uses_center_tap_only() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap());
        // taps: -1 -> 10, 0 -> 1, +1 -> 100
        let w = g.leaf(Tensor::new(vec![3, 1], vec![10.0, 1.0, 100.0]).unwrap());
        let b = g.leaf(Tensor::new(vec![1], vec![0.0]).unwrap());
        let y = g.conv1d(x, w, b, 1, 3);
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
        let y2 = g.conv1d(x, w, b, 2, 3);
        // t0 = 1*1 + 2*100, t1 = 1*10 + 2*1
        assert_eq!(g.value(y2).data(), &[201.0, 12.0]);
    }
}
