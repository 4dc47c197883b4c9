//! Operation recording and reverse-mode differentiation.

use super::{gemm, transpose, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Reshape(Var),
    Slice {
        x: Var,
        row0: usize,
        col0: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    Pick {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Gelu(Var),
    FocalNll {
        logits: Var,
        targets: Vec<usize>,
        gamma: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of executed operations.
///
/// Records are appended in execution order, so the record list is always a
/// topological order of the computation graph. A tape belongs to one
/// computation and is not shared between threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if the loss does not depend on it or it
    /// was registered without gradients.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any operation producing NaN or infinity.
    pub fn checked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a constant: no gradient will be computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Registers a leaf whose gradient will be reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::Shape {
            op,
            lhs: self.value(a).shape().to_vec(),
            rhs: self.value(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b)).map_err(|e| match e {
            TensorError::Shape { .. } => self.shape_err("matmul", a, b),
            other => other,
        })?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        self.push("transpose", out, Op::Transpose(x), &[x])
    }

    /// `x · wᵀ + b` for a weight stored `[out × in]` and bias `[out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let wt = self.transpose(weight)?;
        let y = self.matmul(x, wt)?;
        self.add_broadcast(y, bias)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(self.shape_err("add", a, b));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// Adds `b` to every consecutive `b.numel()`-sized chunk of `a`.
    ///
    /// Covers both a bias `[n]` on `[m × n]` and a positional table `[t × n]`
    /// on a stacked `[k·t × n]` sequence batch.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.numel() % vb.numel() != 0 || va.last_dim() != vb.last_dim() {
            return Err(self.shape_err("add_broadcast", a, b));
        }
        let bn = vb.numel();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + vb.data()[i % bn])
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("add_broadcast", out, Op::AddBroadcast(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(self.shape_err("mul", a, b));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var> {
        let vx = self.value(x);
        let out = Tensor::new(vx.shape().to_vec(), vx.data().iter().map(|v| v * factor).collect())?;
        self.push("scale", out, Op::Scale(x, factor), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    /// Rectangular sub-block `[rows × cols]` of a matrix starting at `(row0, col0)`.
    pub fn slice(&mut self, x: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let vx = self.value(x);
        let (r, c) = vx.dims2("slice")?;
        if rows == 0 || cols == 0 || row0 + rows > r || col0 + cols > c {
            return Err(TensorError::Invalid {
                op: "slice",
                msg: format!(
                    "block rows {row0}..{} cols {col0}..{} outside {r}x{c}",
                    row0 + rows,
                    col0 + cols
                ),
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            data.extend_from_slice(&vx.data()[i * c + col0..i * c + col0 + cols]);
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        self.push("slice", out, Op::Slice { x, row0, col0 }, &[x])
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| TensorError::Invalid {
            op: "concat_rows",
            msg: "no inputs".into(),
        })?;
        let (_, cols) = self.value(first).dims2("concat_rows")?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_rows")?;
            if c != cols {
                return Err(self.shape_err("concat_rows", first, p));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        self.push("concat_rows", out, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| TensorError::Invalid {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let (rows, _) = self.value(first).dims2("concat_cols")?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat_cols")?;
            if r != rows {
                return Err(self.shape_err("concat_cols", first, p));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let v = self.value(p);
                let c = v.last_dim();
                data.extend_from_slice(&v.data()[i * c..(i + 1) * c]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Selects rows of a matrix by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (r, c) = vx.dims2("gather_rows")?;
        if rows.is_empty() {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: "no rows selected".into(),
            });
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(TensorError::Invalid {
                op: "gather_rows",
                msg: format!("row {bad} out of range for {r} rows"),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            data.extend_from_slice(&vx.data()[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(vec![rows.len(), c], data)?;
        let op = Op::GatherRows { x, rows: rows.to_vec() };
        self.push("gather_rows", out, op, &[x])
    }

    /// `out[i] = x[i, index[i]]` for a `[b × k]` matrix.
    pub fn pick(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (b, k) = vx.dims2("pick")?;
        if index.len() != b {
            return Err(TensorError::Invalid {
                op: "pick",
                msg: format!("{} indices for {b} rows", index.len()),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= k) {
            return Err(TensorError::Invalid {
                op: "pick",
                msg: format!("index {bad} out of range for {k} columns"),
            });
        }
        let data = index.iter().enumerate().map(|(i, &j)| vx.data()[i * k + j]).collect();
        let out = Tensor::new(vec![b], data)?;
        let op = Op::Pick {
            x,
            index: index.to_vec(),
        };
        self.push("pick", out, op, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        self.push("sum", Tensor::scalar(s as f32), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let s: f64 = vx.data().iter().map(|&v| v as f64).sum();
        let m = s / vx.numel() as f64;
        self.push("mean", Tensor::scalar(m as f32), Op::Mean(x), &[x])
    }

    /// Softmax along `axis`, with the per-lane maximum subtracted first.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let vx = self.value(x);
        let (outer, len, inner) = lanes(vx.shape(), axis, "softmax")?;
        let mut out = vec![0f32; vx.numel()];
        let mut buf = vec![0f64; len];
        for o in 0..outer {
            for j in 0..inner {
                let base = o * len * inner + j;
                let max = (0..len)
                    .map(|i| vx.data()[base + i * inner])
                    .fold(f32::NEG_INFINITY, f32::max) as f64;
                let mut z = 0f64;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = (vx.data()[base + i * inner] as f64 - max).exp();
                    z += *b;
                }
                for (i, b) in buf.iter().enumerate() {
                    out[base + i * inner] = (b / z) as f32;
                }
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), out)?;
        self.push("softmax", out, Op::Softmax { x, axis }, &[x])
    }

    /// Log-softmax along the last axis via log-sum-exp.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let k = vx.last_dim();
        let mut out = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks(k) {
            let lse = log_sum_exp(row);
            out.extend(row.iter().map(|&v| (v as f64 - lse) as f32));
        }
        let out = Tensor::new(vx.shape().to_vec(), out)?;
        self.push("log_softmax", out, Op::LogSoftmax(x), &[x])
    }

    /// Layer normalization over the last axis with population variance.
    ///
    /// `eps` must be finite and non-negative. A row whose variance plus `eps`
    /// is exactly zero normalizes to zero, so the output is `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(TensorError::Param {
                op: "layer_norm",
                msg: format!("eps must be finite and >= 0, got {eps}"),
            });
        }
        let vx = self.value(x);
        let n = vx.last_dim();
        let (vg, vb) = (self.value(gamma), self.value(beta));
        if vg.numel() != n || vg.rank() != 1 {
            return Err(self.shape_err("layer_norm", x, gamma));
        }
        if vb.numel() != n || vb.rank() != 1 {
            return Err(self.shape_err("layer_norm", x, beta));
        }
        let rows = vx.numel() / n;
        let mut xhat = Vec::with_capacity(vx.numel());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks(n) {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            let denom = var + eps as f64;
            let r = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
            rstd.push(r as f32);
            for (i, &v) in row.iter().enumerate() {
                let h = (v as f64 - mean) * r;
                xhat.push(h as f32);
                out.push((h * vg.data()[i] as f64 + vb.data()[i] as f64) as f32);
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), out)?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            rstd,
        };
        self.push("layer_norm", out, op, &[x, gamma, beta])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        let data = vx.data().iter().map(|&v| gelu_scalar(v as f64) as f32).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        self.push("gelu", out, Op::Gelu(x), &[x])
    }

    /// Per-sample focal negative log-likelihood `(1 − p_t)^γ · (−log p_t)`.
    ///
    /// `logits` is `[b × k]`; the result is `[b]`. With `gamma = 0` this is the
    /// per-sample cross-entropy. The modulating factor is differentiated too.
    pub fn focal_nll(&mut self, logits: Var, targets: &[usize], gamma: f64) -> Result<Var> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(TensorError::Param {
                op: "focal_nll",
                msg: format!("gamma must be finite and >= 0, got {gamma}"),
            });
        }
        let vz = self.value(logits);
        let (b, k) = vz.dims2("focal_nll")?;
        if targets.len() != b {
            return Err(TensorError::Invalid {
                op: "focal_nll",
                msg: format!("{} targets for {b} rows", targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(TensorError::Invalid {
                op: "focal_nll",
                msg: format!("target {bad} out of range for {k} classes"),
            });
        }
        let mut probs = Vec::with_capacity(b * k);
        let mut out = Vec::with_capacity(b);
        for (row, &t) in vz.data().chunks(k).zip(targets) {
            let lse = log_sum_exp(row);
            probs.extend(row.iter().map(|&v| (v as f64 - lse).exp()));
            let logp = row[t] as f64 - lse;
            let q = -logp.exp_m1();
            out.push((q.powf(gamma) * -logp) as f32);
        }
        let out = Tensor::new(vec![b], out)?;
        let op = Op::FocalNll {
            logits,
            targets: targets.to_vec(),
            gamma,
            probs,
        };
        self.push("focal_nll", out, op, &[logits])
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Records are visited in exact reverse execution order; contributions
    /// from a value used several times are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "loss must be a scalar, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (g, &node.op) {
                (Some(g), Op::Leaf) if node.requires_grad => {
                    Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let mut acc = |var: Var, f: &mut dyn FnMut(&mut [f32])| {
            if !self.nodes[var.0].requires_grad {
                return;
            }
            let slot = grads[var.0].get_or_insert_with(|| vec![0.0; self.nodes[var.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul").unwrap();
                let n = self.value(*b).last_dim();
                acc(*a, &mut |s| {
                    let da = gemm(g, self.value(*b).data(), m, n, k, false, true);
                    add_into(s, &da);
                });
                acc(*b, &mut |s| {
                    let db = gemm(self.value(*a).data(), g, k, m, n, true, false);
                    add_into(s, &db);
                });
            }
            Op::Transpose(x) => {
                let (r, c) = self.value(*x).dims2("transpose").unwrap();
                acc(*x, &mut |s| add_into(s, &transpose(g, c, r)));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::AddBroadcast(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| {
                    let n = s.len();
                    for chunk in g.chunks(n) {
                        add_into(s, chunk);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| {
                    for ((s, gi), bi) in s.iter_mut().zip(g).zip(vb) {
                        *s += gi * bi;
                    }
                });
                acc(*b, &mut |s| {
                    for ((s, gi), ai) in s.iter_mut().zip(g).zip(va) {
                        *s += gi * ai;
                    }
                });
            }
            Op::Scale(x, f) => acc(*x, &mut |s| {
                for (s, gi) in s.iter_mut().zip(g) {
                    *s += gi * f;
                }
            }),
            Op::Reshape(x) => acc(*x, &mut |s| add_into(s, g)),
            Op::Slice { x, row0, col0 } => {
                let c = self.value(*x).last_dim();
                let (rows, cols) = node.value.dims2("slice").unwrap();
                acc(*x, &mut |s| {
                    for i in 0..rows {
                        let dst = (row0 + i) * c + col0;
                        add_into(&mut s[dst..dst + cols], &g[i * cols..(i + 1) * cols]);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).numel();
                    acc(*p, &mut |s| add_into(s, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2("concat_cols").unwrap();
                let mut col = 0;
                for p in parts {
                    let c = self.value(*p).last_dim();
                    acc(*p, &mut |s| {
                        for i in 0..rows {
                            let src = i * total + col;
                            add_into(&mut s[i * c..(i + 1) * c], &g[src..src + c]);
                        }
                    });
                    col += c;
                }
            }
            Op::GatherRows { x, rows } => {
                let c = self.value(*x).last_dim();
                acc(*x, &mut |s| {
                    for (i, &r) in rows.iter().enumerate() {
                        add_into(&mut s[r * c..(r + 1) * c], &g[i * c..(i + 1) * c]);
                    }
                });
            }
            Op::Pick { x, index } => {
                let k = self.value(*x).last_dim();
                acc(*x, &mut |s| {
                    for (i, &j) in index.iter().enumerate() {
                        s[i * k + j] += g[i];
                    }
                });
            }
            Op::Sum(x) => acc(*x, &mut |s| s.iter_mut().for_each(|v| *v += g[0])),
            Op::Mean(x) => acc(*x, &mut |s| {
                let share = (g[0] as f64 / s.len() as f64) as f32;
                s.iter_mut().for_each(|v| *v += share);
            }),
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = lanes(node.value.shape(), *axis, "softmax").unwrap();
                acc(*x, &mut |s| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let base = o * len * inner + j;
                            let dot: f64 = (0..len)
                                .map(|i| g[base + i * inner] as f64 * y[base + i * inner] as f64)
                                .sum();
                            for i in 0..len {
                                let e = base + i * inner;
                                s[e] += (y[e] as f64 * (g[e] as f64 - dot)) as f32;
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let y = node.value.data();
                let k = node.value.last_dim();
                acc(*x, &mut |s| {
                    for ((s, gr), yr) in s.chunks_mut(k).zip(g.chunks(k)).zip(y.chunks(k)) {
                        let total: f64 = gr.iter().map(|&v| v as f64).sum();
                        for ((s, &gi), &yi) in s.iter_mut().zip(gr).zip(yr) {
                            *s += (gi as f64 - (yi as f64).exp() * total) as f32;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = self.value(*gamma).numel();
                let gv = self.value(*gamma).data();
                acc(*beta, &mut |s| {
                    for row in g.chunks(n) {
                        add_into(s, row);
                    }
                });
                acc(*gamma, &mut |s| {
                    for (row, hrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for ((s, gi), hi) in s.iter_mut().zip(row).zip(hrow) {
                            *s += gi * hi;
                        }
                    }
                });
                acc(*x, &mut |s| {
                    for (((srow, grow), hrow), &r) in s.chunks_mut(n).zip(g.chunks(n)).zip(xhat.chunks(n)).zip(rstd) {
                        let dh: Vec<f64> = grow.iter().zip(gv).map(|(&gi, &gm)| gi as f64 * gm as f64).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n as f64;
                        let mean_dh_h = dh.iter().zip(hrow).map(|(d, &h)| d * h as f64).sum::<f64>() / n as f64;
                        for ((s, d), &h) in srow.iter_mut().zip(&dh).zip(hrow) {
                            *s += (r as f64 * (d - mean_dh - h as f64 * mean_dh_h)) as f32;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let vx = self.value(*x).data();
                acc(*x, &mut |s| {
                    for ((s, gi), &xi) in s.iter_mut().zip(g).zip(vx) {
                        *s += (*gi as f64 * gelu_grad_scalar(xi as f64)) as f32;
                    }
                });
            }
            Op::FocalNll {
                logits,
                targets,
                gamma,
                probs,
            } => {
                let k = self.value(*logits).last_dim();
                acc(*logits, &mut |s| {
                    for (i, &t) in targets.iter().enumerate() {
                        let p_row = &probs[i * k..(i + 1) * k];
                        let p = p_row[t];
                        let logp = p.ln();
                        let q = 1.0 - p;
                        // d loss / d log p_t
                        let dlogp = if *gamma == 0.0 {
                            -1.0
                        } else if q <= 0.0 {
                            0.0
                        } else {
                            gamma * p * q.powf(gamma - 1.0) * logp - q.powf(*gamma)
                        };
                        let scale = g[i] as f64 * dlogp;
                        for (j, &pj) in p_row.iter().enumerate() {
                            let delta = if j == t { 1.0 } else { 0.0 };
                            s[i * k + j] += (scale * (delta - pj)) as f32;
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn log_sum_exp(row: &[f32]) -> f64 {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    max + row.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln()
}

fn lanes(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(TensorError::Invalid {
            op,
            msg: format!("axis {axis} out of range for shape {shape:?}"),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}
