//! Wengert tape for reverse-mode differentiation.
//!
//! Operations are appended to the tape as they are evaluated, so the node
//! list is always in topological order. [`Tape::backward`] walks it once in
//! reverse and accumulates gradients into every leaf that asked for them.

use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Embedding { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var, normalized: Vec<f64>, inv_std: f64 },
    Dropout { x: Var, keep_scale: Vec<f64> },
    Sum(Var),
    Reshape(Var),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation plus accumulated leaf gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    // ----- primitive operations -------------------------------------------

    /// Matrix product. Either side may be a vector, which is treated as a
    /// row (left) or column (right) and squeezed back out of the result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k) = as_left(&sa).ok_or_else(|| mismatch("matmul", &sa, &sb))?;
        let (k2, n) = as_right(&sb).ok_or_else(|| mismatch("matmul", &sa, &sb))?;
        if k != k2 {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let shape = match (sa.len(), sb.len()) {
            (1, 1) => vec![],
            (1, _) => vec![n],
            (_, 1) => vec![m],
            _ => vec![m, n],
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum of two same-shape tensors.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("min", self.shape(a), self.shape(b)));
        }
        self.binary(a, b, "min", f64::min, Op::Min(a, b))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if tb.is_scalar() {
            let y = tb.item();
            Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|&x| f(x, y)).collect())?
        } else if ta.is_scalar() {
            let x = ta.item();
            Tensor::new(tb.shape().to_vec(), tb.data().iter().map(|&y| f(x, y)).collect())?
        } else {
            return Err(mismatch(name, ta.shape(), tb.shape()));
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let value = map(t, |x| x * factor);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, factor), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::tanh);
        let rg = self.needs(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = map(self.value(a), sigmoid);
        let rg = self.needs(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Softmax over a vector. Positions with `valid[i] == false` get exactly
    /// zero mass.
    pub fn softmax(&mut self, a: Var, valid: Option<&[bool]>) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.shape().len() != 1 {
            return Err(TensorError::InvalidArgument(format!(
                "softmax expects a vector, got shape {:?}",
                t.shape()
            )));
        }
        if let Some(mask) = valid {
            if mask.len() != t.numel() {
                return Err(mismatch("softmax mask", t.shape(), &[mask.len()]));
            }
        }
        let probs = softmax_values(t.data(), valid)?;
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::vector(probs), Op::Softmax(a), rg))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        if t.shape().len() != 1 {
            return Err(TensorError::InvalidArgument(format!(
                "log_softmax expects a vector, got shape {:?}",
                t.shape()
            )));
        }
        let max = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let value = map(t, |x| x - lse);
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::LogSoftmax(a), rg))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::InvalidArgument(format!(
                "concat axis {axis} out of range for shape {base:?}"
            )));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !ok {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.needs(parts);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, TensorError> {
        let mut reshaped = Vec::with_capacity(rows.len());
        for &r in rows {
            let n = self.value(r).numel();
            reshaped.push(self.reshape(r, vec![1, n])?);
        }
        self.concat(&reshaped, 0)
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(table);
        if t.shape().len() != 2 {
            return Err(TensorError::InvalidArgument(format!(
                "embedding table must be 2-D, got {:?}",
                t.shape()
            )));
        }
        let (rows, dim) = (t.shape()[0], t.shape()[1]);
        if ids.is_empty() {
            return Err(TensorError::InvalidArgument("embedding lookup of zero ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange { index: id, size: rows });
            }
            data.extend_from_slice(t.row(id));
        }
        let rg = self.needs(&[table]);
        let value = Tensor::new(vec![ids.len(), dim], data)?;
        Ok(self.push(value, Op::Embedding { table, ids: ids.to_vec() }, rg))
    }

    /// Layer normalisation of a vector with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.numel();
        if tx.shape().len() != 1 || d < 2 || tg.shape() != tx.shape() || tb.shape() != tx.shape()
        {
            return Err(mismatch("layer_norm", tx.shape(), tg.shape()));
        }
        let mean = tx.data().iter().sum::<f64>() / d as f64;
        let var = tx.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let normalized: Vec<f64> = tx.data().iter().map(|v| (v - mean) * inv_std).collect();
        let out = normalized
            .iter()
            .zip(tg.data().iter().zip(tb.data()))
            .map(|(n, (g, b))| n * g + b)
            .collect();
        let rg = self.needs(&[x, gain, bias]);
        let op = Op::LayerNorm { x, gain, bias, normalized, inv_std };
        Ok(self.push(Tensor::vector(out), op, rg))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`.
    pub fn dropout<R: Rng>(
        &mut self,
        x: Var,
        p: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArgument(format!("dropout p must be in [0,1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let keep_scale: Vec<f64> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&keep_scale).map(|(v, k)| v * k).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Dropout { x, keep_scale }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Transpose of a matrix.
    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = self.value(a);
        let [r, c] = *t.shape() else {
            return Err(TensorError::InvalidArgument(format!(
                "transpose expects a matrix, got {:?}",
                t.shape()
            )));
        };
        let value = Tensor::new(vec![c, r], transposed(t.data(), r, c))?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    // ----- composite helpers ----------------------------------------------

    /// `x * t` for a constant `t`.
    pub fn mul_const(&mut self, a: Var, t: Tensor) -> Result<Var, TensorError> {
        let c = self.constant(t);
        self.mul(a, c)
    }

    /// `c - x` for a scalar constant `c`.
    pub fn rsub_scalar(&mut self, c: f64, a: Var) -> Result<Var, TensorError> {
        let k = self.constant(Tensor::scalar(c));
        self.sub(k, a)
    }

    /// Repeat a vector `n` times as the rows of an `n × d` matrix
    /// (an outer product with a constant column of ones).
    pub fn repeat_rows(&mut self, v: Var, n: usize) -> Result<Var, TensorError> {
        let d = self.value(v).numel();
        let row = self.reshape(v, vec![1, d])?;
        let ones = self.constant(Tensor::full(&[n, 1], 1.0));
        self.matmul(ones, row)
    }

    /// Broadcast a column vector `[n]` across `d` columns.
    pub fn repeat_cols(&mut self, v: Var, d: usize) -> Result<Var, TensorError> {
        let n = self.value(v).numel();
        let col = self.reshape(v, vec![n, 1])?;
        let ones = self.constant(Tensor::full(&[1, d], 1.0));
        self.matmul(col, ones)
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var, TensorError> {
        let y = self.matmul(w, x)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    // ----- reverse pass ---------------------------------------------------

    /// Reverse-mode sweep from a scalar `loss`. Leaf gradients accumulate
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(TensorError::NonScalarLoss { shape: lv.shape().to_vec() });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                accumulate(&mut self.leaf_grads[i], &g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let rg = |v: Var| nodes[v.0].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = as_left(ta.shape()).expect("checked in forward");
                let (_, n) = as_right(tb.shape()).expect("checked in forward");
                if rg(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        let drow = &mut da[r * k..(r + 1) * k];
                        if n == 1 {
                            axpy(drow, gr[0], tb.data());
                        } else {
                            for (c, d) in drow.iter_mut().enumerate() {
                                *d = dot(gr, &tb.data()[c * n..(c + 1) * n]);
                            }
                        }
                    }
                    add_into(grads, *a, &da);
                }
                if rg(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        let arow = &ta.data()[r * k..(r + 1) * k];
                        if n == 1 {
                            axpy(&mut db, gr[0], arow);
                        } else {
                            for (c, &av) in arow.iter().enumerate() {
                                if av != 0.0 {
                                    axpy(&mut db[c * n..(c + 1) * n], av, gr);
                                }
                            }
                        }
                    }
                    add_into(grads, *b, &db);
                }
            }
            Op::Add(a, b) => {
                route_broadcast(nodes, grads, *a, g, |_, gv| gv);
                route_broadcast(nodes, grads, *b, g, |_, gv| gv);
            }
            Op::Sub(a, b) => {
                route_broadcast(nodes, grads, *a, g, |_, gv| gv);
                route_broadcast(nodes, grads, *b, g, |_, gv| -gv);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                route_broadcast(nodes, grads, *a, g, |j, gv| gv * pick(tb, j));
                route_broadcast(nodes, grads, *b, g, |j, gv| gv * pick(ta, j));
            }
            Op::Min(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                if rg(*a) {
                    let da: Vec<f64> = (0..g.len())
                        .map(|j| if ta.data()[j] <= tb.data()[j] { g[j] } else { 0.0 })
                        .collect();
                    add_into(grads, *a, &da);
                }
                if rg(*b) {
                    let db: Vec<f64> = (0..g.len())
                        .map(|j| if ta.data()[j] <= tb.data()[j] { 0.0 } else { g[j] })
                        .collect();
                    add_into(grads, *b, &db);
                }
            }
            Op::Scale(a, f) => {
                let da: Vec<f64> = g.iter().map(|x| x * f).collect();
                add_into(grads, *a, &da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> =
                    g.iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                add_into(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> =
                    g.iter().zip(out.data()).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                add_into(grads, *a, &da);
            }
            Op::Softmax(a) => {
                let y = out.data();
                let inner = dot(g, y);
                let da: Vec<f64> = g.iter().zip(y).map(|(gv, yv)| yv * (gv - inner)).collect();
                add_into(grads, *a, &da);
            }
            Op::LogSoftmax(a) => {
                let total: f64 = g.iter().sum();
                let da: Vec<f64> =
                    g.iter().zip(out.data()).map(|(gv, ly)| gv - ly.exp() * total).collect();
                add_into(grads, *a, &da);
            }
            Op::Concat { parts, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.shape()[*axis] * inner;
                    if rg(*p) {
                        let mut dp = Vec::with_capacity(outer * len);
                        for o in 0..outer {
                            let start = o * shape[*axis] * inner + offset;
                            dp.extend_from_slice(&g[start..start + len]);
                        }
                        add_into(grads, *p, &dp);
                    }
                    offset += len;
                }
            }
            Op::Embedding { table, ids } => {
                let tt = &nodes[table.0].value;
                let dim = tt.shape()[1];
                let mut dt = vec![0.0; tt.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..dim {
                        dt[id * dim + c] += g[r * dim + c];
                    }
                }
                add_into(grads, *table, &dt);
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let tg = &nodes[gain.0].value;
                if rg(*gain) {
                    let dg: Vec<f64> = g.iter().zip(normalized).map(|(a, b)| a * b).collect();
                    add_into(grads, *gain, &dg);
                }
                if rg(*bias) {
                    add_into(grads, *bias, g);
                }
                if rg(*x) {
                    let d = g.len() as f64;
                    let dn: Vec<f64> = g.iter().zip(tg.data()).map(|(a, b)| a * b).collect();
                    let sum_dn: f64 = dn.iter().sum();
                    let sum_dn_n = dot(&dn, normalized);
                    let dx: Vec<f64> = dn
                        .iter()
                        .zip(normalized)
                        .map(|(dv, nv)| inv_std / d * (d * dv - sum_dn - nv * sum_dn_n))
                        .collect();
                    add_into(grads, *x, &dx);
                }
            }
            Op::Dropout { x, keep_scale } => {
                let dx: Vec<f64> = g.iter().zip(keep_scale).map(|(a, b)| a * b).collect();
                add_into(grads, *x, &dx);
            }
            Op::Sum(a) => {
                let n = nodes[a.0].value.numel();
                add_into(grads, *a, &vec![g[0]; n]);
            }
            Op::Reshape(a) => add_into(grads, *a, g),
            Op::Transpose(a) => {
                let s = out.shape();
                add_into(grads, *a, &transposed(g, s[0], s[1]));
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax; masked positions get exactly zero.
pub fn softmax_values(x: &[f64], valid: Option<&[bool]>) -> Result<Vec<f64>, TensorError> {
    let keep = |i: usize| valid.is_none_or(|m| m[i]);
    let max = (0..x.len())
        .filter(|&i| keep(i))
        .map(|i| x[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY && !(0..x.len()).any(keep) {
        return Err(TensorError::AllMasked);
    }
    let mut out: Vec<f64> =
        (0..x.len()).map(|i| if keep(i) { (x[i] - max).exp() } else { 0.0 }).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

fn as_left(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [k] => Some((1, *k)),
        [m, k] => Some((*m, *k)),
        _ => None,
    }
}

fn as_right(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [k] => Some((*k, 1)),
        [k, n] => Some((*k, *n)),
        _ => None,
    }
}

fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&a[r * k..(r + 1) * k], b);
        }
        return;
    }
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let av = a[r * k + c];
            if av == 0.0 {
                continue;
            }
            axpy(orow, av, &b[c * n..(c + 1) * n]);
        }
    }
}

/// `y += alpha * x`
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

fn transposed(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums so the loop vectorises
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
        .expect("shape preserved")
}

fn pick(t: &Tensor, j: usize) -> f64 {
    if t.is_scalar() {
        t.item()
    } else {
        t.data()[j]
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
        None => *slot = Some(g.to_vec()),
    }
}

fn add_into(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    accumulate(&mut grads[v.0], g);
}

/// Send `g` (shaped like the output) back to `v`, summing when `v` was a
/// broadcast scalar.
fn route_broadcast(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    v: Var,
    g: &[f64],
    f: impl Fn(usize, f64) -> f64,
) {
    if !nodes[v.0].requires_grad {
        return;
    }
    if nodes[v.0].value.numel() == g.len() {
        let dv: Vec<f64> = g.iter().enumerate().map(|(j, &gv)| f(j, gv)).collect();
        add_into(grads, v, &dv);
    } else {
        let total: f64 = g.iter().enumerate().map(|(j, &gv)| f(j, gv)).sum();
        add_into(grads, v, &[total]);
    }
}
