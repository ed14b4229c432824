use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::TensorError;
use crate::tensor::{numel_of, Tensor};

/// Recorded operation. Each variant owns its parent tensors, so the graph
/// stays alive as long as any downstream tensor does.
pub(crate) enum Op {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Div(Tensor, Tensor),
    Scale(Tensor, f64),
    AddConst(Tensor),
    MatMul(Tensor, Tensor),
    Bmm(Tensor, Tensor),
    LMatMul(Tensor, Tensor),
    Relu(Tensor),
    Gelu(Tensor),
    Sqrt(Tensor),
    Softmax(Tensor),
    LogSumExp(Tensor),
    PickPerRow(Tensor, Vec<usize>),
    SumAxis(Tensor, usize),
    SumAll(Tensor),
    Reshape(Tensor),
    Permute(Tensor, Vec<usize>),
    GatherRows(Tensor, Vec<usize>),
    ConcatRows(Vec<Tensor>),
    ConcatLast(Tensor, Tensor),
    LayerNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        eps: f64,
    },
    BatchNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mean: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
    },
    Dropout(Tensor, Vec<f64>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::MatMul(..) => "matmul",
            Op::Bmm(..) => "bmm",
            Op::LMatMul(..) => "lmatmul",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Sqrt(..) => "sqrt",
            Op::Softmax(..) => "softmax",
            Op::LogSumExp(..) => "logsumexp",
            Op::PickPerRow(..) => "pick_per_row",
            Op::SumAxis(..) => "sum_axis",
            Op::SumAll(..) => "sum_all",
            Op::Reshape(..) => "reshape",
            Op::Permute(..) => "permute",
            Op::GatherRows(..) => "gather_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatLast(..) => "concat_last",
            Op::LayerNorm { .. } => "layer_norm",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Dropout(..) => "dropout",
        }
    }

    pub(crate) fn parents(&self) -> Vec<Tensor> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::Bmm(a, b)
            | Op::LMatMul(a, b)
            | Op::ConcatLast(a, b) => vec![a.clone(), b.clone()],
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::Sqrt(a)
            | Op::Softmax(a)
            | Op::LogSumExp(a)
            | Op::PickPerRow(a, _)
            | Op::SumAxis(a, _)
            | Op::SumAll(a)
            | Op::Reshape(a)
            | Op::Permute(a, _)
            | Op::GatherRows(a, _)
            | Op::Dropout(a, _) => vec![a.clone()],
            Op::ConcatRows(parts) => parts.clone(),
            Op::LayerNorm { x, gamma, beta, .. } | Op::BatchNorm { x, gamma, beta, .. } => {
                vec![x.clone(), gamma.clone(), beta.clone()]
            }
        }
    }
}

// Broadcasting aligns shapes from the trailing axis; each axis pair must be
// equal or one of them 1. The shorter shape is padded with leading 1s.
fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    let nd = a.len().max(b.len());
    let mut out = vec![0usize; nd];
    for i in 0..nd {
        let da = if i < nd - a.len() { 1 } else { a[i - (nd - a.len())] };
        let db = if i < nd - b.len() { 1 } else { b[i - (nd - b.len())] };
        if da == db {
            out[i] = da;
        } else if da == 1 {
            out[i] = db;
        } else if db == 1 {
            out[i] = da;
        } else {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
    }
    Ok(out)
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

// Materializes `data` (of shape `from`) expanded to `to`.
fn expand(data: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return data.to_vec();
    }
    let nd = to.len();
    let pad = nd - from.len();
    let from_strides = strides_of(from);
    let mut out = Vec::with_capacity(numel_of(to));
    let mut idx = vec![0usize; nd];
    let total = numel_of(to);
    for _ in 0..total {
        let mut src = 0usize;
        for (i, &ix) in idx.iter().enumerate() {
            if i >= pad && from[i - pad] != 1 {
                src += ix * from_strides[i - pad];
            }
        }
        out.push(data[src]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < to[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

// Sums `grad` (of shape `from`) down to `target`, inverting broadcast.
pub(crate) fn reduce_grad(grad: &[f64], from: &[usize], target: &[usize]) -> Vec<f64> {
    if from == target {
        return grad.to_vec();
    }
    let nd = from.len();
    let pad = nd - target.len();
    let target_strides = strides_of(target);
    let mut out = vec![0.0; numel_of(target)];
    let mut idx = vec![0usize; nd];
    for &g in grad {
        let mut dst = 0usize;
        for (i, &ix) in idx.iter().enumerate() {
            if i >= pad && target[i - pad] != 1 {
                dst += ix * target_strides[i - pad];
            }
        }
        out[dst] += g;
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < from[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

// out[m][n] = sum_k a(m,k) * b(k,n), with closure-supplied element access so
// transposed reads never materialize a copy.
fn gemm(
    m: usize,
    n: usize,
    k: usize,
    a: impl Fn(usize, usize) -> f64,
    b: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a(i, p);
            if av == 0.0 {
                continue;
            }
            for (j, slot) in row.iter_mut().enumerate() {
                *slot += av * b(p, j);
            }
        }
    }
    out
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
    record: impl FnOnce(Tensor, Tensor) -> Op,
) -> Result<Tensor, TensorError> {
    let shape = broadcast_shape(op, a.shape(), b.shape())?;
    let data = if a.shape() == b.shape() {
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
    } else {
        let ax = expand(a.data(), a.shape(), &shape);
        let bx = expand(b.data(), b.shape(), &shape);
        ax.iter().zip(&bx).map(|(&x, &y)| f(x, y)).collect()
    };
    let rg = a.requires_grad() || b.requires_grad();
    Ok(Tensor::from_node(data, shape, rg, record(a.clone(), b.clone())))
}

fn unary(a: &Tensor, f: impl Fn(f64) -> f64, record: Op) -> Tensor {
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_node(data, a.shape().to_vec(), a.requires_grad(), record)
}

// (outer, axis_len, inner) decomposition around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_axis(op: &'static str, shape: &[usize]) -> Result<usize, TensorError> {
    match shape.last() {
        Some(&d) if d > 0 => Ok(d),
        _ => Err(TensorError::InvalidShape {
            op,
            shape: shape.to_vec(),
            detail: "requires at least one axis".into(),
        }),
    }
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        binary("add", self, other, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        binary("sub", self, other, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        binary("mul", self, other, |x, y| x * y, Op::Mul)
    }

    /// Elementwise division. Any exact zero in the divisor is rejected rather
    /// than silently producing infinities.
    pub fn div(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if other.data().iter().any(|&v| v == 0.0) {
            return Err(TensorError::Numeric {
                op: "div",
                detail: "divisor contains zero".into(),
            });
        }
        binary("div", self, other, |x, y| x / y, Op::Div)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        unary(self, |x| x * c, Op::Scale(self.clone(), c))
    }

    pub fn add_const(&self, c: f64) -> Tensor {
        unary(self, |x| x + c, Op::AddConst(self.clone()))
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let (ad, bd) = (self.data(), other.data());
        let data = gemm(m, n, k, |i, p| ad[i * k + p], |p, j| bd[p * n + j]);
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_node(data, vec![m, n], rg, Op::MatMul(self.clone(), other.clone())))
    }

    /// Batched matmul: `[b,m,k] x [b,k,n] -> [b,m,n]`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 3 || b.len() != 3 || a[0] != b[0] || a[2] != b[1] {
            return Err(TensorError::ShapeMismatch {
                op: "bmm",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let (bs, m, k, n) = (a[0], a[1], a[2], b[2]);
        let mut data = Vec::with_capacity(bs * m * n);
        for i in 0..bs {
            let ad = &self.data()[i * m * k..(i + 1) * m * k];
            let bd = &other.data()[i * k * n..(i + 1) * k * n];
            data.extend(gemm(m, n, k, |r, p| ad[r * k + p], |p, c| bd[p * n + c]));
        }
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_node(data, vec![bs, m, n], rg, Op::Bmm(self.clone(), other.clone())))
    }

    /// Shared-left batched matmul: `[m,k] x [b,k,n] -> [b,m,n]`. The 2-D left
    /// operand multiplies every batch element; its gradient sums over batches.
    pub fn lmatmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 3 || a[1] != b[1] {
            return Err(TensorError::ShapeMismatch {
                op: "lmatmul",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let (m, k) = (a[0], a[1]);
        let (bs, n) = (b[0], b[2]);
        let ad = self.data();
        let mut data = Vec::with_capacity(bs * m * n);
        for i in 0..bs {
            let bd = &other.data()[i * k * n..(i + 1) * k * n];
            data.extend(gemm(m, n, k, |r, p| ad[r * k + p], |p, c| bd[p * n + c]));
        }
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_node(data, vec![bs, m, n], rg, Op::LMatMul(self.clone(), other.clone())))
    }

    pub fn relu(&self) -> Tensor {
        unary(self, |x| x.max(0.0), Op::Relu(self.clone()))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&self) -> Tensor {
        unary(self, gelu_scalar, Op::Gelu(self.clone()))
    }

    /// Elementwise square root. Callers must keep inputs strictly positive
    /// (typically by adding an epsilon) or the gradient blows up at zero.
    pub fn sqrt(&self) -> Result<Tensor, TensorError> {
        if self.data().iter().any(|&v| v < 0.0) {
            return Err(TensorError::Numeric {
                op: "sqrt",
                detail: "negative input".into(),
            });
        }
        Ok(unary(self, f64::sqrt, Op::Sqrt(self.clone())))
    }

    /// Softmax over the last axis. Rejects NaN input.
    pub fn softmax(&self) -> Result<Tensor, TensorError> {
        let d = last_axis("softmax", self.shape())?;
        if self.data().iter().any(|v| v.is_nan()) {
            return Err(TensorError::Numeric {
                op: "softmax",
                detail: "NaN in input".into(),
            });
        }
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks_exact(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|&e| e / z));
        }
        Ok(Tensor::from_node(
            data,
            self.shape().to_vec(),
            self.requires_grad(),
            Op::Softmax(self.clone()),
        ))
    }

    /// Log-sum-exp over the last axis, reducing it away (max-shifted, so large
    /// logits stay finite).
    pub fn logsumexp(&self) -> Result<Tensor, TensorError> {
        let d = last_axis("logsumexp", self.shape())?;
        let mut data = Vec::with_capacity(self.numel() / d);
        for row in self.data().chunks_exact(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&x| (x - m).exp()).sum();
            data.push(m + z.ln());
        }
        let shape = self.shape()[..self.shape().len() - 1].to_vec();
        Ok(Tensor::from_node(data, shape, self.requires_grad(), Op::LogSumExp(self.clone())))
    }

    /// Selects one column per row of a 2-D tensor: `[b,n]` with `ids[b]` gives `[b]`.
    pub fn pick_per_row(&self, ids: &[usize]) -> Result<Tensor, TensorError> {
        let s = self.shape();
        if s.len() != 2 || ids.len() != s[0] {
            return Err(TensorError::InvalidShape {
                op: "pick_per_row",
                shape: s.to_vec(),
                detail: format!("requires [b,n] with {} ids, got {} ids", s.first().unwrap_or(&0), ids.len()),
            });
        }
        let n = s[1];
        let mut data = Vec::with_capacity(ids.len());
        for (r, &id) in ids.iter().enumerate() {
            if id >= n {
                return Err(TensorError::IndexOutOfRange {
                    op: "pick_per_row",
                    index: id,
                    len: n,
                });
            }
            data.push(self.data()[r * n + id]);
        }
        Ok(Tensor::from_node(
            data,
            vec![ids.len()],
            self.requires_grad(),
            Op::PickPerRow(self.clone(), ids.to_vec()),
        ))
    }

    /// Sums away one axis.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor, TensorError> {
        if axis >= self.shape().len() {
            return Err(TensorError::AxisOutOfRange {
                op: "sum_axis",
                axis,
                shape: self.shape().to_vec(),
            });
        }
        let (outer, len, inner) = axis_split(self.shape(), axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    data[o * inner + i] += self.data()[base + i];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::from_node(data, shape, self.requires_grad(), Op::SumAxis(self.clone(), axis)))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor, TensorError> {
        let len = *self.shape().get(axis).ok_or(TensorError::AxisOutOfRange {
            op: "mean_axis",
            axis,
            shape: self.shape().to_vec(),
        })?;
        Ok(self.sum_axis(axis)?.scale(1.0 / len as f64))
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        Tensor::from_node(vec![s], vec![], self.requires_grad(), Op::SumAll(self.clone()))
    }

    pub fn mean_all(&self) -> Tensor {
        self.sum_all().scale(1.0 / self.numel() as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        if numel_of(shape) != self.numel() {
            return Err(TensorError::InvalidShape {
                op: "reshape",
                shape: shape.to_vec(),
                detail: format!("cannot hold {} elements", self.numel()),
            });
        }
        Ok(Tensor::from_node(
            self.data().to_vec(),
            shape.to_vec(),
            self.requires_grad(),
            Op::Reshape(self.clone()),
        ))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Tensor, TensorError> {
        let nd = self.shape().len();
        let mut seen = vec![false; nd];
        if axes.len() != nd || axes.iter().any(|&a| a >= nd || std::mem::replace(&mut seen[a], true)) {
            return Err(TensorError::InvalidShape {
                op: "permute",
                shape: self.shape().to_vec(),
                detail: format!("invalid axis order {axes:?}"),
            });
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape()[a]).collect();
        let data = permute_data(self.data(), self.shape(), axes);
        Ok(Tensor::from_node(data, out_shape, self.requires_grad(), Op::Permute(self.clone(), axes.to_vec())))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor, TensorError> {
        let nd = self.shape().len();
        if nd < 2 {
            return Err(TensorError::InvalidShape {
                op: "transpose_last",
                shape: self.shape().to_vec(),
                detail: "requires at least two axes".into(),
            });
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 2, nd - 1);
        self.permute(&axes)
    }

    /// Embedding lookup: rows of a `[v,d]` table by id, giving `[n,d]`.
    pub fn gather_rows(table: &Tensor, ids: &[usize]) -> Result<Tensor, TensorError> {
        let s = table.shape();
        if s.len() != 2 {
            return Err(TensorError::InvalidShape {
                op: "gather_rows",
                shape: s.to_vec(),
                detail: "table must be 2-D".into(),
            });
        }
        if ids.is_empty() {
            return Err(TensorError::Contract("gather_rows: empty id list".into()));
        }
        let (v, d) = (s[0], s[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: id,
                    len: v,
                });
            }
            data.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
        }
        Ok(Tensor::from_node(
            data,
            vec![ids.len(), d],
            table.requires_grad(),
            Op::GatherRows(table.clone(), ids.to_vec()),
        ))
    }

    /// Concatenates along axis 0. All parts must agree on the trailing axes.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = parts.first().ok_or(TensorError::Contract("concat_rows: no parts".into()))?;
        if first.shape().is_empty() {
            return Err(TensorError::InvalidShape {
                op: "concat_rows",
                shape: vec![],
                detail: "parts must have at least one axis".into(),
            });
        }
        let trailing = &first.shape()[1..];
        let mut rows = 0usize;
        for p in parts {
            if p.shape().is_empty() || &p.shape()[1..] != trailing {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            rows += p.shape()[0];
        }
        let mut data = Vec::with_capacity(rows * numel_of(trailing));
        for p in parts {
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(trailing);
        let rg = parts.iter().any(Tensor::requires_grad);
        Ok(Tensor::from_node(data, shape, rg, Op::ConcatRows(parts.to_vec())))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack_rows(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        let first = parts.first().ok_or(TensorError::Contract("stack_rows: no parts".into()))?;
        let mut unsqueezed = Vec::with_capacity(parts.len());
        for p in parts {
            if p.shape() != first.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_rows",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            let mut s = vec![1usize];
            s.extend_from_slice(p.shape());
            unsqueezed.push(p.reshape(&s)?);
        }
        Tensor::concat_rows(&unsqueezed)
    }

    /// Concatenates two tensors along the last axis.
    pub fn concat_last(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let (a, b) = (self.shape(), other.shape());
        if a.is_empty() || a.len() != b.len() || a[..a.len() - 1] != b[..b.len() - 1] {
            return Err(TensorError::ShapeMismatch {
                op: "concat_last",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let (p, q) = (a[a.len() - 1], b[b.len() - 1]);
        let rows = self.numel() / p;
        let mut data = Vec::with_capacity(self.numel() + other.numel());
        for r in 0..rows {
            data.extend_from_slice(&self.data()[r * p..(r + 1) * p]);
            data.extend_from_slice(&other.data()[r * q..(r + 1) * q]);
        }
        let mut shape = a.to_vec();
        *shape.last_mut().unwrap() = p + q;
        let rg = self.requires_grad() || other.requires_grad();
        Ok(Tensor::from_node(data, shape, rg, Op::ConcatLast(self.clone(), other.clone())))
    }

    /// Normalizes over the last axis with per-position statistics, then applies
    /// the affine pair: `gamma * (x - mean) / sqrt(var + eps) + beta`.
    /// Variance is the population variance.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor, TensorError> {
        let d = last_axis("layer_norm", self.shape())?;
        check_affine("layer_norm", d, gamma, beta)?;
        check_norm_eps("layer_norm", eps)?;
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks_exact(d) {
            let (mean, var) = mean_var(row);
            let inv = 1.0 / (var + eps).sqrt();
            for (i, &x) in row.iter().enumerate() {
                data.push(gamma.data()[i] * (x - mean) * inv + beta.data()[i]);
            }
        }
        let rg = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        Ok(Tensor::from_node(
            data,
            self.shape().to_vec(),
            rg,
            Op::LayerNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                eps,
            },
        ))
    }

    /// Batch-statistics normalization for training mode: statistics per last-axis
    /// feature, pooled over all leading positions. Returns the output together
    /// with the per-feature batch mean and population variance so callers can
    /// maintain running statistics for inference.
    pub fn batch_norm_train(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<(Tensor, Vec<f64>, Vec<f64>), TensorError> {
        let d = last_axis("batch_norm", self.shape())?;
        check_affine("batch_norm", d, gamma, beta)?;
        check_norm_eps("batch_norm", eps)?;
        let rows = self.numel() / d;
        let mut mean = vec![0.0; d];
        let mut var = vec![0.0; d];
        for row in self.data().chunks_exact(d) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        for row in self.data().chunks_exact(d) {
            for (j, &x) in row.iter().enumerate() {
                let c = x - mean[j];
                var[j] += c * c;
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks_exact(d) {
            for (j, &x) in row.iter().enumerate() {
                let inv = 1.0 / (var[j] + eps).sqrt();
                data.push(gamma.data()[j] * (x - mean[j]) * inv + beta.data()[j]);
            }
        }
        let rg = self.requires_grad() || gamma.requires_grad() || beta.requires_grad();
        let out = Tensor::from_node(
            data,
            self.shape().to_vec(),
            rg,
            Op::BatchNorm {
                x: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                mean: mean.clone(),
                var: var.clone(),
                eps,
            },
        );
        Ok((out, mean, var))
    }

    /// Inverted dropout. Zeroes each element with probability `rate` and scales
    /// survivors by `1/(1-rate)`, so expectation is preserved. Identity when
    /// `rate == 0` or not training.
    pub fn dropout(&self, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Tensor, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Contract(format!("dropout rate {rate} outside [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = self.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(Tensor::from_node(
            data,
            self.shape().to_vec(),
            self.requires_grad(),
            Op::Dropout(self.clone(), mask),
        ))
    }

    /// [`Tensor::dropout`] with the generator built from seed components, for
    /// counter-based per-call seeding.
    pub fn dropout_seeded(
        &self,
        rate: f64,
        training: bool,
        seed_parts: &[u64],
    ) -> Result<Tensor, TensorError> {
        let mut rng = crate::rng::rng_from(seed_parts);
        self.dropout(rate, training, &mut rng)
    }
}

fn check_affine(op: &'static str, d: usize, gamma: &Tensor, beta: &Tensor) -> Result<(), TensorError> {
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: gamma.shape().to_vec(),
            rhs: beta.shape().to_vec(),
        });
    }
    Ok(())
}

fn check_norm_eps(op: &'static str, eps: f64) -> Result<(), TensorError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::Numeric {
            op,
            detail: format!("epsilon {eps} must be positive and finite"),
        });
    }
    Ok(())
}

fn mean_var(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

fn gelu_scalar(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654; // sqrt(2/pi)
    const A: f64 = 0.044715;
    0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    const A: f64 = 0.044715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * A * x * x)
}

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let in_strides = strides_of(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let nd = shape.len();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; nd];
    for _ in 0..data.len() {
        let mut src = 0usize;
        for (o, &a) in axes.iter().enumerate() {
            src += idx[o] * in_strides[a];
        }
        out.push(data[src]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

impl Op {
    pub(crate) fn backward(&self, out: &Tensor, g: &[f64]) {
        match self {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if a.requires_grad() {
                    a.accumulate_grad(&reduce_grad(g, out.shape(), a.shape()));
                }
                if b.requires_grad() {
                    b.accumulate_grad(&reduce_grad(g, out.shape(), b.shape()));
                }
            }
            Op::Sub(a, b) => {
                if a.requires_grad() {
                    a.accumulate_grad(&reduce_grad(g, out.shape(), a.shape()));
                }
                if b.requires_grad() {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    b.accumulate_grad(&reduce_grad(&neg, out.shape(), b.shape()));
                }
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let bx = expand(b.data(), b.shape(), out.shape());
                    let da: Vec<f64> = g.iter().zip(&bx).map(|(&gv, &bv)| gv * bv).collect();
                    a.accumulate_grad(&reduce_grad(&da, out.shape(), a.shape()));
                }
                if b.requires_grad() {
                    let ax = expand(a.data(), a.shape(), out.shape());
                    let db: Vec<f64> = g.iter().zip(&ax).map(|(&gv, &av)| gv * av).collect();
                    b.accumulate_grad(&reduce_grad(&db, out.shape(), b.shape()));
                }
            }
            Op::Div(a, b) => {
                let bx = expand(b.data(), b.shape(), out.shape());
                if a.requires_grad() {
                    let da: Vec<f64> = g.iter().zip(&bx).map(|(&gv, &bv)| gv / bv).collect();
                    a.accumulate_grad(&reduce_grad(&da, out.shape(), a.shape()));
                }
                if b.requires_grad() {
                    let ax = expand(a.data(), a.shape(), out.shape());
                    let db: Vec<f64> = g
                        .iter()
                        .zip(&ax)
                        .zip(&bx)
                        .map(|((&gv, &av), &bv)| -gv * av / (bv * bv))
                        .collect();
                    b.accumulate_grad(&reduce_grad(&db, out.shape(), b.shape()));
                }
            }
            Op::Scale(a, c) => {
                if a.requires_grad() {
                    let da: Vec<f64> = g.iter().map(|v| v * c).collect();
                    a.accumulate_grad(&da);
                }
            }
            Op::AddConst(a) => {
                if a.requires_grad() {
                    a.accumulate_grad(g);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                if a.requires_grad() {
                    let bd = b.data();
                    let da = gemm(m, k, n, |i, p| g[i * n + p], |p, j| bd[j * n + p]);
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    let ad = a.data();
                    let db = gemm(k, n, m, |i, p| ad[p * k + i], |p, j| g[p * n + j]);
                    b.accumulate_grad(&db);
                }
            }
            Op::Bmm(a, b) => {
                let (bs, m, k) = (a.shape()[0], a.shape()[1], a.shape()[2]);
                let n = b.shape()[2];
                if a.requires_grad() {
                    let mut da = Vec::with_capacity(a.numel());
                    for i in 0..bs {
                        let gd = &g[i * m * n..(i + 1) * m * n];
                        let bd = &b.data()[i * k * n..(i + 1) * k * n];
                        da.extend(gemm(m, k, n, |r, p| gd[r * n + p], |p, c| bd[c * n + p]));
                    }
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    let mut db = Vec::with_capacity(b.numel());
                    for i in 0..bs {
                        let ad = &a.data()[i * m * k..(i + 1) * m * k];
                        let gd = &g[i * m * n..(i + 1) * m * n];
                        db.extend(gemm(k, n, m, |r, p| ad[p * k + r], |p, c| gd[p * n + c]));
                    }
                    b.accumulate_grad(&db);
                }
            }
            Op::LMatMul(a, b) => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let (bs, n) = (b.shape()[0], b.shape()[2]);
                if a.requires_grad() {
                    let mut da = vec![0.0; m * k];
                    for i in 0..bs {
                        let gd = &g[i * m * n..(i + 1) * m * n];
                        let bd = &b.data()[i * k * n..(i + 1) * k * n];
                        let part = gemm(m, k, n, |r, p| gd[r * n + p], |p, c| bd[c * n + p]);
                        for (acc, v) in da.iter_mut().zip(&part) {
                            *acc += v;
                        }
                    }
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    let ad = a.data();
                    let mut db = Vec::with_capacity(b.numel());
                    for i in 0..bs {
                        let gd = &g[i * m * n..(i + 1) * m * n];
                        db.extend(gemm(k, n, m, |r, p| ad[p * k + r], |p, c| gd[p * n + c]));
                    }
                    b.accumulate_grad(&db);
                }
            }
            Op::Relu(a) => {
                if a.requires_grad() {
                    let da: Vec<f64> = a
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                        .collect();
                    a.accumulate_grad(&da);
                }
            }
            Op::Gelu(a) => {
                if a.requires_grad() {
                    let da: Vec<f64> = a.data().iter().zip(g).map(|(&x, &gv)| gv * gelu_grad(x)).collect();
                    a.accumulate_grad(&da);
                }
            }
            Op::Sqrt(a) => {
                if a.requires_grad() {
                    let da: Vec<f64> = out
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&s, &gv)| gv * 0.5 / s)
                        .collect();
                    a.accumulate_grad(&da);
                }
            }
            Op::Softmax(a) => {
                if a.requires_grad() {
                    let d = *out.shape().last().unwrap();
                    let mut da = Vec::with_capacity(out.numel());
                    for (srow, grow) in out.data().chunks_exact(d).zip(g.chunks_exact(d)) {
                        let dot: f64 = srow.iter().zip(grow).map(|(&s, &gv)| s * gv).sum();
                        da.extend(srow.iter().zip(grow).map(|(&s, &gv)| s * (gv - dot)));
                    }
                    a.accumulate_grad(&da);
                }
            }
            Op::LogSumExp(a) => {
                if a.requires_grad() {
                    let d = *a.shape().last().unwrap();
                    let mut da = Vec::with_capacity(a.numel());
                    for (r, row) in a.data().chunks_exact(d).enumerate() {
                        let lse = out.data()[r];
                        da.extend(row.iter().map(|&x| g[r] * (x - lse).exp()));
                    }
                    a.accumulate_grad(&da);
                }
            }
            Op::PickPerRow(a, ids) => {
                if a.requires_grad() {
                    let n = a.shape()[1];
                    let mut da = vec![0.0; a.numel()];
                    for (r, &id) in ids.iter().enumerate() {
                        da[r * n + id] += g[r];
                    }
                    a.accumulate_grad(&da);
                }
            }
            Op::SumAxis(a, axis) => {
                if a.requires_grad() {
                    let (outer, len, inner) = axis_split(a.shape(), *axis);
                    let mut da = vec![0.0; a.numel()];
                    for o in 0..outer {
                        for l in 0..len {
                            let base = (o * len + l) * inner;
                            for i in 0..inner {
                                da[base + i] = g[o * inner + i];
                            }
                        }
                    }
                    a.accumulate_grad(&da);
                }
            }
            Op::SumAll(a) => {
                if a.requires_grad() {
                    a.accumulate_grad(&vec![g[0]; a.numel()]);
                }
            }
            Op::Reshape(a) => {
                if a.requires_grad() {
                    a.accumulate_grad(g);
                }
            }
            Op::Permute(a, axes) => {
                if a.requires_grad() {
                    let mut inverse = vec![0usize; axes.len()];
                    for (i, &ax) in axes.iter().enumerate() {
                        inverse[ax] = i;
                    }
                    let da = permute_data(g, out.shape(), &inverse);
                    a.accumulate_grad(&da);
                }
            }
            Op::GatherRows(table, ids) => {
                if table.requires_grad() {
                    let d = table.shape()[1];
                    let mut dt = vec![0.0; table.numel()];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += g[r * d + j];
                        }
                    }
                    table.accumulate_grad(&dt);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0usize;
                for p in parts {
                    let len = p.numel();
                    if p.requires_grad() {
                        p.accumulate_grad(&g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::ConcatLast(a, b) => {
                let p = *a.shape().last().unwrap();
                let q = *b.shape().last().unwrap();
                let rows = a.numel() / p;
                if a.requires_grad() {
                    let mut da = Vec::with_capacity(a.numel());
                    for r in 0..rows {
                        da.extend_from_slice(&g[r * (p + q)..r * (p + q) + p]);
                    }
                    a.accumulate_grad(&da);
                }
                if b.requires_grad() {
                    let mut db = Vec::with_capacity(b.numel());
                    for r in 0..rows {
                        db.extend_from_slice(&g[r * (p + q) + p..(r + 1) * (p + q)]);
                    }
                    b.accumulate_grad(&db);
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let d = *x.shape().last().unwrap();
                let rows = x.numel() / d;
                let mut dx = vec![0.0; x.numel()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for r in 0..rows {
                    let row = &x.data()[r * d..(r + 1) * d];
                    let grow = &g[r * d..(r + 1) * d];
                    let (mean, var) = mean_var(row);
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = grow.iter().zip(gamma.data()).map(|(&gv, &ga)| gv * ga).collect();
                    let sum_dxhat: f64 = dxhat.iter().sum();
                    let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum();
                    for j in 0..d {
                        dgamma[j] += grow[j] * xhat[j];
                        dbeta[j] += grow[j];
                        dx[r * d + j] =
                            inv / d as f64 * (d as f64 * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    }
                }
                if x.requires_grad() {
                    x.accumulate_grad(&dx);
                }
                if gamma.requires_grad() {
                    gamma.accumulate_grad(&dgamma);
                }
                if beta.requires_grad() {
                    beta.accumulate_grad(&dbeta);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                var,
                eps,
            } => {
                let d = *x.shape().last().unwrap();
                let rows = x.numel() / d;
                let n = rows as f64;
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                let mut sum_dxhat = vec![0.0; d];
                let mut sum_dxhat_xhat = vec![0.0; d];
                let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
                for r in 0..rows {
                    for j in 0..d {
                        let xhat = (x.data()[r * d + j] - mean[j]) * inv[j];
                        let gv = g[r * d + j];
                        let dxhat = gv * gamma.data()[j];
                        dgamma[j] += gv * xhat;
                        dbeta[j] += gv;
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xhat[j] += dxhat * xhat;
                    }
                }
                if x.requires_grad() {
                    let mut dx = vec![0.0; x.numel()];
                    for r in 0..rows {
                        for j in 0..d {
                            let xhat = (x.data()[r * d + j] - mean[j]) * inv[j];
                            let dxhat = g[r * d + j] * gamma.data()[j];
                            dx[r * d + j] =
                                inv[j] / n * (n * dxhat - sum_dxhat[j] - xhat * sum_dxhat_xhat[j]);
                        }
                    }
                    x.accumulate_grad(&dx);
                }
                if gamma.requires_grad() {
                    gamma.accumulate_grad(&dgamma);
                }
                if beta.requires_grad() {
                    beta.accumulate_grad(&dbeta);
                }
            }
            Op::Dropout(a, mask) => {
                if a.requires_grad() {
                    let da: Vec<f64> = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    a.accumulate_grad(&da);
                }
            }
        }
    }
}
