//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! A [`Tape`] records every primitive application in forward order; each node
//! owns its output buffer and an optional gradient buffer. [`Tape::backward`]
//! walks the record once in reverse, accumulating exact reverse-mode
//! gradients into every node that requires them. The op set is exactly what a
//! small decoder-only transformer needs — no broadcasting beyond what the
//! listed primitives define, 64-bit everywhere, fixed reduction order.

pub mod kernels;

use crate::error::{Error, Result};
use crate::par::for_each_row;

pub const RMS_NORM_EPS: f64 = 1e-6;

/// Plain value tensor: row-major f64 data plus shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must equal product of shape"
        );
        Self {
            shape,
            data,
            requires_grad: false,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows × cols view of a rank-2 tensor.
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected rank-2 tensor");
        (self.shape[0], self.shape[1])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// c = a·b, a:[m×k], b:[k×n]
    Matmul { a: TensorId, b: TensorId },
    /// c = a·bᵀ, a:[m×k], b:[n×k]
    MatmulNt { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Scale { a: TensorId, factor: f64 },
    /// Row gather: out[i,:] = table[ids[i],:]
    Gather { table: TensorId, ids: Vec<u32> },
    SliceCols { a: TensorId, start: usize, len: usize },
    ConcatCols { parts: Vec<TensorId> },
    /// Row-wise softmax over columns j ≤ i of a square matrix; cols j > i are 0.
    CausalSoftmax { a: TensorId },
    RmsNorm { x: TensorId, gain: TensorId },
    Gelu { a: TensorId },
    /// Mean NLL over masked rows of logits against integer targets.
    MaskedCrossEntropy {
        logits: TensorId,
        targets: Vec<u32>,
        mask: Vec<u8>,
    },
    Sum { a: TensorId },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of primitive applications; a valid forward order by
/// construction, walked exactly once in reverse by [`Tape::backward`].
pub struct Tape {
    nodes: Vec<Node>,
    backward_ran: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_ran: false,
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(t.data.clone(), t.shape.clone(), t.requires_grad, Op::Leaf)
    }

    pub fn leaf_owned(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> TensorId {
        self.push(data, shape, requires_grad, Op::Leaf)
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    /// Gradient buffer of a node, if backward reached it.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Gradient of a node as a vector, zeros if backward never touched it.
    pub fn grad_or_zeros(&self, id: TensorId) -> Vec<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[id.0].data.len()],
        }
    }

    pub fn detach(&self, id: TensorId) -> Tensor {
        Tensor::new(self.nodes[id.0].shape.clone(), self.nodes[id.0].data.clone())
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn dims2(&self, id: TensorId) -> (usize, usize) {
        let s = &self.nodes[id.0].shape;
        assert_eq!(s.len(), 2, "expected rank-2 tensor, got {s:?}");
        (s[0], s[1])
    }

    // ---- primitives ----

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.dims2(a);
        let (kb, n) = self.dims2(b);
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul(&mut out, self.data(a), self.data(b), m, ka, n);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, vec![m, n], rg, Op::Matmul { a, b }))
    }

    /// a·bᵀ with b given row-major as [n×k].
    pub fn matmul_nt(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.dims2(a);
        let (n, kb) = self.dims2(b);
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        kernels::matmul_nt(&mut out, self.data(a), self.data(b), m, ka, n);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, vec![m, n], rg, Op::MatmulNt { a, b }))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(out, shape, rg, Op::Add { a, b }))
    }

    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let out: Vec<f64> = self.data(a).iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        self.push(out, shape, rg, Op::Scale { a, factor })
    }

    pub fn gather(&mut self, table: TensorId, ids: &[u32]) -> Result<TensorId> {
        let (rows, cols) = self.dims2(table);
        for &id in ids {
            if id as usize >= rows {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: rows,
                });
            }
        }
        let mut out = vec![0.0; ids.len() * cols];
        {
            let tdata = self.data(table);
            for (i, &id) in ids.iter().enumerate() {
                out[i * cols..(i + 1) * cols]
                    .copy_from_slice(&tdata[id as usize * cols..(id as usize + 1) * cols]);
            }
        }
        let rg = self.requires(table);
        Ok(self.push(
            out,
            vec![ids.len(), cols],
            rg,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let (rows, cols) = self.dims2(a);
        if start + len > cols {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: vec![rows, cols],
                right: vec![start, len],
            });
        }
        let mut out = vec![0.0; rows * len];
        {
            let adata = self.data(a);
            for i in 0..rows {
                out[i * len..(i + 1) * len]
                    .copy_from_slice(&adata[i * cols + start..i * cols + start + len]);
            }
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![rows, len], rg, Op::SliceCols { a, start, len }))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        assert!(!parts.is_empty());
        let rows = self.dims2(parts[0]).0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims2(p);
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![rows],
                    right: vec![r, c],
                });
            }
            total += c;
        }
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for &p in parts {
            let (_, c) = self.dims2(p);
            let pdata = self.data(p);
            for i in 0..rows {
                out[i * total + offset..i * total + offset + c]
                    .copy_from_slice(&pdata[i * c..(i + 1) * c]);
            }
            offset += c;
        }
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(
            out,
            vec![rows, total],
            rg,
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Row-wise softmax restricted to columns j ≤ i; strictly-upper entries
    /// come out exactly zero. Input must be square.
    pub fn causal_softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.dims2(a);
        if rows != cols {
            return Err(Error::ShapeMismatch {
                op: "causal_softmax",
                left: vec![rows, cols],
                right: vec![rows, rows],
            });
        }
        let mut out = vec![0.0; rows * cols];
        {
            let adata = self.data(a);
            for_each_row(&mut out, cols, 8, |i, row| {
                let src = &adata[i * cols..i * cols + i + 1];
                let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (j, &v) in src.iter().enumerate() {
                    let e = (v - max).exp();
                    row[j] = e;
                    sum += e;
                }
                let inv = 1.0 / sum;
                for r in row[..=i].iter_mut() {
                    *r *= inv;
                }
            });
        }
        let rg = self.requires(a);
        Ok(self.push(out, vec![rows, cols], rg, Op::CausalSoftmax { a }))
    }

    /// x / sqrt(mean(x²)+ε) ⊙ gain, row-wise over the last dimension.
    pub fn rms_norm(&mut self, x: TensorId, gain: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.dims2(x);
        let gshape = self.shape(gain).to_vec();
        if gshape != [cols] {
            return Err(Error::ShapeMismatch {
                op: "rms_norm",
                left: vec![rows, cols],
                right: gshape,
            });
        }
        let mut out = vec![0.0; rows * cols];
        {
            let xdata = self.data(x);
            let gdata = self.data(gain);
            for_each_row(&mut out, cols, 8, |i, row| {
                let xr = &xdata[i * cols..(i + 1) * cols];
                let mean_sq = xr.iter().map(|v| v * v).sum::<f64>() / cols as f64;
                let r = 1.0 / (mean_sq + RMS_NORM_EPS).sqrt();
                for ((o, &xv), &gv) in row.iter_mut().zip(xr).zip(gdata) {
                    *o = xv * r * gv;
                }
            });
        }
        let rg = self.requires(x) || self.requires(gain);
        Ok(self.push(out, vec![rows, cols], rg, Op::RmsNorm { x, gain }))
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.data(a).iter().map(|&x| gelu_fwd(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires(a);
        self.push(out, shape, rg, Op::Gelu { a })
    }

    /// Mean negative log-likelihood over masked rows:
    /// Σ_t mask_t · (−log softmax(logits_t)[target_t]) / Σ_t mask_t.
    ///
    /// Rows with mask 0 contribute nothing to the value and receive exactly
    /// zero gradient; their target entries are never read.
    pub fn softmax_cross_entropy_masked(
        &mut self,
        logits: TensorId,
        targets: &[u32],
        mask: &[u8],
    ) -> Result<TensorId> {
        let (rows, vocab) = self.dims2(logits);
        if targets.len() != rows || mask.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy_masked",
                left: vec![rows, vocab],
                right: vec![targets.len(), mask.len()],
            });
        }
        let n_masked = mask.iter().filter(|&&m| m != 0).count();
        if n_masked == 0 {
            return Err(Error::InvalidMask);
        }
        let mut total = 0.0;
        {
            let ldata = self.data(logits);
            for t in 0..rows {
                if mask[t] == 0 {
                    continue;
                }
                let target = targets[t];
                if target as usize >= vocab {
                    return Err(Error::TokenOutOfRange {
                        id: target,
                        vocab_size: vocab,
                    });
                }
                let row = &ldata[t * vocab..(t + 1) * vocab];
                total += log_sum_exp(row) - row[target as usize];
            }
        }
        let loss = total / n_masked as f64;
        let rg = self.requires(logits);
        Ok(self.push(
            vec![loss],
            vec![1],
            rg,
            Op::MaskedCrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s = self.data(a).iter().sum::<f64>();
        let rg = self.requires(a);
        self.push(vec![s], vec![1], rg, Op::Sum { a })
    }

    // ---- backward ----

    fn grad_buf(&mut self, id: TensorId) -> &mut Vec<f64> {
        let len = self.nodes[id.0].data.len();
        self.nodes[id.0].grad.get_or_insert_with(|| vec![0.0; len])
    }

    /// Reverse-mode sweep from a scalar loss. Visits each recorded node at
    /// most once, in reverse order of creation. A second call on the same
    /// tape is an error.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.backward_ran {
            return Err(Error::BackwardAlreadyRan);
        }
        let lnode = &self.nodes[loss.0];
        if lnode.data.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: lnode.shape.clone(),
            });
        }
        if !lnode.requires_grad {
            return Err(Error::DetachedGraph);
        }
        self.backward_ran = true;
        self.grad_buf(loss)[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].grad.is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            self.step_backward(idx)?;
        }
        Ok(())
    }

    fn step_backward(&mut self, idx: usize) -> Result<()> {
        // Take the upstream grad out to appease the borrow checker; the node
        // keeps its data, and the grad is restored at the end.
        let upstream = self.nodes[idx].grad.take().expect("grad present");
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.dims2(a);
                let n = self.dims2(b).1;
                if self.requires(a) {
                    let bdata = self.nodes[b.0].data.clone();
                    // grad_a += upstream · bᵀ
                    kernels::matmul_nt_acc(self.grad_buf(a), &upstream, &bdata, m, n, k);
                }
                if self.requires(b) {
                    let adata = self.nodes[a.0].data.clone();
                    // grad_b += aᵀ · upstream
                    kernels::matmul_tn_acc(self.grad_buf(b), &adata, &upstream, k, m, n);
                }
            }
            Op::MatmulNt { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = self.dims2(a);
                let n = self.dims2(b).0;
                if self.requires(a) {
                    let bdata = self.nodes[b.0].data.clone();
                    // grad_a += upstream · b
                    kernels::matmul_acc(self.grad_buf(a), &upstream, &bdata, m, n, k);
                }
                if self.requires(b) {
                    let adata = self.nodes[a.0].data.clone();
                    // grad_b += upstreamᵀ · a
                    kernels::matmul_tn_acc(self.grad_buf(b), &upstream, &adata, n, m, k);
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                if self.requires(a) {
                    for (g, &u) in self.grad_buf(a).iter_mut().zip(&upstream) {
                        *g += u;
                    }
                }
                if self.requires(b) {
                    for (g, &u) in self.grad_buf(b).iter_mut().zip(&upstream) {
                        *g += u;
                    }
                }
            }
            Op::Scale { a, factor } => {
                let (a, factor) = (*a, *factor);
                if self.requires(a) {
                    for (g, &u) in self.grad_buf(a).iter_mut().zip(&upstream) {
                        *g += factor * u;
                    }
                }
            }
            Op::Gather { table, ids } => {
                let (table, ids) = (*table, ids.clone());
                if self.requires(table) {
                    let cols = self.dims2(table).1;
                    let gt = self.grad_buf(table);
                    for (i, &id) in ids.iter().enumerate() {
                        let dst = &mut gt[id as usize * cols..(id as usize + 1) * cols];
                        for (g, &u) in dst.iter_mut().zip(&upstream[i * cols..(i + 1) * cols]) {
                            *g += u;
                        }
                    }
                }
            }
            Op::SliceCols { a, start, len } => {
                let (a, start, len) = (*a, *start, *len);
                if self.requires(a) {
                    let (rows, cols) = self.dims2(a);
                    let ga = self.grad_buf(a);
                    for i in 0..rows {
                        let dst = &mut ga[i * cols + start..i * cols + start + len];
                        for (g, &u) in dst.iter_mut().zip(&upstream[i * len..(i + 1) * len]) {
                            *g += u;
                        }
                    }
                }
            }
            Op::ConcatCols { parts } => {
                let parts = parts.clone();
                let rows = self.dims2(parts[0]).0;
                let total: usize = parts.iter().map(|&p| self.dims2(p).1).sum();
                let mut offset = 0;
                for &p in &parts {
                    let c = self.dims2(p).1;
                    if self.requires(p) {
                        let gp = self.grad_buf(p);
                        for i in 0..rows {
                            let dst = &mut gp[i * c..(i + 1) * c];
                            let src = &upstream[i * total + offset..i * total + offset + c];
                            for (g, &u) in dst.iter_mut().zip(src) {
                                *g += u;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::CausalSoftmax { a } => {
                let a = *a;
                if self.requires(a) {
                    let (rows, cols) = self.dims2(a);
                    let probs = self.nodes[idx].data.clone();
                    let ga = self.grad_buf(a);
                    for i in 0..rows {
                        let p = &probs[i * cols..i * cols + i + 1];
                        let u = &upstream[i * cols..i * cols + i + 1];
                        let dot: f64 = p.iter().zip(u).map(|(pv, uv)| pv * uv).sum();
                        let g = &mut ga[i * cols..i * cols + i + 1];
                        for ((gv, &pv), &uv) in g.iter_mut().zip(p).zip(u) {
                            *gv += pv * (uv - dot);
                        }
                    }
                }
            }
            Op::RmsNorm { x, gain } => {
                let (x, gain) = (*x, *gain);
                let (rows, cols) = self.dims2(x);
                let xdata = self.nodes[x.0].data.clone();
                let gdata = self.nodes[gain.0].data.clone();
                let req_x = self.requires(x);
                let req_g = self.requires(gain);
                for i in 0..rows {
                    let xr = &xdata[i * cols..(i + 1) * cols];
                    let u = &upstream[i * cols..(i + 1) * cols];
                    let mean_sq = xr.iter().map(|v| v * v).sum::<f64>() / cols as f64;
                    let r = 1.0 / (mean_sq + RMS_NORM_EPS).sqrt();
                    if req_x {
                        // d/dx_j: r·g_j·u_j − (r³/d)·x_j·Σ_i u_i·g_i·x_i
                        let s: f64 = (0..cols).map(|j| u[j] * gdata[j] * xr[j]).sum();
                        let coef = r * r * r / cols as f64;
                        let gx = self.grad_buf(x);
                        for j in 0..cols {
                            gx[i * cols + j] += r * gdata[j] * u[j] - coef * xr[j] * s;
                        }
                    }
                    if req_g {
                        let gg = self.grad_buf(gain);
                        for j in 0..cols {
                            gg[j] += u[j] * xr[j] * r;
                        }
                    }
                }
            }
            Op::Gelu { a } => {
                let a = *a;
                if self.requires(a) {
                    let adata = self.nodes[a.0].data.clone();
                    let ga = self.grad_buf(a);
                    for ((g, &x), &u) in ga.iter_mut().zip(&adata).zip(&upstream) {
                        *g += gelu_bwd(x) * u;
                    }
                }
            }
            Op::MaskedCrossEntropy {
                logits,
                targets,
                mask,
            } => {
                let (logits, targets, mask) = (*logits, targets.clone(), mask.clone());
                if self.requires(logits) {
                    let (rows, vocab) = self.dims2(logits);
                    let ldata = self.nodes[logits.0].data.clone();
                    let n_masked = mask.iter().filter(|&&m| m != 0).count() as f64;
                    let scale = upstream[0] / n_masked;
                    let gl = self.grad_buf(logits);
                    for t in 0..rows {
                        if mask[t] == 0 {
                            continue;
                        }
                        let row = &ldata[t * vocab..(t + 1) * vocab];
                        let lse = log_sum_exp(row);
                        let g = &mut gl[t * vocab..(t + 1) * vocab];
                        for (j, (gv, &lv)) in g.iter_mut().zip(row).enumerate() {
                            let p = (lv - lse).exp();
                            let indicator = if j == targets[t] as usize { 1.0 } else { 0.0 };
                            *gv += scale * (p - indicator);
                        }
                    }
                }
            }
            Op::Sum { a } => {
                let a = *a;
                if self.requires(a) {
                    let u = upstream[0];
                    for g in self.grad_buf(a).iter_mut() {
                        *g += u;
                    }
                }
            }
        }
        self.nodes[idx].grad = Some(upstream);
        Ok(())
    }
}

/// Numerically stable log Σ exp over a slice.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const GELU_A: f64 = 0.044715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_bwd(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests;
