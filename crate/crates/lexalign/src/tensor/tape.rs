//! Reverse-mode autodiff on a append-only operation tape.
//!
//! A [`Tape`] records one forward computation; [`Tape::backward`] walks it in
//! reverse exactly once (a second call is an error, so gradients can never
//! silently accumulate across optimizer steps). Gradient buffers are only
//! allocated for nodes on a path to a gradient-requiring leaf; a leaf created
//! with `requires_grad = false` never receives one.

use super::kernels;
use super::{Real, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add { a: NodeId, b: NodeId },
    /// Matrix plus a broadcast 1 x d row.
    AddRow { a: NodeId, row: NodeId },
    Scale { a: NodeId, c: f64 },
    /// A[m,k] * B[k,n]
    MatMul { a: NodeId, b: NodeId },
    /// A[m,k] * B[n,k]^T
    MatMulNT { a: NodeId, b: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    Gelu { a: NodeId },
    /// Select rows of a matrix by index (embedding lookup, row pooling).
    GatherRows { a: NodeId, idx: Vec<usize> },
    /// [n,d] -> [1,d] mean over rows.
    MeanRows { a: NodeId },
    ConcatRows { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
    /// Mean negative log-likelihood of `targets` at the selected `rows` of a
    /// [n, vocab] logit matrix.
    CrossEntropy { logits: NodeId, targets: Vec<usize>, rows: Vec<usize> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
    grad: Option<Tensor<T>>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    /// Copy of a node's value with no gradient link to its history.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.value(id).clone();
        self.leaf(v, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad, grad: None });
        NodeId(self.nodes.len() - 1)
    }

    fn any_needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    // ── Forward ops ─────────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data().iter())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::from_vec(va.shape(), data)?;
        let needs = self.any_needs(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, needs))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, TensorError> {
        let (va, vr) = (self.value(a), self.value(row));
        if !va.is_matrix() || vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: va.shape().to_vec(),
                rhs: vr.shape().to_vec(),
            });
        }
        let cols = va.cols();
        let mut data = Vec::with_capacity(va.numel());
        for r in va.data().chunks(cols) {
            for (x, y) in r.iter().zip(vr.data().iter()) {
                data.push(*x + *y);
            }
        }
        let out = Tensor::from_vec(va.shape(), data)?;
        let needs = self.any_needs(&[a, row]);
        Ok(self.push(out, Op::AddRow { a, row }, needs))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let cc = T::from64(c);
        let va = self.value(a);
        let data = va.data().iter().map(|&x| x * cc).collect();
        let out = Tensor::from_vec(va.shape(), data).expect("same shape");
        let needs = self.any_needs(&[a]);
        self.push(out, Op::Scale { a, c }, needs)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.is_matrix() || !vb.is_matrix() || va.cols() != vb.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.cols());
        let mut out = Tensor::zeros(&[m, n]);
        kernels::matmul(va.data(), vb.data(), m, k, n, out.data_mut());
        let needs = self.any_needs(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b }, needs))
    }

    /// a [m,k] times the transpose of b [n,k].
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.is_matrix() || !vb.is_matrix() || va.cols() != vb.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let (m, k, n) = (va.rows(), va.cols(), vb.rows());
        let mut out = Tensor::zeros(&[m, n]);
        kernels::matmul_nt(va.data(), vb.data(), m, k, n, out.data_mut());
        let needs = self.any_needs(&[a, b]);
        Ok(self.push(out, Op::MatMulNT { a, b }, needs))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if !va.all_finite() {
            return Err(TensorError::NonFinite("softmax_rows input".into()));
        }
        let cols = va.cols();
        let mut out = va.clone();
        kernels::softmax_rows_inplace(out.data_mut(), cols);
        let needs = self.any_needs(&[a]);
        Ok(self.push(out, Op::SoftmaxRows { a }, needs))
    }

    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let d = vx.cols();
        if vg.numel() != d || vb.numel() != d {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: vx.shape().to_vec(),
                rhs: vg.shape().to_vec(),
            });
        }
        let epst = T::from64(eps);
        let inv_d = T::from64(1.0 / d as f64);
        let mut data = Vec::with_capacity(vx.numel());
        for row in vx.data().chunks(d) {
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_d;
            let mut var = T::zero();
            for &v in row {
                let c = v - mean;
                var = var + c * c;
            }
            var = var * inv_d;
            let inv_std = (var + epst).sqrt().recip();
            for (j, &v) in row.iter().enumerate() {
                data.push((v - mean) * inv_std * vg.data()[j] + vb.data()[j]);
            }
        }
        let out = Tensor::from_vec(vx.shape(), data)?;
        let needs = self.any_needs(&[x, gain, bias]);
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, eps }, needs))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().map(|&x| kernels::gelu(x)).collect();
        let out = Tensor::from_vec(va.shape(), data).expect("same shape");
        let needs = self.any_needs(&[a]);
        self.push(out, Op::Gelu { a }, needs)
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        for &i in idx {
            if i >= rows {
                return Err(TensorError::IndexOutOfBounds { op: "gather_rows", index: i, bound: rows });
            }
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(va.row_slice(i));
        }
        let out = Tensor::from_vec(&[idx.len(), cols], data)?;
        let needs = self.any_needs(&[a]);
        Ok(self.push(out, Op::GatherRows { a, idx: idx.to_vec() }, needs))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        if rows == 0 {
            return Err(TensorError::InvalidShape {
                op: "mean_rows",
                shape: va.shape().to_vec(),
                reason: "empty row set".into(),
            });
        }
        let inv = T::from64(1.0 / rows as f64);
        let mut acc = vec![T::zero(); cols];
        for row in va.data().chunks(cols) {
            for (a, &v) in acc.iter_mut().zip(row.iter()) {
                *a = *a + v;
            }
        }
        for a in acc.iter_mut() {
            *a = *a * inv;
        }
        let out = Tensor::from_vec(&[1, cols], acc)?;
        let needs = self.any_needs(&[a]);
        Ok(self.push(out, Op::MeanRows { a }, needs))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            total += v.rows();
        }
        let mut data = Vec::with_capacity(total * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(&[total, cols], data)?;
        let needs = self.any_needs(parts);
        Ok(self.push(out, Op::ConcatRows { parts: parts.to_vec() }, needs))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::from_vec(&[rows, total], data)?;
        let needs = self.any_needs(parts);
        Ok(self.push(out, Op::ConcatCols { parts: parts.to_vec() }, needs))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let mut s = T::zero();
        for &v in self.value(a).data() {
            s = s + v;
        }
        let needs = self.any_needs(&[a]);
        self.push(Tensor::scalar(s), Op::SumAll { a }, needs)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel();
        let mut s = T::zero();
        for &v in self.value(a).data() {
            s = s + v;
        }
        let needs = self.any_needs(&[a]);
        self.push(Tensor::scalar(s * T::from64(1.0 / n as f64)), Op::MeanAll { a }, needs)
    }

    /// Mean negative log-likelihood over the positions selected by `mask`
    /// (all positions when `mask` is `None`). `targets` has one entry per row
    /// of `logits`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<NodeId, TensorError> {
        let v = self.value(logits);
        let (n, vocab) = (v.rows(), v.cols());
        if targets.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![n, vocab],
                rhs: vec![targets.len()],
            });
        }
        if let Some(m) = mask {
            if m.len() != n {
                return Err(TensorError::ShapeMismatch {
                    op: "cross_entropy",
                    lhs: vec![n],
                    rhs: vec![m.len()],
                });
            }
        }
        let rows: Vec<usize> = match mask {
            Some(m) => (0..n).filter(|&i| m[i]).collect(),
            None => (0..n).collect(),
        };
        if rows.is_empty() {
            return Err(TensorError::NoSupervisedPositions);
        }
        let mut loss = T::zero();
        let mut sel_targets = Vec::with_capacity(rows.len());
        for &r in &rows {
            let t = targets[r];
            if t >= vocab {
                return Err(TensorError::IndexOutOfBounds { op: "cross_entropy", index: t, bound: vocab });
            }
            let row = v.row_slice(r);
            let lse = kernels::log_sum_exp_row(row);
            loss = loss + (lse - row[t]);
            sel_targets.push(t);
        }
        loss = loss * T::from64(1.0 / rows.len() as f64);
        let needs = self.any_needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: sel_targets, rows },
            needs,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar root. Errors if already run on this tape.
    pub fn backward(&mut self, root: NodeId) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::GraphConsumed);
        }
        self.consumed = true;
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(TensorError::InvalidShape {
                op: "backward",
                shape: root_value.shape().to_vec(),
                reason: "root must be scalar".into(),
            });
        }
        if !self.nodes[root.0].needs_grad {
            // Nothing on the tape requires gradients; a no-op pass.
            return Ok(());
        }
        self.nodes[root.0].grad = Some(Tensor::full(&[1, 1], T::one()));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else { continue };
            let contributions = self.local_grads(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (pid, contrib) in contributions {
                self.accumulate(pid, contrib);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, contrib: Tensor<T>) {
        let node = &mut self.nodes[id.0];
        if !node.needs_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(contrib.data().iter()) {
                    *a = *a + *b;
                }
            }
            None => node.grad = Some(contrib),
        }
    }

    /// Per-parent gradient contributions of node `i` given its output grad.
    fn local_grads(&self, i: usize, grad: &Tensor<T>) -> Vec<(NodeId, Tensor<T>)> {
        let value = &self.nodes[i].value;
        let mut out = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                out.push((*a, grad.clone()));
                out.push((*b, grad.clone()));
            }
            Op::AddRow { a, row } => {
                out.push((*a, grad.clone()));
                let cols = grad.cols();
                let mut acc = vec![T::zero(); cols];
                for r in grad.data().chunks(cols) {
                    for (s, &g) in acc.iter_mut().zip(r.iter()) {
                        *s = *s + g;
                    }
                }
                out.push((*row, Tensor::from_vec(&[1, cols], acc).unwrap()));
            }
            Op::Scale { a, c } => {
                let cc = T::from64(*c);
                let d = grad.data().iter().map(|&g| g * cc).collect();
                out.push((*a, Tensor::from_vec(grad.shape(), d).unwrap()));
            }
            Op::MatMul { a, b } => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                // dA = g * B^T
                let mut da = Tensor::zeros(&[m, k]);
                kernels::matmul_nt(grad.data(), vb.data(), m, n, k, da.data_mut());
                // dB = A^T * g
                let mut db = Tensor::zeros(&[k, n]);
                kernels::matmul_tn(va.data(), grad.data(), m, k, n, db.data_mut());
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::MatMulNT { a, b } => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.rows(), va.cols(), vb.rows());
                // C = A * B^T, so dA = g * B and dB = g^T * A.
                let mut da = Tensor::zeros(&[m, k]);
                kernels::matmul(grad.data(), vb.data(), m, n, k, da.data_mut());
                let mut db = Tensor::zeros(&[n, k]);
                kernels::matmul_tn(grad.data(), va.data(), m, n, k, db.data_mut());
                out.push((*a, da));
                out.push((*b, db));
            }
            Op::SoftmaxRows { a } => {
                let s = value;
                let cols = s.cols();
                let mut d = Vec::with_capacity(s.numel());
                for (srow, grow) in s.data().chunks(cols).zip(grad.data().chunks(cols)) {
                    let mut dot = T::zero();
                    for (&sv, &gv) in srow.iter().zip(grow.iter()) {
                        dot = dot + sv * gv;
                    }
                    for (&sv, &gv) in srow.iter().zip(grow.iter()) {
                        d.push(sv * (gv - dot));
                    }
                }
                out.push((*a, Tensor::from_vec(s.shape(), d).unwrap()));
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let vx = &self.nodes[x.0].value;
                let vg = &self.nodes[gain.0].value;
                let d = vx.cols();
                let inv_d = T::from64(1.0 / d as f64);
                let epst = T::from64(*eps);
                let mut dx = Tensor::zeros(vx.shape());
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                for (r, (xrow, grow)) in vx
                    .data()
                    .chunks(d)
                    .zip(grad.data().chunks(d))
                    .enumerate()
                {
                    let mut mean = T::zero();
                    for &v in xrow {
                        mean = mean + v;
                    }
                    mean = mean * inv_d;
                    let mut var = T::zero();
                    for &v in xrow {
                        let c = v - mean;
                        var = var + c * c;
                    }
                    var = var * inv_d;
                    let inv_std = (var + epst).sqrt().recip();
                    let xhat: Vec<T> = xrow.iter().map(|&v| (v - mean) * inv_std).collect();
                    let mut dxhat = vec![T::zero(); d];
                    for j in 0..d {
                        dgain[j] = dgain[j] + grow[j] * xhat[j];
                        dbias[j] = dbias[j] + grow[j];
                        dxhat[j] = grow[j] * vg.data()[j];
                    }
                    let mut sum_dxhat = T::zero();
                    let mut sum_dxhat_xhat = T::zero();
                    for j in 0..d {
                        sum_dxhat = sum_dxhat + dxhat[j];
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat[j] * xhat[j];
                    }
                    let row_out = &mut dx.data_mut()[r * d..(r + 1) * d];
                    let df = T::from64(d as f64);
                    for j in 0..d {
                        row_out[j] = inv_std * inv_d * (df * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    }
                }
                out.push((*x, dx));
                out.push((*gain, Tensor::from_vec(self.nodes[gain.0].value.shape(), dgain).unwrap()));
                out.push((*bias, Tensor::from_vec(self.nodes[bias.0].value.shape(), dbias).unwrap()));
            }
            Op::Gelu { a } => {
                let vx = &self.nodes[a.0].value;
                let d = vx
                    .data()
                    .iter()
                    .zip(grad.data().iter())
                    .map(|(&x, &g)| g * kernels::gelu_grad(x))
                    .collect();
                out.push((*a, Tensor::from_vec(vx.shape(), d).unwrap()));
            }
            Op::GatherRows { a, idx } => {
                let va = &self.nodes[a.0].value;
                let cols = va.cols();
                let mut da = Tensor::zeros(va.shape());
                for (pos, &src) in idx.iter().enumerate() {
                    let grow = &grad.data()[pos * cols..(pos + 1) * cols];
                    let drow = &mut da.data_mut()[src * cols..(src + 1) * cols];
                    for (d, &g) in drow.iter_mut().zip(grow.iter()) {
                        *d = *d + g;
                    }
                }
                out.push((*a, da));
            }
            Op::MeanRows { a } => {
                let va = &self.nodes[a.0].value;
                let (rows, cols) = (va.rows(), va.cols());
                let inv = T::from64(1.0 / rows as f64);
                let mut da = Tensor::zeros(va.shape());
                for r in 0..rows {
                    let drow = &mut da.data_mut()[r * cols..(r + 1) * cols];
                    for (d, &g) in drow.iter_mut().zip(grad.data().iter()) {
                        *d = g * inv;
                    }
                }
                out.push((*a, da));
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                let cols = value.cols();
                for &p in parts {
                    let rows = self.nodes[p.0].value.rows();
                    let slice = &grad.data()[offset * cols..(offset + rows) * cols];
                    out.push((p, Tensor::from_vec(&[rows, cols], slice.to_vec()).unwrap()));
                    offset += rows;
                }
            }
            Op::ConcatCols { parts } => {
                let rows = value.rows();
                let total = value.cols();
                let mut offset = 0;
                for &p in parts {
                    let cols = self.nodes[p.0].value.cols();
                    let mut d = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        let start = r * total + offset;
                        d.extend_from_slice(&grad.data()[start..start + cols]);
                    }
                    out.push((p, Tensor::from_vec(&[rows, cols], d).unwrap()));
                    offset += cols;
                }
            }
            Op::SumAll { a } => {
                let va = &self.nodes[a.0].value;
                let g = grad.item();
                out.push((*a, Tensor::full(va.shape(), g)));
            }
            Op::MeanAll { a } => {
                let va = &self.nodes[a.0].value;
                let g = grad.item() * T::from64(1.0 / va.numel() as f64);
                out.push((*a, Tensor::full(va.shape(), g)));
            }
            Op::CrossEntropy { logits, targets, rows } => {
                let vl = &self.nodes[logits.0].value;
                let vocab = vl.cols();
                let g = grad.item() * T::from64(1.0 / rows.len() as f64);
                let mut dl = Tensor::zeros(vl.shape());
                for (&r, &t) in rows.iter().zip(targets.iter()) {
                    let lrow = vl.row_slice(r);
                    let lse = kernels::log_sum_exp_row(lrow);
                    let drow = &mut dl.data_mut()[r * vocab..(r + 1) * vocab];
                    for (j, (&lv, d)) in lrow.iter().zip(drow.iter_mut()).enumerate() {
                        let p = (lv - lse).exp();
                        let y = if j == t { T::one() } else { T::zero() };
                        *d = *d + g * (p - y);
                    }
                }
                out.push((*logits, dl));
            }
        }
        out
    }
}
