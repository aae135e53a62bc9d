//! Reverse-mode differentiation over a linear tape of recorded primitives.
//!
//! The tape records every primitive produced during a forward pass in order.
//! `backward` replays the records in reverse exactly once, accumulating
//! adjoints. Tensors are immutable once recorded, so replaying the same tape
//! twice yields bitwise-identical gradients.

use super::tensor::{
    matmul_nt, matmul_tn, softmax_row_into, softmax_row_masked_into, Tensor,
};
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// One attention group inside an [`Tape::attention_mix`] call: a contiguous
/// row range `start..start + obs.len()` attending within itself, restricted
/// to rows/columns whose observability bit is set.
#[derive(Debug, Clone)]
pub struct AttnGroup {
    pub start: usize,
    pub obs: Vec<bool>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Scale(Var, f64),
    Matmul(Var, Var),
    AddBias(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    SoftmaxRowsMasked(Var),
    Relu(Var),
    MulConst(Var, Tensor),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    BroadcastRow(Var, usize),
    BlendRows {
        on: Var,
        off: Var,
        bits: Vec<bool>,
    },
    SumAll(Var),
    /// sum_r w_r * sum_c (x_rc - t_rc)^2 / denom
    WeightedSqLoss {
        x: Var,
        target: Tensor,
        row_weights: Vec<f64>,
        denom: f64,
    },
    /// sum_r w_r * ||x_r - t_r|| / denom
    WeightedDistLoss {
        x: Var,
        target: Tensor,
        row_weights: Vec<f64>,
        denom: f64,
    },
    /// Fused masked multi-head attention mix over row groups.
    AttentionMix {
        q: Var,
        k: Var,
        v: Var,
        groups: Vec<AttnGroup>,
        heads: usize,
        scale: f64,
        /// Per (group, head): the softmax matrix needed for backward
        /// (full softmax for the post-softmax variant, masked softmax
        /// for the pre-softmax variant).
        saved: Vec<Vec<f64>>,
    },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a registered parameter. Panics if `v` was never
    /// registered via [`Tape::param`].
    pub fn param(&self, v: Var) -> &Tensor {
        self.wrt(v).expect("no gradient for unregistered var")
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Record a constant input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    /// Record a parameter: identical to a constant, but registered so that
    /// `backward` always reports a gradient for it (zeros if unused).
    pub fn param(&mut self, t: Tensor) -> Var {
        let v = self.push(Op::Leaf, t);
        self.params.push(v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul_elem(self.value(b))?;
        Ok(self.push(Op::MulElem(a, b), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), value))
    }

    /// `x + b` broadcast over rows: x is m×n, b has length n.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(b);
        if xv.rank() != 2 || bv.numel() != xv.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut data = xv.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += bv.data()[j];
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(Op::AddBias(x, b), value))
    }

    /// Affine map `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transposed()?;
        Ok(self.push(Op::Transpose(a), value))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).softmax_rows()?;
        Ok(self.push(Op::SoftmaxRows(x), value))
    }

    /// Row softmax restricted to positions with `mask = true`; masked
    /// positions get weight 0 and fully masked rows are all zero.
    pub fn softmax_rows_masked(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || mask.len() != xv.numel() {
            return Err(Error::InvalidShape {
                op: "softmax_rows_masked",
                shape: xv.shape().to_vec(),
                reason: format!("mask length {} does not match", mask.len()),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            softmax_row_masked_into(
                &xv.data()[i * n..(i + 1) * n],
                &mask[i * n..(i + 1) * n],
                &mut data[i * n..(i + 1) * n],
            );
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(Op::SoftmaxRowsMasked(x), value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu(x), value)
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let value = self.value(x).mul_elem(c)?;
        Ok(self.push(Op::MulConst(x, c.clone()), value))
    }

    /// Concatenate rank-2 tensors along the last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols of nothing".into()));
        }
        let m = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() != 2 || pv.rows() != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: pv.shape().to_vec(),
                });
            }
            total += pv.cols();
        }
        let mut data = vec![0.0; m * total];
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            let n = pv.cols();
            for i in 0..m {
                data[i * total + offset..i * total + offset + n]
                    .copy_from_slice(&pv.data()[i * n..(i + 1) * n]);
            }
            offset += n;
        }
        let value = Tensor::new(vec![m, total], data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// `out[i] = x[idx[i]]` over rows of a rank-2 tensor.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::InvalidShape {
                op: "gather_rows",
                shape: xv.shape().to_vec(),
                reason: "rank-2 tensor required".into(),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(Error::InvalidArgument(format!(
                    "gather_rows: index {i} out of range for {m} rows"
                )));
            }
            data.extend_from_slice(&xv.data()[i * n..(i + 1) * n]);
        }
        let value = Tensor::new(vec![idx.len(), n], data)?;
        Ok(self.push(Op::GatherRows(x, idx.to_vec()), value))
    }

    /// Repeat a rank-1 tensor as `rows` identical rows.
    pub fn broadcast_row(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 1 {
            return Err(Error::InvalidShape {
                op: "broadcast_row",
                shape: xv.shape().to_vec(),
                reason: "rank-1 tensor required".into(),
            });
        }
        let n = xv.numel();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(xv.data());
        }
        let value = Tensor::new(vec![rows, n], data)?;
        Ok(self.push(Op::BroadcastRow(x, rows), value))
    }

    /// Row-wise select: row i of the output is row i of `on` where `bits[i]`
    /// is set and row i of `off` otherwise. Rows are copied verbatim, so the
    /// unselected side leaves no arithmetic trace.
    pub fn blend_rows(&mut self, on: Var, off: Var, bits: &[bool]) -> Result<Var> {
        let ov = self.value(on);
        let fv = self.value(off);
        if ov.shape() != fv.shape() || ov.rank() != 2 || bits.len() != ov.rows() {
            return Err(Error::ShapeMismatch {
                op: "blend_rows",
                lhs: ov.shape().to_vec(),
                rhs: fv.shape().to_vec(),
            });
        }
        let (m, n) = (ov.rows(), ov.cols());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let src = if bits[i] { ov.data() } else { fv.data() };
            data[i * n..(i + 1) * n].copy_from_slice(&src[i * n..(i + 1) * n]);
        }
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(
            Op::BlendRows {
                on,
                off,
                bits: bits.to_vec(),
            },
            value,
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(s))
    }

    /// Row-weighted mean-squared reduction against a constant target:
    /// `sum_r w_r * sum_c (x_rc - t_rc)^2 / denom`.
    pub fn weighted_sq_loss(
        &mut self,
        x: Var,
        target: &Tensor,
        row_weights: &[f64],
        denom: f64,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() || xv.rank() != 2 || row_weights.len() != xv.rows() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sq_loss",
                lhs: xv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut acc = 0.0;
        for i in 0..m {
            let w = row_weights[i];
            if w == 0.0 {
                continue;
            }
            let mut row = 0.0;
            for j in 0..n {
                let d = xv.data()[i * n + j] - target.data()[i * n + j];
                row += d * d;
            }
            acc += w * row;
        }
        let value = Tensor::scalar(acc / denom);
        Ok(self.push(
            Op::WeightedSqLoss {
                x,
                target: target.clone(),
                row_weights: row_weights.to_vec(),
                denom,
            },
            value,
        ))
    }

    /// Row-weighted mean Euclidean-distance reduction against a constant
    /// target: `sum_r w_r * ||x_r - t_r|| / denom`.
    pub fn weighted_dist_loss(
        &mut self,
        x: Var,
        target: &Tensor,
        row_weights: &[f64],
        denom: f64,
    ) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() || xv.rank() != 2 || row_weights.len() != xv.rows() {
            return Err(Error::ShapeMismatch {
                op: "weighted_dist_loss",
                lhs: xv.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut acc = 0.0;
        for i in 0..m {
            let w = row_weights[i];
            if w == 0.0 {
                continue;
            }
            let mut sq = 0.0;
            for j in 0..n {
                let d = xv.data()[i * n + j] - target.data()[i * n + j];
                sq += d * d;
            }
            acc += w * sq.sqrt();
        }
        let value = Tensor::scalar(acc / denom);
        Ok(self.push(
            Op::WeightedDistLoss {
                x,
                target: target.clone(),
                row_weights: row_weights.to_vec(),
                denom,
            },
            value,
        ))
    }

    /// Fused masked multi-head attention mix.
    ///
    /// `q`, `k`, `v` are N×F projections sharing the row layout described by
    /// `groups`, which must partition the N rows into contiguous ranges. For
    /// each group and each of `heads` column stripes, computes scaled dot-
    /// product attention restricted by the group's observability bits:
    /// post-softmax masking multiplies the softmax weights elementwise by the
    /// observability outer product (rows become sub-stochastic); pre-softmax
    /// masking renormalizes over observed keys only. Rows of fully masked
    /// queries produce zero output in both variants.
    pub fn attention_mix(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        groups: Vec<AttnGroup>,
        heads: usize,
        pre_softmax: bool,
    ) -> Result<Var> {
        let qv = self.value(q);
        let shape = qv.shape().to_vec();
        if qv.rank() != 2
            || self.value(k).shape() != shape.as_slice()
            || self.value(v).shape() != shape.as_slice()
        {
            return Err(Error::ShapeMismatch {
                op: "attention_mix",
                lhs: shape,
                rhs: self.value(k).shape().to_vec(),
            });
        }
        let (rows, feat) = (shape[0], shape[1]);
        if heads == 0 || feat % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "attention_mix: feature dim {feat} not divisible by {heads} heads"
            )));
        }
        let mut cursor = 0;
        for g in &groups {
            if g.start != cursor || g.obs.is_empty() {
                return Err(Error::InvalidArgument(
                    "attention_mix: groups must partition rows contiguously".into(),
                ));
            }
            cursor += g.obs.len();
        }
        if cursor != rows {
            return Err(Error::InvalidArgument(format!(
                "attention_mix: groups cover {cursor} of {rows} rows"
            )));
        }

        let dh = feat / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut out = vec![0.0; rows * feat];
        let mut saved = Vec::with_capacity(groups.len() * heads);

        for g in &groups {
            let n = g.obs.len();
            for h in 0..heads {
                let col0 = h * dh;
                // scores = scale * Qh Kh^T for this group's rows
                let mut scores = vec![0.0; n * n];
                for a in 0..n {
                    let qrow = &qd[(g.start + a) * feat + col0..(g.start + a) * feat + col0 + dh];
                    for b in 0..n {
                        let krow =
                            &kd[(g.start + b) * feat + col0..(g.start + b) * feat + col0 + dh];
                        let mut acc = 0.0;
                        for l in 0..dh {
                            acc += qrow[l] * krow[l];
                        }
                        scores[a * n + b] = acc * scale;
                    }
                }
                // softmax (full or masked over observed keys)
                let mut soft = vec![0.0; n * n];
                if pre_softmax {
                    for a in 0..n {
                        softmax_row_masked_into(
                            &scores[a * n..(a + 1) * n],
                            &g.obs,
                            &mut soft[a * n..(a + 1) * n],
                        );
                    }
                } else {
                    for a in 0..n {
                        softmax_row_into(&scores[a * n..(a + 1) * n], &mut soft[a * n..(a + 1) * n]);
                    }
                }
                // apply the observability outer product and mix values
                for a in 0..n {
                    let orow = &mut out[(g.start + a) * feat + col0..(g.start + a) * feat + col0 + dh];
                    if !g.obs[a] {
                        continue; // fully masked query row: zero output
                    }
                    for b in 0..n {
                        if !g.obs[b] {
                            continue;
                        }
                        let w = soft[a * n + b];
                        if w == 0.0 {
                            continue;
                        }
                        let vrow =
                            &vd[(g.start + b) * feat + col0..(g.start + b) * feat + col0 + dh];
                        for l in 0..dh {
                            orow[l] += w * vrow[l];
                        }
                    }
                }
                saved.push(soft);
            }
        }

        let value = Tensor::new(vec![rows, feat], out)?;
        Ok(self.push(
            Op::AttentionMix {
                q,
                k,
                v,
                groups,
                heads,
                scale,
                saved,
            },
            value,
        ))
    }

    /// Softmax matrices recorded by an [`Tape::attention_mix`] node, one per
    /// (group, head), for instrumentation. For the post-softmax variant these
    /// are the unmasked softmax weights (every row sums to 1); for the
    /// pre-softmax variant they are the masked softmax weights (rows with at
    /// least one observed key sum to 1, fully masked rows are zero).
    pub fn attention_softmax_matrices(&self, v: Var) -> Option<Vec<(usize, usize, Tensor)>> {
        match &self.nodes[v.0].op {
            Op::AttentionMix { groups, heads, saved, .. } => {
                let mut out = Vec::with_capacity(saved.len());
                for (gi, g) in groups.iter().enumerate() {
                    let n = g.obs.len();
                    for h in 0..*heads {
                        let buf = &saved[gi * heads + h];
                        let t = Tensor::new(vec![n, n], buf.clone()).expect("saved softmax shape");
                        out.push((gi, h, t));
                    }
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Reverse pass from a scalar loss. Visits each recorded primitive at
    /// most once, in reverse order; every registered parameter ends up with
    /// a gradient of its own shape (zeros if the loss does not depend on it).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::InvalidShape {
                op: "backward",
                shape: lv.shape().to_vec(),
                reason: "loss must be scalar".into(),
            });
        }
        if !lv.item().is_finite() {
            return Err(Error::non_finite("loss before backward"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate_into_inputs(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for &p in &self.params {
            if grads[p.0].is_none() {
                grads[p.0] = Some(Tensor::zeros(self.value(p).shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate_into_inputs(&self, node: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        // Helper: mutable zero-initialized gradient buffer for an input var.
        fn buf<'a>(
            grads: &'a mut [Option<Tensor>],
            v: Var,
            shape: &[usize],
        ) -> &'a mut [f64] {
            grads[v.0]
                .get_or_insert_with(|| Tensor::zeros(shape))
                .data_mut()
        }

        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let ga = buf(grads, *a, g.shape());
                for (o, gi) in ga.iter_mut().zip(g.data()) {
                    *o += gi;
                }
                let gb = buf(grads, *b, g.shape());
                for (o, gi) in gb.iter_mut().zip(g.data()) {
                    *o += gi;
                }
            }
            Op::Sub(a, b) => {
                let ga = buf(grads, *a, g.shape());
                for (o, gi) in ga.iter_mut().zip(g.data()) {
                    *o += gi;
                }
                let gb = buf(grads, *b, g.shape());
                for (o, gi) in gb.iter_mut().zip(g.data()) {
                    *o -= gi;
                }
            }
            Op::MulElem(a, b) => {
                let bv = self.value(*b).data().to_vec();
                let ga = buf(grads, *a, g.shape());
                for ((o, gi), bi) in ga.iter_mut().zip(g.data()).zip(&bv) {
                    *o += gi * bi;
                }
                let av = self.value(*a).data().to_vec();
                let gb = buf(grads, *b, g.shape());
                for ((o, gi), ai) in gb.iter_mut().zip(g.data()).zip(&av) {
                    *o += gi * ai;
                }
            }
            Op::Scale(a, c) => {
                let ga = buf(grads, *a, g.shape());
                for (o, gi) in ga.iter_mut().zip(g.data()) {
                    *o += gi * c;
                }
            }
            Op::Matmul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                {
                    let ga = buf(grads, *a, av.shape());
                    matmul_nt(g.data(), bv.data(), m, n, k, ga);
                }
                {
                    let gb = buf(grads, *b, bv.shape());
                    matmul_tn(av.data(), g.data(), k, m, n, gb);
                }
            }
            Op::AddBias(x, b) => {
                let xshape = self.value(*x).shape().to_vec();
                let (m, n) = (xshape[0], xshape[1]);
                {
                    let gx = buf(grads, *x, &xshape);
                    for (o, gi) in gx.iter_mut().zip(g.data()) {
                        *o += gi;
                    }
                }
                let bshape = self.value(*b).shape().to_vec();
                let gb = buf(grads, *b, &bshape);
                for i in 0..m {
                    for j in 0..n {
                        gb[j] += g.data()[i * n + j];
                    }
                }
            }
            Op::Transpose(a) => {
                let ashape = self.value(*a).shape().to_vec();
                let (m, n) = (ashape[0], ashape[1]);
                let ga = buf(grads, *a, &ashape);
                for i in 0..n {
                    for j in 0..m {
                        ga[j * n + i] += g.data()[i * m + j];
                    }
                }
            }
            Op::SoftmaxRows(x) | Op::SoftmaxRowsMasked(x) => {
                let y = &self.nodes[node].value;
                let (m, n) = (y.rows(), y.cols());
                let xshape = self.value(*x).shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for i in 0..m {
                    let yrow = &y.data()[i * n..(i + 1) * n];
                    let grow = &g.data()[i * n..(i + 1) * n];
                    let dot: f64 = yrow.iter().zip(grow).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..n {
                        gx[i * n + j] += yrow[j] * (grow[j] - dot);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data().to_vec();
                let xshape = self.value(*x).shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for ((o, gi), xi) in gx.iter_mut().zip(g.data()).zip(&xv) {
                    if *xi > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::MulConst(x, c) => {
                let xshape = self.value(*x).shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for ((o, gi), ci) in gx.iter_mut().zip(g.data()).zip(c.data()) {
                    *o += gi * ci;
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.nodes[node].value.cols();
                let m = self.nodes[node].value.rows();
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.value(p).shape().to_vec();
                    let n = pshape[1];
                    let gp = buf(grads, p, &pshape);
                    for i in 0..m {
                        for j in 0..n {
                            gp[i * n + j] += g.data()[i * total + offset + j];
                        }
                    }
                    offset += n;
                }
            }
            Op::GatherRows(x, idx) => {
                let xshape = self.value(*x).shape().to_vec();
                let n = xshape[1];
                let gx = buf(grads, *x, &xshape);
                for (out_row, &src_row) in idx.iter().enumerate() {
                    for j in 0..n {
                        gx[src_row * n + j] += g.data()[out_row * n + j];
                    }
                }
            }
            Op::BroadcastRow(x, rows) => {
                let xshape = self.value(*x).shape().to_vec();
                let n = xshape[0];
                let gx = buf(grads, *x, &xshape);
                for r in 0..*rows {
                    for j in 0..n {
                        gx[j] += g.data()[r * n + j];
                    }
                }
            }
            Op::BlendRows { on, off, bits } => {
                let shape = self.value(*on).shape().to_vec();
                let n = shape[1];
                {
                    let gon = buf(grads, *on, &shape);
                    for (i, &bit) in bits.iter().enumerate() {
                        if bit {
                            for j in 0..n {
                                gon[i * n + j] += g.data()[i * n + j];
                            }
                        }
                    }
                }
                let goff = buf(grads, *off, &shape);
                for (i, &bit) in bits.iter().enumerate() {
                    if !bit {
                        for j in 0..n {
                            goff[i * n + j] += g.data()[i * n + j];
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                let gs = g.item();
                let xshape = self.value(*x).shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for o in gx.iter_mut() {
                    *o += gs;
                }
            }
            Op::WeightedSqLoss {
                x,
                target,
                row_weights,
                denom,
            } => {
                let gs = g.item() / denom;
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let xd = xv.data().to_vec();
                let xshape = xv.shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for i in 0..m {
                    let w = row_weights[i];
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let d = xd[i * n + j] - target.data()[i * n + j];
                        gx[i * n + j] += gs * 2.0 * w * d;
                    }
                }
            }
            Op::WeightedDistLoss {
                x,
                target,
                row_weights,
                denom,
            } => {
                let gs = g.item() / denom;
                let xv = self.value(*x);
                let (m, n) = (xv.rows(), xv.cols());
                let xd = xv.data().to_vec();
                let xshape = xv.shape().to_vec();
                let gx = buf(grads, *x, &xshape);
                for i in 0..m {
                    let w = row_weights[i];
                    if w == 0.0 {
                        continue;
                    }
                    let mut sq = 0.0;
                    for j in 0..n {
                        let d = xd[i * n + j] - target.data()[i * n + j];
                        sq += d * d;
                    }
                    let norm = sq.sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let d = xd[i * n + j] - target.data()[i * n + j];
                        gx[i * n + j] += gs * w * d / norm;
                    }
                }
            }
            // the saved softmax matrices already encode the masking variant
            Op::AttentionMix {
                q,
                k,
                v,
                groups,
                heads,
                scale,
                saved,
            } => {
                let feat = self.value(*q).cols();
                let dh = feat / heads;
                let qd = self.value(*q).data().to_vec();
                let kd = self.value(*k).data().to_vec();
                let vd = self.value(*v).data().to_vec();
                let mut gq = vec![0.0; qd.len()];
                let mut gk = vec![0.0; kd.len()];
                let mut gv = vec![0.0; vd.len()];

                for (gi, grp) in groups.iter().enumerate() {
                    let n = grp.obs.len();
                    let s0 = grp.start;
                    for h in 0..*heads {
                        let col0 = h * dh;
                        let soft = &saved[gi * heads + h];
                        // The forward only used weights at positions with
                        // obs[a] && obs[b] (masked query rows produce zero
                        // output in both variants), so the adjoint of the
                        // softmax output is zero elsewhere.
                        let mut dw = vec![0.0; n * n];
                        for a in 0..n {
                            if !grp.obs[a] {
                                continue;
                            }
                            let go = &g.data()[(s0 + a) * feat + col0..(s0 + a) * feat + col0 + dh];
                            for b in 0..n {
                                if !grp.obs[b] {
                                    continue;
                                }
                                let vrow = &vd[(s0 + b) * feat + col0..(s0 + b) * feat + col0 + dh];
                                let mut acc = 0.0;
                                for l in 0..dh {
                                    acc += go[l] * vrow[l];
                                }
                                dw[a * n + b] = acc;
                                let w = soft[a * n + b];
                                if w != 0.0 {
                                    let gvrow = &mut gv
                                        [(s0 + b) * feat + col0..(s0 + b) * feat + col0 + dh];
                                    for l in 0..dh {
                                        gvrow[l] += w * go[l];
                                    }
                                }
                            }
                        }
                        // through the masking and softmax to scores
                        // (dS = Y ∘ (dY - rowsum(dY ∘ Y)); dY is `dw` above)
                        let mut ds = vec![0.0; n * n];
                        for a in 0..n {
                            if !grp.obs[a] {
                                continue;
                            }
                            let yrow = &soft[a * n..(a + 1) * n];
                            let dyrow = &dw[a * n..(a + 1) * n];
                            let dot: f64 =
                                yrow.iter().zip(dyrow).map(|(yv, dv)| yv * dv).sum();
                            for b in 0..n {
                                ds[a * n + b] = yrow[b] * (dyrow[b] - dot);
                            }
                        }
                        // dQ += scale * dS K ; dK += scale * dS^T Q
                        for a in 0..n {
                            let gqrow =
                                &mut gq[(s0 + a) * feat + col0..(s0 + a) * feat + col0 + dh];
                            for b in 0..n {
                                let dsv = ds[a * n + b] * scale;
                                if dsv == 0.0 {
                                    continue;
                                }
                                let krow = &kd[(s0 + b) * feat + col0..(s0 + b) * feat + col0 + dh];
                                for l in 0..dh {
                                    gqrow[l] += dsv * krow[l];
                                }
                            }
                        }
                        for b in 0..n {
                            let gkrow =
                                &mut gk[(s0 + b) * feat + col0..(s0 + b) * feat + col0 + dh];
                            for a in 0..n {
                                let dsv = ds[a * n + b] * scale;
                                if dsv == 0.0 {
                                    continue;
                                }
                                let qrow = &qd[(s0 + a) * feat + col0..(s0 + a) * feat + col0 + dh];
                                for l in 0..dh {
                                    gkrow[l] += dsv * qrow[l];
                                }
                            }
                        }
                    }
                }

                let qshape = self.value(*q).shape().to_vec();
                {
                    let b = buf(grads, *q, &qshape);
                    for (o, gi) in b.iter_mut().zip(&gq) {
                        *o += gi;
                    }
                }
                {
                    let b = buf(grads, *k, &qshape);
                    for (o, gi) in b.iter_mut().zip(&gk) {
                        *o += gi;
                    }
                }
                {
                    let b = buf(grads, *v, &qshape);
                    for (o, gi) in b.iter_mut().zip(&gv) {
                        *o += gi;
                    }
                }
            }
        }
    }
}
