//! Reverse-mode tape.
//!
//! Every op appends a node holding its forward value; `backward` walks the
//! nodes in reverse and accumulates gradients into the leaves. Nodes whose
//! inputs never reach a gradient-requiring leaf are skipped.
//!
//! With branch tracking on, the tape folds every discrete decision (ReLU masks,
//! argmax/argmin picks, gather indices) into a running hash. Finite-difference
//! checks compare these signatures to detect evaluation points that straddle a
//! kink.

use crate::error::{param_err, shape_err, Error, Result};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    SliceCols(Var, usize),
    /// Max or min; `picks[o]` is the flat source index routed to output `o`.
    Extreme(Var, Vec<usize>),
    Mean { src: Var, outer: usize, len: usize, inner: usize },
    Sum(Var),
    SqDist(Var, Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    nan_check: bool,
    track_branches: bool,
    signature: u64,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, indexed by `Var`.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn two_d(op: &'static str, shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::InvalidParameter(format!("{op}: expected a 2-D tensor, got shape {shape:?}"))),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), nan_check: true, track_branches: false, signature: FNV_OFFSET }
    }

    pub fn set_nan_check(&mut self, on: bool) {
        self.nan_check = on;
    }

    pub fn set_track_branches(&mut self, on: bool) {
        self.track_branches = on;
    }

    /// Hash of every discrete decision recorded so far (branch tracking only).
    pub fn signature(&self) -> u64 {
        self.signature
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn mix(&mut self, word: u64) {
        for byte in word.to_le_bytes() {
            self.signature ^= byte as u64;
            self.signature = self.signature.wrapping_mul(FNV_PRIME);
        }
    }

    fn mix_mask(&mut self, values: &[T], threshold: T) {
        if !self.track_branches {
            return;
        }
        for chunk in values.chunks(64) {
            let word = chunk.iter().enumerate().fold(0u64, |w, (i, &x)| w | (((x > threshold) as u64) << i));
            self.mix(word);
        }
    }

    fn mix_indices(&mut self, idx: &[usize]) {
        if !self.track_branches {
            return;
        }
        self.mix(idx.len() as u64);
        for &i in idx {
            self.mix(i as u64);
        }
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op, needs_grad: bool) -> Result<Var> {
        if self.nan_check && !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Gradient-requiring input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push("leaf", value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push("constant", value, Op::Leaf, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, self.shape(a), self.shape(b));
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |p, q| p + q);
        let g = self.needs(a) || self.needs(b);
        self.push("add", v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |p, q| p - q);
        let g = self.needs(a) || self.needs(b);
        self.push("sub", v, Op::Sub(a, b), g)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |p, q| p * q);
        let g = self.needs(a) || self.needs(b);
        self.push("mul", v, Op::Mul(a, b), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let k = T::from_f64(s);
        let v = self.value(a).map(|x| x * k);
        let g = self.needs(a);
        self.push("scale", v, Op::Scale(a, s), g)
    }

    /// Adds a bias row (`[c]` or `[1, c]`) to every row of `a: [n, c]`.
    pub fn broadcast_add(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (n, c) = two_d("broadcast_add", self.shape(a))?;
        if self.value(bias).numel() != c {
            return shape_err("broadcast_add", self.shape(a), self.shape(bias));
        }
        let b = self.value(bias).data().to_vec();
        let mut v = self.value(a).clone();
        for r in 0..n {
            for (x, &y) in v.data_mut()[r * c..(r + 1) * c].iter_mut().zip(&b) {
                *x += y;
            }
        }
        let g = self.needs(a) || self.needs(bias);
        self.push("broadcast_add", v, Op::AddRow(a, bias), g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = two_d("matmul", self.shape(a))?;
        let (k2, m) = two_d("matmul", self.shape(b))?;
        if k != k2 {
            return shape_err("matmul", self.shape(a), self.shape(b));
        }
        let mut out = vec![T::ZERO; n * m];
        gemm(n, k, m, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        let g = self.needs(a) || self.needs(b);
        self.push("matmul", Tensor::new(&[n, m], out)?, Op::MatMul(a, b), g)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (n, c) = two_d("transpose", self.shape(a))?;
        let src = self.value(a).data();
        let mut out = vec![T::ZERO; n * c];
        for i in 0..n {
            for j in 0..c {
                out[j * n + i] = src[i * c + j];
            }
        }
        let g = self.needs(a);
        self.push("transpose", Tensor::new(&[c, n], out)?, Op::Transpose(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| if x > T::ZERO { x } else { T::ZERO });
        let data = self.value(a).data().to_vec();
        self.mix_mask(&data, T::ZERO);
        let g = self.needs(a);
        self.push("relu", v, Op::Relu(a), g)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let s = T::from_f64(slope);
        let v = self.value(a).map(|x| if x > T::ZERO { x } else { x * s });
        let data = self.value(a).data().to_vec();
        self.mix_mask(&data, T::ZERO);
        let g = self.needs(a);
        self.push("leaky_relu", v, Op::LeakyRelu(a, slope), g)
    }

    /// Row-wise softmax of a 2-D tensor (max-shifted).
    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var> {
        let (n, c) = two_d("softmax_lastdim", self.shape(a))?;
        let mut v = self.value(a).clone();
        for r in 0..n {
            let row = &mut v.data_mut()[r * c..(r + 1) * c];
            let mx = row.iter().copied().fold(row[0], |m, x| if x > m { x } else { m });
            let mut total = T::ZERO;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x = *x / total;
            }
        }
        let g = self.needs(a);
        self.push("softmax_lastdim", v, Op::SoftmaxRows(a), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return param_err("concat_cols: nothing to concatenate");
        }
        let (n, _) = two_d("concat_cols", self.shape(parts[0]))?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = two_d("concat_cols", self.shape(p))?;
            if r != n {
                return shape_err("concat_cols", self.shape(parts[0]), self.shape(p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let g = parts.iter().any(|&p| self.needs(p));
        self.push("concat_cols", Tensor::new(&[n, total], out)?, Op::ConcatCols(parts.to_vec()), g)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return param_err("concat_rows: nothing to concatenate");
        }
        let (_, c) = two_d("concat_rows", self.shape(parts[0]))?;
        let mut rows = 0;
        for &p in parts {
            let (r, cc) = two_d("concat_rows", self.shape(p))?;
            if cc != c {
                return shape_err("concat_rows", self.shape(parts[0]), self.shape(p));
            }
            rows += r;
        }
        let mut out = Vec::with_capacity(rows * c);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let g = parts.iter().any(|&p| self.needs(p));
        self.push("concat_rows", Tensor::new(&[rows, c], out)?, Op::ConcatRows(parts.to_vec()), g)
    }

    /// Rows of `a` picked by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (n, c) = two_d("gather_rows", self.shape(a))?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return param_err(format!("gather_rows: index {bad} out of range for {n} rows"));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        self.mix_indices(idx);
        let g = self.needs(a);
        self.push("gather_rows", Tensor::new(&[idx.len(), c], out)?, Op::GatherRows(a, idx.to_vec()), g)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshaped(shape)?;
        let g = self.needs(a);
        self.push("reshape", v, Op::Reshape(a), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (n, c) = two_d("slice_cols", self.shape(a))?;
        if start + len > c {
            return shape_err("slice_cols", self.shape(a), &[start, len]);
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&src[r * c + start..r * c + start + len]);
        }
        let g = self.needs(a);
        self.push("slice_cols", Tensor::new(&[n, len], out)?, Op::SliceCols(a, start), g)
    }

    /// Max (or min) over the middle axis of an `[outer, len, inner]` view.
    /// Ties go to the lowest index along the reduced axis.
    fn extreme(
        &mut self,
        name: &'static str,
        a: Var,
        (outer, len, inner): (usize, usize, usize),
        out_shape: &[usize],
        is_max: bool,
    ) -> Result<Var> {
        if len == 0 || outer * len * inner != self.value(a).numel() {
            return shape_err(name, self.shape(a), &[outer, len, inner]);
        }
        let src = self.value(a).data();
        let mut vals = Vec::with_capacity(outer * inner);
        let mut picks = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * len * inner + i;
                for l in 1..len {
                    let at = (o * len + l) * inner + i;
                    let better = if is_max { src[at] > src[best] } else { src[at] < src[best] };
                    if better {
                        best = at;
                    }
                }
                vals.push(src[best]);
                picks.push(best);
            }
        }
        self.mix_indices(&picks);
        let g = self.needs(a);
        self.push(name, Tensor::new(out_shape, vals)?, Op::Extreme(a, picks), g)
    }

    /// Max over an axis of a 2-D tensor; axis 0 gives `[1, c]`, axis 1 gives `[n, 1]`.
    /// Gradient flows only to the arg-max entry.
    pub fn reduce_max(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (n, c) = two_d("reduce_max", self.shape(a))?;
        match axis {
            0 => self.extreme("reduce_max", a, (1, n, c), &[1, c], true),
            1 => self.extreme("reduce_max", a, (n, c, 1), &[n, 1], true),
            _ => param_err(format!("reduce_max: axis {axis} on a 2-D tensor")),
        }
    }

    pub fn reduce_min(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (n, c) = two_d("reduce_min", self.shape(a))?;
        match axis {
            0 => self.extreme("reduce_min", a, (1, n, c), &[1, c], false),
            1 => self.extreme("reduce_min", a, (n, c, 1), &[n, 1], false),
            _ => param_err(format!("reduce_min: axis {axis} on a 2-D tensor")),
        }
    }

    /// Max over consecutive row groups: `[n * group, c] -> [n, c]`.
    pub fn max_pool_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        let (rows, c) = two_d("max_pool_groups", self.shape(a))?;
        if group == 0 || rows % group != 0 {
            return shape_err("max_pool_groups", self.shape(a), &[group]);
        }
        self.extreme("max_pool_groups", a, (rows / group, group, c), &[rows / group, c], true)
    }

    /// Mean over an axis of a 2-D tensor.
    pub fn reduce_mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (n, c) = two_d("reduce_mean", self.shape(a))?;
        let (outer, len, inner, shape) = match axis {
            0 => (1, n, c, vec![1, c]),
            1 => (n, c, 1, vec![n, 1]),
            _ => return param_err(format!("reduce_mean: axis {axis} on a 2-D tensor")),
        };
        self.mean_view(a, outer, len, inner, &shape)
    }

    /// Mean of all entries, as a one-element tensor.
    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        self.mean_view(a, 1, n, 1, &[1])
    }

    fn mean_view(&mut self, a: Var, outer: usize, len: usize, inner: usize, shape: &[usize]) -> Result<Var> {
        if len == 0 {
            return shape_err("mean", self.shape(a), shape);
        }
        let src = self.value(a).data();
        let scale = T::from_f64(1.0 / len as f64);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut s = T::ZERO;
                for l in 0..len {
                    s += src[(o * len + l) * inner + i];
                }
                out.push(s * scale);
            }
        }
        let g = self.needs(a);
        self.push("mean", Tensor::new(shape, out)?, Op::Mean { src: a, outer, len, inner }, g)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        let g = self.needs(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), g)
    }

    /// Pairwise squared distances between rows: `[n, d] x [m, d] -> [n, m]`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, d) = two_d("sq_dist", self.shape(a))?;
        let (m, d2) = two_d("sq_dist", self.shape(b))?;
        if d != d2 {
            return shape_err("sq_dist", self.shape(a), self.shape(b));
        }
        let (x, y) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            for j in 0..m {
                let yj = &y[j * d..(j + 1) * d];
                let mut s = T::ZERO;
                for t in 0..d {
                    let diff = xi[t] - yj[t];
                    s += diff * diff;
                }
                out.push(s);
            }
        }
        let g = self.needs(a) || self.needs(b);
        self.push("sq_dist", Tensor::new(&[n, m], out)?, Op::SqDist(a, b), g)
    }

    /// Symmetric squared Chamfer distance between two point sets `[n, 3]`, `[m, 3]`.
    pub fn chamfer_l2(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sq_dist(a, b)?;
        let ab = self.reduce_min(d, 1)?;
        let ba = self.reduce_min(d, 0)?;
        let ab = self.mean_all(ab)?;
        let ba = self.mean_all(ba)?;
        self.add(ab, ba)
    }

    /// Gradients of the one-element node `loss` with respect to every node.
    ///
    /// Only leaves keep their gradient in the result; intermediate gradients are
    /// released as soon as they have been propagated.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return shape_err("backward", self.shape(loss), &[1]);
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::ONE));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut [T]> {
        if !self.needs(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn propagate(&self, op: &Op, out: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
                if let Some(d) = self.acc(grads, *b) {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x -= y);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &y), &w) in d.iter_mut().zip(gd).zip(bv) {
                        *x += y * w;
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for ((x, &y), &w) in d.iter_mut().zip(gd).zip(av) {
                        *x += y * w;
                    }
                }
            }
            Op::Scale(a, s) => {
                let k = T::from_f64(*s);
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y * k);
                }
            }
            Op::AddRow(a, bias) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
                let c = self.value(*bias).numel();
                if let Some(d) = self.acc(grads, *bias) {
                    for row in gd.chunks(c) {
                        d.iter_mut().zip(row).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (n, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let m = self.shape(*b)[1];
                if self.needs(*a) {
                    let bv = self.value(*b).data();
                    let d = self.acc(grads, *a).expect("needs grad");
                    gemm(n, m, k, gd, false, bv, true, d, true);
                }
                if self.needs(*b) {
                    let av = self.value(*a).data();
                    let d = self.acc(grads, *b).expect("needs grad");
                    gemm(k, n, m, av, true, gd, false, d, true);
                }
            }
            Op::Transpose(a) => {
                let (n, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..n {
                        for j in 0..c {
                            d[i * c + j] += gd[j * n + i];
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &y), &inp) in d.iter_mut().zip(gd).zip(av) {
                        if inp > T::ZERO {
                            *x += y;
                        }
                    }
                }
            }
            Op::LeakyRelu(a, slope) => {
                let s = T::from_f64(*slope);
                let av = self.value(*a).data();
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &y), &inp) in d.iter_mut().zip(gd).zip(av) {
                        *x += if inp > T::ZERO { y } else { y * s };
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let c = out.shape()[1];
                let yv = out.data();
                if let Some(d) = self.acc(grads, *a) {
                    for ((drow, grow), yrow) in d.chunks_mut(c).zip(gd.chunks(c)).zip(yv.chunks(c)) {
                        let dot: T = grow.iter().zip(yrow).map(|(&p, &q)| p * q).sum();
                        for ((x, &gg), &y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *x += y * (gg - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if let Some(d) = self.acc(grads, p) {
                        for (r, drow) in d.chunks_mut(w).enumerate() {
                            let src = &gd[r * total + offset..r * total + offset + w];
                            drow.iter_mut().zip(src).for_each(|(x, &y)| *x += y);
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(d) = self.acc(grads, p) {
                        d.iter_mut().zip(&gd[offset..offset + len]).for_each(|(x, &y)| *x += y);
                    }
                    offset += len;
                }
            }
            Op::GatherRows(a, idx) => {
                let c = self.shape(*a)[1];
                if let Some(d) = self.acc(grads, *a) {
                    for (r, &i) in idx.iter().enumerate() {
                        let src = &gd[r * c..(r + 1) * c];
                        d[i * c..(i + 1) * c].iter_mut().zip(src).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y);
                }
            }
            Op::SliceCols(a, start) => {
                let c = self.shape(*a)[1];
                let len = out.shape()[1];
                if let Some(d) = self.acc(grads, *a) {
                    for (r, grow) in gd.chunks(len).enumerate() {
                        d[r * c + start..r * c + start + len].iter_mut().zip(grow).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Extreme(a, picks) => {
                if let Some(d) = self.acc(grads, *a) {
                    for (&p, &y) in picks.iter().zip(gd) {
                        d[p] += y;
                    }
                }
            }
            Op::Mean { src, outer, len, inner } => {
                let scale = T::from_f64(1.0 / *len as f64);
                if let Some(d) = self.acc(grads, *src) {
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let y = gd[o * inner + i] * scale;
                            for l in 0..*len {
                                d[(o * len + l) * inner + i] += y;
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let y = gd[0];
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().for_each(|x| *x += y);
                }
            }
            Op::SqDist(a, b) => {
                let (n, dim) = (self.shape(*a)[0], self.shape(*a)[1]);
                let m = self.shape(*b)[0];
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                let two = T::from_f64(2.0);
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..n {
                        for j in 0..m {
                            let w = gd[i * m + j];
                            if w == T::ZERO {
                                continue;
                            }
                            for t in 0..dim {
                                d[i * dim + t] += two * w * (x[i * dim + t] - y[j * dim + t]);
                            }
                        }
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for i in 0..n {
                        for j in 0..m {
                            let w = gd[i * m + j];
                            if w == T::ZERO {
                                continue;
                            }
                            for t in 0..dim {
                                d[j * dim + t] -= two * w * (x[i * dim + t] - y[j * dim + t]);
                            }
                        }
                    }
                }
            }
        }
    }
}
