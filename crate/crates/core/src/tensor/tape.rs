use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Groups, ParamStore, Tensor};
use crate::math;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Concat { parts: Vec<Var>, axis: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    MaxOverGroups { x: Var, argmax: Vec<usize> },
    MeanOverGroups { x: Var, groups: Groups },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mse(Var, Var),
    L1(Var, Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    NormalizeRows(Var),
    SoftmaxPool { x: Var, scores: Var, weights: Vec<f64> },
    WeightedSum { x: Var, weights: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records primitive operations in evaluation order so that
/// [`Tape::backward`] can replay their vector-Jacobian products in reverse.
///
/// Every node is appended after its inputs, so the node list is already a
/// topological order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

/// Gradient of a scalar loss with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

impl Tape {
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
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that gradients flow into.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Records parameter `name` from `store` as a differentiable leaf. The
    /// same parameter bound twice yields two leaves whose gradients are summed
    /// by [`Tape::param_grads`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))?
            .clone();
        let v = self.variable(value);
        self.params.push((String::from(name), v));
        Ok(v)
    }

    /// `x W (+ b)` with `x: n x i`, `W: i x o`, `b: 1 x o`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, i, o) = (xv.rows(), xv.cols(), wv.cols());
        if wv.rows() != i {
            return Err(Error::shape(format!("linear: input width {i} vs weight rows {}", wv.rows())));
        }
        let mut out = vec![0.0; n * o];
        gemm(n, i, o, xv.data(), false, wv.data(), false, 0.0, &mut out);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != o {
                return Err(Error::shape(format!("linear: bias width {} vs {o}", bv.len())));
            }
            for row in out.chunks_mut(o.max(1)) {
                for (y, bias) in row.iter_mut().zip(bv.data()) {
                    *y += bias;
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.map_or(false, |b| self.needs(b));
        Ok(self.push(Tensor::from_parts(n, o, out), Op::Linear { x, w, b }, needs))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v.max(0.0)).collect();
        let out = Tensor::from_parts(xv.rows(), xv.cols(), data);
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    /// Concatenates along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::shape("concat needs at least one input and axis 0 or 1"));
        }
        let first = self.value(parts[0]);
        let out = if axis == 1 {
            let rows = first.rows();
            if parts.iter().any(|p| self.value(*p).rows() != rows) {
                return Err(Error::shape("concat: row counts differ"));
            }
            let width: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
            let mut data = Vec::with_capacity(rows * width);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(self.value(*p).row_slice(r));
                }
            }
            Tensor::from_parts(rows, width, data)
        } else {
            let cols = first.cols();
            if parts.iter().any(|p| self.value(*p).cols() != cols) {
                return Err(Error::shape("concat: column counts differ"));
            }
            let mut data = Vec::new();
            for p in parts {
                data.extend_from_slice(self.value(*p).data());
            }
            let rows = data.len() / cols.max(1);
            Tensor::from_parts(rows, cols, data)
        };
        let needs = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }, needs))
    }

    /// Row `r` of the output is row `idx[r]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, c) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= n {
                return Err(Error::Index { index: i, len: n });
            }
            data.extend_from_slice(xv.row_slice(i));
        }
        let out = Tensor::from_parts(idx.len(), c, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::GatherRows { x, idx: idx.to_vec() }, needs))
    }

    fn check_groups(&self, x: Var, groups: &Groups) -> Result<()> {
        let n = self.value(x).rows();
        if let Some(m) = groups.max_member() {
            if m >= n {
                return Err(Error::Index { index: m, len: n });
            }
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::shape("aggregation group is empty"));
        }
        Ok(())
    }

    /// Row `g` of the output is the channel-wise maximum of the rows of `x`
    /// listed in group `g`.
    pub fn max_over_groups(&mut self, x: Var, groups: &Groups) -> Result<Var> {
        self.check_groups(x, groups)?;
        let xv = self.value(x);
        let c = xv.cols();
        let mut data = Vec::with_capacity(groups.len() * c);
        let mut argmax = Vec::with_capacity(groups.len() * c);
        for members in groups.iter() {
            let base = data.len();
            data.extend_from_slice(xv.row_slice(members[0]));
            argmax.extend(core::iter::repeat(members[0]).take(c));
            for &m in &members[1..] {
                for (ch, &v) in xv.row_slice(m).iter().enumerate() {
                    if v > data[base + ch] || v.is_nan() {
                        data[base + ch] = v;
                        argmax[base + ch] = m;
                    }
                }
            }
        }
        let out = Tensor::from_parts(groups.len(), c, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::MaxOverGroups { x, argmax }, needs))
    }

    /// Row `g` of the output is the mean of the rows of `x` in group `g`.
    pub fn mean_over_groups(&mut self, x: Var, groups: &Groups) -> Result<Var> {
        self.check_groups(x, groups)?;
        let xv = self.value(x);
        let c = xv.cols();
        let mut data = vec![0.0; groups.len() * c];
        for (g, members) in groups.iter().enumerate() {
            let out = &mut data[g * c..(g + 1) * c];
            for &m in members {
                for (o, v) in out.iter_mut().zip(xv.row_slice(m)) {
                    *o += v;
                }
            }
            let inv = 1.0 / members.len() as f64;
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let out = Tensor::from_parts(groups.len(), c, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::MeanOverGroups { x, groups: groups.clone() }, needs))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(av, bv, what)?;
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok(Tensor::from_parts(av.rows(), av.cols(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| v * factor).collect();
        let out = Tensor::from_parts(xv.rows(), xv.cols(), data);
        let needs = self.needs(x);
        self.push(out, Op::Scale(x, factor), needs)
    }

    /// Mean squared difference, a scalar.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_with(a, b, "mse", |x, y| (x - y) * (x - y))?;
        let v = d.data().iter().sum::<f64>() / d.len().max(1) as f64;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(v), Op::Mse(a, b), needs))
    }

    /// Mean absolute difference, a scalar.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.zip_with(a, b, "l1", |x, y| libm::fabs(x - y))?;
        let v = d.data().iter().sum::<f64>() / d.len().max(1) as f64;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::scalar(v), Op::L1(a, b), needs))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.rows() {
            return Err(Error::shape("slice_rows out of range"));
        }
        let c = xv.cols();
        let out = Tensor::from_parts(len, c, xv.data()[start * c..(start + len) * c].to_vec());
        let needs = self.needs(x);
        Ok(self.push(out, Op::SliceRows { x, start }, needs))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::shape("slice_cols out of range"));
        }
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let out = Tensor::from_parts(xv.rows(), len, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::SliceCols { x, start }, needs))
    }

    /// Scales every row to unit Euclidean length.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let mut data = Vec::with_capacity(xv.len());
        for r in 0..xv.rows() {
            let row = xv.row_slice(r);
            let n = math::sqrt(row.iter().map(|v| v * v).sum());
            if !(n > 0.0) {
                return Err(Error::DegenerateAxes);
            }
            data.extend(row.iter().map(|v| v / n));
        }
        let out = Tensor::from_parts(xv.rows(), xv.cols(), data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::NormalizeRows(x), needs))
    }

    /// `Σ_i softmax(scores)_i x_i` over the rows of `x`; `scores` is `n x 1`.
    pub fn softmax_pool(&mut self, x: Var, scores: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(scores));
        if sv.len() != xv.rows() || xv.rows() == 0 {
            return Err(Error::shape("softmax_pool: one score per row required"));
        }
        let max = sv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = sv.data().iter().map(|s| math::exp(s - max)).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let c = xv.cols();
        let mut out = vec![0.0; c];
        for (r, w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(xv.row_slice(r)) {
                *o += w * v;
            }
        }
        let needs = self.needs(x) || self.needs(scores);
        Ok(self.push(Tensor::row(out), Op::SoftmaxPool { x, scores, weights }, needs))
    }

    /// `Σ x ⊙ weights`, a scalar; `weights` is a constant.
    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        check_same(self.value(x), &weights, "weighted_sum")?;
        let v = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        let needs = self.needs(x);
        Ok(self.push(Tensor::scalar(v), Op::WeightedSum { x, weights }, needs))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss { len: lv.len() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| (n.value.rows(), n.value.cols())).collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, i, o) = (xv.rows(), xv.cols(), wv.cols());
                if self.needs(*x) {
                    let mut dx = vec![0.0; n * i];
                    gemm(n, o, i, g.data(), false, wv.data(), true, 0.0, &mut dx);
                    self.accumulate(grads, *x, Tensor::from_parts(n, i, dx));
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; i * o];
                    gemm(i, n, o, xv.data(), true, g.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *w, Tensor::from_parts(i, o, dw));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = vec![0.0; o];
                        for r in 0..n {
                            for (d, v) in db.iter_mut().zip(g.row_slice(r)) {
                                *d += v;
                            }
                        }
                        let bv = self.value(*b);
                        self.accumulate(grads, *b, Tensor::from_parts(bv.rows(), bv.cols(), db));
                    }
                }
            }
            Op::Relu(x) => {
                let data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(d, y)| if *y > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::from_parts(out.rows(), out.cols(), data));
            }
            Op::Concat { parts, axis } => {
                if *axis == 1 {
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let w = pv.cols();
                        if self.needs(*p) {
                            let mut data = Vec::with_capacity(pv.len());
                            for r in 0..out.rows() {
                                data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                            }
                            self.accumulate(grads, *p, Tensor::from_parts(pv.rows(), w, data));
                        }
                        offset += w;
                    }
                } else {
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let len = pv.len();
                        if self.needs(*p) {
                            let data = g.data()[offset..offset + len].to_vec();
                            self.accumulate(grads, *p, Tensor::from_parts(pv.rows(), pv.cols(), data));
                        }
                        offset += len;
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (r, &i) in idx.iter().enumerate() {
                    for (d, v) in dx[i * c..(i + 1) * c].iter_mut().zip(g.row_slice(r)) {
                        *d += v;
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), c, dx));
            }
            Op::MaxOverGroups { x, argmax } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (pos, (&m, &d)) in argmax.iter().zip(g.data()).enumerate() {
                    dx[m * c + pos % c] += d;
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), c, dx));
            }
            Op::MeanOverGroups { x, groups } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                for (gi, members) in groups.iter().enumerate() {
                    let inv = 1.0 / members.len() as f64;
                    let grow = g.row_slice(gi);
                    for &m in members {
                        for (d, v) in dx[m * c..(m + 1) * c].iter_mut().zip(grow) {
                            *d += v * inv;
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), c, dx));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let neg = g.data().iter().map(|v| -v).collect();
                self.accumulate(grads, *b, Tensor::from_parts(g.rows(), g.cols(), neg));
            }
            Op::Scale(x, f) => {
                let data = g.data().iter().map(|v| v * f).collect();
                self.accumulate(grads, *x, Tensor::from_parts(g.rows(), g.cols(), data));
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / av.len().max(1) as f64;
                let da: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| k * (x - y)).collect();
                let db = da.iter().map(|v| -v).collect();
                self.accumulate(grads, *a, Tensor::from_parts(av.rows(), av.cols(), da));
                self.accumulate(grads, *b, Tensor::from_parts(av.rows(), av.cols(), db));
            }
            Op::L1(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = g.item() / av.len().max(1) as f64;
                let sign = |d: f64| {
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                let da: Vec<f64> = av.data().iter().zip(bv.data()).map(|(x, y)| k * sign(x - y)).collect();
                let db = da.iter().map(|v| -v).collect();
                self.accumulate(grads, *a, Tensor::from_parts(av.rows(), av.cols(), da));
                self.accumulate(grads, *b, Tensor::from_parts(av.rows(), av.cols(), db));
            }
            Op::SliceRows { x, start } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = vec![0.0; xv.len()];
                dx[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), c, dx));
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (c, w) = (xv.cols(), g.cols());
                let mut dx = vec![0.0; xv.len()];
                for r in 0..xv.rows() {
                    dx[r * c + start..r * c + start + w].copy_from_slice(g.row_slice(r));
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), c, dx));
            }
            Op::NormalizeRows(x) => {
                let xv = self.value(*x);
                let mut dx = Vec::with_capacity(xv.len());
                for r in 0..xv.rows() {
                    let row = xv.row_slice(r);
                    let y = out.row_slice(r);
                    let gr = g.row_slice(r);
                    let n = math::sqrt(row.iter().map(|v| v * v).sum());
                    let yg: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(y.iter().zip(gr).map(|(yi, gi)| (gi - yi * yg) / n));
                }
                self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), xv.cols(), dx));
            }
            Op::SoftmaxPool { x, scores, weights } => {
                let xv = self.value(*x);
                let gr = g.data();
                if self.needs(*x) {
                    let mut dx = Vec::with_capacity(xv.len());
                    for w in weights {
                        dx.extend(gr.iter().map(|v| w * v));
                    }
                    self.accumulate(grads, *x, Tensor::from_parts(xv.rows(), xv.cols(), dx));
                }
                if self.needs(*scores) {
                    let pooled_g: f64 = out.data().iter().zip(gr).map(|(a, b)| a * b).sum();
                    let ds: Vec<f64> = weights
                        .iter()
                        .enumerate()
                        .map(|(r, w)| {
                            let xg: f64 = xv.row_slice(r).iter().zip(gr).map(|(a, b)| a * b).sum();
                            w * (xg - pooled_g)
                        })
                        .collect();
                    let sv = self.value(*scores);
                    self.accumulate(grads, *scores, Tensor::from_parts(sv.rows(), sv.cols(), ds));
                }
            }
            Op::WeightedSum { x, weights } => {
                let k = g.item();
                let data = weights.data().iter().map(|w| w * k).collect();
                self.accumulate(grads, *x, Tensor::from_parts(weights.rows(), weights.cols(), data));
            }
        }
    }

    /// Gradients of bound parameters keyed by name, summed over repeated
    /// bindings.
    pub fn param_grads(&self, grads: &Gradients) -> alloc::collections::BTreeMap<String, Tensor> {
        let mut out: alloc::collections::BTreeMap<String, Tensor> = Default::default();
        for (name, v) in &self.params {
            let g = grads.get(*v);
            match out.get_mut(name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    out.insert(name.clone(), g);
                }
            }
        }
        out
    }
}

impl Tensor {
    /// Wraps data already known to be `rows x cols`.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(rows * cols, data.len());
        Tensor { shape: vec![rows, cols], data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_example() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row(vec![-1.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn max_over_groups_example() {
        let mut t = Tape::new();
        let x = t.constant(m(3, 1, &[1.0, 5.0, 3.0]));
        let groups = Groups::new([[1usize, 2]]);
        let y = t.max_over_groups(x, &groups).unwrap();
        assert_eq!(t.value(y).data(), &[5.0]);
    }

    #[test]
    fn concat_widths() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(4, 3));
        let b = t.constant(Tensor::zeros(4, 5));
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).cols(), 8);
        let d = t.constant(Tensor::zeros(3, 3));
        assert!(matches!(t.concat(&[a, d], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn primitive_errors() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(3, 2));
        assert_eq!(t.gather_rows(x, &[0, 3]).unwrap_err(), Error::Index { index: 3, len: 3 });
        let w = t.constant(Tensor::zeros(3, 2));
        assert!(matches!(t.linear(x, w, None), Err(Error::Shape(_))));
        let y = t.constant(Tensor::zeros(2, 2));
        assert!(matches!(t.add(x, y), Err(Error::Shape(_))));
        assert!(matches!(t.backward(x), Err(Error::NonScalarLoss { len: 6 })));
    }

    #[test]
    fn mse_gradient_is_two_x() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::row(vec![3.0]));
        let zero = t.constant(Tensor::row(vec![0.0]));
        let loss = t.mse(x, zero).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut t = Tape::new();
        let x = t.variable(Tensor::row(vec![1.0, 2.0]));
        let c = t.constant(Tensor::scalar(4.0));
        let _unused = t.relu(x);
        let g = t.backward(c).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shared_parameter_gradients_sum() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![2.0]));
        let mut t = Tape::new();
        let a = t.param(&store, "w").unwrap();
        let b = t.param(&store, "w").unwrap();
        let s = t.add(a, b).unwrap();
        let loss = t.weighted_sum(s, Tensor::row(vec![1.0])).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(t.param_grads(&g)["w"].data(), &[2.0]);
    }
}
