//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends a node holding its forward value; `backward` sweeps the
//! nodes in reverse creation order, which is a valid reverse topological order
//! because a node can only reference earlier nodes. A fresh tape is built for
//! each forward pass.

use super::{gemm, NumError, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    Maximum(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Concat(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Stack(Vec<Var>),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    SquaredL2(Var),
    L1(Var),
    LogSumExp(Var),
    Transpose(Var),
    Reshape(Var),
    SegmentMax { input: Var, winners: Vec<usize> },
    NormalizeRows { input: Var, norms: Vec<f64>, floored: Vec<bool> },
    LayerNorm { input: Var, inv_std: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Maximum(..) => "maximum",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add_row",
            Op::Concat(..) => "concat",
            Op::GatherRows(..) => "gather_rows",
            Op::Stack(..) => "stack",
            Op::Relu(..) => "relu",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::SquaredL2(..) => "squared_l2",
            Op::L1(..) => "l1",
            Op::LogSumExp(..) => "logsumexp",
            Op::Transpose(..) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::SegmentMax { .. } => "segment_max",
            Op::NormalizeRows { .. } => "normalize_rows",
            Op::LayerNorm { .. } => "layer_norm",
        }
    }
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    tracked: bool,
}

/// Floor applied to row norms in [`Tape::normalize_rows`].
pub const NORM_FLOOR: f64 = 1e-12;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn split_last(shape: &[usize]) -> (usize, usize) {
    match shape.split_last() {
        Some((last, lead)) => (lead.iter().product(), *last),
        None => (1, 1),
    }
}

fn dim_err(op: &str, detail: String) -> NumError {
    NumError::Dimension(format!("{op}: {detail}"))
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

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, tracked: bool) -> Result<Var, NumError> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        #[cfg(debug_assertions)]
        if let Some(pos) = value.iter().position(|v| !v.is_finite()) {
            return Err(NumError::NonFinite(format!("{} output entry {pos}", op.name())));
        }
        self.nodes.push(Node { shape, value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Records a tensor that does not receive gradients.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a gradient-receiving leaf.
    pub fn variable(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            tracked: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds every parameter of `store` as a leaf; the result is indexed by [`super::ParamId`].
    pub fn bind(&mut self, store: &ParamStore) -> Vec<Var> {
        store.iter().map(|(_, t)| self.variable(t)).collect()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::from_parts(n.shape.clone(), n.value.clone())
    }

    /// Gradient of the last `backward` target with respect to `v`, if one reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(), NumError> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, NumError> {
        self.same_shape(op.name(), a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        let tracked = self.tracked(&[a, b]);
        self.push(self.shape(a).to_vec(), value, op, tracked)
    }

    fn unary(&mut self, a: Var, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Result<Var, NumError> {
        let tracked = self.tracked(&[a]);
        self.push(shape, value, op, tracked)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out);
        let tracked = self.tracked(&[a, b]);
        self.push(vec![m, n], out, Op::MatMul(a, b), tracked)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Element-wise maximum; on ties the gradient flows to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.binary(a, b, Op::Maximum(a, b), f64::max)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumError> {
        let value = self.value(a).iter().map(|x| x * s).collect();
        self.unary(a, self.shape(a).to_vec(), value, Op::Scale(a, s))
    }

    /// Adds a vector of length `cols` to every row (bias).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumError> {
        let (outer, c) = split_last(self.shape(a));
        if self.shape(row) != [c] {
            return Err(dim_err("add_row", format!("{:?} + {:?}", self.shape(a), self.shape(row))));
        }
        let r = self.value(row);
        let mut value = self.value(a).to_vec();
        for i in 0..outer {
            for (v, b) in value[i * c..(i + 1) * c].iter_mut().zip(r) {
                *v += b;
            }
        }
        let tracked = self.tracked(&[a, row]);
        self.push(self.shape(a).to_vec(), value, Op::AddRow(a, row), tracked)
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = *parts.first().ok_or_else(|| dim_err("concat", "no inputs".into()))?;
        let lead = &self.shape(first)[..self.shape(first).len().saturating_sub(1)];
        let (outer, _) = split_last(self.shape(first));
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || &s[..s.len() - 1] != lead {
                return Err(dim_err("concat", format!("{:?} vs {:?}", self.shape(first), s)));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut value = Vec::with_capacity(outer * total);
        for i in 0..outer {
            for (&p, &w) in parts.iter().zip(&widths) {
                value.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let tracked = self.tracked(parts);
        self.push(shape, value, Op::Concat(parts.to_vec()), tracked)
    }

    /// Selects rows (first-axis slices) by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.is_empty() {
            return Err(dim_err("gather_rows", "scalar input".into()));
        }
        let rows = s[0];
        let width: usize = s[1..].iter().product();
        let mut value = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(NumError::Index(format!("gather_rows index {i} >= {rows}")));
            }
            value.extend_from_slice(&self.value(a)[i * width..(i + 1) * width]);
        }
        let mut shape = s.to_vec();
        shape[0] = indices.len();
        self.unary(a, shape, value, Op::GatherRows(a, indices.to_vec()))
    }

    /// Stacks equally shaped inputs along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = *parts.first().ok_or_else(|| dim_err("stack", "no inputs".into()))?;
        let inner = self.shape(first).to_vec();
        let mut value = Vec::with_capacity(parts.len() * self.value(first).len());
        for &p in parts {
            if self.shape(p) != inner.as_slice() {
                return Err(dim_err("stack", format!("{:?} vs {:?}", inner, self.shape(p))));
            }
            value.extend_from_slice(self.value(p));
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        let tracked = self.tracked(parts);
        self.push(shape, value, Op::Stack(parts.to_vec()), tracked)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumError> {
        let value = self.value(a).iter().map(|x| x.max(0.0)).collect();
        self.unary(a, self.shape(a).to_vec(), value, Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.value(a).iter().sum();
        self.unary(a, vec![], vec![v], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumError> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(dim_err("mean", "empty input".into()));
        }
        let v = self.value(a).iter().sum::<f64>() / n as f64;
        self.unary(a, vec![], vec![v], Op::Mean(a))
    }

    /// Sum over the last axis.
    pub fn sum_last(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.is_empty() {
            return Err(dim_err("sum_last", "scalar input".into()));
        }
        let (outer, c) = split_last(s);
        let shape = s[..s.len() - 1].to_vec();
        let value = (0..outer).map(|i| self.value(a)[i * c..(i + 1) * c].iter().sum()).collect();
        self.unary(a, shape, value, Op::SumLast(a))
    }

    /// Sum of squares of all entries.
    pub fn squared_l2(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.value(a).iter().map(|x| x * x).sum();
        self.unary(a, vec![], vec![v], Op::SquaredL2(a))
    }

    /// Sum of absolute values of all entries.
    pub fn l1(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.value(a).iter().map(|x| x.abs()).sum();
        self.unary(a, vec![], vec![v], Op::L1(a))
    }

    /// Max-shifted log-sum-exp over the last axis.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.is_empty() || s[s.len() - 1] == 0 {
            return Err(dim_err("logsumexp", format!("bad shape {s:?}")));
        }
        let (outer, c) = split_last(s);
        let shape = s[..s.len() - 1].to_vec();
        let x = self.value(a);
        let value = (0..outer)
            .map(|i| {
                let row = &x[i * c..(i + 1) * c];
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .collect();
        self.unary(a, shape, value, Op::LogSumExp(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(dim_err("transpose", format!("rank {} input", s.len())));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.value(a);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = x[i * c + j];
            }
        }
        self.unary(a, vec![c, r], value, Op::Transpose(a))
    }

    /// Reinterprets the row-major buffer with a new shape of equal size.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumError> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(dim_err("reshape", format!("{:?} -> {:?}", self.shape(a), shape)));
        }
        let value = self.value(a).to_vec();
        self.unary(a, shape.to_vec(), value, Op::Reshape(a))
    }

    /// Column-wise max over consecutive row segments `offsets[g]..offsets[g+1]`.
    /// Ties go to the earliest row.
    pub fn segment_max(&mut self, a: Var, offsets: &[usize]) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.len() != 2 || offsets.first() != Some(&0) || offsets.last() != Some(&s[0]) {
            return Err(dim_err("segment_max", format!("offsets do not cover {s:?}")));
        }
        let c = s[1];
        let groups = offsets.len() - 1;
        let x = self.value(a);
        let mut value = vec![0.0; groups * c];
        let mut winners = vec![0usize; groups * c];
        for g in 0..groups {
            let (lo, hi) = (offsets[g], offsets[g + 1]);
            if hi <= lo {
                return Err(dim_err("segment_max", format!("segment {g} is empty")));
            }
            for j in 0..c {
                let mut best = lo;
                for r in lo + 1..hi {
                    if x[r * c + j] > x[best * c + j] {
                        best = r;
                    }
                }
                value[g * c + j] = x[best * c + j];
                winners[g * c + j] = best;
            }
        }
        self.unary(a, vec![groups, c], value, Op::SegmentMax { input: a, winners })
    }

    /// Divides each row by `max(‖row‖₂, NORM_FLOOR)`.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(dim_err("normalize_rows", format!("rank {} input", s.len())));
        }
        let (r, c) = (s[0], s[1]);
        let x = self.value(a);
        let mut norms = Vec::with_capacity(r);
        let mut floored = Vec::with_capacity(r);
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let d = n.max(NORM_FLOOR);
            norms.push(d);
            floored.push(n < NORM_FLOOR);
            for (o, v) in value[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = v / d;
            }
        }
        self.unary(a, vec![r, c], value, Op::NormalizeRows { input: a, norms, floored })
    }

    /// Per-row standardization over the last axis (no affine part).
    pub fn layer_norm(&mut self, a: Var) -> Result<Var, NumError> {
        let s = self.shape(a);
        if s.is_empty() {
            return Err(dim_err("layer_norm", "scalar input".into()));
        }
        let (outer, c) = split_last(s);
        let x = self.value(a);
        let mut value = vec![0.0; outer * c];
        let mut inv_std = Vec::with_capacity(outer);
        for i in 0..outer {
            let row = &x[i * c..(i + 1) * c];
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (o, v) in value[i * c..(i + 1) * c].iter_mut().zip(row) {
                *o = (v - mu) * is;
            }
        }
        self.unary(a, s.to_vec(), value, Op::LayerNorm { input: a, inv_std })
    }

    /// Back-propagates from the scalar `target`, replacing any previous gradients.
    pub fn backward(&mut self, target: Var) -> Result<(), NumError> {
        if self.value(target).len() != 1 {
            return Err(dim_err("backward", format!("target shape {:?} is not scalar", self.shape(target))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[target.0] = Some(vec![1.0]);
        for idx in (0..=target.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].tracked {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        // Adds `f(k)` into the gradient buffer of `v` for every coordinate k.
        let mut acc = |v: Var, f: &dyn Fn(usize) -> f64| {
            let n = &nodes[v.0];
            if !n.tracked {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]);
            for (k, b) in buf.iter_mut().enumerate() {
                *b += f(k);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &|k| g[k] * vb[k]);
                acc(*b, &|k| g[k] * va[k]);
            }
            Op::Maximum(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                acc(*a, &|k| if va[k] >= vb[k] { g[k] } else { 0.0 });
                acc(*b, &|k| if va[k] >= vb[k] { 0.0 } else { g[k] });
            }
            Op::Scale(a, s) => acc(*a, &|k| g[k] * s),
            Op::AddRow(a, row) => {
                acc(*a, &|k| g[k]);
                let c = nodes[row.0].value.len();
                let outer = g.len() / c.max(1);
                let mut col = vec![0.0; c];
                for i in 0..outer {
                    for j in 0..c {
                        col[j] += g[i * c + j];
                    }
                }
                acc(*row, &|k| col[k]);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (&nodes[a.0].shape, &nodes[b.0].shape);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if nodes[a.0].tracked {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, false, &nodes[b.0].value, true, &mut da);
                    acc(*a, &|q| da[q]);
                }
                if nodes[b.0].tracked {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, &nodes[a.0].value, true, g, false, &mut db);
                    acc(*b, &|q| db[q]);
                }
            }
            Op::Concat(parts) => {
                let (outer, total) = split_last(&node.shape);
                let mut offset = 0;
                for p in parts {
                    let w = *nodes[p.0].shape.last().unwrap();
                    let off = offset;
                    acc(*p, &|q| {
                        let (i, j) = (q / w, q % w);
                        g[i * total + off + j]
                    });
                    offset += w;
                }
                debug_assert_eq!(offset * outer, g.len());
            }
            Op::GatherRows(a, indices) => {
                let src = &nodes[a.0];
                if src.tracked {
                    let width = src.value.len() / src.shape[0].max(1);
                    let mut da = vec![0.0; src.value.len()];
                    for (r, &i) in indices.iter().enumerate() {
                        for j in 0..width {
                            da[i * width + j] += g[r * width + j];
                        }
                    }
                    acc(*a, &|q| da[q]);
                }
            }
            Op::Stack(parts) => {
                let w = nodes[parts[0].0].value.len();
                for (s, p) in parts.iter().enumerate() {
                    acc(*p, &|q| g[s * w + q]);
                }
            }
            Op::Relu(a) => {
                let va = &nodes[a.0].value;
                acc(*a, &|k| if va[k] > 0.0 { g[k] } else { 0.0 });
            }
            Op::Sum(a) => acc(*a, &|_| g[0]),
            Op::Mean(a) => {
                let n = nodes[a.0].value.len() as f64;
                acc(*a, &|_| g[0] / n);
            }
            Op::SumLast(a) => {
                let c = *nodes[a.0].shape.last().unwrap();
                acc(*a, &|k| g[k / c]);
            }
            Op::SquaredL2(a) => {
                let va = &nodes[a.0].value;
                acc(*a, &|k| 2.0 * va[k] * g[0]);
            }
            Op::L1(a) => {
                let va = &nodes[a.0].value;
                acc(*a, &|k| {
                    if va[k] > 0.0 {
                        g[0]
                    } else if va[k] < 0.0 {
                        -g[0]
                    } else {
                        0.0
                    }
                });
            }
            Op::LogSumExp(a) => {
                let va = &nodes[a.0].value;
                let c = *nodes[a.0].shape.last().unwrap();
                let lse = &node.value;
                acc(*a, &|k| g[k / c] * (va[k] - lse[k / c]).exp());
            }
            Op::Transpose(a) => {
                let (r, c) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                acc(*a, &|k| {
                    let (i, j) = (k / c, k % c);
                    g[j * r + i]
                });
            }
            Op::Reshape(a) => acc(*a, &|k| g[k]),
            Op::SegmentMax { input, winners } => {
                let src = &nodes[input.0];
                if src.tracked {
                    let c = src.shape[1];
                    let mut da = vec![0.0; src.value.len()];
                    for (q, &w) in winners.iter().enumerate() {
                        da[w * c + q % c] += g[q];
                    }
                    acc(*input, &|k| da[k]);
                }
            }
            Op::NormalizeRows { input, norms, floored } => {
                let c = node.shape[1];
                let y = &node.value;
                let mut dots = vec![0.0; norms.len()];
                for (i, d) in dots.iter_mut().enumerate() {
                    *d = (0..c).map(|j| y[i * c + j] * g[i * c + j]).sum();
                }
                acc(*input, &|k| {
                    let i = k / c;
                    if floored[i] {
                        g[k] / norms[i]
                    } else {
                        (g[k] - y[k] * dots[i]) / norms[i]
                    }
                });
            }
            Op::LayerNorm { input, inv_std } => {
                let c = *node.shape.last().unwrap();
                let y = &node.value;
                let outer = inv_std.len();
                let mut mean_g = vec![0.0; outer];
                let mut mean_gy = vec![0.0; outer];
                for i in 0..outer {
                    for j in 0..c {
                        mean_g[i] += g[i * c + j];
                        mean_gy[i] += g[i * c + j] * y[i * c + j];
                    }
                    mean_g[i] /= c as f64;
                    mean_gy[i] /= c as f64;
                }
                acc(*input, &|k| {
                    let i = k / c;
                    inv_std[i] * (g[k] - mean_g[i] - y[k] * mean_gy[i])
                });
            }
        }
    }
}
