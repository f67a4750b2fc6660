//! Dense `f64` tensors and a define-by-run reverse-mode autodiff record.
//!
//! A [`Graph`] is an append-only list of nodes. Leaves hold input values;
//! every other node is produced by [`Graph::apply`] and stores whatever the
//! backward rule needs. Because inputs are always appended before the nodes
//! that consume them, insertion order is a topological order and
//! [`Graph::backward`] is a single reverse sweep.
//!
//! Shapes are row-major. Matrices are 2-D; the only broadcast is adding a
//! length-`m` (or `1 x m`) bias to every row of an `n x m` matrix.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite entry {} at index {}",
                data[i], i
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::new(vec![1], vec![v])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidTensor("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// `(rows, cols)` of a matrix; vectors are treated as a single row.
    fn dims2(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Some((*r, *c)),
            [c] => Some((1, *c)),
            _ => None,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, c) = self.dims2().expect("row() on a matrix");
        &self.data[i * c..(i + 1) * c]
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds understood by [`Graph::apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// `[n,k] x [k,m] -> [n,m]`.
    MatMul,
    /// Same-shape addition, or `[n,m] + [m]` / `[n,m] + [1,m]` row bias.
    Add,
    /// Same-shape elementwise product.
    Mul,
    Tanh,
    Relu,
    /// Row-wise softmax of `[n,c]` logits followed by cross-entropy.
    /// Produces the scalar `sum_r weights[r] * CE_r` over rows whose label
    /// is `Some`; rows labelled `None` contribute nothing.
    SoftmaxCrossEntropy {
        labels: Vec<Option<usize>>,
        weights: Vec<f64>,
    },
    /// Mean of a matrix over `axis` (0 = rows collapse to `[m]`, 1 = `[n]`).
    Mean { axis: usize },
    /// Sum of all entries, producing `[1]`.
    Sum,
    /// Gathers rows of a `[v,e]` table, producing `[indices.len(), e]`.
    Embedding { indices: Vec<usize> },
    /// Concatenates matrices with equal row counts along the last axis.
    Concat,
    /// Multiplies by a constant.
    Scale(f64),
    /// Contiguous block of rows `[start, start+len)` of a matrix.
    Rows { start: usize, len: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Mean { .. } => "mean",
            Op::Sum => "sum",
            Op::Embedding { .. } => "embedding",
            Op::Concat => "concat",
            Op::Scale(_) => "scale",
            Op::Rows { .. } => "rows",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Option<Op>,
    inputs: Vec<NodeId>,
    value: Tensor,
    /// Softmax probabilities for cross-entropy nodes.
    saved: Option<Vec<f64>>,
}

/// Append-only computation record.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn mismatch(op: &Op, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op: op.name(),
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    }
}

fn arity(op: &Op, inputs: &[&Tensor], want: usize) -> Result<()> {
    if inputs.len() == want || (matches!(op, Op::Concat) && !inputs.is_empty()) {
        Ok(())
    } else {
        Err(Error::InvalidTensor(format!(
            "{} takes {} input(s), got {}",
            op.name(),
            want,
            inputs.len()
        )))
    }
}

fn matrix_dims(op: &Op, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::ShapeMismatch {
            op: op.name(),
            lhs: t.shape.clone(),
            rhs: vec![],
        }),
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `a^T b` for `a: [n,k]`, `b: [n,m]`, accumulated into `out: [k,m]`.
fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let brow = &b[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// `a b^T` for `a: [n,m]`, `b: [k,m]`, accumulated into `out: [n,k]`.
fn matmul_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            out[i * k + p] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// Evaluates one op. Returns the output and any saved values.
fn forward(op: &Op, inputs: &[&Tensor]) -> Result<(Tensor, Option<Vec<f64>>)> {
    let out = match op {
        Op::MatMul => {
            arity(op, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            let (n, k) = matrix_dims(op, a)?;
            let (k2, m) = matrix_dims(op, b).map_err(|_| mismatch(op, a, b))?;
            if k != k2 {
                return Err(mismatch(op, a, b));
            }
            let mut data = vec![0.0; n * m];
            matmul_into(&a.data, &b.data, &mut data, n, k, m);
            Tensor {
                shape: vec![n, m],
                data,
            }
        }
        Op::Add => {
            arity(op, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape == b.shape {
                let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
                Tensor {
                    shape: a.shape.clone(),
                    data,
                }
            } else {
                let (n, m) = matrix_dims(op, a).map_err(|_| mismatch(op, a, b))?;
                let bias_ok = matches!(b.shape.as_slice(), [c] if *c == m)
                    || matches!(b.shape.as_slice(), [1, c] if *c == m);
                if !bias_ok {
                    return Err(mismatch(op, a, b));
                }
                let mut data = a.data.clone();
                for i in 0..n {
                    for (o, bv) in data[i * m..(i + 1) * m].iter_mut().zip(&b.data) {
                        *o += bv;
                    }
                }
                Tensor {
                    shape: a.shape.clone(),
                    data,
                }
            }
        }
        Op::Mul => {
            arity(op, inputs, 2)?;
            let (a, b) = (inputs[0], inputs[1]);
            if a.shape != b.shape {
                return Err(mismatch(op, a, b));
            }
            let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
            Tensor {
                shape: a.shape.clone(),
                data,
            }
        }
        Op::Tanh => {
            arity(op, inputs, 1)?;
            Tensor {
                shape: inputs[0].shape.clone(),
                data: inputs[0].data.iter().map(|x| x.tanh()).collect(),
            }
        }
        Op::Relu => {
            arity(op, inputs, 1)?;
            Tensor {
                shape: inputs[0].shape.clone(),
                data: inputs[0].data.iter().map(|x| x.max(0.0)).collect(),
            }
        }
        Op::SoftmaxCrossEntropy { labels, weights } => {
            arity(op, inputs, 1)?;
            let logits = inputs[0];
            let (n, c) = matrix_dims(op, logits)?;
            if labels.len() != n || weights.len() != n {
                return Err(Error::ShapeMismatch {
                    op: op.name(),
                    lhs: logits.shape.clone(),
                    rhs: vec![labels.len(), weights.len()],
                });
            }
            let mut probs = vec![0.0; n * c];
            let mut loss = 0.0;
            for r in 0..n {
                let row = &logits.data[r * c..(r + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (p, &x) in probs[r * c..(r + 1) * c].iter_mut().zip(row) {
                    *p = (x - max).exp();
                    z += *p;
                }
                for p in &mut probs[r * c..(r + 1) * c] {
                    *p /= z;
                }
                if let Some(y) = labels[r] {
                    if y >= c {
                        return Err(Error::InvalidTensor(format!(
                            "label {y} out of range for {c} classes"
                        )));
                    }
                    loss += weights[r] * (z.ln() + max - row[y]);
                }
            }
            return finish(op, Tensor {
                shape: vec![1],
                data: vec![loss],
            }, Some(probs));
        }
        Op::Mean { axis } => {
            arity(op, inputs, 1)?;
            let a = inputs[0];
            let (n, m) = matrix_dims(op, a)?;
            match axis {
                0 => {
                    let mut data = vec![0.0; m];
                    for i in 0..n {
                        for (o, v) in data.iter_mut().zip(a.row(i)) {
                            *o += v;
                        }
                    }
                    data.iter_mut().for_each(|v| *v /= n as f64);
                    Tensor {
                        shape: vec![m],
                        data,
                    }
                }
                1 => Tensor {
                    shape: vec![n],
                    data: (0..n)
                        .map(|i| a.row(i).iter().sum::<f64>() / m as f64)
                        .collect(),
                },
                _ => {
                    return Err(Error::InvalidTensor(format!(
                        "mean over axis {axis} of a matrix"
                    )))
                }
            }
        }
        Op::Sum => {
            arity(op, inputs, 1)?;
            Tensor {
                shape: vec![1],
                data: vec![inputs[0].data.iter().sum()],
            }
        }
        Op::Embedding { indices } => {
            arity(op, inputs, 1)?;
            let table = inputs[0];
            let (v, e) = matrix_dims(op, table)?;
            let mut data = Vec::with_capacity(indices.len() * e);
            for &ix in indices {
                if ix >= v {
                    return Err(Error::InvalidTensor(format!(
                        "embedding index {ix} out of range for {v} rows"
                    )));
                }
                data.extend_from_slice(table.row(ix));
            }
            Tensor {
                shape: vec![indices.len(), e],
                data,
            }
        }
        Op::Concat => {
            arity(op, inputs, 1)?;
            let (n, _) = matrix_dims(op, inputs[0])?;
            let mut widths = Vec::with_capacity(inputs.len());
            for t in inputs {
                let (r, c) = matrix_dims(op, t)?;
                if r != n {
                    return Err(mismatch(op, inputs[0], t));
                }
                widths.push(c);
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(n * total);
            for i in 0..n {
                for t in inputs {
                    data.extend_from_slice(t.row(i));
                }
            }
            Tensor {
                shape: vec![n, total],
                data,
            }
        }
        Op::Scale(s) => {
            arity(op, inputs, 1)?;
            Tensor {
                shape: inputs[0].shape.clone(),
                data: inputs[0].data.iter().map(|x| x * s).collect(),
            }
        }
        Op::Rows { start, len } => {
            arity(op, inputs, 1)?;
            let a = inputs[0];
            let (n, m) = matrix_dims(op, a)?;
            if start + len > n {
                return Err(Error::ShapeMismatch {
                    op: op.name(),
                    lhs: a.shape.clone(),
                    rhs: vec![start + len, m],
                });
            }
            Tensor {
                shape: vec![*len, m],
                data: a.data[start * m..(start + len) * m].to_vec(),
            }
        }
    };
    finish(op, out, None)
}

fn finish(op: &Op, out: Tensor, saved: Option<Vec<f64>>) -> Result<(Tensor, Option<Vec<f64>>)> {
    if out.data.iter().all(|v| v.is_finite()) {
        Ok((out, saved))
    } else {
        Err(Error::NonFinite { op: op.name() })
    }
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

    /// Records an input value.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            saved: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn apply(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::InvalidTensor(format!(
                "{}: unknown input node {}",
                op.name(),
                bad.0
            )));
        }
        let values: Vec<&Tensor> = inputs.iter().map(|id| &self.nodes[id.0].value).collect();
        let (value, saved) = forward(&op, &values)?;
        self.nodes.push(Node {
            op: Some(op),
            inputs: inputs.to_vec(),
            value,
            saved,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Add, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Op::Mul, &[a, b])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Tanh, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Relu, &[a])
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.apply(Op::Scale(s), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.apply(Op::Mean { axis }, &[a])
    }

    pub fn embedding(&mut self, table: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.apply(Op::Embedding { indices }, &[table])
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Op::Concat, parts)
    }

    pub fn rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(Op::Rows { start, len }, &[a])
    }

    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: Vec<Option<usize>>,
        weights: Vec<f64>,
    ) -> Result<NodeId> {
        self.apply(Op::SoftmaxCrossEntropy { labels, weights }, &[logits])
    }

    /// Gradient of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Some(op) = &node.op {
                self.propagate(op, node, &gout, &mut grads);
            }
            grads[idx] = Some(gout);
        }

        let tensors = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match g {
                Some(data) => Tensor {
                    shape: n.value.shape.clone(),
                    data,
                },
                None => Tensor::zeros(&n.value.shape),
            })
            .collect();
        Ok(Gradients { tensors })
    }

    fn propagate(&self, op: &Op, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let input = |i: usize| &self.nodes[node.inputs[i].0].value;
        let mut acc = |i: usize, f: &mut dyn FnMut(&mut [f64])| {
            let id = node.inputs[i].0;
            let len = self.nodes[id].value.data.len();
            let g = grads[id].get_or_insert_with(|| vec![0.0; len]);
            f(g);
        };
        match op {
            Op::MatMul => {
                let (a, b) = (input(0), input(1));
                let (n, k) = (a.shape[0], a.shape[1]);
                let m = b.shape[1];
                acc(0, &mut |g| matmul_nt_acc(gout, &b.data, g, n, m, k));
                acc(1, &mut |g| matmul_tn_acc(&a.data, gout, g, n, k, m));
            }
            Op::Add => {
                let (a, b) = (input(0), input(1));
                acc(0, &mut |g| g.iter_mut().zip(gout).for_each(|(x, y)| *x += y));
                if a.shape == b.shape {
                    acc(1, &mut |g| g.iter_mut().zip(gout).for_each(|(x, y)| *x += y));
                } else {
                    let m = b.data.len();
                    acc(1, &mut |g| {
                        for row in gout.chunks(m) {
                            g.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                        }
                    });
                }
            }
            Op::Mul => {
                let (a, b) = (input(0), input(1));
                acc(0, &mut |g| {
                    for ((x, go), bv) in g.iter_mut().zip(gout).zip(&b.data) {
                        *x += go * bv;
                    }
                });
                acc(1, &mut |g| {
                    for ((x, go), av) in g.iter_mut().zip(gout).zip(&a.data) {
                        *x += go * av;
                    }
                });
            }
            Op::Tanh => {
                let y = &node.value.data;
                acc(0, &mut |g| {
                    for ((x, go), yv) in g.iter_mut().zip(gout).zip(y) {
                        *x += go * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu => {
                let a = input(0);
                acc(0, &mut |g| {
                    for ((x, go), av) in g.iter_mut().zip(gout).zip(&a.data) {
                        if *av > 0.0 {
                            *x += go;
                        }
                    }
                });
            }
            Op::SoftmaxCrossEntropy { labels, weights } => {
                let probs = node.saved.as_ref().expect("softmax saves probabilities");
                let c = input(0).shape[1];
                let go = gout[0];
                acc(0, &mut |g| {
                    for (r, label) in labels.iter().enumerate() {
                        let Some(y) = label else { continue };
                        let w = go * weights[r];
                        let row = &mut g[r * c..(r + 1) * c];
                        for (x, p) in row.iter_mut().zip(&probs[r * c..(r + 1) * c]) {
                            *x += w * p;
                        }
                        row[*y] -= w;
                    }
                });
            }
            Op::Mean { axis } => {
                let (n, m) = (input(0).shape[0], input(0).shape[1]);
                acc(0, &mut |g| {
                    for i in 0..n {
                        for j in 0..m {
                            g[i * m + j] += if *axis == 0 {
                                gout[j] / n as f64
                            } else {
                                gout[i] / m as f64
                            };
                        }
                    }
                });
            }
            Op::Sum => {
                acc(0, &mut |g| g.iter_mut().for_each(|x| *x += gout[0]));
            }
            Op::Embedding { indices } => {
                let e = input(0).shape[1];
                acc(0, &mut |g| {
                    for (r, &ix) in indices.iter().enumerate() {
                        for (x, go) in g[ix * e..(ix + 1) * e].iter_mut().zip(&gout[r * e..]) {
                            *x += go;
                        }
                    }
                });
            }
            Op::Concat => {
                let total = node.value.shape[1];
                let mut offset = 0;
                for i in 0..node.inputs.len() {
                    let (n, w) = (input(i).shape[0], input(i).shape[1]);
                    acc(i, &mut |g| {
                        for r in 0..n {
                            for (x, go) in g[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(&gout[r * total + offset..r * total + offset + w])
                            {
                                *x += go;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Scale(s) => {
                acc(0, &mut |g| g.iter_mut().zip(gout).for_each(|(x, y)| *x += s * y));
            }
            Op::Rows { start, len } => {
                let m = input(0).shape[1];
                acc(0, &mut |g| {
                    for (x, go) in g[start * m..(start + len) * m].iter_mut().zip(gout) {
                        *x += go;
                    }
                });
            }
        }
    }
}

/// Result of [`Graph::backward`]: one gradient tensor per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.tensors[id.0]
    }
}
