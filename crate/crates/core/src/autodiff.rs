//! Tape-style reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its cached output; node ids are
//! therefore topologically ordered and [`Graph::backward`] is a single
//! reverse sweep over the tape.

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};
use crate::transducer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    AddRow(NodeId, NodeId),
    LogSoftmax(NodeId),
    Sum(NodeId),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    ConcatRows(Vec<NodeId>),
    OuterAdd(NodeId, NodeId),
    Reshape(NodeId),
    /// Transducer NLL; the lattice gradient is computed on the forward pass
    /// and cached in the node's `aux` slot.
    TransducerNll(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
    aux: Option<Tensor>,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Takes ownership of a gradient, or zeros if the node did not influence the root.
    pub fn take_or_zeros(&mut self, id: NodeId, shape: &[usize]) -> Tensor {
        self.grads[id.0].take().unwrap_or_else(|| Tensor::zeros(shape))
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
            aux: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), v, ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::add(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), v, ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::sub(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::Sub(a, b), v, ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::mul(self.value(a), self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::Mul(a, b), v, ng))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        let ng = self.needs(&[a]);
        self.push(Op::Scale(a, c), v, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let ng = self.needs(&[a]);
        self.push(Op::Tanh(a), v, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(tensor::sigmoid);
        let ng = self.needs(&[a]);
        self.push(Op::Sigmoid(a), v, ng)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        let ng = self.needs(&[a]);
        self.push(Op::Exp(a), v, ng)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::log(self.value(a))?;
        let ng = self.needs(&[a]);
        Ok(self.push(Op::Log(a), v, ng))
    }

    /// Adds a length-n row vector to every row of an m×n matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        let r = self.value(row);
        if r.numel() != n {
            return Err(Error::shape("add_row", self.value(a).shape(), r.shape()));
        }
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n) {
            for (x, b) in chunk.iter_mut().zip(r.data()) {
                *x += b;
            }
        }
        let v = Tensor::new(vec![m, n], data)?;
        let ng = self.needs(&[a, row]);
        Ok(self.push(Op::AddRow(a, row), v, ng))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::log_softmax(self.value(a))?;
        let ng = self.needs(&[a]);
        Ok(self.push(Op::LogSoftmax(a), v, ng))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(&[a]);
        self.push(Op::Sum(a), v, ng)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        if start >= end || end > m {
            return Err(Error::contract(format!(
                "row slice {start}..{end} out of range for {m} rows"
            )));
        }
        let v = Tensor::new(vec![end - start, n], self.value(a).data()[start * n..end * n].to_vec())?;
        let ng = self.needs(&[a]);
        Ok(self.push(Op::SliceRows(a, start, end), v, ng))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        if start >= end || end > n {
            return Err(Error::contract(format!(
                "column slice {start}..{end} out of range for {n} columns"
            )));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * (end - start));
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        let v = Tensor::new(vec![m, end - start], data)?;
        let ng = self.needs(&[a]);
        Ok(self.push(Op::SliceCols(a, start, end), v, ng))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows needs at least one input"))?;
        let (_, n) = self.value(first).dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, c) = self.value(p).dims2()?;
            if c != n {
                return Err(Error::shape(
                    "concat_rows",
                    self.value(first).shape(),
                    self.value(p).shape(),
                ));
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor::new(vec![rows, n], data)?;
        let ng = self.needs(parts);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v, ng))
    }

    /// out[i·n + j, :] = a[i, :] + b[j, :] for a: m×J, b: n×J.
    pub fn outer_add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ja) = self.value(a).dims2()?;
        let (n, jb) = self.value(b).dims2()?;
        if ja != jb {
            return Err(Error::shape("outer_add", self.value(a).shape(), self.value(b).shape()));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(m * n * ja);
        for i in 0..m {
            let ar = &av[i * ja..(i + 1) * ja];
            for j in 0..n {
                let br = &bv[j * ja..(j + 1) * ja];
                data.extend(ar.iter().zip(br).map(|(x, y)| x + y));
            }
        }
        let v = Tensor::new(vec![m * n, ja], data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(Op::OuterAdd(a, b), v, ng))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        let ng = self.needs(&[a]);
        Ok(self.push(Op::Reshape(a), v, ng))
    }

    /// Transducer negative log-likelihood of a T×(U+1)×V log-prob lattice.
    pub fn transducer_nll(&mut self, lattice: NodeId, labels: &[usize], blank: usize) -> Result<NodeId> {
        let res = transducer::rnnt_loss(self.value(lattice), labels, blank)?;
        let ng = self.needs(&[lattice]);
        let id = self.push(Op::TransducerNll(lattice), Tensor::scalar(res.nll), ng);
        self.nodes[id.0].aux = Some(res.lattice_grad);
        Ok(id)
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = &self.nodes[root.0].value;
        if !rv.is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2()?;
                let (_, n) = bv.dims2()?;
                self.accumulate(grads, *a, |ga| tensor::matmul_nt_into(gd, bv.data(), ga, m, k, n));
                self.accumulate(grads, *b, |gb| tensor::matmul_tn_into(av.data(), gd, gb, m, k, n));
            }
            Op::Add(a, b) => {
                self.acc_broadcast(grads, *a, gd, |x| x);
                self.acc_broadcast(grads, *b, gd, |x| x);
            }
            Op::Sub(a, b) => {
                self.acc_broadcast(grads, *a, gd, |x| x);
                self.acc_broadcast(grads, *b, gd, |x| -x);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = pointwise_product(gd, bv);
                let gb = pointwise_product(gd, av);
                self.acc_broadcast(grads, *a, &ga, |x| x);
                self.acc_broadcast(grads, *b, &gb, |x| x);
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga.iter_mut().zip(gd) {
                        *o += c * x;
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(gd).zip(y) {
                        *o += x * (1.0 - y * y);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(gd).zip(y) {
                        *o += x * y * (1.0 - y);
                    }
                });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), y) in ga.iter_mut().zip(gd).zip(y) {
                        *o += x * y;
                    }
                });
            }
            Op::Log(a) => {
                let xin = self.value(*a).data();
                self.accumulate(grads, *a, |ga| {
                    for ((o, x), v) in ga.iter_mut().zip(gd).zip(xin) {
                        *o += x / v;
                    }
                });
            }
            Op::AddRow(a, row) => {
                let n = self.value(*row).numel();
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga.iter_mut().zip(gd) {
                        *o += x;
                    }
                });
                self.accumulate(grads, *row, |gr| {
                    for chunk in gd.chunks(n) {
                        for (o, x) in gr.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let n = *node.value.shape().last().unwrap_or(&1);
                self.accumulate(grads, *a, |ga| {
                    for ((orow, grow), yrow) in ga.chunks_mut(n).zip(gd.chunks(n)).zip(y.chunks(n)) {
                        let gsum: f64 = grow.iter().sum();
                        for ((o, x), yv) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o += x - yv.exp() * gsum;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let s = gd[0];
                self.accumulate(grads, *a, |ga| {
                    for o in ga.iter_mut() {
                        *o += s;
                    }
                });
            }
            Op::SliceRows(a, start, end) => {
                let n = node.value.dims2()?.1;
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga[start * n..end * n].iter_mut().zip(gd) {
                        *o += x;
                    }
                });
            }
            Op::SliceCols(a, start, end) => {
                let n = self.value(*a).dims2()?.1;
                let w = end - start;
                self.accumulate(grads, *a, |ga| {
                    for (i, grow) in gd.chunks(w).enumerate() {
                        for (o, x) in ga[i * n + start..i * n + end].iter_mut().zip(grow) {
                            *o += x;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    let slice = &gd[offset..offset + len];
                    self.accumulate(grads, p, |gp| {
                        for (o, x) in gp.iter_mut().zip(slice) {
                            *o += x;
                        }
                    });
                    offset += len;
                }
            }
            Op::OuterAdd(a, b) => {
                let (m, j) = self.value(*a).dims2()?;
                let (n, _) = self.value(*b).dims2()?;
                self.accumulate(grads, *a, |ga| {
                    for i in 0..m {
                        let orow = &mut ga[i * j..(i + 1) * j];
                        for jj in 0..n {
                            let r = i * n + jj;
                            for (o, x) in orow.iter_mut().zip(&gd[r * j..(r + 1) * j]) {
                                *o += x;
                            }
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for jj in 0..n {
                            let r = i * n + jj;
                            for (o, x) in gb[jj * j..(jj + 1) * j].iter_mut().zip(&gd[r * j..(r + 1) * j]) {
                                *o += x;
                            }
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, |ga| {
                    for (o, x) in ga.iter_mut().zip(gd) {
                        *o += x;
                    }
                });
            }
            Op::TransducerNll(lattice) => {
                let s = gd[0];
                let lg = node.aux.as_ref().expect("transducer node caches its gradient");
                self.accumulate(grads, *lattice, |gl| {
                    for (o, x) in gl.iter_mut().zip(lg.data()) {
                        *o += s * x;
                    }
                });
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let slot = &mut grads[id.0];
        let t = slot.get_or_insert_with(|| Tensor::zeros(self.nodes[id.0].value.shape()));
        f(t.data_mut());
    }

    /// Accumulates a full-shape gradient into `id`, summing it down when `id`
    /// was a broadcast scalar operand.
    fn acc_broadcast(&self, grads: &mut [Option<Tensor>], id: NodeId, g: &[f64], sign: impl Fn(f64) -> f64) {
        let target_len = self.value(id).numel();
        if target_len == g.len() {
            self.accumulate(grads, id, |ga| {
                for (o, x) in ga.iter_mut().zip(g) {
                    *o += sign(*x);
                }
            });
        } else {
            let s: f64 = g.iter().sum();
            self.accumulate(grads, id, |ga| ga[0] += sign(s));
        }
    }
}

fn pointwise_product(g: &[f64], other: &Tensor) -> Vec<f64> {
    let o = other.data();
    if o.len() == g.len() {
        g.iter().zip(o).map(|(x, y)| x * y).collect()
    } else {
        g.iter().map(|x| x * o[0]).collect()
    }
}
