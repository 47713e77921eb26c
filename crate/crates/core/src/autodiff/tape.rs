use std::rc::Rc;

use super::graph::{check_finite, same_len, Graph};
use super::kernels;
use super::{Gradients, ParamId, ParameterStore, Tensor, TensorError};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatVec(NodeId, NodeId),
    Affine(ParamId, ParamId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    LogSoftmax(NodeId),
    Pick(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    WeightedSum(NodeId, Rc<[f64]>),
    Sum(NodeId),
    Scale(NodeId, f64),
    Dropout(NodeId, Rc<[f64]>),
    AddN(Vec<NodeId>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Lookup(..) => "lookup",
            Op::MatVec(..) => "matvec",
            Op::Affine(..) => "affine",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::LogSoftmax(_) => "log_softmax",
            Op::Pick(..) => "pick",
            Op::Gather(..) => "gather",
            Op::WeightedSum(..) => "weighted_sum",
            Op::Sum(_) => "sum",
            Op::Scale(..) => "scale",
            Op::Dropout(..) => "dropout",
            Op::AddN(_) => "add_n",
        }
    }
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    /// Empty for `Param` nodes, whose value lives in the store.
    value: Vec<f64>,
}

/// Append-only record of one forward computation. Inputs always precede
/// the nodes that consume them, so reverse construction order is a valid
/// reverse topological order.
pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(p) => self.store.value(p).data(),
            _ => &node.value,
        }
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<f64>) -> Result<NodeId, TensorError> {
        check_finite(op.name(), &value)?;
        self.nodes.push(Node { op, shape, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Reverse pass from the scalar `loss`, adding ∂loss/∂θ into `grads`
    /// (which must be shaped like the store, see [`ParameterStore::zero_gradients`]).
    pub fn backward_into(&self, loss: NodeId, grads: &mut Gradients) -> Result<(), TensorError> {
        if self.nodes[loss.0].shape != [1] {
            return Err(TensorError::NotScalar(self.nodes[loss.0].shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        fn acc(adj: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
            adj[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    for (s, v) in grads.slot(*p).iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::Lookup(p, row) => {
                    let cols = g.len();
                    let slot = &mut grads.slot(*p)[row * cols..(row + 1) * cols];
                    for (s, v) in slot.iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::MatVec(m, x) => {
                    let (rows, cols) = (self.nodes[m.0].shape[0], self.nodes[m.0].shape[1]);
                    let mval = self.value(*m).to_vec();
                    let xval = self.value(*x).to_vec();
                    {
                        let dm = acc(&mut adj, *m, rows * cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                dm[r * cols + c] += g[r] * xval[c];
                            }
                        }
                    }
                    let dx = acc(&mut adj, *x, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dx[c] += mval[r * cols + c] * g[r];
                        }
                    }
                }
                Op::Affine(w, b, x) => {
                    let wt = self.store.value(*w);
                    let (rows, cols) = (wt.rows(), wt.cols());
                    let xval = self.value(*x);
                    {
                        let dw = grads.slot(*w);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                let row = &mut dw[r * cols..(r + 1) * cols];
                                for (d, xv) in row.iter_mut().zip(xval) {
                                    *d += gr * xv;
                                }
                            }
                        }
                    }
                    for (d, v) in grads.slot(*b).iter_mut().zip(&g) {
                        *d += v;
                    }
                    let wd = wt.data();
                    let dx = acc(&mut adj, *x, cols);
                    for r in 0..rows {
                        let gr = g[r];
                        if gr != 0.0 {
                            for (d, wv) in dx.iter_mut().zip(&wd[r * cols..(r + 1) * cols]) {
                                *d += wv * gr;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for id in [a, b] {
                        let d = acc(&mut adj, *id, g.len());
                        for (d, v) in d.iter_mut().zip(&g) {
                            *d += v;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).to_vec();
                    let bv = self.value(*b).to_vec();
                    {
                        let da = acc(&mut adj, *a, g.len());
                        for k in 0..g.len() {
                            da[k] += g[k] * bv[k];
                        }
                    }
                    let db = acc(&mut adj, *b, g.len());
                    for k in 0..g.len() {
                        db[k] += g[k] * av[k];
                    }
                }
                Op::Sigmoid(a) => {
                    let da = acc(&mut adj, *a, g.len());
                    for (k, y) in node.value.iter().enumerate() {
                        da[k] += g[k] * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let da = acc(&mut adj, *a, g.len());
                    for (k, y) in node.value.iter().enumerate() {
                        da[k] += g[k] * (1.0 - y * y);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].shape.iter().product::<usize>();
                        let d = acc(&mut adj, *p, n);
                        for k in 0..n {
                            d[k] += g[offset + k];
                        }
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.nodes[a.0].shape.iter().product::<usize>();
                    let d = acc(&mut adj, *a, n);
                    for (k, v) in g.iter().enumerate() {
                        d[start + k] += v;
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let d = acc(&mut adj, *a, g.len());
                    for (k, y) in node.value.iter().enumerate() {
                        d[k] += g[k] - y.exp() * total;
                    }
                }
                Op::Pick(a, index) => {
                    let n = self.nodes[a.0].shape.iter().product::<usize>();
                    acc(&mut adj, *a, n)[*index] += g[0];
                }
                Op::Gather(a, indices) => {
                    let n = self.nodes[a.0].shape.iter().product::<usize>();
                    let d = acc(&mut adj, *a, n);
                    for (k, &i) in indices.iter().enumerate() {
                        d[i] += g[k];
                    }
                }
                Op::WeightedSum(a, w) => {
                    let d = acc(&mut adj, *a, w.len());
                    for (d, wv) in d.iter_mut().zip(w.iter()) {
                        *d += wv * g[0];
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].shape.iter().product::<usize>();
                    acc(&mut adj, *a, n).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Scale(a, c) => {
                    let d = acc(&mut adj, *a, g.len());
                    for (d, v) in d.iter_mut().zip(&g) {
                        *d += c * v;
                    }
                }
                Op::Dropout(a, mask) => {
                    let d = acc(&mut adj, *a, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * mask[k];
                    }
                }
                Op::AddN(parts) => {
                    for p in parts {
                        let d = acc(&mut adj, *p, g.len());
                        for (d, v) in d.iter_mut().zip(&g) {
                            *d += v;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Convenience wrapper: fresh gradient buffers for a single loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let mut grads = self.store.zero_gradients();
        self.backward_into(loss, &mut grads)?;
        Ok(grads)
    }

    fn numel(&self, id: NodeId) -> usize {
        self.nodes[id.0].shape.iter().product()
    }
}

impl Graph for Tape<'_> {
    type Var = NodeId;

    fn store(&self) -> &ParameterStore {
        self.store
    }

    fn data<'a>(&'a self, v: &'a NodeId) -> &'a [f64] {
        self.value(*v)
    }

    fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.nodes.push(Node {
            op: Op::Constant,
            shape,
            value: t.into_data(),
        });
        NodeId(self.nodes.len() - 1)
    }

    fn param(&mut self, id: ParamId) -> NodeId {
        let shape = self.store.value(id).shape().to_vec();
        self.nodes.push(Node {
            op: Op::Param(id),
            shape,
            value: Vec::new(),
        });
        NodeId(self.nodes.len() - 1)
    }

    fn lookup(&mut self, table: ParamId, row: usize) -> Result<NodeId, TensorError> {
        let t = self.store.value(table);
        if t.shape().len() != 2 || row >= t.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "lookup",
                index: row,
                len: t.rows(),
            });
        }
        let v = t.row(row).to_vec();
        self.push(Op::Lookup(table, row), vec![v.len()], v)
    }

    fn matvec(&mut self, m: &NodeId, x: &NodeId) -> Result<NodeId, TensorError> {
        let ms = self.shape(*m).to_vec();
        if ms.len() != 2 || self.shape(*x) != [ms[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "matvec",
                left: ms,
                right: self.shape(*x).to_vec(),
            });
        }
        let v = kernels::matvec(self.value(*m), ms[0], ms[1], self.value(*x));
        self.push(Op::MatVec(*m, *x), vec![ms[0]], v)
    }

    fn affine(&mut self, w: ParamId, b: ParamId, x: &NodeId) -> Result<NodeId, TensorError> {
        let (wt, bt) = (self.store.value(w), self.store.value(b));
        if wt.shape().len() != 2 || self.shape(*x) != [wt.cols()] || bt.shape() != [wt.rows()] {
            return Err(TensorError::ShapeMismatch {
                op: "affine",
                left: wt.shape().to_vec(),
                right: self.shape(*x).to_vec(),
            });
        }
        let v = kernels::affine(wt.data(), wt.rows(), wt.cols(), bt.data(), self.value(*x));
        let rows = wt.rows();
        self.push(Op::Affine(w, b, *x), vec![rows], v)
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, TensorError> {
        same_len("add", self.shape(*a), self.shape(*b))?;
        let v = kernels::zip_map(self.value(*a), self.value(*b), |x, y| x + y);
        let shape = self.shape(*a).to_vec();
        self.push(Op::Add(*a, *b), shape, v)
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, TensorError> {
        same_len("mul", self.shape(*a), self.shape(*b))?;
        let v = kernels::zip_map(self.value(*a), self.value(*b), |x, y| x * y);
        let shape = self.shape(*a).to_vec();
        self.push(Op::Mul(*a, *b), shape, v)
    }

    fn sigmoid(&mut self, a: &NodeId) -> Result<NodeId, TensorError> {
        let v = kernels::sigmoid_vec(self.value(*a));
        let shape = self.shape(*a).to_vec();
        self.push(Op::Sigmoid(*a), shape, v)
    }

    fn tanh(&mut self, a: &NodeId) -> Result<NodeId, TensorError> {
        let v = kernels::tanh_vec(self.value(*a));
        let shape = self.shape(*a).to_vec();
        self.push(Op::Tanh(*a), shape, v)
    }

    fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::Empty("concat"));
        }
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(self.value(*p));
        }
        let n = v.len();
        self.push(Op::Concat(parts.to_vec()), vec![n], v)
    }

    fn slice(&mut self, a: &NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let n = self.numel(*a);
        if len == 0 || start + len > n {
            return Err(TensorError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                len: n,
            });
        }
        let v = self.value(*a)[start..start + len].to_vec();
        self.push(Op::Slice(*a, start), vec![len], v)
    }

    fn log_softmax(&mut self, a: &NodeId) -> Result<NodeId, TensorError> {
        let v = kernels::log_softmax(self.value(*a));
        let shape = self.shape(*a).to_vec();
        self.push(Op::LogSoftmax(*a), shape, v)
    }

    fn pick(&mut self, a: &NodeId, index: usize) -> Result<NodeId, TensorError> {
        let n = self.numel(*a);
        if index >= n {
            return Err(TensorError::IndexOutOfRange {
                op: "pick",
                index,
                len: n,
            });
        }
        let v = vec![self.value(*a)[index]];
        self.push(Op::Pick(*a, index), vec![1], v)
    }

    fn gather(&mut self, a: &NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        if indices.is_empty() {
            return Err(TensorError::Empty("gather"));
        }
        let n = self.numel(*a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather",
                index: bad,
                len: n,
            });
        }
        let src = self.value(*a);
        let v: Vec<f64> = indices.iter().map(|&i| src[i]).collect();
        self.push(Op::Gather(*a, indices.to_vec()), vec![indices.len()], v)
    }

    fn weighted_sum(&mut self, a: &NodeId, weights: &[f64]) -> Result<NodeId, TensorError> {
        same_len("weighted_sum", self.shape(*a), &[weights.len()])?;
        let v = kernels::weighted_sum(self.value(*a), weights);
        self.push(Op::WeightedSum(*a, Rc::from(weights)), vec![1], vec![v])
    }

    fn sum(&mut self, a: &NodeId) -> Result<NodeId, TensorError> {
        let v = kernels::sum(self.value(*a));
        self.push(Op::Sum(*a), vec![1], vec![v])
    }

    fn scale(&mut self, a: &NodeId, c: f64) -> Result<NodeId, TensorError> {
        let v = self.value(*a).iter().map(|x| x * c).collect();
        let shape = self.shape(*a).to_vec();
        self.push(Op::Scale(*a, c), shape, v)
    }

    fn dropout(&mut self, a: &NodeId, mask: &Rc<[f64]>) -> Result<NodeId, TensorError> {
        same_len("dropout", self.shape(*a), &[mask.len()])?;
        let v = kernels::zip_map(self.value(*a), mask, |x, m| x * m);
        let shape = self.shape(*a).to_vec();
        self.push(Op::Dropout(*a, mask.clone()), shape, v)
    }

    fn add_n(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let first = *parts.first().ok_or(TensorError::Empty("add_n"))?;
        let shape = self.shape(first).to_vec();
        let mut v = self.value(first).to_vec();
        for p in &parts[1..] {
            same_len("add_n", &shape, self.shape(*p))?;
            for (o, x) in v.iter_mut().zip(self.value(*p)) {
                *o += x;
            }
        }
        self.push(Op::AddN(parts.to_vec()), shape, v)
    }
}
