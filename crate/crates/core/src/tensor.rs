//! Dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Tape`] is rebuilt for every forward pass: each operation appends a node
//! holding its value and enough context to push gradients back to its parents.
//! [`Tape::backward`] runs a single reverse sweep (parents always precede
//! children, so creation order is already topological). 64-bit floats
//! throughout.
//!
//! A tape and its tensors are confined to one thread during a forward/backward
//! pass; distinct tapes run concurrently.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Row-major dense tensor. Rank is fixed at two; vectors are `(k, 1)` and
/// scalars `(1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "shape does not match data length");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Column vector (k, 1).
    pub fn column(data: Vec<f64>) -> Self {
        Tensor {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorError {
    ShapeMismatch {
        op: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },
    NonScalarLoss {
        shape: (usize, usize),
    },
    UnknownParameter(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, a, b } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                a.0, a.1, b.0, b.1
            ),
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got {}x{}", shape.0, shape.1)
            }
            TensorError::UnknownParameter(name) => write!(f, "unknown parameter `{name}`"),
        }
    }
}

/// Handle to a tape node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Neighbor lists in CSR form, shared by graph-aggregation nodes.
#[derive(Clone, Debug)]
pub struct Adjacency {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl Adjacency {
    /// Build from an undirected edge list over `n` nodes.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n]];
        for &(u, v) in edges {
            neighbors[cursor[u]] = v;
            cursor[u] += 1;
            neighbors[cursor[v]] = u;
            cursor[v] += 1;
        }
        Adjacency {
            n,
            offsets,
            neighbors,
        }
    }

    #[inline]
    pub fn neighbors_of(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Hadamard(NodeId, NodeId),
    /// (d x n) with per-column factors from an (n, 1) vector.
    ColBroadcastMul(NodeId, NodeId),
    /// (d x n) plus an (d, 1) bias broadcast over columns.
    AddColVec(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    SoftmaxCols(NodeId),
    MeanCols(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    AddScalar(NodeId, NodeId),
    SubScalar(NodeId, NodeId),
    Pick(NodeId, usize),
    Mse(NodeId, NodeId),
    Reshape(NodeId),
    ConcatRows(Vec<NodeId>),
    /// Contiguous row range `[start, start+rows)` of the parent.
    SliceRows(NodeId, usize, usize),
    /// Tensor scaled by a (1, 1) node.
    MulScalar(NodeId, NodeId),
    /// GIN-style aggregation: out[:,v] = (1+eps) x[:,v] + sum_{u in N(v)} x[:,u].
    NeighborSum(NodeId, Arc<Adjacency>, f64),
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape. Create one per forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    param_ids: BTreeMap<String, NodeId>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_ids: BTreeMap::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    #[inline]
    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Register a named parameter from a store. Repeated calls with the same
    /// name return the same node.
    pub fn param(
        &mut self,
        store: &crate::store::ParameterStore,
        name: &str,
    ) -> Result<NodeId, TensorError> {
        if let Some(&id) = self.param_ids.get(name) {
            return Ok(id);
        }
        let tensor = store
            .get(name)
            .ok_or_else(|| TensorError::UnknownParameter(String::from(name)))?;
        let id = self.push(tensor.clone(), Op::Leaf, true);
        self.param_ids.insert(String::from(name), id);
        Ok(id)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of a node after [`Tape::backward`]; zeros when the node is not
    /// on any path to the loss.
    pub fn grad(&self, id: NodeId) -> Vec<f64> {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => vec![0.0; self.nodes[id.0].value.len()],
        }
    }

    /// Add every registered parameter's gradient into the store.
    pub fn accumulate_grads(&self, store: &mut crate::store::ParameterStore) {
        for (name, &id) in &self.param_ids {
            if let Some(g) = &self.nodes[id.0].grad {
                store.add_grad(name, g);
            }
        }
    }

    // -- forward operations --------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (ra, ca) = self.nodes[a.0].value.shape();
        let (rb, cb) = self.nodes[b.0].value.shape();
        if ca != rb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                a: (ra, ca),
                b: (rb, cb),
            });
        }
        let out = mat_mul(
            &self.nodes[a.0].value.data,
            ra,
            ca,
            &self.nodes[b.0].value.data,
            cb,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_vec(ra, cb, out), Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.nodes[a.0].value.shape();
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::from_vec(c, r, data), Op::Transpose(a), rg)
    }

    fn elementwise2(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, TensorError> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                a: sa,
                b: sb,
            });
        }
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_vec(sa.0, sa.1, data), op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise2("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise2("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise2("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.nodes[a.0].value.shape();
        let data: Vec<f64> = self.nodes[a.0].value.data.iter().map(|&x| x * factor).collect();
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, c, data), Op::Scale(a, factor), rg)
    }

    /// Hadamard with broadcast: `(d x n) * (n x 1)`, scaling column `j` by `v[j]`.
    pub fn broadcast_hadamard(&mut self, a: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let (d, n) = self.nodes[a.0].value.shape();
        let sv = self.nodes[v.0].value.shape();
        if sv != (n, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_hadamard",
                a: (d, n),
                b: sv,
            });
        }
        let va = &self.nodes[a.0].value.data;
        let vv = &self.nodes[v.0].value.data;
        let mut data = vec![0.0; d * n];
        for i in 0..d {
            for j in 0..n {
                data[i * n + j] = va[i * n + j] * vv[j];
            }
        }
        let rg = self.rg(a) || self.rg(v);
        Ok(self.push(Tensor::from_vec(d, n, data), Op::ColBroadcastMul(a, v), rg))
    }

    /// `(d x n) + (d x 1)` with the bias broadcast over columns.
    pub fn add_col_vec(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (d, n) = self.nodes[a.0].value.shape();
        let sb = self.nodes[bias.0].value.shape();
        if sb != (d, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "add_col_vec",
                a: (d, n),
                b: sb,
            });
        }
        let va = &self.nodes[a.0].value.data;
        let vb = &self.nodes[bias.0].value.data;
        let mut data = vec![0.0; d * n];
        for i in 0..d {
            for j in 0..n {
                data[i * n + j] = va[i * n + j] + vb[i];
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::from_vec(d, n, data), Op::AddColVec(a, bias), rg))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.nodes[a.0].value.shape();
        let data: Vec<f64> = self.nodes[a.0].value.data.iter().map(|&x| x.max(0.0)).collect();
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, c, data), Op::Relu(a), rg)
    }

    /// Softmax over each row.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.nodes[a.0].value.shape();
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..c {
                let e = math::exp(row[j] - max);
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, c, data), Op::SoftmaxRows(a), rg)
    }

    /// Softmax over each column.
    pub fn softmax_cols(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.nodes[a.0].value.shape();
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; r * c];
        for j in 0..c {
            let mut max = f64::NEG_INFINITY;
            for i in 0..r {
                max = max.max(src[i * c + j]);
            }
            let mut sum = 0.0;
            for i in 0..r {
                let e = math::exp(src[i * c + j] - max);
                data[i * c + j] = e;
                sum += e;
            }
            for i in 0..r {
                data[i * c + j] /= sum;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, c, data), Op::SoftmaxCols(a), rg)
    }

    /// Column-wise mean: `(d x n) -> (d x 1)`.
    pub fn mean_cols(&mut self, a: NodeId) -> NodeId {
        let (d, n) = self.nodes[a.0].value.shape();
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..n {
                acc += src[i * n + j];
            }
            data[i] = acc / n as f64;
        }
        let rg = self.rg(a);
        self.push(Tensor::from_vec(d, 1, data), Op::MeanCols(a), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let len = self.nodes[a.0].value.len();
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s / len as f64), Op::MeanAll(a), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        self.scalar_broadcast("add_scalar", a, s, 1.0)
    }

    pub fn sub_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        self.scalar_broadcast("sub_scalar", a, s, -1.0)
    }

    fn scalar_broadcast(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        s: NodeId,
        sign: f64,
    ) -> Result<NodeId, TensorError> {
        let (r, c) = self.nodes[a.0].value.shape();
        let ss = self.nodes[s.0].value.shape();
        if ss != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                a: (r, c),
                b: ss,
            });
        }
        let sv = self.nodes[s.0].value.data[0];
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data
            .iter()
            .map(|&x| x + sign * sv)
            .collect();
        let rg = self.rg(a) || self.rg(s);
        let op = if sign > 0.0 {
            Op::AddScalar(a, s)
        } else {
            Op::SubScalar(a, s)
        };
        Ok(self.push(Tensor::from_vec(r, c, data), op, rg))
    }

    /// Extract one element (flat, row-major index) as a scalar node.
    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId, TensorError> {
        let t = &self.nodes[a.0].value;
        if index >= t.len() {
            return Err(TensorError::ShapeMismatch {
                op: "pick",
                a: t.shape(),
                b: (index, 0),
            });
        }
        let v = t.data[index];
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, index), rg))
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa != sb {
            return Err(TensorError::ShapeMismatch { op: "mse", a: sa, b: sb });
        }
        let len = self.nodes[a.0].value.len() as f64;
        let s: f64 = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| math::sq(x - y))
            .sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(s / len), Op::Mse(a, b), rg))
    }

    /// Reinterpret the data with a new shape of the same length.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, TensorError> {
        let t = &self.nodes[a.0].value;
        if rows * cols != t.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                a: t.shape(),
                b: (rows, cols),
            });
        }
        let data = t.data.clone();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_vec(rows, cols, data), Op::Reshape(a), rg))
    }

    /// Contiguous row slice `[start, start+rows)`.
    pub fn slice_rows(
        &mut self,
        a: NodeId,
        start: usize,
        rows: usize,
    ) -> Result<NodeId, TensorError> {
        let (r, c) = self.nodes[a.0].value.shape();
        if start + rows > r {
            return Err(TensorError::ShapeMismatch {
                op: "slice_rows",
                a: (r, c),
                b: (start, rows),
            });
        }
        let data = self.nodes[a.0].value.data[start * c..(start + rows) * c].to_vec();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::from_vec(rows, c, data),
            Op::SliceRows(a, start, rows),
            rg,
        ))
    }

    /// Multiply a tensor by a (1, 1) scalar node.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.nodes[a.0].value.shape();
        let ss = self.nodes[s.0].value.shape();
        if ss != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "mul_scalar",
                a: (r, c),
                b: ss,
            });
        }
        let sv = self.nodes[s.0].value.data[0];
        let data: Vec<f64> = self.nodes[a.0].value.data.iter().map(|&x| x * sv).collect();
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Tensor::from_vec(r, c, data), Op::MulScalar(a, s), rg))
    }

    /// Stack column vectors vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.cols != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    a: t.shape(),
                    b: (t.rows, 1),
                });
            }
            data.extend_from_slice(&t.data);
            rg |= self.rg(p);
        }
        let rows = data.len();
        Ok(self.push(
            Tensor::from_vec(rows, 1, data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// GIN-style neighborhood aggregation over node columns:
    /// `out[:, v] = (1 + eps) * x[:, v] + sum_{u in N(v)} x[:, u]`.
    pub fn neighbor_sum(
        &mut self,
        a: NodeId,
        adj: &Arc<Adjacency>,
        eps: f64,
    ) -> Result<NodeId, TensorError> {
        let (d, n) = self.nodes[a.0].value.shape();
        if n != adj.n {
            return Err(TensorError::ShapeMismatch {
                op: "neighbor_sum",
                a: (d, n),
                b: (adj.n, 0),
            });
        }
        let src = &self.nodes[a.0].value.data;
        let data = aggregate(src, d, adj, eps);
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::from_vec(d, n, data),
            Op::NeighborSum(a, Arc::clone(adj), eps),
            rg,
        ))
    }

    // -- backward -------------------------------------------------------------

    /// Populate gradients of every node reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        let shape = self.nodes[loss.0].value.shape();
        if shape != (1, 1) {
            return Err(TensorError::NonScalarLoss { shape });
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if self.nodes[id].grad.is_none() || !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let (parents, current) = self.nodes.split_at_mut(id);
            let node = &mut current[0];
            let grad = node.grad.as_ref().unwrap();
            let value = &node.value;

            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ra, ca) = parents[a.0].value.shape();
                    let cb = parents[b.0].value.cols;
                    if parents[a.0].requires_grad {
                        // dA = dC * B^T
                        let contrib = mat_mul_nt(grad, ra, cb, &parents[b.0].value.data, ca);
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; ra * ca]), &contrib);
                    }
                    if parents[b.0].requires_grad {
                        // dB = A^T * dC
                        let contrib = mat_mul_tn(&parents[a.0].value.data, ra, ca, grad, cb);
                        add_into(parents[b.0].grad.get_or_insert_with(|| vec![0.0; ca * cb]), &contrib);
                    }
                }
                Op::Transpose(a) => {
                    if parents[a.0].requires_grad {
                        let (r, c) = parents[a.0].value.shape();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; r * c]);
                        // grad has shape (c, r)
                        for i in 0..c {
                            for j in 0..r {
                                g[j * c + i] += grad[i * r + j];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for p in [a, b] {
                        if parents[p.0].requires_grad {
                            let len = parents[p.0].value.len();
                            add_into(parents[p.0].grad.get_or_insert_with(|| vec![0.0; len]), grad);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]), grad);
                    }
                    if parents[b.0].requires_grad {
                        let len = parents[b.0].value.len();
                        let g = parents[b.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for (gi, &d) in g.iter_mut().zip(grad) {
                            *gi -= d;
                        }
                    }
                }
                Op::Scale(a, factor) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for (gi, &d) in g.iter_mut().zip(grad) {
                            *gi += factor * d;
                        }
                    }
                }
                Op::Hadamard(a, b) => {
                    if parents[a.0].requires_grad {
                        let mut g = take_grad(parents, a.0);
                        for ((gi, &d), &o) in
                            g.iter_mut().zip(grad).zip(&parents[b.0].value.data)
                        {
                            *gi += d * o;
                        }
                        parents[a.0].grad = Some(g);
                    }
                    if parents[b.0].requires_grad {
                        let mut g = take_grad(parents, b.0);
                        for ((gi, &d), &o) in
                            g.iter_mut().zip(grad).zip(&parents[a.0].value.data)
                        {
                            *gi += d * o;
                        }
                        parents[b.0].grad = Some(g);
                    }
                }
                Op::ColBroadcastMul(a, v) => {
                    let (d, n) = parents[a.0].value.shape();
                    if parents[a.0].requires_grad {
                        let mut g = take_grad(parents, a.0);
                        let factors = &parents[v.0].value.data;
                        for i in 0..d {
                            for j in 0..n {
                                g[i * n + j] += grad[i * n + j] * factors[j];
                            }
                        }
                        parents[a.0].grad = Some(g);
                    }
                    if parents[v.0].requires_grad {
                        let mut g = take_grad(parents, v.0);
                        let base = &parents[a.0].value.data;
                        for j in 0..n {
                            let mut acc = 0.0;
                            for i in 0..d {
                                acc += grad[i * n + j] * base[i * n + j];
                            }
                            g[j] += acc;
                        }
                        parents[v.0].grad = Some(g);
                    }
                }
                Op::AddColVec(a, bias) => {
                    let (d, n) = parents[a.0].value.shape();
                    if parents[a.0].requires_grad {
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; d * n]), grad);
                    }
                    if parents[bias.0].requires_grad {
                        let g = parents[bias.0].grad.get_or_insert_with(|| vec![0.0; d]);
                        for i in 0..d {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grad[i * n + j];
                            }
                            g[i] += acc;
                        }
                    }
                }
                Op::Relu(a) => {
                    if parents[a.0].requires_grad {
                        let mut g = take_grad(parents, a.0);
                        for ((gi, &d), &x) in
                            g.iter_mut().zip(grad).zip(&parents[a.0].value.data)
                        {
                            if x > 0.0 {
                                *gi += d;
                            }
                        }
                        parents[a.0].grad = Some(g);
                    }
                }
                Op::SoftmaxRows(a) => {
                    if parents[a.0].requires_grad {
                        let (r, c) = value.shape();
                        let y = &value.data;
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; r * c]);
                        for i in 0..r {
                            let row = &y[i * c..(i + 1) * c];
                            let grow = &grad[i * c..(i + 1) * c];
                            let dot: f64 = row.iter().zip(grow).map(|(&yi, &gi)| yi * gi).sum();
                            for j in 0..c {
                                g[i * c + j] += row[j] * (grow[j] - dot);
                            }
                        }
                    }
                }
                Op::SoftmaxCols(a) => {
                    if parents[a.0].requires_grad {
                        let (r, c) = value.shape();
                        let y = &value.data;
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; r * c]);
                        for j in 0..c {
                            let mut dot = 0.0;
                            for i in 0..r {
                                dot += y[i * c + j] * grad[i * c + j];
                            }
                            for i in 0..r {
                                g[i * c + j] += y[i * c + j] * (grad[i * c + j] - dot);
                            }
                        }
                    }
                }
                Op::MeanCols(a) => {
                    if parents[a.0].requires_grad {
                        let (d, n) = parents[a.0].value.shape();
                        let inv = 1.0 / n as f64;
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; d * n]);
                        for i in 0..d {
                            for j in 0..n {
                                g[i * n + j] += grad[i] * inv;
                            }
                        }
                    }
                }
                Op::SumAll(a) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for gi in g.iter_mut() {
                            *gi += grad[0];
                        }
                    }
                }
                Op::MeanAll(a) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        let inv = 1.0 / len as f64;
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for gi in g.iter_mut() {
                            *gi += grad[0] * inv;
                        }
                    }
                }
                Op::AddScalar(a, s) | Op::SubScalar(a, s) => {
                    let sign = if matches!(op, Op::AddScalar(..)) { 1.0 } else { -1.0 };
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]), grad);
                    }
                    if parents[s.0].requires_grad {
                        let total: f64 = grad.iter().sum();
                        let g = parents[s.0].grad.get_or_insert_with(|| vec![0.0; 1]);
                        g[0] += sign * total;
                    }
                }
                Op::Pick(a, index) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        g[index] += grad[0];
                    }
                }
                Op::Mse(a, b) => {
                    let len = parents[a.0].value.len();
                    let scale = 2.0 * grad[0] / len as f64;
                    let diff: Vec<f64> = parents[a.0]
                        .value
                        .data
                        .iter()
                        .zip(&parents[b.0].value.data)
                        .map(|(&x, &y)| x - y)
                        .collect();
                    if parents[a.0].requires_grad {
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for (gi, &d) in g.iter_mut().zip(&diff) {
                            *gi += scale * d;
                        }
                    }
                    if parents[b.0].requires_grad {
                        let g = parents[b.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for (gi, &d) in g.iter_mut().zip(&diff) {
                            *gi -= scale * d;
                        }
                    }
                }
                Op::Reshape(a) => {
                    if parents[a.0].requires_grad {
                        let len = parents[a.0].value.len();
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]), grad);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = parents[p.0].value.len();
                        if parents[p.0].requires_grad {
                            let g = parents[p.0].grad.get_or_insert_with(|| vec![0.0; len]);
                            add_into(g, &grad[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::SliceRows(a, start, _rows) => {
                    if parents[a.0].requires_grad {
                        let (r, c) = parents[a.0].value.shape();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; r * c]);
                        add_into(&mut g[start * c..start * c + grad.len()], grad);
                    }
                }
                Op::MulScalar(a, s) => {
                    if parents[a.0].requires_grad {
                        let sv = parents[s.0].value.data[0];
                        let len = parents[a.0].value.len();
                        let g = parents[a.0].grad.get_or_insert_with(|| vec![0.0; len]);
                        for (gi, &d) in g.iter_mut().zip(grad) {
                            *gi += sv * d;
                        }
                    }
                    if parents[s.0].requires_grad {
                        let dot: f64 = parents[a.0]
                            .value
                            .data
                            .iter()
                            .zip(grad)
                            .map(|(&x, &d)| x * d)
                            .sum();
                        let g = parents[s.0].grad.get_or_insert_with(|| vec![0.0; 1]);
                        g[0] += dot;
                    }
                }
                Op::NeighborSum(a, adj, eps) => {
                    if parents[a.0].requires_grad {
                        let (d, n) = parents[a.0].value.shape();
                        // the aggregation matrix is symmetric, so backward
                        // applies the same operator to the gradient
                        let contrib = aggregate(grad, d, &adj, eps);
                        add_into(parents[a.0].grad.get_or_insert_with(|| vec![0.0; d * n]), &contrib);
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Detach a node's gradient buffer (zeros when absent) so a sibling node can
/// be read immutably while accumulating into it.
#[inline]
fn take_grad(nodes: &mut [Node], id: usize) -> Vec<f64> {
    match nodes[id].grad.take() {
        Some(g) => g,
        None => vec![0.0; nodes[id].value.len()],
    }
}

/// `A (ra x ca) * B (ca x cb)`, row-major; ikj loop order.
fn mat_mul(a: &[f64], ra: usize, ca: usize, b: &[f64], cb: usize) -> Vec<f64> {
    let mut out = vec![0.0; ra * cb];
    for i in 0..ra {
        for k in 0..ca {
            let f = a[i * ca + k];
            if f == 0.0 {
                continue;
            }
            let brow = &b[k * cb..(k + 1) * cb];
            let orow = &mut out[i * cb..(i + 1) * cb];
            for j in 0..cb {
                orow[j] += f * brow[j];
            }
        }
    }
    out
}

/// `A (ra x ca) * B^T` where B is `(rb x ca)`; result `(ra x rb)`.
fn mat_mul_nt(a: &[f64], ra: usize, ca: usize, b: &[f64], rb: usize) -> Vec<f64> {
    let mut out = vec![0.0; ra * rb];
    for i in 0..ra {
        let arow = &a[i * ca..(i + 1) * ca];
        for j in 0..rb {
            let brow = &b[j * ca..(j + 1) * ca];
            let mut acc = 0.0;
            for k in 0..ca {
                acc += arow[k] * brow[k];
            }
            out[i * rb + j] = acc;
        }
    }
    out
}

/// `A^T * B` where A is `(ra x ca)` and B `(ra x cb)`; result `(ca x cb)`.
fn mat_mul_tn(a: &[f64], ra: usize, ca: usize, b: &[f64], cb: usize) -> Vec<f64> {
    let mut out = vec![0.0; ca * cb];
    for k in 0..ra {
        let arow = &a[k * ca..(k + 1) * ca];
        let brow = &b[k * cb..(k + 1) * cb];
        for i in 0..ca {
            let f = arow[i];
            if f == 0.0 {
                continue;
            }
            let orow = &mut out[i * cb..(i + 1) * cb];
            for j in 0..cb {
                orow[j] += f * brow[j];
            }
        }
    }
    out
}

fn aggregate(src: &[f64], d: usize, adj: &Adjacency, eps: f64) -> Vec<f64> {
    let n = adj.n;
    let mut out = vec![0.0; d * n];
    let self_w = 1.0 + eps;
    for v in 0..n {
        for i in 0..d {
            out[i * n + v] = self_w * src[i * n + v];
        }
        for &u in adj.neighbors_of(v) {
            for i in 0..d {
                out[i * n + v] += src[i * n + u];
            }
        }
    }
    out
}
