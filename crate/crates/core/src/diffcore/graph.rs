use std::collections::HashMap;

use super::fsum::fsum;
use super::tensor::{gemm, Tensor};
use crate::error::{invalid, shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary op is broadcast against the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// Right operand is a vector matching the last axis of the left.
    Row,
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Constant(Tensor),
    Add(NodeId, NodeId, Bcast),
    Sub(NodeId, NodeId, Bcast),
    Mul(NodeId, NodeId, Bcast),
    Neg(NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    /// `[m,k] x [k,n]`, or `[m,k] x [n,k]ᵀ` when the flag is set.
    MatMul(NodeId, NodeId, bool),
    Relu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Sum(NodeId),
    SumRows(NodeId),
    LogSumExp {
        input: NodeId,
        rows: bool,
        mean: bool,
    },
    Gather {
        input: NodeId,
        axis: usize,
        perm: Vec<usize>,
    },
    Slice {
        input: NodeId,
        offset: usize,
    },
    Reshape(NodeId),
    StackCols(Vec<NodeId>),
    Pick {
        input: NodeId,
        index: Vec<usize>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// A symbolic computation over tensors, built node by node.
///
/// Shapes are checked when a node is added, so a graph that builds is a graph
/// that evaluates. Node ids are handed out in insertion order, which is a
/// topological order.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    output: Option<NodeId>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn is_scalar_shape(shape: &[usize]) -> bool {
    numel(shape) == 1 && shape.len() <= 1
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

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// All parameter nodes, in declaration order.
    pub fn params(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Param))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&[usize]> {
        match self.nodes.get(id.0) {
            Some(n) => Ok(&n.shape),
            None => invalid(format!("node {} does not belong to this graph", id.0)),
        }
    }

    pub fn param(&mut self, shape: &[usize]) -> NodeId {
        self.push(Op::Param, shape.to_vec())
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Constant(t), shape)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    fn bcast(&self, a: NodeId, b: NodeId) -> Result<Bcast> {
        let sa = self.check(a)?;
        let sb = self.check(b)?;
        if sa == sb {
            Ok(Bcast::Same)
        } else if is_scalar_shape(sb) {
            Ok(Bcast::Scalar)
        } else if sb.len() == 1 && !sa.is_empty() && sa[sa.len() - 1] == sb[0] {
            Ok(Bcast::Row)
        } else {
            shape_err(format!("cannot broadcast {sb:?} against {sa:?}"))
        }
    }

    /// Elementwise `a + b`; `b` may be a scalar or a vector matching the last axis of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bc = self.bcast(a, b)?;
        let s = self.shape(a).to_vec();
        Ok(self.push(Op::Add(a, b, bc), s))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bc = self.bcast(a, b)?;
        let s = self.shape(a).to_vec();
        Ok(self.push(Op::Sub(a, b, bc), s))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bc = self.bcast(a, b)?;
        let s = self.shape(a).to_vec();
        Ok(self.push(Op::Mul(a, b, bc), s))
    }

    fn unary(&mut self, a: NodeId, op: Op) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        Ok(self.push(op, s))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, Op::Offset(a, c))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Log(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Op::Square(a))
    }

    fn matmul_impl(&mut self, a: NodeId, b: NodeId, bt: bool) -> Result<NodeId> {
        let sa = self.check(a)?.to_vec();
        let sb = self.check(b)?.to_vec();
        if sa.len() != 2 || sb.len() != 2 {
            return shape_err(format!("matmul needs matrices, got {sa:?} and {sb:?}"));
        }
        let (k2, n) = if bt { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if sa[1] != k2 {
            return shape_err(format!("matmul inner dims {sa:?} x {sb:?} (transposed: {bt})"));
        }
        Ok(self.push(Op::MatMul(a, b, bt), vec![sa[0], n]))
    }

    /// `a · b` for `a: [m,k]`, `b: [k,n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `a: [m,k]`, `b: [n,k]`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_impl(a, b, true)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        Ok(self.push(Op::Sum(a), vec![]))
    }

    /// Sum over the last axis of a matrix: `[m,n] -> [m]`.
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        if s.len() != 2 {
            return shape_err(format!("sum_rows needs a matrix, got {s:?}"));
        }
        Ok(self.push(Op::SumRows(a), vec![s[0]]))
    }

    fn lse(&mut self, a: NodeId, rows: bool, mean: bool) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        if numel(&s) == 0 {
            return invalid("logsumexp of an empty tensor");
        }
        let out = if rows {
            if s.len() != 2 || s[1] == 0 {
                return shape_err(format!("row-wise logsumexp needs a matrix, got {s:?}"));
            }
            vec![s[0]]
        } else {
            vec![]
        };
        Ok(self.push(Op::LogSumExp { input: a, rows, mean }, out))
    }

    /// `log Σ exp(aᵢ)` over all entries.
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.lse(a, false, false)
    }

    /// Row-wise `log Σⱼ exp(a[i,j])`.
    pub fn logsumexp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.lse(a, true, false)
    }

    /// Row-wise `log (1/n) Σⱼ exp(a[i,j])`. Rows of identical entries map to
    /// that entry exactly.
    pub fn logmeanexp_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.lse(a, true, true)
    }

    /// `out[.., i, ..] = a[.., perm[i], ..]` along `axis`.
    pub fn permute_gather(&mut self, a: NodeId, axis: usize, perm: &[usize]) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        if axis >= s.len() {
            return shape_err(format!("axis {axis} out of range for {s:?}"));
        }
        check_bijection(perm, s[axis])?;
        Ok(self.push(
            Op::Gather {
                input: a,
                axis,
                perm: perm.to_vec(),
            },
            s,
        ))
    }

    /// Contiguous range of the flattened input, viewed with `shape`.
    pub fn slice(&mut self, a: NodeId, offset: usize, shape: &[usize]) -> Result<NodeId> {
        let total = numel(self.check(a)?);
        if offset + numel(shape) > total {
            return shape_err(format!(
                "slice [{offset}, {}) exceeds {total} values",
                offset + numel(shape)
            ));
        }
        Ok(self.push(Op::Slice { input: a, offset }, shape.to_vec()))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        if s.len() != 2 || i >= s[0] {
            return shape_err(format!("row {i} of {s:?}"));
        }
        self.slice(a, i * s[1], &[s[1]])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let s = self.check(a)?;
        if numel(s) != numel(shape) {
            return shape_err(format!("reshape {s:?} to {shape:?}"));
        }
        Ok(self.push(Op::Reshape(a), shape.to_vec()))
    }

    /// Stack `k` vectors of length `m` as the columns of an `[m,k]` matrix.
    pub fn stack_cols(&mut self, cols: &[NodeId]) -> Result<NodeId> {
        if cols.is_empty() {
            return invalid("stack_cols of no columns");
        }
        let m = {
            let s = self.check(cols[0])?;
            if s.len() != 1 {
                return shape_err(format!("stack_cols needs vectors, got {s:?}"));
            }
            s[0]
        };
        for &c in cols {
            if self.check(c)? != [m] {
                return shape_err(format!("stack_cols length mismatch: {:?} vs [{m}]", self.shape(c)));
            }
        }
        Ok(self.push(Op::StackCols(cols.to_vec()), vec![m, cols.len()]))
    }

    /// `out[i] = a[i, index[i]]` for a matrix `a`.
    pub fn pick(&mut self, a: NodeId, index: &[usize]) -> Result<NodeId> {
        let s = self.check(a)?.to_vec();
        if s.len() != 2 || s[0] != index.len() {
            return shape_err(format!("pick {} indices from {s:?}", index.len()));
        }
        if let Some(&bad) = index.iter().find(|&&j| j >= s[1]) {
            return invalid(format!("index {bad} out of range for {} columns", s[1]));
        }
        Ok(self.push(
            Op::Pick {
                input: a,
                index: index.to_vec(),
            },
            vec![s[0]],
        ))
    }

    /// Designate the scalar node whose gradient [`Forward::backward`] computes.
    pub fn set_output(&mut self, id: NodeId) -> Result<()> {
        let s = self.check(id)?;
        if !is_scalar_shape(s) {
            return shape_err(format!("output must be scalar, got shape {s:?}"));
        }
        self.output = Some(id);
        Ok(())
    }

    /// Evaluate every node given values for all parameters.
    pub fn forward(&self, bindings: &HashMap<NodeId, Tensor>) -> Result<Forward<'_>> {
        for id in bindings.keys() {
            match self.nodes.get(id.0) {
                Some(Node { op: Op::Param, .. }) => {}
                _ => return invalid(format!("node {} is not a parameter", id.0)),
            }
        }
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match &node.op {
                Op::Param => {
                    let t = bindings
                        .get(&NodeId(i))
                        .ok_or_else(|| Error::InvalidArgument(format!("parameter {i} is unbound")))?;
                    if t.shape() != node.shape.as_slice() {
                        return shape_err(format!(
                            "parameter {i} declared {:?}, bound {:?}",
                            node.shape,
                            t.shape()
                        ));
                    }
                    t.clone()
                }
                op => eval_op(op, &node.shape, &values),
            };
            values.push(v);
        }
        Ok(Forward { graph: self, values })
    }
}

fn check_bijection(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::NotBijective(format!(
            "permutation of length {} on an axis of length {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::NotBijective(format!("{perm:?}")));
        }
        seen[p] = true;
    }
    Ok(())
}

fn binary(a: &Tensor, b: &Tensor, bc: Bcast, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (ad, bd) = (a.data(), b.data());
    match bc {
        Bcast::Same => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Bcast::Scalar => {
            let y = bd[0];
            ad.iter().map(|&x| f(x, y)).collect()
        }
        Bcast::Row => {
            let n = bd.len();
            ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % n])).collect()
        }
    }
}

/// Fold a gradient of the broadcast shape back onto the right operand.
fn reduce_bcast(g: Vec<f64>, bc: Bcast, n: usize) -> Vec<f64> {
    match bc {
        Bcast::Same => g,
        Bcast::Scalar => vec![fsum(g)],
        Bcast::Row => {
            let m = g.len() / n;
            (0..n).map(|j| fsum((0..m).map(|i| g[i * n + j]))).collect()
        }
    }
}

fn lse_slice(v: &[f64], mean: bool) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    let s = fsum(v.iter().map(|&x| (x - m).exp()));
    if mean {
        m + (s / v.len() as f64).ln()
    } else {
        m + s.ln()
    }
}

fn gather_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

fn eval_op(op: &Op, shape: &[usize], vals: &[Tensor]) -> Tensor {
    let v = |id: &NodeId| &vals[id.0];
    let map = |id: &NodeId, f: &dyn Fn(f64) -> f64| v(id).data().iter().map(|&x| f(x)).collect::<Vec<_>>();
    let data = match op {
        Op::Param => unreachable!("parameters are bound, not evaluated"),
        Op::Constant(t) => return t.clone(),
        Op::Add(a, b, bc) => binary(v(a), v(b), *bc, |x, y| x + y),
        Op::Sub(a, b, bc) => binary(v(a), v(b), *bc, |x, y| x - y),
        Op::Mul(a, b, bc) => binary(v(a), v(b), *bc, |x, y| x * y),
        Op::Neg(a) => map(a, &|x| -x),
        Op::Scale(a, c) => map(a, &|x| x * c),
        Op::Offset(a, c) => map(a, &|x| x + c),
        Op::Relu(a) => map(a, &|x| if x > 0.0 { x } else { 0.0 }),
        Op::Tanh(a) => map(a, &f64::tanh),
        Op::Exp(a) => map(a, &f64::exp),
        Op::Log(a) => map(a, &f64::ln),
        Op::Square(a) => map(a, &|x| x * x),
        Op::MatMul(a, b, bt) => {
            let (ta, tb) = (v(a), v(b));
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = shape[1];
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, ta.data(), false, tb.data(), *bt, &mut out, false);
            out
        }
        Op::Sum(a) => vec![fsum(v(a).data().iter().copied())],
        Op::SumRows(a) => {
            let t = v(a);
            (0..t.rows()).map(|i| fsum(t.row(i).iter().copied())).collect()
        }
        Op::LogSumExp { input, rows, mean } => {
            let t = v(input);
            if *rows {
                (0..t.rows()).map(|i| lse_slice(t.row(i), *mean)).collect()
            } else {
                vec![lse_slice(t.data(), *mean)]
            }
        }
        Op::Gather { input, axis, perm } => {
            let t = v(input);
            let (outer, len, inner) = gather_dims(t.shape(), *axis);
            let src = t.data();
            let mut out = Vec::with_capacity(src.len());
            for o in 0..outer {
                for &p in perm.iter() {
                    let base = (o * len + p) * inner;
                    out.extend_from_slice(&src[base..base + inner]);
                }
            }
            debug_assert_eq!(out.len(), src.len());
            out
        }
        Op::Slice { input, offset } => v(input).data()[*offset..*offset + numel(shape)].to_vec(),
        Op::Reshape(a) => v(a).data().to_vec(),
        Op::StackCols(cols) => {
            let (m, k) = (shape[0], shape[1]);
            let mut out = vec![0.0; m * k];
            for (j, c) in cols.iter().enumerate() {
                for (i, &x) in v(c).data().iter().enumerate() {
                    out[i * k + j] = x;
                }
            }
            out
        }
        Op::Pick { input, index } => {
            let t = v(input);
            index.iter().enumerate().map(|(i, &j)| t.get(i, j)).collect()
        }
    };
    Tensor::new(shape.to_vec(), data).expect("shapes are validated at build time")
}

/// Values of every node after a forward pass.
#[derive(Debug)]
pub struct Forward<'g> {
    graph: &'g Graph,
    values: Vec<Tensor>,
}

/// Gradients of the graph output with respect to each parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    map: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.map.iter()
    }

    pub fn into_map(self) -> HashMap<NodeId, Tensor> {
        self.map
    }
}

impl<'g> Forward<'g> {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    /// Scalar value of a node that holds exactly one element.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.values[id.0].item()
    }

    pub fn output(&self) -> Result<f64> {
        match self.graph.output {
            Some(id) => Ok(self.scalar(id)),
            None => invalid("graph has no designated output"),
        }
    }

    /// Reverse-mode pass from the designated output.
    pub fn backward(&self) -> Result<Gradients> {
        let out = match self.graph.output {
            Some(id) => id,
            None => return invalid("graph has no designated output"),
        };
        let nodes = &self.graph.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[out.0] = Some(vec![1.0]);

        for i in (0..=out.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[i];
            if matches!(node.op, Op::Param) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.shape, i, &g, &mut grads);
        }

        let mut map = HashMap::new();
        for id in self.graph.params() {
            let shape = nodes[id.0].shape.clone();
            let data = grads[id.0].take().unwrap_or_else(|| vec![0.0; numel(&shape)]);
            map.insert(id, Tensor::new(shape, data)?);
        }
        Ok(Gradients { map })
    }

    fn propagate(&self, op: &Op, shape: &[usize], me: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |id: &NodeId| self.values[id.0].data();
        let mut acc = |id: &NodeId, delta: &[f64]| {
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; delta.len()]);
            for (s, d) in slot.iter_mut().zip(delta) {
                *s += d;
            }
        };
        let zip = |a: &NodeId, f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
            val(a).iter().zip(g).map(|(&x, &gi)| f(x, gi)).collect()
        };
        match op {
            Op::Param | Op::Constant(_) => {}
            Op::Add(a, b, bc) => {
                acc(a, g);
                let n = self.values[b.0].len();
                acc(b, &reduce_bcast(g.to_vec(), *bc, n));
            }
            Op::Sub(a, b, bc) => {
                acc(a, g);
                let n = self.values[b.0].len();
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                acc(b, &reduce_bcast(neg, *bc, n));
            }
            Op::Mul(a, b, bc) => {
                let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
                let ga = binary(
                    &Tensor::new(shape.to_vec(), g.to_vec()).expect("same shape"),
                    tb,
                    *bc,
                    |x, y| x * y,
                );
                let gb_full: Vec<f64> = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(a, &ga);
                acc(b, &reduce_bcast(gb_full, *bc, tb.len()));
            }
            Op::Neg(a) => acc(a, &g.iter().map(|x| -x).collect::<Vec<_>>()),
            Op::Scale(a, c) => acc(a, &g.iter().map(|x| x * c).collect::<Vec<_>>()),
            Op::Offset(a, _) => acc(a, g),
            Op::Relu(a) => acc(a, &zip(a, &|x, gi| if x > 0.0 { gi } else { 0.0 })),
            Op::Tanh(a) => {
                let y = self.values[me].data();
                let d: Vec<f64> = y.iter().zip(g).map(|(y, gi)| gi * (1.0 - y * y)).collect();
                acc(a, &d);
            }
            Op::Exp(a) => {
                let y = self.values[me].data();
                let d: Vec<f64> = y.iter().zip(g).map(|(y, gi)| gi * y).collect();
                acc(a, &d);
            }
            Op::Log(a) => acc(a, &zip(a, &|x, gi| gi / x)),
            Op::Square(a) => acc(a, &zip(a, &|x, gi| 2.0 * x * gi)),
            Op::MatMul(a, b, bt) => {
                let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = shape[1];
                // C = A·B: dA = G·Bᵀ, dB = Aᵀ·G.  C = A·Bᵀ: dA = G·B, dB = Gᵀ·A.
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g, false, tb.data(), !*bt, &mut da, false);
                let mut db = vec![0.0; k * n];
                if *bt {
                    gemm(n, m, k, g, true, ta.data(), false, &mut db, false);
                } else {
                    gemm(k, m, n, ta.data(), true, g, false, &mut db, false);
                }
                acc(a, &da);
                acc(b, &db);
            }
            Op::Sum(a) => {
                let n = self.values[a.0].len();
                acc(a, &vec![g[0]; n]);
            }
            Op::SumRows(a) => {
                let t = &self.values[a.0];
                let c = t.cols();
                let d: Vec<f64> = (0..t.len()).map(|idx| g[idx / c]).collect();
                acc(a, &d);
            }
            Op::LogSumExp { input, rows, .. } => {
                let t = &self.values[input.0];
                let y = self.values[me].data();
                let c = if *rows { t.cols() } else { t.len() };
                let d: Vec<f64> = t
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(idx, &x)| {
                        let r = idx / c;
                        // d/dx of log-mean-exp equals that of log-sum-exp: exp(x - lse).
                        let lse = if let Op::LogSumExp { mean: true, .. } = op {
                            y[r] + (c as f64).ln()
                        } else {
                            y[r]
                        };
                        g[r] * (x - lse).exp()
                    })
                    .collect();
                acc(input, &d);
            }
            Op::Gather { input, axis, perm } => {
                let (outer, len, inner) = gather_dims(shape, *axis);
                let mut d = vec![0.0; g.len()];
                for o in 0..outer {
                    for (i, &p) in perm.iter().enumerate() {
                        let src = (o * len + i) * inner;
                        let dst = (o * len + p) * inner;
                        d[dst..dst + inner].copy_from_slice(&g[src..src + inner]);
                    }
                }
                acc(input, &d);
            }
            Op::Slice { input, offset } => {
                let n = self.values[input.0].len();
                let slot = grads[input.0].get_or_insert_with(|| vec![0.0; n]);
                for (s, d) in slot[*offset..*offset + g.len()].iter_mut().zip(g) {
                    *s += d;
                }
            }
            Op::Reshape(a) => acc(a, g),
            Op::StackCols(cols) => {
                let k = cols.len();
                for (j, c) in cols.iter().enumerate() {
                    let d: Vec<f64> = (0..shape[0]).map(|i| g[i * k + j]).collect();
                    acc(c, &d);
                }
            }
            Op::Pick { input, index } => {
                let t = &self.values[input.0];
                let c = t.cols();
                let slot = grads[input.0].get_or_insert_with(|| vec![0.0; t.len()]);
                for (i, &j) in index.iter().enumerate() {
                    slot[i * c + j] += g[i];
                }
            }
        }
    }
}

/// Evaluate `graph`'s output and its gradient with respect to every parameter.
pub fn eval_and_grad(graph: &Graph, bindings: &HashMap<NodeId, Tensor>) -> Result<(f64, Gradients)> {
    if graph.output.is_none() {
        return invalid("graph has no designated output");
    }
    let fwd = graph.forward(bindings)?;
    let value = fwd.output()?;
    let grads = fwd.backward()?;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(NodeId, Tensor)]) -> HashMap<NodeId, Tensor> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn square_at_three() {
        let mut g = Graph::new();
        let x = g.param(&[]);
        let y = g.mul(x, x).unwrap();
        g.set_output(y).unwrap();
        let (v, gr) = eval_and_grad(&g, &bind(&[(x, Tensor::scalar(3.0))])).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(gr.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn relu_piecewise() {
        for (x0, v0, d0) in [(-1.0, 0.0, 0.0), (2.0, 2.0, 1.0), (0.0, 0.0, 0.0)] {
            let mut g = Graph::new();
            let x = g.param(&[]);
            let y = g.relu(x).unwrap();
            g.set_output(y).unwrap();
            let (v, gr) = eval_and_grad(&g, &bind(&[(x, Tensor::scalar(x0))])).unwrap();
            assert_eq!(v, v0);
            assert_eq!(gr.get(x).unwrap().item(), d0);
        }
    }

    #[test]
    fn rejects_bad_bindings_and_outputs() {
        let mut g = Graph::new();
        let x = g.param(&[2]);
        assert!(g.set_output(x).is_err());
        let s = g.sum(x).unwrap();
        g.set_output(s).unwrap();
        assert!(matches!(
            eval_and_grad(&g, &bind(&[(x, Tensor::vector(vec![1.0; 3]))])),
            Err(Error::Shape(_))
        ));
        assert!(eval_and_grad(&g, &HashMap::new()).is_err());
    }

    #[test]
    fn logsumexp_values() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let b = g.constant(Tensor::vector(vec![1000.0, 1000.0]));
        let c = g.constant(Tensor::vector(vec![-1.0, 2.0, 3.0]));
        let d = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let (la, lb) = (g.logsumexp(a).unwrap(), g.logsumexp(b).unwrap());
        let (lc, ld) = (g.logsumexp(c).unwrap(), g.logsumexp(d).unwrap());
        let f = g.forward(&HashMap::new()).unwrap();
        assert!((f.scalar(la) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(f.scalar(lb), 1000.0 + std::f64::consts::LN_2);
        let direct = |v: &[f64]| v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((f.scalar(lc) - direct(&[-1.0, 2.0, 3.0])).abs() < 1e-14);
        assert!((f.scalar(lc) - 3.326_563).abs() < 1e-6);
        assert!((f.scalar(ld) - 3.407_606).abs() < 1e-6);
        let e = g.constant(Tensor::vector(vec![]));
        assert!(g.logsumexp(e).is_err());
    }

    #[test]
    fn logmeanexp_of_equal_entries_is_exact() {
        let mut g = Graph::new();
        let v = -123.456_789_012_345_6;
        let a = g.constant(Tensor::matrix(1, 7, vec![v; 7]).unwrap());
        let l = g.logmeanexp_rows(a).unwrap();
        let f = g.forward(&HashMap::new()).unwrap();
        assert_eq!(f.value(l).data()[0].to_bits(), v.to_bits());
    }

    #[test]
    fn gather_swaps_and_scatters() {
        let mut g = Graph::new();
        let x = g.param(&[2]);
        let y = g.permute_gather(x, 0, &[1, 0]).unwrap();
        let w = g.constant(Tensor::vector(vec![10.0, 1.0]));
        let z = g.mul(y, w).unwrap();
        let s = g.sum(z).unwrap();
        g.set_output(s).unwrap();
        let b = bind(&[(x, Tensor::vector(vec![3.0, 5.0]))]);
        let f = g.forward(&b).unwrap();
        assert_eq!(f.value(y).data(), &[5.0, 3.0]);
        let gr = f.backward().unwrap();
        assert_eq!(gr.get(x).unwrap().data(), &[1.0, 10.0]);
        assert!(matches!(g.permute_gather(x, 0, &[0, 0]), Err(Error::NotBijective(_))));
    }

    #[test]
    fn unused_parameter_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(&[]);
        let y = g.param(&[3]);
        let s = g.square(x).unwrap();
        g.set_output(s).unwrap();
        let (_, gr) = eval_and_grad(
            &g,
            &bind(&[(x, Tensor::scalar(1.0)), (y, Tensor::vector(vec![1.0; 3]))]),
        )
        .unwrap();
        assert_eq!(gr.get(y).unwrap().data(), &[0.0; 3]);
    }
}
