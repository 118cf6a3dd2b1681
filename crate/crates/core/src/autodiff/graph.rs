//! A small reverse-mode engine over [`Tensor`] values.
//!
//! The graph is an append-only tape: every operation evaluates eagerly at
//! insertion and caches its forward value, so node indices are topologically
//! ordered by construction. The backward pass walks the tape once in reverse
//! insertion order, which makes gradient accumulation deterministic — the
//! same graph always produces bit-identical gradients.
//!
//! The operator set is exactly the closure needed by the ratio objectives:
//! matmul, add, broadcast row-add (bias), elementwise mul (with 1×1
//! broadcast), relu, exp, log, reciprocal, negate, sum, mean, and max against
//! a scalar constant. `relu` treats the kink as inactive (derivative 0 at 0);
//! `max_const` treats it as active (derivative 1 at the boundary), matching
//! the boundary-inclusive hinge rule of the corrected objective.

use super::tensor::Tensor;
use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf {
        param: bool,
    },
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `a (n×c) + b (1×c)`, adding `b` to every row of `a`.
    AddRow(NodeId, NodeId),
    /// Elementwise product; either side may be 1×1 (scalar broadcast).
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Recip(NodeId),
    Neg(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MaxConst(NodeId, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Recip(..) => "recip",
            Op::Neg(..) => "neg",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MaxConst(..) => "max_const",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of a scalar output with respect to every parameter leaf.
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient tensor for a parameter leaf. Panics if `id` is not a
    /// parameter of the graph the gradients came from.
    pub fn param(&self, id: NodeId) -> &Tensor {
        self.by_node[id]
            .as_ref()
            .expect("node is not a parameter leaf of this graph")
    }

    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(id).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: true }, value)
    }

    /// Leaf treated as a constant: no gradient is reported for it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: false }, value)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let mut v = va.clone();
        v.add_assign(vb);
        self.push(Op::Add(a, b), v)
    }

    /// Broadcast add of a 1×c row (bias) to every row of an n×c matrix.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(vb.rows(), 1, "add_row bias must be a single row");
        assert_eq!(va.cols(), vb.cols(), "add_row width mismatch");
        let mut v = va.clone();
        for r in 0..v.rows() {
            for c in 0..v.cols() {
                let x = v.get(r, c) + vb.get(0, c);
                v.set(r, c, x);
            }
        }
        self.push(Op::AddRow(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let v = if va.shape() == vb.shape() {
            let mut v = va.clone();
            for (x, y) in v.data_mut().iter_mut().zip(vb.data()) {
                *x *= y;
            }
            v
        } else if va.shape() == (1, 1) {
            vb.map(|x| va.item() * x)
        } else if vb.shape() == (1, 1) {
            va.map(|x| x * vb.item())
        } else {
            panic!("mul shape mismatch: {:?} vs {:?}", va.shape(), vb.shape());
        };
        self.push(Op::Mul(a, b), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.nodes[a].value.data().iter().sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let t = &self.nodes[a].value;
        assert!(!t.is_empty(), "mean of empty tensor");
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(a), v)
    }

    /// Elementwise `max(a, c)` against a scalar constant. The derivative at
    /// the boundary `a == c` is 1 (the argument is considered active).
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.map(|x| x.max(c));
        self.push(Op::MaxConst(a, c), v)
    }

    /// `a − b`, composed from add and neg.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    /// Hard clamp to `[lo, hi]`, with zero gradient strictly outside the
    /// interval: `min(max(x, lo), hi)` composed from max_const and neg.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        assert!(lo <= hi, "clamp requires lo <= hi");
        let lower = self.max_const(a, lo);
        let n = self.neg(lower);
        let upper = self.max_const(n, -hi);
        self.neg(upper)
    }

    /// Forward value of `output` plus gradients for every parameter leaf.
    ///
    /// Fails with [`Error::NonScalarOutput`] unless `output` is 1×1 and with
    /// [`Error::NonFiniteValue`] if any cached forward value up to `output`
    /// contains NaN or ±∞. Parameters with no path to the output get zero
    /// gradients; constant leaves get none.
    pub fn evaluate_with_grad(&self, output: NodeId) -> Result<(Tensor, Gradients)> {
        let out_val = &self.nodes[output].value;
        if out_val.shape() != (1, 1) {
            return Err(Error::NonScalarOutput {
                rows: out_val.rows(),
                cols: out_val.cols(),
            });
        }
        for node in &self.nodes[..=output] {
            node.value.check_finite(node.op.name())?;
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; output + 1];
        adj[output] = Some(Tensor::scalar(1.0));

        for id in (0..=output).rev() {
            let Some(g) = adj[id].take() else { continue };
            match self.nodes[id].op {
                Op::Leaf { param } => {
                    if param {
                        adj[id] = Some(g);
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.nodes[b].value.transpose());
                    let gb = self.nodes[a].value.transpose().matmul(&g);
                    accumulate(&mut adj, a, ga, &self.nodes);
                    accumulate(&mut adj, b, gb, &self.nodes);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, a, g.clone(), &self.nodes);
                    accumulate(&mut adj, b, g, &self.nodes);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            let v = gb.get(0, c) + g.get(r, c);
                            gb.set(0, c, v);
                        }
                    }
                    accumulate(&mut adj, a, g, &self.nodes);
                    accumulate(&mut adj, b, gb, &self.nodes);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let ga = grad_through_mul(&g, vb, va.shape());
                    let gb = grad_through_mul(&g, va, vb.shape());
                    accumulate(&mut adj, a, ga, &self.nodes);
                    accumulate(&mut adj, b, gb, &self.nodes);
                }
                Op::Relu(a) => {
                    let va = &self.nodes[a].value;
                    let ga = zip_map(&g, va, |gi, x| if x > 0.0 { gi } else { 0.0 });
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::Exp(a) => {
                    let y = &self.nodes[id].value;
                    let ga = zip_map(&g, y, |gi, yi| gi * yi);
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::Log(a) => {
                    let va = &self.nodes[a].value;
                    let ga = zip_map(&g, va, |gi, x| gi / x);
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::Recip(a) => {
                    let y = &self.nodes[id].value;
                    let ga = zip_map(&g, y, |gi, yi| -gi * yi * yi);
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::Neg(a) => {
                    accumulate(&mut adj, a, g.map(|x| -x), &self.nodes);
                }
                Op::Sum(a) => {
                    let va = &self.nodes[a].value;
                    let ga = Tensor::new(va.rows(), va.cols(), vec![g.item(); va.len()]);
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::Mean(a) => {
                    let va = &self.nodes[a].value;
                    let gi = g.item() / va.len() as f64;
                    let ga = Tensor::new(va.rows(), va.cols(), vec![gi; va.len()]);
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
                Op::MaxConst(a, c) => {
                    let va = &self.nodes[a].value;
                    let ga = zip_map(&g, va, |gi, x| if x >= c { gi } else { 0.0 });
                    accumulate(&mut adj, a, ga, &self.nodes);
                }
            }
        }

        // Unreached parameters still report (zero) gradients.
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: true } = node.op {
                if id <= output && adj[id].is_none() {
                    adj[id] = Some(Tensor::zeros(node.value.rows(), node.value.cols()));
                }
            }
        }
        Ok((out_val.clone(), Gradients { by_node: adj }))
    }
}

fn zip_map(g: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(g.shape(), v.shape());
    Tensor::new(
        g.rows(),
        g.cols(),
        g.data()
            .iter()
            .zip(v.data())
            .map(|(&gi, &vi)| f(gi, vi))
            .collect(),
    )
}

/// Gradient of `g ⊙ other` reduced to `target_shape` (handles the 1×1
/// broadcast in either position).
fn grad_through_mul(g: &Tensor, other: &Tensor, target_shape: (usize, usize)) -> Tensor {
    if target_shape == g.shape() && other.shape() == g.shape() {
        zip_map(g, other, |gi, oi| gi * oi)
    } else if target_shape == (1, 1) {
        // d/ds of s·B contracted against g.
        let s: f64 = g
            .data()
            .iter()
            .zip(other.data())
            .map(|(&gi, &oi)| gi * oi)
            .sum();
        Tensor::scalar(s)
    } else {
        // other is the 1×1 scalar side.
        debug_assert_eq!(other.shape(), (1, 1));
        g.map(|gi| gi * other.item())
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, contrib: Tensor, nodes: &[Node]) {
    match &mut adj[id] {
        Some(slot) => slot.add_assign(&contrib),
        slot @ None => {
            debug_assert_eq!(contrib.shape(), nodes[id].value.shape());
            *slot = Some(contrib);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let (v, grads) = g.evaluate_with_grad(x).unwrap();
        assert_eq!(v.item(), 3.0);
        assert_eq!(grads.param(x).item(), 1.0);
    }

    #[test]
    fn log_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.log(x);
        let (v, grads) = g.evaluate_with_grad(y).unwrap();
        assert!((v.item() - 2.0f64.ln()).abs() < 1e-15);
        assert!((grads.param(x).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn relu_masks_matmul_grad() {
        // f(W) = sum(relu(W·x)) with W = [[1, -1]], x = (2, 3)^T
        // pre-activation is -1, so the value is 0 and the gradient on W is 0.
        let mut g = Graph::new();
        let w = g.param(Tensor::new(1, 2, vec![1.0, -1.0]));
        let x = g.constant(Tensor::col(&[2.0, 3.0]));
        let wx = g.matmul(w, x);
        let r = g.relu(wx);
        let s = g.sum(r);
        let (v, grads) = g.evaluate_with_grad(s).unwrap();
        assert_eq!(v.item(), 0.0);
        assert_eq!(grads.param(w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn constants_get_no_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.5));
        let c = g.constant(Tensor::scalar(2.0));
        let y = g.mul(x, c);
        let (_, grads) = g.evaluate_with_grad(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.param(x).item(), 2.0);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(&[1.0, 2.0]));
        let y = g.neg(x);
        assert!(matches!(
            g.evaluate_with_grad(y),
            Err(Error::NonScalarOutput { rows: 1, cols: 2 })
        ));
    }

    #[test]
    fn non_finite_forward_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.log(x); // ln 0 = -inf
        let s = g.sum(y);
        assert!(matches!(
            g.evaluate_with_grad(s),
            Err(Error::NonFiniteValue(_))
        ));
    }

    #[test]
    fn clamp_caps_and_zeroes_gradient_outside() {
        let mut g = Graph::new();
        let x = g.param(Tensor::row(&[-5.0, 0.3, 5.0]));
        let y = g.clamp(x, -1.0, 1.0);
        let s = g.sum(y);
        assert_eq!(g.value(y).data(), &[-1.0, 0.3, 1.0]);
        let (_, grads) = g.evaluate_with_grad(s).unwrap();
        assert_eq!(grads.param(x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn unreached_param_reports_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.0));
        let w = g.param(Tensor::row(&[1.0, 2.0]));
        let y = g.exp(x);
        let (_, grads) = g.evaluate_with_grad(y).unwrap();
        assert_eq!(grads.param(w).data(), &[0.0, 0.0]);
    }
}
