//! Scalar reverse-mode tape over jet-valued nodes.
//!
//! Every node stores its [`Jet2`] payload and the local partials with
//! respect to its operands, themselves as jets. Backpropagating through the
//! transpose of jet multiplication yields gradients of any component
//! (value, first or second directional derivative) of an output with
//! respect to the registered parameters.

use std::collections::BTreeMap;

use super::jet::{transpose_mul, Elementary, Jet2, JetComponent};
use crate::error::Result;

pub type NodeId = usize;
pub type ParamId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Constant,
    Param(ParamId),
    Op(Elementary),
}

#[derive(Debug, Clone)]
pub struct TapeNode {
    pub kind: NodeKind,
    pub operands: Vec<NodeId>,
    pub partials: Vec<Jet2>,
    pub value: Jet2,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    param_index: BTreeMap<ParamId, NodeId>,
}

/// Parameter gradients from one backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradReport {
    pub grads: BTreeMap<ParamId, f64>,
    pub checked_against_fd: Option<f64>,
}

impl GradReport {
    pub fn get(&self, id: ParamId) -> f64 {
        self.grads.get(&id).copied().unwrap_or(0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.grads.values().all(|g| g.is_finite())
    }
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

    pub fn node(&self, id: NodeId) -> &TapeNode {
        &self.nodes[id]
    }

    pub fn value(&self, id: NodeId) -> Jet2 {
        self.nodes[id].value
    }

    pub fn param_node(&self, id: ParamId) -> Option<NodeId> {
        self.param_index.get(&id).copied()
    }

    pub fn constant(&mut self, value: Jet2) -> NodeId {
        self.push(NodeKind::Constant, vec![], vec![], value)
    }

    /// Registers parameter `id`; registering the same id twice returns the
    /// existing node.
    pub fn param(&mut self, id: ParamId, value: f64) -> NodeId {
        if let Some(&n) = self.param_index.get(&id) {
            return n;
        }
        let n = self.push(NodeKind::Param(id), vec![], vec![], Jet2::constant(value));
        self.param_index.insert(id, n);
        n
    }

    /// Appends one elementary operation on existing nodes.
    pub fn record(&mut self, op: Elementary, args: &[NodeId]) -> Result<NodeId> {
        let vals: Vec<Jet2> = args.iter().map(|&a| self.nodes[a].value).collect();
        let (value, partials) = op.eval_with_partials(&vals)?;
        Ok(self.push(NodeKind::Op(op), args.to_vec(), partials, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Elementary::Add, &[a, b]).expect("add is total")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Elementary::Sub, &[a, b]).expect("sub is total")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.record(Elementary::Mul, &[a, b]).expect("mul is total")
    }

    pub fn unary(&mut self, op: Elementary, a: NodeId) -> NodeId {
        self.record(op, &[a]).expect("unary op on valid input")
    }

    fn push(
        &mut self,
        kind: NodeKind,
        operands: Vec<NodeId>,
        partials: Vec<Jet2>,
        value: Jet2,
    ) -> NodeId {
        debug_assert!(operands.iter().all(|&o| o < self.nodes.len()));
        self.nodes.push(TapeNode {
            kind,
            operands,
            partials,
            value,
        });
        self.nodes.len() - 1
    }

    /// Gradient of one component of `output` with respect to every
    /// registered parameter (unreachable parameters report 0).
    pub fn backward(&self, output: NodeId, component: JetComponent) -> GradReport {
        if self.nodes.is_empty() {
            return GradReport::default();
        }
        self.backward_seeded(&[(output, component.unit())])
    }

    /// Backward pass from several weighted output adjoints at once.
    pub fn backward_seeded(&self, seeds: &[(NodeId, Jet2)]) -> GradReport {
        let mut adj = vec![Jet2::ZERO; self.nodes.len()];
        let mut start = 0;
        for &(n, s) in seeds {
            adj[n] += s;
            start = start.max(n + 1);
        }
        for i in (0..start).rev() {
            let a = adj[i];
            if a == Jet2::ZERO {
                continue;
            }
            let node = &self.nodes[i];
            for (&o, &p) in node.operands.iter().zip(&node.partials) {
                adj[o] += transpose_mul(p, a);
            }
        }
        let grads = self
            .param_index
            .iter()
            .map(|(&pid, &n)| (pid, adj[n].value))
            .collect();
        GradReport {
            grads,
            checked_against_fd: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_of_param() {
        let mut t = Tape::new();
        let w = t.param(0, 3.0);
        let y = t.mul(w, w);
        assert_eq!(t.backward(y, JetComponent::Value).get(0), 6.0);
    }

    #[test]
    fn mixed_derivative_of_product() {
        let mut t = Tape::new();
        let w = t.param(0, 0.5);
        let x = t.constant(Jet2::variable(2.0));
        let y = t.mul(w, x);
        let node = t.node(y);
        assert_eq!(node.partials[0].value, 2.0);
        assert_eq!(node.partials[1].value, 0.5);
        assert_eq!(t.backward(y, JetComponent::D1).get(0), 1.0);
    }

    #[test]
    fn tanh_partial_is_recorded() {
        let mut t = Tape::new();
        let y = t.constant(Jet2::constant(0.3));
        let z = t.unary(Elementary::Tanh, y);
        let p = t.node(z).partials[0].value;
        assert!((p - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-15);
    }

    #[test]
    fn empty_tape_and_unreachable_params() {
        let t = Tape::new();
        assert!(t.backward(0, JetComponent::Value).grads.is_empty());
        let mut t = Tape::new();
        let a = t.param(0, 1.0);
        let _b = t.param(1, 2.0);
        let y = t.mul(a, a);
        let g = t.backward(y, JetComponent::Value);
        assert_eq!(g.get(1), 0.0);
        assert!(g.grads.contains_key(&1));
    }

    #[test]
    fn second_derivative_gradient_matches_fd() {
        // loss(w) = (d2/dx2 tanh(w x))^2 at w = 0.5, x = 0.3
        let build = |w: f64| {
            let mut t = Tape::new();
            let wn = t.param(0, w);
            let x = t.constant(Jet2::variable(0.3));
            let wx = t.mul(wn, x);
            let y = t.unary(Elementary::Tanh, wx);
            (t, y)
        };
        let (t, y) = build(0.5);
        let d2 = t.value(y).d2;
        let g = t.backward_seeded(&[(y, Jet2::new(0.0, 0.0, 2.0 * d2))]);
        let loss = |w: f64| {
            let (t, y) = build(w);
            t.value(y).d2.powi(2)
        };
        let h = 1e-5;
        let fd = (loss(0.5 + h) - loss(0.5 - h)) / (2.0 * h);
        assert!(((g.get(0) - fd) / fd).abs() < 1e-5, "{} vs {fd}", g.get(0));
    }
}
