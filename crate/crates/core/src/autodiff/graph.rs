//! Vector-level recording of jet computations.
//!
//! The scalar [`Tape`](super::tape::Tape) records one node per elementary
//! operation; training the PDE models with it would be far too slow. This
//! graph records whole layer operations instead, keeping the same jet
//! transpose rule for the backward pass, so parameter gradients of
//! value/first/second derivative outputs come out of one sweep. The scalar
//! tape serves as the reference implementation in tests.
//!
//! Model code is written once against [`Ops`]; [`Graph`] records, while
//! [`JetEval`] just evaluates.

use super::jet::{transpose_mul, Jet2};
use crate::nn::activation::Activation;
use crate::nn::layer::{Conv2d, DenseLayer};

pub type Var = usize;

/// Operations shared by recording and plain evaluation back ends.
pub trait Ops<'a> {
    type V: Clone;
    fn input(&mut self, v: Vec<Jet2>) -> Self::V;
    fn dense(&mut self, x: &Self::V, layer: &'a DenseLayer) -> Self::V;
    fn conv(&mut self, x: &Self::V, layer: &'a Conv2d) -> Self::V;
    fn act(&mut self, x: &Self::V, act: Activation) -> Self::V;
    fn hadamard(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, x: &Self::V, s: f64) -> Self::V;
    /// Elementwise product with a constant vector.
    fn mul_const(&mut self, x: &Self::V, c: &[f64]) -> Self::V;
    /// `y_k = c_k * x` for a length-one `x`.
    fn broadcast(&mut self, x: &Self::V, c: &[f64]) -> Self::V;
    fn concat(&mut self, parts: &[&Self::V]) -> Self::V;
    fn dot(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sum(&mut self, x: &Self::V) -> Self::V;
    /// Keeps the value, zeroes the directional derivatives. Parameter
    /// gradients still flow through the value.
    fn value_only(&mut self, x: &Self::V) -> Self::V;
    /// Product with a constant row-major `rows x len(x)` matrix.
    fn matvec_const(&mut self, x: &Self::V, m: &'a [f64], rows: usize) -> Self::V;
    fn view<'s>(&'s self, x: &'s Self::V) -> &'s [Jet2];
}

/// Non-recording evaluator.
#[derive(Debug, Default, Clone, Copy)]
pub struct JetEval;

impl<'a> Ops<'a> for JetEval {
    type V = Vec<Jet2>;

    fn input(&mut self, v: Vec<Jet2>) -> Vec<Jet2> {
        v
    }
    fn dense(&mut self, x: &Vec<Jet2>, layer: &'a DenseLayer) -> Vec<Jet2> {
        layer.forward_jet(x)
    }
    fn conv(&mut self, x: &Vec<Jet2>, layer: &'a Conv2d) -> Vec<Jet2> {
        layer.forward_jet(x)
    }
    fn act(&mut self, x: &Vec<Jet2>, act: Activation) -> Vec<Jet2> {
        x.iter().map(|&z| act.apply_jet(z)).collect()
    }
    fn hadamard(&mut self, a: &Vec<Jet2>, b: &Vec<Jet2>) -> Vec<Jet2> {
        a.iter().zip(b).map(|(&x, &y)| x * y).collect()
    }
    fn add(&mut self, a: &Vec<Jet2>, b: &Vec<Jet2>) -> Vec<Jet2> {
        a.iter().zip(b).map(|(&x, &y)| x + y).collect()
    }
    fn scale(&mut self, x: &Vec<Jet2>, s: f64) -> Vec<Jet2> {
        x.iter().map(|&z| z * s).collect()
    }
    fn mul_const(&mut self, x: &Vec<Jet2>, c: &[f64]) -> Vec<Jet2> {
        x.iter().zip(c).map(|(&z, &k)| z * k).collect()
    }
    fn broadcast(&mut self, x: &Vec<Jet2>, c: &[f64]) -> Vec<Jet2> {
        c.iter().map(|&k| x[0] * k).collect()
    }
    fn concat(&mut self, parts: &[&Vec<Jet2>]) -> Vec<Jet2> {
        parts.iter().flat_map(|p| p.iter().copied()).collect()
    }
    fn dot(&mut self, a: &Vec<Jet2>, b: &Vec<Jet2>) -> Vec<Jet2> {
        let mut s = Jet2::ZERO;
        for (&x, &y) in a.iter().zip(b) {
            s += x * y;
        }
        vec![s]
    }
    fn sum(&mut self, x: &Vec<Jet2>) -> Vec<Jet2> {
        let mut s = Jet2::ZERO;
        for &z in x {
            s += z;
        }
        vec![s]
    }
    fn value_only(&mut self, x: &Vec<Jet2>) -> Vec<Jet2> {
        x.iter().map(|z| Jet2::constant(z.value)).collect()
    }
    fn matvec_const(&mut self, x: &Vec<Jet2>, m: &'a [f64], rows: usize) -> Vec<Jet2> {
        matvec_jet(m, rows, x)
    }
    fn view<'s>(&'s self, x: &'s Vec<Jet2>) -> &'s [Jet2] {
        x
    }
}

fn matvec_jet(m: &[f64], rows: usize, x: &[Jet2]) -> Vec<Jet2> {
    let cols = x.len();
    debug_assert_eq!(m.len(), rows * cols);
    (0..rows)
        .map(|i| {
            let row = &m[i * cols..(i + 1) * cols];
            let mut s = Jet2::ZERO;
            for (&w, &xj) in row.iter().zip(x) {
                s += xj * w;
            }
            s
        })
        .collect()
}

enum Op<'a> {
    Input,
    Dense {
        x: Var,
        layer: &'a DenseLayer,
        pre: Vec<Jet2>,
    },
    Conv {
        x: Var,
        layer: &'a Conv2d,
        pre: Vec<Jet2>,
    },
    Act(Var, Activation),
    Hadamard(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Broadcast(Var, Vec<f64>),
    Concat(Vec<Var>),
    Dot(Var, Var),
    Sum(Var),
    ValueOnly(Var),
    MatVecConst { x: Var, m: &'a [f64], rows: usize },
}

/// Recording back end. Parameter gradients are accumulated into a flat
/// slice indexed by each layer's `offset`.
pub struct Graph<'a> {
    ops: Vec<Op<'a>>,
    vals: Vec<Vec<Jet2>>,
    /// Node depends on at least one parameter.
    needs: Vec<bool>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn has_derivs(x: &[Jet2]) -> bool {
    x.iter().any(|j| j.d1 != 0.0 || j.d2 != 0.0)
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph {
            ops: Vec::new(),
            vals: Vec::new(),
            needs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &[Jet2] {
        &self.vals[v]
    }

    fn push(&mut self, op: Op<'a>, val: Vec<Jet2>, needs: bool) -> Var {
        self.ops.push(op);
        self.vals.push(val);
        self.needs.push(needs);
        self.ops.len() - 1
    }

    /// Accumulates parameter gradients of `sum_s weight_s * component_s`
    /// where each seed `(var, index, w)` puts adjoint `w` (a jet-shaped
    /// triple over value/d1/d2) on entry `index` of node `var`.
    pub fn backward(&self, seeds: &[(Var, usize, Jet2)], grad: &mut [f64]) {
        let n = self.ops.len();
        let mut adj: Vec<Option<Vec<Jet2>>> = (0..n).map(|_| None).collect();
        let mut top = 0;
        for &(v, i, w) in seeds {
            if !self.needs[v] {
                continue;
            }
            let a = adj[v].get_or_insert_with(|| vec![Jet2::ZERO; self.vals[v].len()]);
            a[i] += w;
            top = top.max(v + 1);
        }
        for node in (0..top).rev() {
            let Some(ybar) = adj[node].take() else {
                continue;
            };
            self.backward_node(node, &ybar, &mut adj, grad);
        }
    }

    fn adj_mut<'s>(&self, adj: &'s mut [Option<Vec<Jet2>>], v: Var) -> Option<&'s mut Vec<Jet2>> {
        if !self.needs[v] {
            return None;
        }
        let len = self.vals[v].len();
        Some(adj[v].get_or_insert_with(|| vec![Jet2::ZERO; len]))
    }

    fn act_adjoint(act: Activation, pre: &[Jet2], ybar: &[Jet2]) -> Vec<Jet2> {
        if act == Activation::Identity {
            return ybar.to_vec();
        }
        pre.iter()
            .zip(ybar)
            .map(|(&z, &yb)| {
                if yb == Jet2::ZERO {
                    Jet2::ZERO
                } else {
                    transpose_mul(z.chain_partial(act.derivs(z.value)), yb)
                }
            })
            .collect()
    }

    fn backward_node(
        &self,
        node: Var,
        ybar: &[Jet2],
        adj: &mut [Option<Vec<Jet2>>],
        grad: &mut [f64],
    ) {
        match &self.ops[node] {
            Op::Input => {}
            Op::Dense { x, layer, pre } => {
                let zbar = Self::act_adjoint(layer.activation, pre, ybar);
                let xv = &self.vals[*x];
                let xd = has_derivs(xv);
                let inp = layer.inp;
                let woff = layer.offset;
                if let Some(bo) = layer.bias_offset() {
                    for (i, zb) in zbar.iter().enumerate() {
                        grad[bo + i] += zb.value;
                    }
                }
                for (i, zb) in zbar.iter().enumerate() {
                    if *zb == Jet2::ZERO {
                        continue;
                    }
                    let g = &mut grad[woff + i * inp..woff + (i + 1) * inp];
                    if xd {
                        for (gj, xj) in g.iter_mut().zip(xv) {
                            *gj += xj.value * zb.value + xj.d1 * zb.d1 + xj.d2 * zb.d2;
                        }
                    } else {
                        for (gj, xj) in g.iter_mut().zip(xv) {
                            *gj += xj.value * zb.value;
                        }
                    }
                }
                if let Some(xbar) = self.adj_mut(adj, *x) {
                    for (i, zb) in zbar.iter().enumerate() {
                        if *zb == Jet2::ZERO {
                            continue;
                        }
                        let row = &layer.weights[i * inp..(i + 1) * inp];
                        for (xb, &w) in xbar.iter_mut().zip(row) {
                            xb.value += w * zb.value;
                            xb.d1 += w * zb.d1;
                            xb.d2 += w * zb.d2;
                        }
                    }
                }
            }
            Op::Conv { x, layer, pre } => {
                let zbar = Self::act_adjoint(layer.activation, pre, ybar);
                let xv = &self.vals[*x];
                let nw = layer.weights.len();
                let mut xbar_local = vec![Jet2::ZERO; xv.len()];
                for o in 0..layer.cout {
                    for i in 0..layer.h {
                        for j in 0..layer.w {
                            let zb = zbar[(o * layer.h + i) * layer.w + j];
                            if zb == Jet2::ZERO {
                                continue;
                            }
                            grad[layer.offset + nw + o] += zb.value;
                            for c in 0..layer.cin {
                                for a in 0..layer.k {
                                    for b in 0..layer.k {
                                        let s = layer.src(c, i, j, a, b);
                                        let wi = layer.widx(o, c, a, b);
                                        let xs = xv[s];
                                        grad[layer.offset + wi] +=
                                            xs.value * zb.value + xs.d1 * zb.d1 + xs.d2 * zb.d2;
                                        xbar_local[s] += zb * layer.weights[wi];
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(xbar) = self.adj_mut(adj, *x) {
                    for (xb, l) in xbar.iter_mut().zip(xbar_local) {
                        *xb += l;
                    }
                }
            }
            Op::Act(x, act) => {
                let zbar = Self::act_adjoint(*act, &self.vals[*x], ybar);
                if let Some(xbar) = self.adj_mut(adj, *x) {
                    for (xb, zb) in xbar.iter_mut().zip(zbar) {
                        *xb += zb;
                    }
                }
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (&self.vals[*a], &self.vals[*b]);
                if let Some(abar) = self.adj_mut(adj, *a) {
                    for ((ab, &bj), &yb) in abar.iter_mut().zip(bv).zip(ybar) {
                        *ab += transpose_mul(bj, yb);
                    }
                }
                if let Some(bbar) = self.adj_mut(adj, *b) {
                    for ((bb, &aj), &yb) in bbar.iter_mut().zip(av).zip(ybar) {
                        *bb += transpose_mul(aj, yb);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(vb) = self.adj_mut(adj, v) {
                        for (x, &y) in vb.iter_mut().zip(ybar) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for (a, &y) in xb.iter_mut().zip(ybar) {
                        *a += y * *s;
                    }
                }
            }
            Op::MulConst(x, c) => {
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for ((a, &y), &k) in xb.iter_mut().zip(ybar).zip(c) {
                        *a += y * k;
                    }
                }
            }
            Op::Broadcast(x, c) => {
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for (&y, &k) in ybar.iter().zip(c) {
                        xb[0] += y * k;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.vals[p].len();
                    if let Some(pb) = self.adj_mut(adj, p) {
                        for (a, &y) in pb.iter_mut().zip(&ybar[start..start + len]) {
                            *a += y;
                        }
                    }
                    start += len;
                }
            }
            Op::Dot(a, b) => {
                let yb = ybar[0];
                let (av, bv) = (&self.vals[*a], &self.vals[*b]);
                if let Some(abar) = self.adj_mut(adj, *a) {
                    for (x, &bj) in abar.iter_mut().zip(bv) {
                        *x += transpose_mul(bj, yb);
                    }
                }
                if let Some(bbar) = self.adj_mut(adj, *b) {
                    for (x, &aj) in bbar.iter_mut().zip(av) {
                        *x += transpose_mul(aj, yb);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for a in xb.iter_mut() {
                        *a += ybar[0];
                    }
                }
            }
            Op::ValueOnly(x) => {
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for (a, y) in xb.iter_mut().zip(ybar) {
                        a.value += y.value;
                    }
                }
            }
            Op::MatVecConst { x, m, rows } => {
                let cols = self.vals[*x].len();
                if let Some(xb) = self.adj_mut(adj, *x) {
                    for i in 0..*rows {
                        let yb = ybar[i];
                        for (a, &w) in xb.iter_mut().zip(&m[i * cols..(i + 1) * cols]) {
                            *a += yb * w;
                        }
                    }
                }
            }
        }
    }
}

impl<'a> Ops<'a> for Graph<'a> {
    type V = Var;

    fn input(&mut self, v: Vec<Jet2>) -> Var {
        self.push(Op::Input, v, false)
    }

    fn dense(&mut self, x: &Var, layer: &'a DenseLayer) -> Var {
        let pre = layer.pre_activation(&self.vals[*x]);
        let val = pre.iter().map(|&z| layer.activation.apply_jet(z)).collect();
        self.push(Op::Dense { x: *x, layer, pre }, val, true)
    }

    fn conv(&mut self, x: &Var, layer: &'a Conv2d) -> Var {
        let pre = layer.pre_activation(&self.vals[*x]);
        let val = pre.iter().map(|&z| layer.activation.apply_jet(z)).collect();
        self.push(Op::Conv { x: *x, layer, pre }, val, true)
    }

    fn act(&mut self, x: &Var, act: Activation) -> Var {
        let val = self.vals[*x].iter().map(|&z| act.apply_jet(z)).collect();
        let needs = self.needs[*x];
        self.push(Op::Act(*x, act), val, needs)
    }

    fn hadamard(&mut self, a: &Var, b: &Var) -> Var {
        let val = JetEval.hadamard(&self.vals[*a], &self.vals[*b]);
        let needs = self.needs[*a] || self.needs[*b];
        self.push(Op::Hadamard(*a, *b), val, needs)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let val = JetEval.add(&self.vals[*a], &self.vals[*b]);
        let needs = self.needs[*a] || self.needs[*b];
        self.push(Op::Add(*a, *b), val, needs)
    }

    fn scale(&mut self, x: &Var, s: f64) -> Var {
        let val = JetEval.scale(&self.vals[*x], s);
        let needs = self.needs[*x];
        self.push(Op::Scale(*x, s), val, needs)
    }

    fn mul_const(&mut self, x: &Var, c: &[f64]) -> Var {
        let val = JetEval.mul_const(&self.vals[*x], c);
        let needs = self.needs[*x];
        self.push(Op::MulConst(*x, c.to_vec()), val, needs)
    }

    fn broadcast(&mut self, x: &Var, c: &[f64]) -> Var {
        let val = JetEval.broadcast(&self.vals[*x], c);
        let needs = self.needs[*x];
        self.push(Op::Broadcast(*x, c.to_vec()), val, needs)
    }

    fn concat(&mut self, parts: &[&Var]) -> Var {
        let val = parts
            .iter()
            .flat_map(|&&p| self.vals[p].iter().copied())
            .collect();
        let needs = parts.iter().any(|&&p| self.needs[p]);
        self.push(Op::Concat(parts.iter().map(|&&p| p).collect()), val, needs)
    }

    fn dot(&mut self, a: &Var, b: &Var) -> Var {
        let val = JetEval.dot(&self.vals[*a], &self.vals[*b]);
        let needs = self.needs[*a] || self.needs[*b];
        self.push(Op::Dot(*a, *b), val, needs)
    }

    fn sum(&mut self, x: &Var) -> Var {
        let val = JetEval.sum(&self.vals[*x]);
        let needs = self.needs[*x];
        self.push(Op::Sum(*x), val, needs)
    }

    fn value_only(&mut self, x: &Var) -> Var {
        let val = JetEval.value_only(&self.vals[*x]);
        let needs = self.needs[*x];
        self.push(Op::ValueOnly(*x), val, needs)
    }

    fn matvec_const(&mut self, x: &Var, m: &'a [f64], rows: usize) -> Var {
        let val = matvec_jet(m, rows, &self.vals[*x]);
        let needs = self.needs[*x];
        self.push(Op::MatVecConst { x: *x, m, rows }, val, needs)
    }

    fn view<'s>(&'s self, x: &'s Var) -> &'s [Jet2] {
        &self.vals[*x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet::JetComponent;
    use crate::autodiff::tape::Tape;
    use crate::nn::layer::ParamHolder;
    use crate::nn::mlp::{init_params, mlp_record, MlpSpec};
    use rand::SeedableRng;

    #[test]
    fn dense_stack_matches_scalar_tape() {
        let net = init_params(&MlpSpec::new(vec![3, 6, 4, 1]), 9).unwrap();
        let x = vec![Jet2::variable(0.2), Jet2::constant(-0.7), Jet2::constant(0.5)];
        for comp in [JetComponent::Value, JetComponent::D1, JetComponent::D2] {
            let mut tape = Tape::new();
            let ids: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
            let out = mlp_record(&net, &mut tape, &ids).unwrap()[0];
            let rep = tape.backward(out, comp);

            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let y = net.apply(&mut g, &xi);
            assert_eq!(g.value(y)[0], tape.value(out));
            let mut grad = vec![0.0; net.param_count];
            g.backward(&[(y, 0, comp.unit())], &mut grad);
            for (k, gk) in grad.iter().enumerate() {
                assert!((gk - rep.get(k)).abs() <= 1e-12 * gk.abs().max(1.0));
            }
        }
    }

    fn fd_check<F>(n: usize, params: &[f64], f: F)
    where
        F: Fn(&[f64], Option<&mut [f64]>) -> f64,
    {
        let mut grad = vec![0.0; n];
        f(params, Some(&mut grad));
        let h = 1e-6;
        for k in 0..n {
            let mut p = params.to_vec();
            p[k] += h;
            let fp = f(&p, None);
            p[k] -= 2.0 * h;
            let fm = f(&p, None);
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                "param {k}: {} vs {fd}",
                grad[k]
            );
        }
    }

    #[test]
    fn mixed_ops_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let conv0 = Conv2d::glorot(1, 2, 3, 4, 4, Activation::Tanh, &mut rng).unwrap();
        let mut dense0 = DenseLayer::glorot(32, 3, true, Activation::Tanh, &mut rng).unwrap();
        dense0.offset = conv0.n_params();
        let mut dense1 = DenseLayer::glorot(2, 3, false, Activation::SinPow(2), &mut rng).unwrap();
        dense1.offset = dense0.offset + dense0.n_params();
        let n = dense1.offset + dense1.n_params();
        let mut p0 = vec![0.0; n];
        conv0.read_params(&mut p0);
        dense0.read_params(&mut p0);
        dense1.read_params(&mut p0);
        let m: Vec<f64> = (0..6).map(|i| 0.1 * i as f64 - 0.2).collect();
        let samples: Vec<Jet2> = (0..16).map(|i| Jet2::constant((i as f64 * 0.7).sin())).collect();

        fd_check(n, &p0, |p, grad| {
            let (mut c, mut d0, mut d1) = (conv0.clone(), dense0.clone(), dense1.clone());
            c.write_params(p);
            d0.write_params(p);
            d1.write_params(p);
            let mut g = Graph::new();
            let s = g.input(samples.clone());
            let h = g.conv(&s, &c);
            let coef = g.dense(&h, &d0);
            let pt = g.input(vec![Jet2::variable(0.4), Jet2::constant(1.3)]);
            let loc = g.dense(&pt, &d1);
            let e = g.act(&coef, Activation::Exp);
            let prod = g.hadamard(&e, &loc);
            let mixed = g.matvec_const(&prod, &m, 2);
            let s2 = g.sum(&mixed);
            let det = g.value_only(&coef);
            let dd = g.dot(&det, &loc);
            let tot = g.add(&s2, &dd);
            let out = g.scale(&tot, 0.7);
            let v = g.value(out)[0];
            let loss = v.value * v.value + v.d2 * v.d2 + 0.5 * v.d1;
            if let Some(grad) = grad {
                let seed = Jet2::new(2.0 * v.value, 0.5, 2.0 * v.d2);
                g.backward(&[(out, 0, seed)], grad);
            }
            loss
        });
    }

    #[test]
    fn jet_eval_agrees_with_graph() {
        let net = init_params(&MlpSpec::new(vec![2, 5, 3]), 1).unwrap();
        let x = vec![Jet2::variable(0.1), Jet2::constant(0.9)];
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let y = net.apply(&mut g, &xi);
        let mut e = JetEval;
        let z = net.apply(&mut e, &x);
        assert_eq!(g.value(y), z.as_slice());
    }
}
