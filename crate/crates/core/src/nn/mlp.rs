use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::Activation;
use super::layer::{DenseLayer, ParamHolder};
use crate::autodiff::graph::Ops;
use crate::autodiff::jet::{Elementary, Jet2};
use crate::autodiff::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Widths and activations of a plain feed-forward stack.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// `[in, h1, ..., out]`; at least two entries.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub bias: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Self {
        MlpSpec {
            widths,
            hidden: Activation::Tanh,
            output: Activation::Identity,
            bias: true,
        }
    }

    /// `layers` dense layers from `inp` to `out` with constant hidden width.
    pub fn uniform(inp: usize, width: usize, out: usize, layers: usize) -> Self {
        let mut widths = vec![inp];
        widths.extend(std::iter::repeat_n(width, layers.saturating_sub(1)));
        widths.push(out);
        Self::new(widths)
    }

    pub fn with_output(mut self, act: Activation) -> Self {
        self.output = act;
        self
    }

    pub fn with_hidden(mut self, act: Activation) -> Self {
        self.hidden = act;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    /// Exact weight plus bias count.
    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + if self.bias { w[1] } else { 0 })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub param_count: usize,
}

impl Mlp {
    pub fn glorot<R: rand::Rng>(spec: &MlpSpec, rng: &mut R) -> Result<Mlp> {
        if spec.widths.len() < 2 {
            return Err(Error::InvalidShape(format!(
                "need at least two widths, got {:?}",
                spec.widths
            )));
        }
        let n = spec.widths.len() - 1;
        let mut layers = Vec::with_capacity(n);
        for (i, w) in spec.widths.windows(2).enumerate() {
            let act = if i + 1 == n { spec.output } else { spec.hidden };
            layers.push(DenseLayer::glorot(w[0], w[1], spec.bias, act, rng)?);
        }
        let mut m = Mlp {
            layers,
            param_count: 0,
        };
        m.param_count = m.layers.iter().map(|l| l.n_params()).sum();
        m.set_offset(0);
        Ok(m)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Mlp> {
        if layers.is_empty() {
            return Err(Error::InvalidShape("empty layer list".into()));
        }
        for w in layers.windows(2) {
            if w[0].out != w[1].inp {
                return Err(Error::ShapeMismatch {
                    expected: w[0].out,
                    got: w[1].inp,
                });
            }
        }
        let param_count = layers.iter().map(|l| l.n_params()).sum();
        let offset = layers[0].offset;
        let mut m = Mlp {
            layers,
            param_count,
        };
        m.set_offset(offset);
        Ok(m)
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].inp
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for l in &self.layers {
            v = l.forward(&v);
        }
        v
    }

    pub fn apply<'a, O: Ops<'a>>(&'a self, ops: &mut O, x: &O::V) -> O::V {
        let mut v = x.clone();
        for l in &self.layers {
            v = ops.dense(&v, l);
        }
        v
    }
}

impl ParamHolder for Mlp {
    fn n_params(&self) -> usize {
        self.param_count
    }
    fn offset(&self) -> usize {
        self.layers.first().map_or(0, |l| l.offset)
    }
    fn set_offset(&mut self, offset: usize) {
        let mut o = offset;
        for l in &mut self.layers {
            l.set_offset(o);
            o += l.n_params();
        }
    }
    fn read_params(&self, out: &mut [f64]) {
        for l in &self.layers {
            l.read_params(out);
        }
    }
    fn write_params(&mut self, src: &[f64]) {
        for l in &mut self.layers {
            l.write_params(src);
        }
    }
}

/// Glorot-uniform weights, zero biases, reproducible from `seed`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Result<Mlp> {
    if spec.widths.contains(&0) {
        return Err(Error::InvalidShape(format!("zero width in {:?}", spec.widths)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::glorot(spec, &mut rng)
}

fn record_activation(tape: &mut Tape, act: Activation, z: NodeId) -> Result<NodeId> {
    Ok(match act {
        Activation::Identity => z,
        Activation::Tanh => tape.unary(Elementary::Tanh, z),
        Activation::Exp => tape.unary(Elementary::Exp, z),
        Activation::Sin => tape.unary(Elementary::Sin, z),
        Activation::SinPow(0) | Activation::CosPow(0) => tape.constant(Jet2::constant(1.0)),
        Activation::SinPow(l) => {
            let s = tape.unary(Elementary::Sin, z);
            tape.unary(Elementary::PowInt(l as i32), s)
        }
        Activation::CosPow(l) => {
            let c = tape.unary(Elementary::Cos, z);
            tape.unary(Elementary::PowInt(l as i32), c)
        }
    })
}

/// Records the network on `tape` with every weight as a parameter whose id
/// is its position in the flat parameter vector.
pub fn mlp_record(net: &Mlp, tape: &mut Tape, input: &[NodeId]) -> Result<Vec<NodeId>> {
    if input.len() != net.in_width() {
        return Err(Error::ShapeMismatch {
            expected: net.in_width(),
            got: input.len(),
        });
    }
    let mut v = input.to_vec();
    for l in &net.layers {
        let mut next = Vec::with_capacity(l.out);
        for i in 0..l.out {
            let mut acc = match l.bias_offset() {
                Some(bo) => Some(tape.param(bo + i, l.bias.as_ref().unwrap()[i])),
                None => None,
            };
            for (j, &x) in v.iter().enumerate() {
                let w = tape.param(l.offset + i * l.inp + j, l.w(i, j));
                let p = tape.mul(w, x);
                acc = Some(match acc {
                    Some(a) => tape.add(a, p),
                    None => p,
                });
            }
            next.push(record_activation(tape, l.activation, acc.expect("non-empty layer"))?);
        }
        v = next;
    }
    Ok(v)
}

/// Layer-by-layer evaluation; records on `tape` when given.
pub fn mlp_forward(net: &Mlp, input: &[Jet2], tape: Option<&mut Tape>) -> Result<Vec<Jet2>> {
    if input.len() != net.in_width() {
        return Err(Error::ShapeMismatch {
            expected: net.in_width(),
            got: input.len(),
        });
    }
    match tape {
        Some(tape) => {
            let ids: Vec<NodeId> = input.iter().map(|&x| tape.constant(x)).collect();
            let out = mlp_record(net, tape, &ids)?;
            Ok(out.iter().map(|&n| tape.value(n)).collect())
        }
        None => {
            let mut v = input.to_vec();
            for l in &net.layers {
                v = l.forward_jet(&v);
            }
            Ok(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::jet::JetComponent;
    use crate::autodiff::tape::Tape;

    #[test]
    fn counts() {
        let m = init_params(&MlpSpec::new(vec![2, 3]), 7).unwrap();
        assert_eq!(m.param_count, 9);
        let naive = MlpSpec::new(vec![103, 103, 103, 103, 103, 103, 1]);
        assert_eq!(naive.param_count(), 53_664);
        assert_eq!(init_params(&naive, 1).unwrap().param_count, 53_664);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let s = MlpSpec::new(vec![4, 8, 8, 2]);
        assert_eq!(init_params(&s, 11).unwrap(), init_params(&s, 11).unwrap());
        assert_ne!(init_params(&s, 11).unwrap(), init_params(&s, 12).unwrap());
        let m = init_params(&s, 11).unwrap();
        assert!(m.layers.iter().all(|l| l.bias.as_ref().unwrap().iter().all(|&b| b == 0.0)));
        let a = super::super::layer::glorot_bound(4, 8);
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= a));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(matches!(
            init_params(&MlpSpec::new(vec![2, 0, 1]), 0),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn identity_zero_weights_gives_bias() {
        let mut m = init_params(&MlpSpec::new(vec![3, 2]), 0).unwrap();
        m.layers[0].weights.iter_mut().for_each(|w| *w = 0.0);
        m.layers[0].bias = Some(vec![1.5, -2.0]);
        let y = mlp_forward(&m, &[Jet2::constant(0.3); 3], None).unwrap();
        assert_eq!(y[0].value, 1.5);
        assert_eq!(y[1].value, -2.0);
    }

    #[test]
    fn tanh_layer_at_origin() {
        let m = init_params(
            &MlpSpec::new(vec![2, 4]).with_output(Activation::Tanh),
            3,
        )
        .unwrap();
        let y = mlp_forward(&m, &[Jet2::ZERO; 2], None).unwrap();
        assert!(y.iter().all(|v| v.value == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let m = init_params(&MlpSpec::new(vec![2, 4]), 3).unwrap();
        assert!(matches!(
            mlp_forward(&m, &[Jet2::ZERO; 3], None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    // Straight matrix-vector evaluation, written independently of DenseLayer.
    fn reference_eval(m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        for l in &m.layers {
            let mut y = vec![0.0; l.out];
            for (i, yi) in y.iter_mut().enumerate() {
                let mut s = 0.0;
                for (j, vj) in v.iter().enumerate() {
                    s += l.weights[i * l.inp + j] * vj;
                }
                if let Some(b) = &l.bias {
                    s += b[i];
                }
                *yi = match l.activation {
                    Activation::Tanh => s.tanh(),
                    Activation::Identity => s,
                    _ => unreachable!(),
                };
            }
            v = y;
        }
        v
    }

    #[test]
    fn matches_reference_evaluator() {
        let m = init_params(&MlpSpec::new(vec![3, 7, 5, 2]), 42).unwrap();
        let x = [0.3, -0.8, 1.1];
        let jx: Vec<Jet2> = x.iter().map(|&v| Jet2::constant(v)).collect();
        let a = mlp_forward(&m, &jx, None).unwrap();
        let b = reference_eval(&m, &x);
        for (p, q) in a.iter().zip(&b) {
            assert!((p.value - q).abs() <= 1e-12);
        }
        let mut tape = Tape::new();
        let c = mlp_forward(&m, &jx, Some(&mut tape)).unwrap();
        for (p, q) in c.iter().zip(&b) {
            assert!((p.value - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let mut m = init_params(&MlpSpec::new(vec![2, 5, 1]), 5).unwrap();
        let x = [Jet2::variable(0.4), Jet2::constant(-0.2)];
        let mut tape = Tape::new();
        let ids: Vec<_> = x.iter().map(|&v| tape.constant(v)).collect();
        let out = mlp_record(&m, &mut tape, &ids).unwrap()[0];
        let rep = tape.backward(out, JetComponent::D2);
        let mut p = vec![0.0; m.param_count];
        m.read_params(&mut p);
        let h = 1e-5;
        for k in 0..m.param_count {
            let mut q = p.clone();
            q[k] += h;
            m.write_params(&q);
            let fp = mlp_forward(&m, &x, None).unwrap()[0].d2;
            q[k] -= 2.0 * h;
            m.write_params(&q);
            let fm = mlp_forward(&m, &x, None).unwrap()[0].d2;
            m.write_params(&p);
            let fd = (fp - fm) / (2.0 * h);
            let g = rep.get(k);
            assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1.0), "param {k}: {g} vs {fd}");
        }
    }
}
