use rand::Rng;

use super::activation::Activation;
use crate::autodiff::jet::Jet2;
use crate::error::{Error, Result};

/// Anything that owns a contiguous run of trainable parameters inside a
/// model-wide flat vector.
pub trait ParamHolder {
    fn n_params(&self) -> usize;
    fn offset(&self) -> usize;
    fn set_offset(&mut self, offset: usize);
    fn read_params(&self, out: &mut [f64]);
    fn write_params(&mut self, src: &[f64]);
}

/// `y = act(W x + b)`, weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inp: usize,
    pub out: usize,
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
    pub offset: usize,
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl DenseLayer {
    pub fn new(inp: usize, out: usize, bias: bool, activation: Activation) -> Result<Self> {
        if inp == 0 || out == 0 {
            return Err(Error::InvalidShape(format!("dense layer {inp} -> {out}")));
        }
        Ok(DenseLayer {
            inp,
            out,
            weights: vec![0.0; inp * out],
            bias: bias.then(|| vec![0.0; out]),
            activation,
            offset: 0,
        })
    }

    pub fn glorot<R: Rng>(
        inp: usize,
        out: usize,
        bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut l = Self::new(inp, out, bias, activation)?;
        let a = glorot_bound(inp, out);
        for w in &mut l.weights {
            *w = rng.random_range(-a..a);
        }
        Ok(l)
    }

    #[inline]
    pub fn w(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inp + col]
    }

    pub fn bias_offset(&self) -> Option<usize> {
        self.bias.as_ref().map(|_| self.offset + self.inp * self.out)
    }

    /// Plain forward on reals.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|i| {
                let row = &self.weights[i * self.inp..(i + 1) * self.inp];
                let mut z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                if let Some(b) = &self.bias {
                    z += b[i];
                }
                self.activation.apply(z)
            })
            .collect()
    }

    /// Pre-activation `W x + b` on jets; skips derivative work when the
    /// input carries none.
    pub fn pre_activation(&self, x: &[Jet2]) -> Vec<Jet2> {
        let has_derivs = x.iter().any(|j| j.d1 != 0.0 || j.d2 != 0.0);
        let mut z = Vec::with_capacity(self.out);
        for i in 0..self.out {
            let row = &self.weights[i * self.inp..(i + 1) * self.inp];
            let b = self.bias.as_ref().map_or(0.0, |b| b[i]);
            if has_derivs {
                let (mut v, mut d1, mut d2) = (b, 0.0, 0.0);
                for (w, xj) in row.iter().zip(x) {
                    v += w * xj.value;
                    d1 += w * xj.d1;
                    d2 += w * xj.d2;
                }
                z.push(Jet2::new(v, d1, d2));
            } else {
                let v: f64 = row.iter().zip(x).map(|(w, xj)| w * xj.value).sum();
                z.push(Jet2::constant(v + b));
            }
        }
        z
    }

    pub fn forward_jet(&self, x: &[Jet2]) -> Vec<Jet2> {
        self.pre_activation(x)
            .into_iter()
            .map(|z| self.activation.apply_jet(z))
            .collect()
    }
}

impl ParamHolder for DenseLayer {
    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }
    fn offset(&self) -> usize {
        self.offset
    }
    fn set_offset(&mut self, offset: usize) {
        self.offset = offset;
    }
    fn read_params(&self, out: &mut [f64]) {
        let n = self.weights.len();
        out[self.offset..self.offset + n].copy_from_slice(&self.weights);
        if let Some(b) = &self.bias {
            out[self.offset + n..self.offset + n + b.len()].copy_from_slice(b);
        }
    }
    fn write_params(&mut self, src: &[f64]) {
        let n = self.weights.len();
        self.weights
            .copy_from_slice(&src[self.offset..self.offset + n]);
        if let Some(b) = &mut self.bias {
            let m = b.len();
            b.copy_from_slice(&src[self.offset + n..self.offset + n + m]);
        }
    }
}

/// Convolution on a doubly periodic `h x w` grid with `k x k` kernels
/// (odd `k`), channels-first layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
    /// `[cout][cin][k][k]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub offset: usize,
}

impl Conv2d {
    pub fn glorot<R: Rng>(
        cin: usize,
        cout: usize,
        k: usize,
        h: usize,
        w: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if cin == 0 || cout == 0 || k % 2 == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidShape(format!(
                "conv {cin}->{cout} kernel {k} on {h}x{w}"
            )));
        }
        let a = glorot_bound(cin * k * k, cout * k * k);
        let weights = (0..cout * cin * k * k)
            .map(|_| rng.random_range(-a..a))
            .collect();
        Ok(Conv2d {
            cin,
            cout,
            k,
            h,
            w,
            weights,
            bias: vec![0.0; cout],
            activation,
            offset: 0,
        })
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.h * self.w
    }

    #[inline]
    pub fn widx(&self, o: usize, c: usize, a: usize, b: usize) -> usize {
        ((o * self.cin + c) * self.k + a) * self.k + b
    }

    /// Periodic source index for output pixel `(i, j)` and kernel tap `(a, b)`.
    #[inline]
    pub fn src(&self, c: usize, i: usize, j: usize, a: usize, b: usize) -> usize {
        let r = self.k / 2;
        let ii = (i + self.h + a - r) % self.h;
        let jj = (j + self.w + b - r) % self.w;
        (c * self.h + ii) * self.w + jj
    }

    pub fn pre_activation(&self, x: &[Jet2]) -> Vec<Jet2> {
        let mut z = vec![Jet2::ZERO; self.out_len()];
        for o in 0..self.cout {
            for i in 0..self.h {
                for j in 0..self.w {
                    let mut acc = Jet2::constant(self.bias[o]);
                    for c in 0..self.cin {
                        for a in 0..self.k {
                            for b in 0..self.k {
                                acc += x[self.src(c, i, j, a, b)] * self.weights[self.widx(o, c, a, b)];
                            }
                        }
                    }
                    z[(o * self.h + i) * self.w + j] = acc;
                }
            }
        }
        z
    }

    pub fn forward_jet(&self, x: &[Jet2]) -> Vec<Jet2> {
        self.pre_activation(x)
            .into_iter()
            .map(|z| self.activation.apply_jet(z))
            .collect()
    }
}

impl ParamHolder for Conv2d {
    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
    fn offset(&self) -> usize {
        self.offset
    }
    fn set_offset(&mut self, offset: usize) {
        self.offset = offset;
    }
    fn read_params(&self, out: &mut [f64]) {
        let n = self.weights.len();
        out[self.offset..self.offset + n].copy_from_slice(&self.weights);
        out[self.offset + n..self.offset + n + self.bias.len()].copy_from_slice(&self.bias);
    }
    fn write_params(&mut self, src: &[f64]) {
        let n = self.weights.len();
        let m = self.bias.len();
        self.weights.copy_from_slice(&src[self.offset..self.offset + n]);
        self.bias.copy_from_slice(&src[self.offset + n..self.offset + n + m]);
    }
}
