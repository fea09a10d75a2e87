//! The three-block spectral model and the monolithic baseline.

pub mod blocks;
pub mod config;

use std::io::{Read, Write};
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use blocks::{
    build_reconstruction, build_time_stepping, build_transformation, Reconstruction,
    SpectralBranch, TimeStepping, Transformation,
};
pub use config::{ModelConfig, ReconVariant, SteppingVariant, TransformVariant};

use crate::autodiff::graph::{JetEval, Ops};
use crate::autodiff::jet::{Jet2, Scalar};
use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint, LayerRec};
use crate::nn::layer::{DenseLayer, ParamHolder};
use crate::nn::mlp::{Mlp, MlpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Transformation,
    TimeStepping,
    Reconstruction,
    /// The whole baseline network.
    Monolithic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPinnModel {
    pub config: ModelConfig,
    pub transformation: Transformation,
    pub time_stepping: TimeStepping,
    pub reconstruction: Reconstruction,
    ranges: [Range<usize>; 3],
}

/// Single MLP on `(samples, point, t)`. The first layer is stored split
/// into a sample part and a coordinate part so the sample product can be
/// reused across derivative passes; the arithmetic is that of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveModel {
    pub config: ModelConfig,
    pub first_samples: DenseLayer,
    pub first_coords: DenseLayer,
    pub rest: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Spectral(SpectralPinnModel),
    Naive(NaiveModel),
}

/// Per-initial-condition quantities that do not depend on point or time.
#[derive(Debug, Clone)]
pub struct Encoded<V> {
    /// Transformed samples.
    pub c: Option<V>,
    /// Transformed nonlinear part `F - F^3`.
    pub cn: Option<V>,
    /// Time-independent partner of the exponential factor.
    pub pre: Option<V>,
    /// Sample part of the baseline's first layer.
    pub naive: Option<V>,
}

/// Outputs of the derivative passes at one point: seeded in `t`, in the
/// first coordinate, and (2-D domains) in the second coordinate.
#[derive(Debug, Clone)]
pub struct Passes<V> {
    pub t: V,
    pub a: V,
    pub b: Option<V>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub u: f64,
    pub u_t: f64,
    pub lap: f64,
}

fn input_vec(point: &[Jet2]) -> Vec<Jet2> {
    point.to_vec()
}

impl SpectralPinnModel {
    fn layout(&mut self) {
        let mut off = 0;
        let mut ranges = [0..0, 0..0, 0..0];
        let groups: [Vec<&mut dyn ParamHolder>; 3] = [
            self.transformation.holders(),
            self.time_stepping.holders(),
            self.reconstruction.holders(),
        ];
        for (gi, group) in groups.into_iter().enumerate() {
            let start = off;
            for h in group {
                h.set_offset(off);
                off += h.n_params();
            }
            ranges[gi] = start..off;
        }
        self.ranges = ranges;
    }

    pub fn block_params(&self, kind: BlockKind) -> usize {
        match kind {
            BlockKind::Transformation => self.ranges[0].len(),
            BlockKind::TimeStepping => self.ranges[1].len(),
            BlockKind::Reconstruction => self.ranges[2].len(),
            BlockKind::Monolithic => 0,
        }
    }
}

impl NaiveModel {
    fn build(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<NaiveModel> {
        let w = cfg.naive_width;
        let coords = cfg.point_dim() + 1;
        if cfg.naive_layers < 2 {
            return Err(Error::InvalidShape("baseline needs at least two layers".into()));
        }
        // Draw the joint first layer so initialization matches an unsplit layer.
        let joint = DenseLayer::glorot(cfg.sample_len + coords, w, true, Activation::Tanh, rng)?;
        let mut first_samples = DenseLayer::new(cfg.sample_len, w, false, Activation::Identity)?;
        let mut first_coords = DenseLayer::new(coords, w, true, Activation::Identity)?;
        for i in 0..w {
            for j in 0..cfg.sample_len {
                first_samples.weights[i * cfg.sample_len + j] = joint.w(i, j);
            }
            for j in 0..coords {
                first_coords.weights[i * coords + j] = joint.w(i, cfg.sample_len + j);
            }
        }
        let rest = Mlp::glorot(&MlpSpec::uniform(w, w, 1, cfg.naive_layers - 1), rng)?;
        let mut m = NaiveModel {
            config: cfg.clone(),
            first_samples,
            first_coords,
            rest,
        };
        m.layout();
        Ok(m)
    }

    fn layout(&mut self) {
        let mut off = 0;
        self.first_samples.set_offset(off);
        off += self.first_samples.n_params();
        self.first_coords.set_offset(off);
        off += self.first_coords.n_params();
        self.rest.set_offset(off);
    }

    fn holders(&mut self) -> Vec<&mut dyn ParamHolder> {
        vec![&mut self.first_samples, &mut self.first_coords, &mut self.rest]
    }
}

impl Model {
    /// Builds every block with Glorot-uniform weights from `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match cfg.blocks {
            None => Ok(Model::Naive(NaiveModel::build(cfg, &mut rng)?)),
            Some((tv, sv, rv)) => {
                let transformation = build_transformation(cfg, tv, &mut rng)?;
                let time_stepping = build_time_stepping(cfg, sv, &mut rng)?;
                let reconstruction = build_reconstruction(cfg, rv, &mut rng)?;
                if transformation.out_len() != cfg.k {
                    return Err(Error::ShapeMismatch {
                        expected: cfg.k,
                        got: transformation.out_len(),
                    });
                }
                let mut m = SpectralPinnModel {
                    config: cfg.clone(),
                    transformation,
                    time_stepping,
                    reconstruction,
                    ranges: [0..0, 0..0, 0..0],
                };
                m.layout();
                Ok(Model::Spectral(m))
            }
        }
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Spectral(m) => &m.config,
            Model::Naive(m) => &m.config,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.config().geometry
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Model::Spectral(_))
    }

    pub fn variant_name(&self) -> String {
        match self {
            Model::Naive(_) => "naive".into(),
            Model::Spectral(m) => format!(
                "{}+{}+{}",
                m.transformation.variant(),
                m.time_stepping.variant(),
                m.reconstruction.variant()
            ),
        }
    }

    fn holders_mut(&mut self) -> Vec<&mut dyn ParamHolder> {
        match self {
            Model::Spectral(m) => {
                let mut v = m.transformation.holders();
                v.extend(m.time_stepping.holders());
                v.extend(m.reconstruction.holders());
                v
            }
            Model::Naive(m) => m.holders(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Model::Spectral(m) => m.ranges[2].end,
            Model::Naive(m) => {
                m.first_samples.n_params() + m.first_coords.n_params() + m.rest.n_params()
            }
        }
    }

    /// Trainable parameter count of one block.
    pub fn block_params(&self, kind: BlockKind) -> usize {
        match (self, kind) {
            (Model::Naive(_), BlockKind::Monolithic) => self.n_params(),
            (Model::Spectral(m), k) => m.block_params(k),
            _ => 0,
        }
    }

    pub fn block_range(&self, kind: BlockKind) -> Range<usize> {
        match (self, kind) {
            (Model::Naive(_), BlockKind::Monolithic) => 0..self.n_params(),
            (Model::Spectral(m), BlockKind::Transformation) => m.ranges[0].clone(),
            (Model::Spectral(m), BlockKind::TimeStepping) => m.ranges[1].clone(),
            (Model::Spectral(m), BlockKind::Reconstruction) => m.ranges[2].clone(),
            _ => 0..0,
        }
    }

    /// `true` for every parameter inside one of the `frozen` blocks.
    pub fn freeze_mask(&self, frozen: &[BlockKind]) -> Vec<bool> {
        let mut mask = vec![false; self.n_params()];
        for &k in frozen {
            for i in self.block_range(k) {
                mask[i] = true;
            }
        }
        mask
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params()];
        let mut me = self.clone();
        for h in me.holders_mut() {
            h.read_params(&mut p);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        for h in self.holders_mut() {
            h.write_params(p);
        }
    }

    fn transform<'a, O: Ops<'a>>(t: &'a Transformation, ops: &mut O, x: &O::V) -> O::V {
        match t {
            Transformation::Exact { op, k } => ops.matvec_const(x, op, *k),
            Transformation::Linear(d) => ops.dense(x, d),
            Transformation::Conv { convs, dense, .. } => {
                let mut h = x.clone();
                for c in convs {
                    h = ops.conv(&h, c);
                }
                ops.dense(&h, dense)
            }
        }
    }

    /// Point- and time-independent part of the forward pass.
    pub fn encode<'a, O: Ops<'a>>(&'a self, ops: &mut O, samples: &[f64]) -> Result<Encoded<O::V>> {
        let cfg = self.config();
        if samples.len() != cfg.sample_len {
            return Err(Error::ShapeMismatch {
                expected: cfg.sample_len,
                got: samples.len(),
            });
        }
        let f = ops.input(samples.iter().map(|&v| Jet2::constant(v)).collect());
        match self {
            Model::Naive(m) => Ok(Encoded {
                c: None,
                cn: None,
                pre: None,
                naive: Some(ops.dense(&f, &m.first_samples)),
            }),
            Model::Spectral(m) => {
                let c = Self::transform(&m.transformation, ops, &f);
                let cn = if m.time_stepping.variant().uses_nonlinear_input() {
                    let g = ops.input(samples.iter().map(|&v| Jet2::constant(v - v * v * v)).collect());
                    Some(Self::transform(&m.transformation, ops, &g))
                } else {
                    None
                };
                let pre = match &m.time_stepping {
                    TimeStepping::Exponential { d12, .. } => {
                        let x = match &cn {
                            Some(cn) => ops.concat(&[&c, cn]),
                            None => c.clone(),
                        };
                        Some(d12.apply(ops, &x))
                    }
                    _ => None,
                };
                Ok(Encoded {
                    c: Some(c),
                    cn,
                    pre,
                    naive: None,
                })
            }
        }
    }

    /// Time-stepping output (spectral models only).
    pub fn step<'a, O: Ops<'a>>(&'a self, ops: &mut O, enc: &Encoded<O::V>, t: Jet2) -> Result<O::V> {
        let Model::Spectral(m) = self else {
            return Err(Error::InvalidVariant("baseline has no time-stepping block".into()));
        };
        let c = enc.c.as_ref().expect("encoded by a spectral model");
        let with_t = |ops: &mut O| {
            let tin = ops.input(vec![t]);
            let x = match &enc.cn {
                Some(cn) => ops.concat(&[c, cn, &tin]),
                None => ops.concat(&[c, &tin]),
            };
            (tin, x)
        };
        Ok(match &m.time_stepping {
            TimeStepping::RealizationHeat { k, alpha } => {
                let e = (1..=*k)
                    .map(|kk| (t * -TimeStepping::heat_rate(kk, *alpha)).exp())
                    .collect();
                let e = ops.input(e);
                ops.hadamard(c, &e)
            }
            TimeStepping::Mlp { net, .. } => {
                let (_, x) = with_t(ops);
                net.apply(ops, &x)
            }
            TimeStepping::Exponential { v, d2, .. } => {
                let (tin, x) = with_t(ops);
                let e = ops.dense(&tin, v);
                let pre = enc.pre.as_ref().expect("encoded by this model");
                let d1 = ops.hadamard(&e, pre);
                let d2o = d2.apply(ops, &x);
                ops.add(&d1, &d2o)
            }
        })
    }

    /// Reconstruction at one point from time-stepping output `d`.
    pub fn recon<'a, O: Ops<'a>>(&'a self, ops: &mut O, d: &O::V, point: &[Jet2]) -> Result<O::V> {
        let Model::Spectral(m) = self else {
            return Err(Error::InvalidVariant("baseline has no reconstruction block".into()));
        };
        Ok(match &m.reconstruction {
            Reconstruction::ExactSine { k } => {
                let x = point[0];
                let s = (1..=*k)
                    .map(|kk| (x * (2.0 * std::f64::consts::PI * kk as f64)).sin())
                    .collect();
                let s = ops.input(s);
                ops.dot(d, &s)
            }
            Reconstruction::Mlp { net, .. } => {
                let p = ops.input(input_vec(point));
                let x = ops.concat(&[d, &p]);
                net.apply(ops, &x)
            }
            Reconstruction::Sphere { rd, branches } => {
                let a = rd.apply(ops, d);
                let p = ops.input(input_vec(point));
                let mut loc: Option<O::V> = None;
                for b in branches {
                    let s0 = ops.dense(&p, &b.sin0);
                    let s1 = b.sin1.apply(ops, &s0);
                    let c0 = ops.dense(&p, &b.cos0);
                    let c1 = b.cos1.apply(ops, &c0);
                    let prod = ops.hadamard(&s1, &c1);
                    loc = Some(match loc {
                        Some(l) => ops.add(&l, &prod),
                        None => prod,
                    });
                }
                let loc = loc.expect("at least one branch");
                ops.dot(&a, &loc)
            }
        })
    }

    /// Full evaluation at one point and time.
    pub fn eval<'a, O: Ops<'a>>(
        &'a self,
        ops: &mut O,
        enc: &Encoded<O::V>,
        point: &[Jet2],
        t: Jet2,
    ) -> Result<O::V> {
        match self {
            Model::Naive(m) => {
                let mut coords = input_vec(point);
                coords.push(t);
                let ci = ops.input(coords);
                let b = ops.dense(&ci, &m.first_coords);
                let s = ops.add(enc.naive.as_ref().expect("encoded by this model"), &b);
                let h = ops.act(&s, Activation::Tanh);
                Ok(m.rest.apply(ops, &h))
            }
            Model::Spectral(_) => {
                let d = self.step(ops, enc, t)?;
                self.recon(ops, &d, point)
            }
        }
    }

    /// One seeded pass per coordinate. Spectral models evaluate the
    /// time-stepping block once and reuse its value in the spatial passes.
    pub fn passes<'a, O: Ops<'a>>(
        &'a self,
        ops: &mut O,
        enc: &Encoded<O::V>,
        point: &[f64],
        t: f64,
    ) -> Result<Passes<O::V>> {
        let cst: Vec<Jet2> = point.iter().map(|&p| Jet2::constant(p)).collect();
        let seeded = |i: usize| -> Vec<Jet2> {
            point
                .iter()
                .enumerate()
                .map(|(j, &p)| if i == j { Jet2::variable(p) } else { Jet2::constant(p) })
                .collect()
        };
        match self {
            Model::Naive(_) => {
                let tp = self.eval(ops, enc, &cst, Jet2::variable(t))?;
                let a = self.eval(ops, enc, &seeded(0), Jet2::constant(t))?;
                let b = if point.len() > 1 {
                    Some(self.eval(ops, enc, &seeded(1), Jet2::constant(t))?)
                } else {
                    None
                };
                Ok(Passes { t: tp, a, b })
            }
            Model::Spectral(_) => {
                let dt = self.step(ops, enc, Jet2::variable(t))?;
                let tp = self.recon(ops, &dt, &cst)?;
                let d0 = ops.value_only(&dt);
                let a = self.recon(ops, &d0, &seeded(0))?;
                let b = if point.len() > 1 {
                    Some(self.recon(ops, &d0, &seeded(1))?)
                } else {
                    None
                };
                Ok(Passes { t: tp, a, b })
            }
        }
    }

    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        let mut me = self.clone();
        let mut layers = Vec::new();
        collect_layers(&mut me, &mut layers);
        write_checkpoint(w, &self.config().to_manifest(), &layers)
    }

    pub fn load(r: &mut impl Read) -> Result<Model> {
        let (manifest, layers) = read_checkpoint(r)?;
        let cfg = ModelConfig::from_manifest(&manifest)?;
        let mut m = Model::build(&cfg, 0)?;
        let mut expect = Vec::new();
        collect_layers(&mut m.clone(), &mut expect);
        if expect.len() != layers.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} layers, architecture needs {}",
                layers.len(),
                expect.len()
            )));
        }
        let mut p = vec![0.0; m.n_params()];
        for (e, l) in expect.iter().zip(&layers) {
            match (e, l) {
                (LayerRec::Dense(a), LayerRec::Dense(b))
                    if a.inp == b.inp && a.out == b.out && a.offset == b.offset =>
                {
                    b.read_params(&mut p)
                }
                (LayerRec::Conv(a), LayerRec::Conv(b))
                    if a.weights.len() == b.weights.len() && a.offset == b.offset =>
                {
                    b.read_params(&mut p)
                }
                _ => return Err(Error::Format("checkpoint layer table mismatch".into())),
            }
        }
        m.set_params(&p);
        Ok(m)
    }
}

fn collect_layers(m: &mut Model, out: &mut Vec<LayerRec>) {
    fn mlp(net: &Mlp, out: &mut Vec<LayerRec>) {
        out.extend(net.layers.iter().cloned().map(LayerRec::Dense));
    }
    match m {
        Model::Naive(n) => {
            out.push(LayerRec::Dense(n.first_samples.clone()));
            out.push(LayerRec::Dense(n.first_coords.clone()));
            mlp(&n.rest, out);
        }
        Model::Spectral(s) => {
            match &s.transformation {
                Transformation::Exact { .. } => {}
                Transformation::Linear(d) => out.push(LayerRec::Dense(d.clone())),
                Transformation::Conv { convs, dense, .. } => {
                    out.extend(convs.iter().cloned().map(LayerRec::Conv));
                    out.push(LayerRec::Dense(dense.clone()));
                }
            }
            match &s.time_stepping {
                TimeStepping::RealizationHeat { .. } => {}
                TimeStepping::Mlp { net, .. } => mlp(net, out),
                TimeStepping::Exponential { v, d12, d2, .. } => {
                    out.push(LayerRec::Dense(v.clone()));
                    mlp(d12, out);
                    mlp(d2, out);
                }
            }
            match &s.reconstruction {
                Reconstruction::ExactSine { .. } => {}
                Reconstruction::Mlp { net, .. } => mlp(net, out),
                Reconstruction::Sphere { rd, branches } => {
                    mlp(rd, out);
                    for b in branches {
                        out.push(LayerRec::Dense(b.sin0.clone()));
                        mlp(&b.sin1, out);
                        out.push(LayerRec::Dense(b.cos0.clone()));
                        mlp(&b.cos1, out);
                    }
                }
            }
        }
    }
}

/// `(c_aa, c_a, c_bb)` with `Laplacian u = c_aa u_aa + c_a u_a + c_bb u_bb`
/// in the model's coordinates.
pub fn laplacian_coeffs(geometry: Geometry, point: &[f64], radii: (f64, f64)) -> Result<[f64; 3]> {
    Ok(match geometry {
        Geometry::Interval => [1.0, 0.0, 0.0],
        Geometry::Sphere => {
            let th = point[0];
            let s = th.sin();
            if s.abs() < 1e-6 {
                return Err(Error::PoleSingularity(th));
            }
            [1.0, th.cos() / s, 1.0 / (s * s)]
        }
        Geometry::Torus => {
            let (big, r) = radii;
            let th = point[0];
            let ring = big + r * th.cos();
            [1.0 / (r * r), -th.sin() / (r * ring), 1.0 / (ring * ring)]
        }
    })
}

/// `u`, `u_t` and the Laplacian at one point.
pub fn model_derivatives(model: &Model, samples: &[f64], point: &[f64], t: f64) -> Result<Derivs> {
    let coeffs = laplacian_coeffs(model.geometry(), point, model.config().radii)?;
    let mut ev = JetEval;
    let enc = model.encode(&mut ev, samples)?;
    let p = model.passes(&mut ev, &enc, point, t)?;
    let (jt, ja) = (p.t[0], p.a[0]);
    let jb = p.b.map_or(Jet2::ZERO, |b| b[0]);
    Ok(Derivs {
        u: jt.value,
        u_t: jt.d1,
        lap: coeffs[0] * ja.d2 + coeffs[1] * ja.d1 + coeffs[2] * jb.d2,
    })
}

/// Value at one point and time.
pub fn model_forward(model: &Model, samples: &[f64], point: &[f64], t: f64) -> Result<f64> {
    check_point(model, point)?;
    let mut ev = JetEval;
    let enc = model.encode(&mut ev, samples)?;
    let pt: Vec<Jet2> = point.iter().map(|&p| Jet2::constant(p)).collect();
    Ok(model.eval(&mut ev, &enc, &pt, Jet2::constant(t))?[0].value)
}

fn check_point(model: &Model, point: &[f64]) -> Result<()> {
    let d = model.config().point_dim();
    if point.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: point.len(),
        });
    }
    Ok(())
}

/// Values at many points for one initial condition and time; the
/// point-independent work is done once.
pub fn reassemble_multi_eval(
    model: &Model,
    samples: &[f64],
    t: f64,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut ev = JetEval;
    let enc = model.encode(&mut ev, samples)?;
    let tj = Jet2::constant(t);
    let d = match model {
        Model::Spectral(_) => Some(model.step(&mut ev, &enc, tj)?),
        Model::Naive(_) => None,
    };
    points
        .iter()
        .map(|p| {
            check_point(model, p)?;
            let pt: Vec<Jet2> = p.iter().map(|&v| Jet2::constant(v)).collect();
            let v = match &d {
                Some(d) => model.recon(&mut ev, d, &pt)?,
                None => model.eval(&mut ev, &enc, &pt, tj)?,
            };
            Ok(v[0].value)
        })
        .collect()
}

/// Values for several times and points of one initial condition.
pub fn eval_grid(model: &Model, samples: &[f64], times: &[f64], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    times
        .iter()
        .map(|&t| reassemble_multi_eval(model, samples, t, points))
        .collect()
}

/// Time-stepping output at `t` for given samples.
pub fn coefficients_at(model: &Model, samples: &[f64], t: f64) -> Result<Vec<f64>> {
    let mut ev = JetEval;
    let enc = model.encode(&mut ev, samples)?;
    Ok(model
        .step(&mut ev, &enc, Jet2::constant(t))?
        .iter()
        .map(|j| j.val())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::Graph;
    use crate::bases::sphere::real_sph_harm;
    use std::f64::consts::PI;

    fn grid101() -> Vec<f64> {
        (0..101).map(|j| j as f64 / 100.0).collect()
    }

    fn sin_samples(k: f64) -> Vec<f64> {
        grid101().iter().map(|x| (2.0 * PI * k * x).sin()).collect()
    }

    #[test]
    fn parameter_counts() {
        let exact = Model::build(&ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap(), 0).unwrap();
        assert_eq!(exact.n_params(), 0);
        assert_eq!(exact.block_params(BlockKind::TimeStepping), 0);
        let naive = Model::build(&ModelConfig::interval("naive", 20, 101, 0.01).unwrap(), 0).unwrap();
        assert_eq!(naive.n_params(), 53_664);
        let full = Model::build(&ModelConfig::interval("spectral-full", 20, 101, 0.01).unwrap(), 0).unwrap();
        assert_eq!(full.n_params(), 101 * 20 + 20);
        let a = Model::build(&ModelConfig::sphere("sphere-a", 9, 0.1, 170).unwrap(), 0).unwrap();
        let w = 170usize;
        assert_eq!(a.n_params(), 8 * w * w + 611 * w + 56_620);
        assert_eq!(a.n_params(), 391_690);
    }

    #[test]
    fn exact_model_is_analytic() {
        let cfg = ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap();
        let m = Model::build(&cfg, 0).unwrap();
        let f = sin_samples(1.0);
        for &(x, t) in &[(0.1, 0.0), (0.37, 0.2), (0.8, 0.5)] {
            let u = model_forward(&m, &f, &[x], t).unwrap();
            let want = (-4.0 * PI * PI * 0.01 * t).exp() * (2.0 * PI * x).sin();
            assert!((u - want).abs() < 1e-10, "{u} {want}");
        }
        let z = model_forward(&m, &vec![0.0; 101], &[0.3], 0.3).unwrap();
        assert_eq!(z, 0.0);
        let c0 = coefficients_at(&m, &f, 0.0).unwrap();
        assert!((c0[0] - 1.0).abs() < 1e-12 && c0[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn exact_model_satisfies_heat() {
        let cfg = ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap();
        let m = Model::build(&cfg, 0).unwrap();
        let d = model_derivatives(&m, &sin_samples(1.0), &[0.3], 0.2).unwrap();
        assert!((d.u_t + 4.0 * PI * PI * 0.01 * d.u).abs() < 1e-8);
        assert!((d.lap + 4.0 * PI * PI * d.u).abs() < 1e-8);
        assert!((d.u_t - 0.01 * d.lap).abs() < 1e-8);
    }

    #[test]
    fn sphere_laplacian_matches_finite_differences() {
        let cfg = ModelConfig::sphere("sphere-a", 3, 0.1, 12).unwrap();
        let m = Model::build(&cfg, 5).unwrap();
        let f: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.5).collect();
        let (th, ph, t, h) = (1.2, 0.7, 0.3, 1e-4);
        let d = model_derivatives(&m, &f, &[th, ph], t).unwrap();
        let u = |a: f64, b: f64| model_forward(&m, &f, &[a, b], t).unwrap();
        let u0 = u(th, ph);
        let uthth = (u(th + h, ph) - 2.0 * u0 + u(th - h, ph)) / (h * h);
        let uth = (u(th + h, ph) - u(th - h, ph)) / (2.0 * h);
        let uphph = (u(th, ph + h) - 2.0 * u0 + u(th, ph - h)) / (h * h);
        let s = th.sin();
        let fd = uthth + th.cos() / s * uth + uphph / (s * s);
        assert!((d.lap - fd).abs() <= 1e-4 * fd.abs().max(1e-2), "{} {fd}", d.lap);
        let ut = (model_forward(&m, &f, &[th, ph], t + h).unwrap()
            - model_forward(&m, &f, &[th, ph], t - h).unwrap())
            / (2.0 * h);
        assert!((d.u_t - ut).abs() < 1e-6);
        assert!(matches!(
            model_derivatives(&m, &f, &[0.0, 0.5], t),
            Err(Error::PoleSingularity(_))
        ));
    }

    #[test]
    fn laplace_coefficients_on_harmonics() {
        // A sum of harmonics fed through the coefficient formula.
        let (th, ph) = (0.9, 2.1);
        let h = 1e-4;
        let y = |a: f64, b: f64| real_sph_harm(3, -2, a, b).unwrap();
        let c = laplacian_coeffs(Geometry::Sphere, &[th, ph], (2.0, 1.0)).unwrap();
        let lap = c[0] * (y(th + h, ph) - 2.0 * y(th, ph) + y(th - h, ph)) / (h * h)
            + c[1] * (y(th + h, ph) - y(th - h, ph)) / (2.0 * h)
            + c[2] * (y(th, ph + h) - 2.0 * y(th, ph) + y(th, ph - h)) / (h * h);
        assert!((lap + 12.0 * y(th, ph)).abs() < 1e-5);
    }

    #[test]
    fn multi_eval_is_bit_identical() {
        for cfg in [
            ModelConfig::interval("spectral-mlp-recon", 6, 21, 0.01).unwrap(),
            ModelConfig::interval("naive", 6, 21, 0.01).unwrap(),
        ] {
            let m = Model::build(&cfg, 3).unwrap();
            let f: Vec<f64> = (0..21).map(|i| (i as f64 * 0.3).sin()).collect();
            let pts: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
            let many = reassemble_multi_eval(&m, &f, 0.25, &pts).unwrap();
            for (p, v) in pts.iter().zip(&many) {
                assert_eq!(model_forward(&m, &f, p, 0.25).unwrap().to_bits(), v.to_bits());
            }
            assert!(reassemble_multi_eval(&m, &f, 0.25, &[]).unwrap().is_empty());
        }
    }

    #[test]
    fn multi_eval_exact_matches_analytic() {
        let m = Model::build(&ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap(), 0).unwrap();
        let f: Vec<f64> = grid101()
            .iter()
            .map(|x| 0.6 * (2.0 * PI * x).sin() - 0.8 * (6.0 * PI * x).sin())
            .collect();
        let pts: Vec<Vec<f64>> = grid101().into_iter().map(|x| vec![x]).collect();
        let vals = reassemble_multi_eval(&m, &f, 0.4, &pts).unwrap();
        for (p, v) in pts.iter().zip(vals) {
            let x = p[0];
            let want = 0.6 * (-4.0 * PI * PI * 0.01 * 0.4f64).exp() * (2.0 * PI * x).sin()
                - 0.8 * (-36.0 * PI * PI * 0.01 * 0.4f64).exp() * (6.0 * PI * x).sin();
            assert!((v - want).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_errors() {
        let m = Model::build(&ModelConfig::interval("naive", 5, 11, 0.01).unwrap(), 0).unwrap();
        assert!(matches!(
            model_forward(&m, &[0.0; 10], &[0.1], 0.0),
            Err(Error::ShapeMismatch { expected: 11, got: 10 })
        ));
        assert!(matches!(
            model_forward(&m, &[0.0; 11], &[0.1, 0.2], 0.0),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            ModelConfig::interval("bogus", 5, 11, 0.01),
            Err(Error::InvalidVariant(_))
        ));
        let mut cfg = ModelConfig::sphere("sphere-a", 2, 0.1, 8).unwrap();
        cfg.blocks = Some((TransformVariant::LinearTrained, SteppingVariant::RealizationHeat, ReconVariant::ExactSine));
        assert!(matches!(Model::build(&cfg, 0), Err(Error::InvalidVariant(_))));
    }

    /// Variant (a) with zero fan-in from the nonlinear channel is variant (b).
    #[test]
    fn variant_a_reduces_to_b() {
        let cfg_a = ModelConfig::sphere("sphere-a", 2, 0.1, 8).unwrap();
        let mut a = Model::build(&cfg_a, 11).unwrap();
        let k = cfg_a.k;
        let Model::Spectral(sa) = &mut a else { unreachable!() };
        let mut b = sa.clone();
        let TimeStepping::Exponential { d12, d2, nonlinear, .. } = &mut sa.time_stepping else {
            unreachable!()
        };
        assert!(*nonlinear);
        let (mut d12b, mut d2b) = (d12.clone(), d2.clone());
        for (net, netb, extra) in [(d12, &mut d12b, 0usize), (d2, &mut d2b, 1)] {
            let l0 = &mut net.layers[0];
            let lb = &mut netb.layers[0];
            let inb = k + extra;
            lb.inp = inb;
            lb.weights = vec![0.0; lb.out * inb];
            for i in 0..l0.out {
                for j in k..2 * k {
                    l0.weights[i * l0.inp + j] = 0.0;
                }
                for j in 0..k {
                    lb.weights[i * inb + j] = l0.weights[i * l0.inp + j];
                }
                if extra == 1 {
                    lb.weights[i * inb + k] = l0.weights[i * l0.inp + 2 * k];
                }
            }
        }
        let TimeStepping::Exponential { v, .. } = &sa.time_stepping else { unreachable!() };
        b.time_stepping = TimeStepping::Exponential { v: v.clone(), d12: d12b, d2: d2b, nonlinear: false };
        b.config.blocks = Some((TransformVariant::LinearTrained, SteppingVariant::ExpStandardB, ReconVariant::SphereSpectralActivations));
        b.layout();
        let b = Model::Spectral(b);
        let f: Vec<f64> = (0..400).map(|i| ((i as f64) * 0.17).cos() * 0.7).collect();
        for &(th, ph, t) in &[(0.5, 1.0, 0.0), (2.0, 4.0, 0.7)] {
            let ua = model_forward(&a, &f, &[th, ph], t).unwrap();
            let ub = model_forward(&b, &f, &[th, ph], t).unwrap();
            assert!((ua - ub).abs() < 1e-12, "{ua} {ub}");
        }
    }

    fn residual_grad(m: &Model, f: &[f64], point: &[f64], t: f64) -> Vec<f64> {
        let mut g = Graph::new();
        let enc = m.encode(&mut g, f).unwrap();
        let p = m.passes(&mut g, &enc, point, t).unwrap();
        let mut grad = vec![0.0; m.n_params()];
        let mut seeds = vec![(p.t, 0, Jet2 { value: 1.0, d1: 1.0, d2: 0.0 }), (p.a, 0, Jet2 { value: 0.0, d1: 0.5, d2: 1.0 })];
        if let Some(b) = p.b {
            seeds.push((b, 0, Jet2 { value: 0.0, d1: 0.0, d2: 1.0 }));
        }
        g.backward(&seeds, &mut grad);
        grad
    }

    #[test]
    fn gradients_finite_and_match_differences() {
        let cases = [
            (ModelConfig::interval("spectral-mlp-step", 4, 11, 0.01).unwrap(), vec![0.3]),
            (ModelConfig::interval("spectral-mlp-recon", 4, 11, 0.01).unwrap(), vec![0.3]),
            (ModelConfig::interval("naive", 4, 11, 0.01).unwrap(), vec![0.3]),
            (ModelConfig::sphere("sphere-a", 1, 0.1, 6).unwrap(), vec![1.1, 0.4]),
            (ModelConfig::sphere("sphere-b", 1, 0.1, 6).unwrap(), vec![1.1, 0.4]),
            (ModelConfig::sphere("sphere-c", 1, 0.1, 6).unwrap(), vec![1.1, 0.4]),
            (
                {
                    let mut c = ModelConfig::torus("torus-spectral-a", 5, 6, 0.1, 8).unwrap();
                    c.conv_channels = vec![2, 2];
                    c.step_layers = 2;
                    c.recon_layers = 2;
                    c
                },
                vec![0.4, 2.0],
            ),
        ];
        for (cfg, point) in cases {
            let m = Model::build(&cfg, 2).unwrap();
            let f: Vec<f64> = (0..cfg.sample_len).map(|i| ((i as f64) * 0.71).sin() * 0.5).collect();
            let t = 0.2;
            let grad = residual_grad(&m, &f, &point, t);
            assert!(grad.iter().all(|g| g.is_finite()));
            // objective: u + u_t + 0.5 u_a + u_aa (+ u_bb)
            let obj = |mm: &Model| {
                let mut ev = JetEval;
                let enc = mm.encode(&mut ev, &f).unwrap();
                let p = mm.passes(&mut ev, &enc, &point, t).unwrap();
                let mut s = p.t[0].value + p.t[0].d1 + 0.5 * p.a[0].d1 + p.a[0].d2;
                if let Some(b) = p.b {
                    s += b[0].d2;
                }
                s
            };
            let base = m.params();
            let n = base.len();
            for idx in [0, n / 3, n / 2, n - 1] {
                let h = 1e-6;
                let mut mp = m.clone();
                let mut p = base.clone();
                p[idx] += h;
                mp.set_params(&p);
                let up = obj(&mp);
                p[idx] -= 2.0 * h;
                mp.set_params(&p);
                let um = obj(&mp);
                let fd = (up - um) / (2.0 * h);
                assert!(
                    (fd - grad[idx]).abs() <= 1e-4 * fd.abs().max(1.0),
                    "{} idx {idx}: fd {fd} ad {}",
                    m.variant_name(),
                    grad[idx]
                );
            }
        }
    }

    #[test]
    fn freeze_mask_covers_blocks() {
        let m = Model::build(&ModelConfig::interval("spectral-mlp-recon", 4, 11, 0.01).unwrap(), 0).unwrap();
        let mask = m.freeze_mask(&[BlockKind::Transformation]);
        assert_eq!(mask.iter().filter(|&&b| b).count(), 11 * 4 + 4);
        let all = m.freeze_mask(&[BlockKind::Transformation, BlockKind::TimeStepping, BlockKind::Reconstruction]);
        assert!(all.iter().all(|&b| b));
    }

    #[test]
    fn checkpoint_round_trip() {
        for cfg in [
            ModelConfig::sphere("sphere-b", 2, 0.001, 7).unwrap(),
            ModelConfig::interval("naive", 4, 11, 0.01).unwrap(),
            {
                let mut c = ModelConfig::torus("torus-encoder-a", 5, 6, 0.1, 8).unwrap();
                c.conv_channels = vec![2];
                c
            },
        ] {
            let m = Model::build(&cfg, 9).unwrap();
            let mut buf = Vec::new();
            m.save(&mut buf).unwrap();
            let back = Model::load(&mut buf.as_slice()).unwrap();
            assert_eq!(back.params(), m.params());
            assert_eq!(back.config(), m.config());
        }
    }
}
