use std::f64::consts::PI;

use rand::Rng;

use super::config::{ModelConfig, ReconVariant, SteppingVariant, TransformVariant};
use crate::bases::sine::{SineBasisSpec, SineTransform};
use crate::bases::sphere::{SphereBasisSpec, SphereTransform};
use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::layer::{Conv2d, DenseLayer, ParamHolder};
use crate::nn::mlp::{Mlp, MlpSpec};

/// Samples to coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Transformation {
    /// Fixed least-squares operator, row-major `K x L`.
    Exact { op: Vec<f64>, k: usize },
    Linear(DenseLayer),
    Conv { convs: Vec<Conv2d>, dense: DenseLayer, variant: TransformVariant },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeStepping {
    /// `c_k exp(-4 pi^2 k^2 alpha t)`.
    RealizationHeat { k: usize, alpha: f64 },
    /// MLP on `(c, [c_nl], t)`.
    Mlp { net: Mlp, variant: SteppingVariant },
    /// `exp(V t) * D12(c, [c_nl]) + D2(c, [c_nl], t)`.
    Exponential {
        v: DenseLayer,
        d12: Mlp,
        d2: Mlp,
        nonlinear: bool,
    },
}

/// One `sin^l` / `cos^l` branch pair of the spherical reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBranch {
    pub sin0: DenseLayer,
    pub sin1: Mlp,
    pub cos0: DenseLayer,
    pub cos1: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction {
    ExactSine { k: usize },
    /// MLP on `(a, point)`.
    Mlp { net: Mlp, variant: ReconVariant },
    Sphere { rd: Mlp, branches: Vec<SpectralBranch> },
}

fn holders_transform(t: &mut Transformation) -> Vec<&mut dyn ParamHolder> {
    match t {
        Transformation::Exact { .. } => vec![],
        Transformation::Linear(d) => vec![d],
        Transformation::Conv { convs, dense, .. } => {
            let mut v: Vec<&mut dyn ParamHolder> =
                convs.iter_mut().map(|c| c as &mut dyn ParamHolder).collect();
            v.push(dense);
            v
        }
    }
}

fn holders_stepping(s: &mut TimeStepping) -> Vec<&mut dyn ParamHolder> {
    match s {
        TimeStepping::RealizationHeat { .. } => vec![],
        TimeStepping::Mlp { net, .. } => vec![net],
        TimeStepping::Exponential { v, d12, d2, .. } => vec![v, d12, d2],
    }
}

fn holders_recon(r: &mut Reconstruction) -> Vec<&mut dyn ParamHolder> {
    match r {
        Reconstruction::ExactSine { .. } => vec![],
        Reconstruction::Mlp { net, .. } => vec![net],
        Reconstruction::Sphere { rd, branches } => {
            let mut v: Vec<&mut dyn ParamHolder> = vec![rd];
            for b in branches {
                v.push(&mut b.sin0);
                v.push(&mut b.sin1);
                v.push(&mut b.cos0);
                v.push(&mut b.cos1);
            }
            v
        }
    }
}

impl Transformation {
    pub fn holders(&mut self) -> Vec<&mut dyn ParamHolder> {
        holders_transform(self)
    }

    pub fn out_len(&self) -> usize {
        match self {
            Transformation::Exact { k, .. } => *k,
            Transformation::Linear(d) => d.out,
            Transformation::Conv { dense, .. } => dense.out,
        }
    }

    pub fn variant(&self) -> TransformVariant {
        match self {
            Transformation::Exact { .. } => TransformVariant::ExactOperator,
            Transformation::Linear(_) => TransformVariant::LinearTrained,
            Transformation::Conv { variant, .. } => *variant,
        }
    }
}

impl TimeStepping {
    pub fn holders(&mut self) -> Vec<&mut dyn ParamHolder> {
        holders_stepping(self)
    }

    pub fn variant(&self) -> SteppingVariant {
        match self {
            TimeStepping::RealizationHeat { .. } => SteppingVariant::RealizationHeat,
            TimeStepping::Mlp { variant, .. } => *variant,
            TimeStepping::Exponential { nonlinear: true, .. } => SteppingVariant::ExpNonlinearA,
            TimeStepping::Exponential { nonlinear: false, .. } => SteppingVariant::ExpStandardB,
        }
    }

    /// `4 pi^2 k^2 alpha` for mode `k` (1-based) of the heat realization.
    pub fn heat_rate(k: usize, alpha: f64) -> f64 {
        4.0 * PI * PI * (k * k) as f64 * alpha
    }
}

impl Reconstruction {
    pub fn holders(&mut self) -> Vec<&mut dyn ParamHolder> {
        holders_recon(self)
    }

    pub fn variant(&self) -> ReconVariant {
        match self {
            Reconstruction::ExactSine { .. } => ReconVariant::ExactSine,
            Reconstruction::Mlp { variant, .. } => *variant,
            Reconstruction::Sphere { .. } => ReconVariant::SphereSpectralActivations,
        }
    }
}

fn mlp<R: Rng>(inp: usize, width: usize, out: usize, layers: usize, rng: &mut R) -> Result<Mlp> {
    if layers == 0 {
        return Err(Error::InvalidShape("MLP with zero layers".into()));
    }
    Mlp::glorot(&MlpSpec::uniform(inp, width, out, layers), rng)
}

fn check_geometry(cfg: &ModelConfig, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidVariant(format!(
            "{what} not available on {}",
            cfg.geometry.name()
        )))
    }
}

pub fn build_transformation<R: Rng>(
    cfg: &ModelConfig,
    variant: TransformVariant,
    rng: &mut R,
) -> Result<Transformation> {
    let (l, k) = (cfg.sample_len, cfg.k);
    Ok(match variant {
        TransformVariant::ExactOperator => {
            let op = match cfg.geometry {
                Geometry::Interval => SineTransform::new(SineBasisSpec::new(k, l)?)?.matrix_row_major(),
                Geometry::Sphere => {
                    SphereTransform::new(SphereBasisSpec::new(cfg.degree))?.matrix_row_major()
                }
                Geometry::Torus => {
                    return Err(Error::InvalidVariant(
                        "exact_operator needs an eigenbasis; use grid_conv_trained on the torus"
                            .into(),
                    ))
                }
            };
            Transformation::Exact { op, k }
        }
        TransformVariant::LinearTrained => {
            check_geometry(cfg, cfg.geometry != Geometry::Torus, "linear_trained")?;
            // zero start: gradient descent then converges to the minimum-norm
            // map, which sends directions absent from the training samples
            // (modes beyond the training degree) to zero
            Transformation::Linear(DenseLayer::new(l, k, true, Activation::Identity)?)
        }
        TransformVariant::GridConvTrained | TransformVariant::Encoder => {
            check_geometry(cfg, cfg.geometry == Geometry::Torus, variant.name())?;
            let (h, w) = cfg.grid;
            if h * w != l {
                return Err(Error::ShapeMismatch { expected: l, got: h * w });
            }
            let mut convs = Vec::new();
            let mut cin = 1;
            for &cout in &cfg.conv_channels {
                convs.push(Conv2d::glorot(cin, cout, cfg.conv_kernel, h, w, Activation::Tanh, rng)?);
                cin = cout;
            }
            let dense = DenseLayer::glorot(cin * h * w, k, true, Activation::Identity, rng)?;
            Transformation::Conv { convs, dense, variant }
        }
    })
}

pub fn build_time_stepping<R: Rng>(
    cfg: &ModelConfig,
    variant: SteppingVariant,
    rng: &mut R,
) -> Result<TimeStepping> {
    let (k, w) = (cfg.k, cfg.step_width);
    Ok(match variant {
        SteppingVariant::RealizationHeat => {
            check_geometry(cfg, cfg.geometry == Geometry::Interval, variant.name())?;
            TimeStepping::RealizationHeat { k, alpha: cfg.coef }
        }
        SteppingVariant::MlpPlain | SteppingVariant::NaiveMlpC | SteppingVariant::TorusB => {
            TimeStepping::Mlp {
                net: mlp(k + 1, w, k, cfg.step_layers, rng)?,
                variant,
            }
        }
        SteppingVariant::TorusA => TimeStepping::Mlp {
            net: mlp(2 * k + 1, w, k, cfg.step_layers, rng)?,
            variant,
        },
        SteppingVariant::ExpNonlinearA | SteppingVariant::ExpStandardB => {
            let nonlinear = variant == SteppingVariant::ExpNonlinearA;
            let cin = if nonlinear { 2 * k } else { k };
            let v = DenseLayer::glorot(1, k, false, Activation::Exp, rng)?;
            let d12 = mlp(cin, w, k, cfg.step_layers + cfg.extra_d12_layers, rng)?;
            let d2 = mlp(cin + 1, w, k, cfg.step_layers, rng)?;
            TimeStepping::Exponential { v, d12, d2, nonlinear }
        }
    })
}

pub fn build_reconstruction<R: Rng>(
    cfg: &ModelConfig,
    variant: ReconVariant,
    rng: &mut R,
) -> Result<Reconstruction> {
    let k = cfg.k;
    Ok(match variant {
        ReconVariant::ExactSine => {
            check_geometry(cfg, cfg.geometry == Geometry::Interval, variant.name())?;
            Reconstruction::ExactSine { k }
        }
        ReconVariant::MlpInterval => {
            check_geometry(cfg, cfg.geometry == Geometry::Interval, variant.name())?;
            Reconstruction::Mlp {
                net: mlp(k + 1, cfg.recon_width, 1, cfg.recon_layers, rng)?,
                variant,
            }
        }
        ReconVariant::TorusMlp | ReconVariant::Decoder => {
            check_geometry(cfg, cfg.geometry == Geometry::Torus, variant.name())?;
            Reconstruction::Mlp {
                net: mlp(k + 2, cfg.recon_width, 1, cfg.recon_layers, rng)?,
                variant,
            }
        }
        ReconVariant::SphereSpectralActivations => {
            check_geometry(cfg, cfg.geometry == Geometry::Sphere, variant.name())?;
            let rd = Mlp::glorot(
                &MlpSpec::uniform(k, k, k, cfg.rd_layers.max(1)).with_hidden(Activation::Tanh),
                rng,
            )?;
            // dense layers after the sin^l / cos^l activations, linear output
            let branch = |rng: &mut R| mlp(2, cfg.recon_width, k, cfg.recon_layers, rng);
            let mut branches = Vec::with_capacity(cfg.degree + 1);
            for l in 0..=cfg.degree as u32 {
                branches.push(SpectralBranch {
                    sin0: DenseLayer::glorot(2, 2, true, Activation::SinPow(l), rng)?,
                    sin1: branch(rng)?,
                    cos0: DenseLayer::glorot(2, 2, true, Activation::CosPow(l), rng)?,
                    cos1: branch(rng)?,
                });
            }
            Reconstruction::Sphere { rd, branches }
        }
    })
}
