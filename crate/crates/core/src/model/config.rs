use std::fmt;

use crate::bases::Geometry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformVariant {
    ExactOperator,
    LinearTrained,
    GridConvTrained,
    Encoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SteppingVariant {
    RealizationHeat,
    MlpPlain,
    ExpNonlinearA,
    ExpStandardB,
    NaiveMlpC,
    TorusA,
    TorusB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconVariant {
    ExactSine,
    MlpInterval,
    SphereSpectralActivations,
    TorusMlp,
    Decoder,
}

macro_rules! named {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn name(self) -> &'static str {
                match self { $(Self::$v => $s),* }
            }
            pub fn parse(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)*
                    _ => Err(Error::InvalidVariant(s.to_string())),
                }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named!(TransformVariant {
    ExactOperator => "exact_operator",
    LinearTrained => "linear_trained",
    GridConvTrained => "grid_conv_trained",
    Encoder => "encoder",
});

named!(SteppingVariant {
    RealizationHeat => "realization_heat",
    MlpPlain => "mlp_plain",
    ExpNonlinearA => "exp_nonlinear_a",
    ExpStandardB => "exp_standard_b",
    NaiveMlpC => "naive_mlp_c",
    TorusA => "torus_a",
    TorusB => "torus_b",
});

named!(ReconVariant {
    ExactSine => "exact_sine",
    MlpInterval => "mlp_interval",
    SphereSpectralActivations => "sphere_spectral_activations",
    TorusMlp => "torus_mlp",
    Decoder => "decoder",
});

impl SteppingVariant {
    /// Takes the transformed nonlinear part `C(F - F^3)` as extra input.
    pub fn uses_nonlinear_input(self) -> bool {
        matches!(self, SteppingVariant::ExpNonlinearA | SteppingVariant::TorusA)
    }
}

/// Everything needed to build a model. Widths and layer counts not fixed by
/// the architecture are free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub geometry: Geometry,
    /// `None` builds the monolithic baseline.
    pub blocks: Option<(TransformVariant, SteppingVariant, ReconVariant)>,
    /// Samples per initial condition (L, 400, or n_theta * n_phi).
    pub sample_len: usize,
    /// Sample grid shape for convolutions.
    pub grid: (usize, usize),
    /// Coefficient / latent dimension.
    pub k: usize,
    /// Heat diffusivity or Allen-Cahn epsilon.
    pub coef: f64,
    /// Hidden width of time-stepping MLPs.
    pub step_width: usize,
    /// Dense layers of the time-stepping MLP (or of each sub-network for
    /// the exponential variants).
    pub step_layers: usize,
    /// Layers added to the exponential factor's partner network in the
    /// standard exponential variant.
    pub extra_d12_layers: usize,
    pub recon_width: usize,
    pub recon_layers: usize,
    /// Dense layers in the coefficient branch of the spherical reconstruction.
    pub rd_layers: usize,
    /// Sphere degree for the spectral activations.
    pub degree: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub naive_width: usize,
    pub naive_layers: usize,
    /// Torus major and minor radius.
    pub radii: (f64, f64),
}

impl ModelConfig {
    fn base(geometry: Geometry, sample_len: usize, grid: (usize, usize), k: usize, coef: f64) -> Self {
        ModelConfig {
            geometry,
            blocks: None,
            sample_len,
            grid,
            k,
            coef,
            step_width: k,
            step_layers: 5,
            extra_d12_layers: 0,
            recon_width: k,
            recon_layers: 5,
            rd_layers: 1,
            degree: 0,
            conv_channels: vec![8, 16, 32],
            conv_kernel: 3,
            naive_width: sample_len + 2,
            naive_layers: 6,
            radii: (2.0, 1.0),
        }
    }

    /// Interval heat model on `l` samples with `k` sine modes.
    pub fn interval(variant: &str, k: usize, l: usize, alpha: f64) -> Result<Self> {
        use ReconVariant::*;
        use SteppingVariant::*;
        use TransformVariant::*;
        let mut c = Self::base(Geometry::Interval, l, (1, l), k, alpha);
        c.step_width = 50;
        c.recon_width = 49;
        c.naive_width = l + 2;
        c.naive_layers = 6;
        c.blocks = match variant {
            "naive" => None,
            "spectral-exact" => Some((ExactOperator, RealizationHeat, ExactSine)),
            "spectral-full" => Some((LinearTrained, RealizationHeat, ExactSine)),
            "spectral-mlp-step" => Some((LinearTrained, MlpPlain, ExactSine)),
            "spectral-mlp-recon" => Some((LinearTrained, RealizationHeat, MlpInterval)),
            _ => return Err(Error::InvalidVariant(variant.to_string())),
        };
        Ok(c)
    }

    /// Sphere Allen-Cahn model of the given degree; hidden width `w`.
    pub fn sphere(variant: &str, degree: usize, eps: f64, w: usize) -> Result<Self> {
        use ReconVariant::*;
        use SteppingVariant::*;
        use TransformVariant::*;
        let k = (degree + 1) * (degree + 1);
        let mut c = Self::base(Geometry::Sphere, 400, (20, 20), k, eps);
        c.degree = degree;
        c.step_width = w;
        c.step_layers = 6;
        c.naive_width = w;
        c.naive_layers = 26;
        c.recon_layers = 1;
        c.blocks = match variant {
            "naive" => None,
            "sphere-a" => Some((LinearTrained, ExpNonlinearA, SphereSpectralActivations)),
            "sphere-b" => {
                c.extra_d12_layers = 5;
                Some((LinearTrained, ExpStandardB, SphereSpectralActivations))
            }
            "sphere-c" => {
                c.step_layers = 12;
                Some((LinearTrained, NaiveMlpC, SphereSpectralActivations))
            }
            _ => return Err(Error::InvalidVariant(variant.to_string())),
        };
        Ok(c)
    }

    /// Torus Allen-Cahn model on an `n x n` sample grid.
    pub fn torus(variant: &str, n: usize, k: usize, eps: f64, w: usize) -> Result<Self> {
        use ReconVariant::*;
        use SteppingVariant::*;
        use TransformVariant::*;
        let mut c = Self::base(Geometry::Torus, n * n, (n, n), k, eps);
        c.step_width = w;
        c.recon_width = w;
        c.naive_width = w;
        c.naive_layers = 26;
        c.blocks = match variant {
            "naive" => None,
            "torus-spectral-a" => {
                c.step_layers = 9;
                c.recon_layers = 15;
                Some((GridConvTrained, TorusA, TorusMlp))
            }
            "torus-encoder-a" => {
                c.step_layers = 9;
                c.recon_layers = 17;
                Some((Encoder, TorusA, Decoder))
            }
            "torus-spectral-b" => {
                c.step_layers = 15;
                c.recon_layers = 15;
                Some((GridConvTrained, TorusB, TorusMlp))
            }
            _ => return Err(Error::InvalidVariant(variant.to_string())),
        };
        if let Some((Encoder, _, _)) = c.blocks {
            c.conv_channels = vec![8, 8, 16, 16, 32];
        }
        Ok(c)
    }

    pub fn point_dim(&self) -> usize {
        match self.geometry {
            Geometry::Interval => 1,
            _ => 2,
        }
    }

    /// `key=value` lines, the model part of a checkpoint manifest.
    pub fn to_manifest(&self) -> String {
        let (t, s, r) = match self.blocks {
            Some((t, s, r)) => (t.name(), s.name(), r.name()),
            None => ("none", "none", "none"),
        };
        let ch: Vec<String> = self.conv_channels.iter().map(|c| c.to_string()).collect();
        format!(
            "geometry={}\ntransformation={t}\ntime_stepping={s}\nreconstruction={r}\n\
             sample_len={}\ngrid={}x{}\nk={}\ncoef={:e}\nstep_width={}\nstep_layers={}\n\
             extra_d12_layers={}\nrecon_width={}\nrecon_layers={}\nrd_layers={}\ndegree={}\n\
             conv_channels={}\nconv_kernel={}\nnaive_width={}\nnaive_layers={}\nradii={:e},{:e}\n",
            self.geometry.name(),
            self.sample_len,
            self.grid.0,
            self.grid.1,
            self.k,
            self.coef,
            self.step_width,
            self.step_layers,
            self.extra_d12_layers,
            self.recon_width,
            self.recon_layers,
            self.rd_layers,
            self.degree,
            ch.join(","),
            self.conv_kernel,
            self.naive_width,
            self.naive_layers,
            self.radii.0,
            self.radii.1,
        )
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut kv = std::collections::BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line '{line}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&String> {
            kv.get(k).ok_or_else(|| Error::Format(format!("manifest misses '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("manifest '{k}' not an integer")))
        };
        let geometry = Geometry::parse(get("geometry")?)?;
        let blocks = match get("transformation")?.as_str() {
            "none" => None,
            t => Some((
                TransformVariant::parse(t)?,
                SteppingVariant::parse(get("time_stepping")?)?,
                ReconVariant::parse(get("reconstruction")?)?,
            )),
        };
        let (g0, g1) = get("grid")?
            .split_once('x')
            .ok_or_else(|| Error::Format("grid".into()))?;
        let conv_channels = get("conv_channels")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Format("conv_channels".into())))
            .collect::<Result<_>>()?;
        Ok(ModelConfig {
            geometry,
            blocks,
            sample_len: num("sample_len")?,
            grid: (
                g0.parse().map_err(|_| Error::Format("grid".into()))?,
                g1.parse().map_err(|_| Error::Format("grid".into()))?,
            ),
            k: num("k")?,
            coef: get("coef")?.parse().map_err(|_| Error::Format("coef".into()))?,
            step_width: num("step_width")?,
            step_layers: num("step_layers")?,
            extra_d12_layers: num("extra_d12_layers")?,
            recon_width: num("recon_width")?,
            recon_layers: num("recon_layers")?,
            rd_layers: num("rd_layers")?,
            degree: num("degree")?,
            conv_channels,
            conv_kernel: num("conv_kernel")?,
            naive_width: num("naive_width")?,
            naive_layers: num("naive_layers")?,
            radii: {
                let (a, b) = get("radii")?
                    .split_once(',')
                    .ok_or_else(|| Error::Format("radii".into()))?;
                (
                    a.parse().map_err(|_| Error::Format("radii".into()))?,
                    b.parse().map_err(|_| Error::Format("radii".into()))?,
                )
            },
        })
    }
}
