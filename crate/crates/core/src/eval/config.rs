use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::oracle::{PdeKind, PdeSpec};
use crate::training::FamilySpec;

/// A complete run description. The text form is one `key = value` per
/// line; `#` starts a comment. Unknown keys are rejected.
///
/// | key | meaning |
/// |---|---|
/// | `name` | run name, prefix of `run_id` |
/// | `geometry` | `interval`, `sphere` or `torus` |
/// | `coef` | heat alpha (interval) or Allen-Cahn epsilon |
/// | `t_end` | final time |
/// | `variants` | comma list of model variants |
/// | `degree`, `gen_degree` | training / generalization family degree |
/// | `sample_len` | interval samples per initial condition |
/// | `model_degree` | sphere degree of the spectral blocks |
/// | `k` | torus latent dimension |
/// | `torus_n` | torus mesh and sample grid is `torus_n x torus_n` |
/// | `oracle_k` | torus eigenfunctions used by the reference solver |
/// | `width` | hidden width of manifold models |
/// | `step_width`, `recon_width` | interval MLP widths |
/// | `n_train`, `l0_points` | triples, grid points per triple for the initial loss |
/// | `epochs` | interval epochs (single full phase) |
/// | `pretrain_epochs`, `frozen_epochs`, `full_epochs` | manifold phases |
/// | `epochs.<variant>` | per-variant override of `epochs` / `full_epochs` |
/// | `batch_size`, `lr` | optimizer settings |
/// | `n_test`, `eval_steps` | test initial conditions and time steps |
/// | `stability_times` | comma list of times for the noise metric |
/// | `noise_variance` | variance of the sample noise |
/// | `oracle_dt` | reference solver step |
/// | `seed` | master seed |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub geometry: Geometry,
    pub coef: f64,
    pub t_end: f64,
    pub variants: Vec<String>,
    pub degree: usize,
    pub gen_degree: usize,
    pub sample_len: usize,
    pub model_degree: usize,
    pub k: usize,
    pub torus_n: usize,
    pub oracle_k: usize,
    pub width: usize,
    pub step_width: usize,
    pub recon_width: usize,
    pub n_train: usize,
    pub l0_points: usize,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub frozen_epochs: usize,
    pub full_epochs: usize,
    pub epoch_overrides: BTreeMap<String, usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub n_test: usize,
    pub eval_steps: usize,
    pub stability_times: Vec<f64>,
    pub noise_variance: f64,
    pub oracle_dt: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            geometry: Geometry::Interval,
            coef: 0.01,
            t_end: 0.5,
            variants: vec!["spectral-full".into()],
            degree: 20,
            gen_degree: 30,
            sample_len: 101,
            model_degree: 9,
            k: 25,
            torus_n: 9,
            oracle_k: 64,
            width: 64,
            step_width: 50,
            recon_width: 49,
            n_train: 5000,
            l0_points: 8,
            epochs: 200,
            pretrain_epochs: 20,
            frozen_epochs: 20,
            full_epochs: 25,
            epoch_overrides: BTreeMap::new(),
            batch_size: 32,
            lr: 1e-3,
            n_test: 20,
            eval_steps: 500,
            stability_times: vec![0.1, 0.25, 0.5],
            noise_variance: 0.3,
            oracle_dt: 1e-3,
            seed: 0,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'"))))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "name" => self.name = v.to_string(),
            "geometry" => self.geometry = Geometry::parse(v)?,
            "coef" => self.coef = one(key, v)?,
            "t_end" => self.t_end = one(key, v)?,
            "variants" => self.variants = list(key, v)?,
            "degree" => self.degree = one(key, v)?,
            "gen_degree" => self.gen_degree = one(key, v)?,
            "sample_len" => self.sample_len = one(key, v)?,
            "model_degree" => self.model_degree = one(key, v)?,
            "k" => self.k = one(key, v)?,
            "torus_n" => self.torus_n = one(key, v)?,
            "oracle_k" => self.oracle_k = one(key, v)?,
            "width" => self.width = one(key, v)?,
            "step_width" => self.step_width = one(key, v)?,
            "recon_width" => self.recon_width = one(key, v)?,
            "n_train" => self.n_train = one(key, v)?,
            "l0_points" => self.l0_points = one(key, v)?,
            "epochs" => self.epochs = one(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = one(key, v)?,
            "frozen_epochs" => self.frozen_epochs = one(key, v)?,
            "full_epochs" => self.full_epochs = one(key, v)?,
            "batch_size" => self.batch_size = one(key, v)?,
            "lr" => self.lr = one(key, v)?,
            "n_test" => self.n_test = one(key, v)?,
            "eval_steps" => self.eval_steps = one(key, v)?,
            "stability_times" => self.stability_times = list(key, v)?,
            "noise_variance" => self.noise_variance = one(key, v)?,
            "oracle_dt" => self.oracle_dt = one(key, v)?,
            "seed" => self.seed = one(key, v)?,
            _ => match key.strip_prefix("epochs.") {
                Some(variant) if !variant.is_empty() => {
                    self.epoch_overrides.insert(variant.to_string(), one(key, v)?);
                }
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.variants.is_empty() {
            return bad("no variants");
        }
        if !(self.coef > 0.0) || !(self.t_end > 0.0) {
            return bad("coef and t_end must be positive");
        }
        if self.n_test == 0 || self.eval_steps == 0 || self.batch_size == 0 || self.n_train == 0 {
            return bad("n_test, eval_steps, batch_size and n_train must be positive");
        }
        if self.gen_degree < self.degree {
            return bad("gen_degree must not be below degree");
        }
        if !(self.noise_variance > 0.0) || !(self.oracle_dt > 0.0) || !(self.lr > 0.0) {
            return bad("noise_variance, oracle_dt and lr must be positive");
        }
        if self.stability_times.iter().any(|&t| t < 0.0 || t > self.t_end) {
            return bad("stability_times must lie in [0, t_end]");
        }
        if self.geometry == Geometry::Torus && self.oracle_k > self.torus_n * self.torus_n {
            return bad("oracle_k exceeds the number of mesh nodes");
        }
        for v in &self.variants {
            self.model_config(v)?;
        }
        Ok(())
    }

    /// Canonical text: every key in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let _ = write!(
            s,
            "name = {}\ngeometry = {}\ncoef = {:e}\nt_end = {:e}\nvariants = {}\ndegree = {}\n\
             gen_degree = {}\nsample_len = {}\nmodel_degree = {}\nk = {}\ntorus_n = {}\noracle_k = {}\n\
             width = {}\nstep_width = {}\nrecon_width = {}\nn_train = {}\nl0_points = {}\nepochs = {}\n\
             pretrain_epochs = {}\nfrozen_epochs = {}\nfull_epochs = {}\n",
            self.name,
            self.geometry.name(),
            self.coef,
            self.t_end,
            self.variants.join(","),
            self.degree,
            self.gen_degree,
            self.sample_len,
            self.model_degree,
            self.k,
            self.torus_n,
            self.oracle_k,
            self.width,
            self.step_width,
            self.recon_width,
            self.n_train,
            self.l0_points,
            self.epochs,
            self.pretrain_epochs,
            self.frozen_epochs,
            self.full_epochs,
        );
        for (v, e) in &self.epoch_overrides {
            let _ = writeln!(s, "epochs.{v} = {e}");
        }
        let _ = write!(
            s,
            "batch_size = {}\nlr = {:e}\nn_test = {}\neval_steps = {}\nstability_times = {}\n\
             noise_variance = {:e}\noracle_dt = {:e}\nseed = {}\n",
            self.batch_size,
            self.lr,
            self.n_test,
            self.eval_steps,
            join(&self.stability_times),
            self.noise_variance,
            self.oracle_dt,
            self.seed,
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn config_hash(&self) -> String {
        let d = Sha256::digest(self.to_text().as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn pde(&self) -> PdeSpec {
        let mut p = match self.geometry {
            Geometry::Interval => PdeSpec::heat(self.coef),
            g => PdeSpec::allen_cahn(self.coef, g),
        };
        p.t_end = self.t_end;
        p
    }

    pub fn pde_kind(&self) -> PdeKind {
        self.pde().kind
    }

    pub fn family(&self) -> FamilySpec {
        match self.geometry {
            Geometry::Interval => FamilySpec::interval(self.degree, self.sample_len),
            Geometry::Sphere => FamilySpec::sphere(self.degree),
            Geometry::Torus => FamilySpec::torus(self.degree, self.torus_n, self.torus_n),
        }
    }

    pub fn model_config(&self, variant: &str) -> Result<ModelConfig> {
        let mut m = match self.geometry {
            Geometry::Interval => {
                let mut m = ModelConfig::interval(variant, self.degree, self.sample_len, self.coef)?;
                m.step_width = self.step_width;
                m.recon_width = self.recon_width;
                m
            }
            Geometry::Sphere => ModelConfig::sphere(variant, self.model_degree, self.coef, self.width)?,
            Geometry::Torus => ModelConfig::torus(variant, self.torus_n, self.k, self.coef, self.width)?,
        };
        if self.geometry == Geometry::Interval && m.blocks.is_some() {
            m.k = self.degree;
        }
        Ok(m)
    }

    /// Epochs of the last training phase for `variant`.
    pub fn epochs_for(&self, variant: &str) -> usize {
        let base = match self.geometry {
            Geometry::Interval => self.epochs,
            _ => self.full_epochs,
        };
        self.epoch_overrides.get(variant).copied().unwrap_or(base)
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "minimal",
    "table1-desk",
    "table3-desk",
    "table5-desk",
    "table1",
    "table3",
    "table5",
];

/// Built-in configurations. The `-desk` ones run on a laptop; the others
/// follow the published sizes and take hours.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig { name: name.to_string(), ..Default::default() };
    match name {
        "minimal" => {
            c.variants = vec!["spectral-exact".into()];
            c.n_train = 1;
            c.epochs = 0;
            c.n_test = 3;
            c.eval_steps = 10;
        }
        "table1-desk" | "table1" => {
            c.variants = vec![
                "naive".into(),
                "spectral-full".into(),
                "spectral-mlp-step".into(),
                "spectral-mlp-recon".into(),
            ];
            if name == "table1-desk" {
                c.eval_steps = 100;
                c.epoch_overrides.insert("spectral-mlp-step".into(), 30);
                c.epoch_overrides.insert("spectral-mlp-recon".into(), 30);
                c.epoch_overrides.insert("naive".into(), 10);
            }
        }
        "table3-desk" | "table3" => {
            c.geometry = Geometry::Sphere;
            c.coef = 0.1;
            c.t_end = 1.0;
            c.variants = vec!["naive".into(), "sphere-a".into(), "sphere-b".into(), "sphere-c".into()];
            c.stability_times = vec![0.25, 0.5, 1.0];
            if name == "table3-desk" {
                c.degree = 5;
                c.gen_degree = 8;
                c.model_degree = 5;
                c.width = 48;
                c.n_train = 2000;
                c.pretrain_epochs = 100;
                c.frozen_epochs = 20;
                c.full_epochs = 25;
                c.eval_steps = 50;
            } else {
                c.degree = 9;
                c.gen_degree = 14;
                c.model_degree = 9;
                c.width = 170;
            }
        }
        "table5-desk" | "table5" => {
            c.geometry = Geometry::Torus;
            c.coef = 0.1;
            c.t_end = 1.0;
            c.variants = vec![
                "naive".into(),
                "torus-spectral-a".into(),
                "torus-spectral-b".into(),
                "torus-encoder-a".into(),
            ];
            c.stability_times = vec![0.25, 0.5, 1.0];
            if name == "table5-desk" {
                c.degree = 3;
                c.gen_degree = 5;
                c.torus_n = 9;
                c.k = 25;
                c.oracle_k = 64;
                c.width = 32;
                c.n_train = 1000;
                c.pretrain_epochs = 5;
                c.frozen_epochs = 5;
                c.full_epochs = 5;
                c.eval_steps = 20;
            } else {
                c.degree = 5;
                c.gen_degree = 10;
                c.torus_n = 30;
                c.k = 225;
                c.oracle_k = 400;
                c.width = 256;
            }
        }
        _ => return Err(Error::Config(format!("unknown preset '{name}'; known: {}", PRESETS.join(", ")))),
    }
    c.validate()?;
    Ok(c)
}
