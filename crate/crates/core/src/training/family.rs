use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bases::sphere::{sphere_eval, SphereBasisSpec};
use crate::bases::Geometry;
use crate::error::{Error, Result};

/// Independent random streams drawn from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train = 1,
    Test = 2,
    Generalization = 3,
    Noise = 4,
    Collocation = 5,
}

/// RNG for one role of one seed. Different splits never share draws.
pub fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64);
    rng
}

/// Initial conditions `sum c_i phi_i` with `|c| = 1`.
///
/// Interval: `phi_k = sin(2 pi k x)`, `k = 1..=degree`.
/// Sphere: real harmonics up to `degree`.
/// Torus: `sin(k theta) sin(l phi)`, `k, l = 1..=degree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilySpec {
    pub geometry: Geometry,
    pub degree: usize,
    /// Sample grid: `(1, L)` on the interval, `(20, 20)` on the sphere,
    /// `(n_theta, n_phi)` on the torus.
    pub grid: (usize, usize),
}

impl FamilySpec {
    pub fn interval(degree: usize, l: usize) -> Self {
        FamilySpec { geometry: Geometry::Interval, degree, grid: (1, l) }
    }

    pub fn sphere(degree: usize) -> Self {
        FamilySpec { geometry: Geometry::Sphere, degree, grid: (20, 20) }
    }

    pub fn torus(degree: usize, n_theta: usize, n_phi: usize) -> Self {
        FamilySpec { geometry: Geometry::Torus, degree, grid: (n_theta, n_phi) }
    }

    pub fn with_degree(self, degree: usize) -> Self {
        FamilySpec { degree, ..self }
    }

    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Interval => self.degree,
            Geometry::Sphere => (self.degree + 1) * (self.degree + 1),
            Geometry::Torus => self.degree * self.degree,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Sample locations in sample order.
    pub fn grid_points(&self) -> Vec<Vec<f64>> {
        let (a, b) = self.grid;
        match self.geometry {
            Geometry::Interval => (0..b).map(|j| vec![j as f64 / (b - 1) as f64]).collect(),
            Geometry::Sphere => SphereBasisSpec::grid().into_iter().map(|(t, p)| vec![t, p]).collect(),
            Geometry::Torus => {
                let mut g = Vec::with_capacity(a * b);
                for i in 0..a {
                    for j in 0..b {
                        g.push(vec![2.0 * PI * i as f64 / a as f64, 2.0 * PI * j as f64 / b as f64]);
                    }
                }
                g
            }
        }
    }

    pub fn eval(&self, c: &[f64], point: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Interval => c
                .iter()
                .enumerate()
                .map(|(i, &ci)| ci * (2.0 * PI * (i + 1) as f64 * point[0]).sin())
                .sum(),
            Geometry::Sphere => sphere_eval(c, point[0], point[1]),
            Geometry::Torus => {
                let d = self.degree;
                let mut s = 0.0;
                for k in 0..d {
                    let sk = ((k + 1) as f64 * point[0]).sin();
                    for l in 0..d {
                        s += c[k * d + l] * sk * ((l + 1) as f64 * point[1]).sin();
                    }
                }
                s
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.geometry {
            Geometry::Interval => self.grid.0 == 1 && self.grid.1 >= 2,
            Geometry::Sphere => self.grid == (20, 20),
            Geometry::Torus => self.grid.0 >= 3 && self.grid.1 >= 3,
        };
        if !ok || self.degree == 0 && self.geometry != Geometry::Sphere {
            return Err(Error::Config(format!("invalid family {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub spec: FamilySpec,
    pub coeffs: Vec<Vec<f64>>,
    /// Values on the sample grid, one row per initial condition.
    pub samples: Vec<Vec<f64>>,
}

impl Family {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Normalized standard Gaussian vector, uniform on the unit sphere.
pub fn unit_gaussian<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Samples `n` members drawn from `rng`.
pub fn sample_family_with<R: Rng>(spec: &FamilySpec, n: usize, rng: &mut R) -> Result<Family> {
    spec.validate()?;
    let grid = spec.grid_points();
    let coeffs: Vec<Vec<f64>> = (0..n).map(|_| unit_gaussian(spec.dim(), rng)).collect();
    let samples = coeffs
        .iter()
        .map(|c| grid.iter().map(|p| spec.eval(c, p)).collect())
        .collect();
    Ok(Family { spec: *spec, coeffs, samples })
}

/// Training-split family for `seed`.
pub fn sample_family(spec: &FamilySpec, n: usize, seed: u64) -> Result<Family> {
    sample_family_with(spec, n, &mut split_rng(seed, Split::Train))
}
