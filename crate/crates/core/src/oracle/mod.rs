//! Reference solutions: the closed-form heat solution on the interval and
//! an IMEX-BDF4 Galerkin solver for Allen-Cahn on the sphere and torus.

mod cache;
mod imex;

pub use cache::TrajectoryCache;
pub use imex::{imex_bdf4_solve, ImexOptions, OracleSolution};

use std::f64::consts::PI;

use crate::bases::sphere::{sphere_eval, SphereBasisSpec, SphereTransform};
use crate::bases::torus::{interpolate, EigenBasis};
use crate::bases::{BasisId, Geometry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdeKind {
    Heat,
    AllenCahn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeSpec {
    pub kind: PdeKind,
    /// Diffusion coefficient: alpha for heat, epsilon for Allen-Cahn.
    pub coef: f64,
    pub geometry: Geometry,
    pub t_end: f64,
}

impl PdeSpec {
    pub fn heat(alpha: f64) -> Self {
        PdeSpec {
            kind: PdeKind::Heat,
            coef: alpha,
            geometry: Geometry::Interval,
            t_end: 0.5,
        }
    }

    pub fn allen_cahn(eps: f64, geometry: Geometry) -> Self {
        PdeSpec {
            kind: PdeKind::AllenCahn,
            coef: eps,
            geometry,
            t_end: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coef > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config(format!(
                "need positive coefficient and horizon, got {} and {}",
                self.coef, self.t_end
            )));
        }
        Ok(())
    }
}

/// `sum_k exp(-4 pi^2 k^2 alpha t) c_k sin(2 pi k x)`.
pub fn heat_analytic(coeffs: &[f64], x: f64, t: f64, alpha: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let k = (i + 1) as f64;
            (-4.0 * PI * PI * k * k * alpha * t).exp() * c * (2.0 * PI * k * x).sin()
        })
        .sum()
}

/// A basis diagonalizing the Laplacian, together with its collocation grid.
pub trait SpectralSystem: Sync {
    fn id(&self) -> BasisId;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Eigenvalue of `-Laplacian` for mode `k`.
    fn eigenvalue(&self, k: usize) -> f64;
    /// Values on the collocation grid.
    fn nodal(&self, c: &[f64]) -> Vec<f64>;
    /// Grid values back to coefficients.
    fn project(&self, f: &[f64]) -> Vec<f64>;
    fn eval_point(&self, c: &[f64], point: (f64, f64)) -> f64;
    /// Fingerprint of the discretization for cache keys.
    fn fingerprint(&self) -> Vec<u8>;
}

pub struct SphereSystem {
    pub transform: SphereTransform,
    orders: Vec<(usize, i64)>,
}

impl SphereSystem {
    pub fn new(degree: usize) -> Result<Self> {
        let spec = SphereBasisSpec::new(degree);
        Ok(SphereSystem {
            transform: SphereTransform::new(spec)?,
            orders: spec.orders(),
        })
    }
}

impl SpectralSystem for SphereSystem {
    fn id(&self) -> BasisId {
        self.transform.spec.id()
    }
    fn len(&self) -> usize {
        self.orders.len()
    }
    fn eigenvalue(&self, k: usize) -> f64 {
        let l = self.orders[k].0 as f64;
        l * (l + 1.0)
    }
    fn nodal(&self, c: &[f64]) -> Vec<f64> {
        self.transform.synthesize(c)
    }
    fn project(&self, f: &[f64]) -> Vec<f64> {
        self.transform
            .transform(f)
            .map(|c| c.values)
            .expect("grid-sized input")
    }
    fn eval_point(&self, c: &[f64], (theta, phi): (f64, f64)) -> f64 {
        sphere_eval(c, theta, phi)
    }
    fn fingerprint(&self) -> Vec<u8> {
        format!("sphere:{}", self.transform.spec.degree).into_bytes()
    }
}

impl SpectralSystem for EigenBasis {
    fn id(&self) -> BasisId {
        BasisId::Torus { k: self.len() }
    }
    fn len(&self) -> usize {
        EigenBasis::len(self)
    }
    fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k].max(0.0)
    }
    fn nodal(&self, c: &[f64]) -> Vec<f64> {
        self.synthesize(c)
    }
    fn project(&self, f: &[f64]) -> Vec<f64> {
        self.transform(f).expect("node-sized input")
    }
    fn eval_point(&self, c: &[f64], (theta, phi): (f64, f64)) -> f64 {
        let nodal = self.synthesize(c);
        interpolate(&self.geom, |v| nodal[v], theta, phi)
    }
    fn fingerprint(&self) -> Vec<u8> {
        format!(
            "torus:{}x{}:{}:{}:{}",
            self.geom.n_theta,
            self.geom.n_phi,
            self.geom.major,
            self.geom.minor,
            self.len()
        )
        .into_bytes()
    }
}

/// Value of the stored solution at the step nearest `t`.
pub fn oracle_evaluate(
    sol: &OracleSolution,
    system: &dyn SpectralSystem,
    point: (f64, f64),
    t: f64,
) -> Result<f64> {
    let c = sol.coeffs_at(t)?;
    Ok(system.eval_point(c, point))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_examples() {
        let c = [1.0];
        for &x in &[0.1, 0.3, 0.77] {
            assert!((heat_analytic(&c, x, 0.0, 0.01) - (2.0 * PI * x).sin()).abs() < 1e-15);
        }
        let amp = heat_analytic(&c, 0.25, 0.5, 0.01);
        assert!((amp - (-4.0 * PI * PI * 0.01 * 0.5_f64).exp()).abs() < 1e-15);
        assert!((amp - 0.820_870).abs() < 5e-6);
        let mut prev = amp;
        for t in [1.0, 2.0, 5.0, 20.0] {
            let v = heat_analytic(&c, 0.25, t, 0.01);
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }
}
