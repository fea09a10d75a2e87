use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{apply, least_squares_operator, BasisId, SpectralCoeffs};
use crate::autodiff::jet::{Jet2, Scalar};
use crate::error::{Error, Result};

pub const GRID_THETA: usize = 20;
pub const GRID_PHI: usize = 20;

/// Real spherical harmonics up to `degree`, ordered by `l` then `m = -l..=l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SphereBasisSpec {
    pub degree: usize,
}

impl SphereBasisSpec {
    pub fn new(degree: usize) -> Self {
        SphereBasisSpec { degree }
    }

    pub fn len(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(l: usize, m: i64) -> usize {
        ((l * l + l) as i64 + m) as usize
    }

    /// `(l, m)` pairs in coefficient order.
    pub fn orders(&self) -> Vec<(usize, i64)> {
        let mut v = Vec::with_capacity(self.len());
        for l in 0..=self.degree {
            for m in -(l as i64)..=(l as i64) {
                v.push((l, m));
            }
        }
        v
    }

    pub fn id(&self) -> BasisId {
        BasisId::Sphere { degree: self.degree }
    }

    /// `theta_j = pi j / 19`, `phi_k = 2 pi k / 20`; flattened with `k`
    /// fastest.
    pub fn grid() -> Vec<(f64, f64)> {
        let mut g = Vec::with_capacity(GRID_THETA * GRID_PHI);
        for j in 0..GRID_THETA {
            for k in 0..GRID_PHI {
                g.push((
                    PI * j as f64 / (GRID_THETA - 1) as f64,
                    2.0 * PI * k as f64 / GRID_PHI as f64,
                ));
            }
        }
        g
    }
}

fn check_order(l: i64, m: i64) -> Result<()> {
    if l < 0 || m.abs() > l {
        return Err(Error::InvalidOrder { l, m });
    }
    Ok(())
}

/// `P_l^m(cos theta)` with the Condon-Shortley phase, via the diagonal seed
/// and the upward recurrence in `l`. Uses `sqrt(1 - x^2) = sin theta`.
fn legendre_theta<S: Scalar>(l: usize, m: usize, theta: S) -> S {
    let x = theta.cos();
    let s = theta.sin();
    // P_m^m = (-1)^m (2m-1)!! s^m
    let mut dfact = 1.0;
    for i in 0..m {
        dfact *= (2 * i + 1) as f64;
    }
    let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
    let pmm = s.powi(m as i32) * (sign * dfact);
    if l == m {
        return pmm;
    }
    let mut p_prev = pmm;
    let mut p = x * pmm * (2 * m + 1) as f64;
    for ll in (m + 2)..=l {
        let next = (x * p * (2 * ll - 1) as f64 - p_prev * (ll + m - 1) as f64) / (ll - m) as f64;
        p_prev = p;
        p = next;
    }
    p
}

/// Associated Legendre function `P_l^m(x)` for `0 <= m <= l`, `x` in `[-1, 1]`.
pub fn assoc_legendre(l: i64, m: i64, x: f64) -> Result<f64> {
    if l < 0 || m < 0 || m > l {
        return Err(Error::InvalidOrder { l, m });
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::DomainError(format!("x = {x} outside [-1, 1]")));
    }
    Ok(legendre_theta(l as usize, m as usize, x.acos()))
}

fn norm(l: usize, m: usize) -> f64 {
    // (l-m)!/(l+m)! as a product
    let mut ratio = 1.0;
    for i in (l - m + 1)..=(l + m) {
        ratio /= i as f64;
    }
    ((2 * l + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Real spherical harmonic `Y_lm`; generic so jets give angular derivatives.
pub fn real_sph_harm_s<S: Scalar>(l: usize, m: i64, theta: S, phi: S) -> S {
    let am = m.unsigned_abs() as usize;
    let base = legendre_theta(l, am, theta) * norm(l, am);
    if m == 0 {
        return base;
    }
    // sqrt(2) (-1)^m times Re/Im of Y_l^|m|; the phase cancels the one in P.
    let sign = if am % 2 == 1 { -1.0 } else { 1.0 };
    let ang = phi * am as f64;
    let trig = if m > 0 { ang.cos() } else { ang.sin() };
    base * trig * (sign * std::f64::consts::SQRT_2)
}

pub fn real_sph_harm(l: i64, m: i64, theta: f64, phi: f64) -> Result<f64> {
    check_order(l, m)?;
    Ok(real_sph_harm_s(l as usize, m, theta, phi))
}

/// `sum c_lm Y_lm(theta, phi)`.
pub fn sphere_eval<S: Scalar>(coeffs: &[f64], theta: S, phi: S) -> S {
    let mut s = S::cst(0.0);
    let mut idx = 0;
    let mut l = 0usize;
    while idx < coeffs.len() {
        for m in -(l as i64)..=(l as i64) {
            if idx >= coeffs.len() {
                break;
            }
            if coeffs[idx] != 0.0 {
                s = s + real_sph_harm_s(l, m, theta, phi) * coeffs[idx];
            }
            idx += 1;
        }
        l += 1;
    }
    s
}

/// Laplace-Beltrami operator of a function of `(theta, phi)` on the unit
/// sphere, from one jet pass per coordinate.
pub fn sphere_laplacian<F: Fn(Jet2, Jet2) -> Jet2>(f: F, theta: f64, phi: f64) -> Result<f64> {
    let s = theta.sin();
    if s.abs() < 1e-6 {
        return Err(Error::PoleSingularity(theta));
    }
    let dt = f(Jet2::variable(theta), Jet2::constant(phi));
    let dp = f(Jet2::constant(theta), Jet2::variable(phi));
    Ok(dt.d2 + theta.cos() / s * dt.d1 + dp.d2 / (s * s))
}

pub fn sphere_laplacian_check(l: i64, m: i64, theta: f64, phi: f64) -> Result<f64> {
    check_order(l, m)?;
    sphere_laplacian(|t, p| real_sph_harm_s(l as usize, m, t, p), theta, phi)
}

/// Least-squares map from the 20 x 20 grid to coefficients.
#[derive(Debug, Clone)]
pub struct SphereTransform {
    pub spec: SphereBasisSpec,
    pinv: DMatrix<f64>,
    design: DMatrix<f64>,
}

impl SphereTransform {
    pub fn new(spec: SphereBasisSpec) -> Result<Self> {
        let grid = SphereBasisSpec::grid();
        let orders = spec.orders();
        let design = DMatrix::from_fn(grid.len(), orders.len(), |i, j| {
            let (l, m) = orders[j];
            real_sph_harm_s(l, m, grid[i].0, grid[i].1)
        });
        Ok(SphereTransform {
            spec,
            pinv: least_squares_operator(design.clone())?,
            design,
        })
    }

    pub fn transform(&self, f: &[f64]) -> Result<SpectralCoeffs> {
        if f.len() != self.design.nrows() {
            return Err(Error::ShapeMismatch {
                expected: self.design.nrows(),
                got: f.len(),
            });
        }
        SpectralCoeffs::new(self.spec.id(), apply(&self.pinv, f))
    }

    /// Grid values of a coefficient vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        apply(&self.design, coeffs)
    }

    pub fn matrix_row_major(&self) -> Vec<f64> {
        let (r, c) = self.pinv.shape();
        (0..r * c).map(|i| self.pinv[(i / c, i % c)]).collect()
    }
}
