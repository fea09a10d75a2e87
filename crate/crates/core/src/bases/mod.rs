pub mod sine;
pub mod sphere;
pub mod torus;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use sine::{sine_eval, sine_reconstruct, sine_transform, SineBasisSpec, SineTransform};
pub use sphere::{
    assoc_legendre, real_sph_harm, sphere_eval, sphere_laplacian_check, SphereBasisSpec,
    SphereTransform,
};
pub use torus::{
    assemble_fem, build_torus_mesh, solve_eigenbasis, torus_basis_eval, EigenBasis, TorusGeometry,
    TorusMesh,
};

/// Which ordered basis a coefficient vector refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisId {
    Sine { k: usize },
    Sphere { degree: usize },
    Torus { k: usize },
}

impl BasisId {
    pub fn len(&self) -> usize {
        match *self {
            BasisId::Sine { k } | BasisId::Torus { k } => k,
            BasisId::Sphere { degree } => (degree + 1) * (degree + 1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    pub basis: BasisId,
    pub values: Vec<f64>,
}

impl SpectralCoeffs {
    pub fn new(basis: BasisId, values: Vec<f64>) -> Result<Self> {
        if values.len() != basis.len() {
            return Err(Error::ShapeMismatch {
                expected: basis.len(),
                got: values.len(),
            });
        }
        Ok(SpectralCoeffs { basis, values })
    }
}

/// Least-squares left inverse of a tall design matrix (columns = basis
/// functions). Fails if the numerical column rank is below the column count.
pub(crate) fn least_squares_operator(design: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = design.ncols();
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, needed: cols });
    }
    svd.pseudo_inverse(tol)
        .map_err(|e| Error::DomainError(e.to_string()))
}

/// `m * v` for a row-major use of an nalgebra matrix.
pub(crate) fn apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Geometry {
    Interval,
    Sphere,
    Torus,
}

impl Geometry {
    pub fn name(self) -> &'static str {
        match self {
            Geometry::Interval => "interval",
            Geometry::Sphere => "sphere",
            Geometry::Torus => "torus",
        }
    }

    pub fn parse(s: &str) -> Result<Geometry> {
        match s {
            "interval" => Ok(Geometry::Interval),
            "sphere" => Ok(Geometry::Sphere),
            "torus" => Ok(Geometry::Torus),
            _ => Err(Error::Config(format!("unknown geometry '{s}'"))),
        }
    }
}
