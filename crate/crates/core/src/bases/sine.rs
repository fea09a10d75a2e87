use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{apply, least_squares_operator, BasisId, SpectralCoeffs};
use crate::autodiff::jet::Scalar;
use crate::error::{Error, Result};

/// `K` sine modes sampled at `L` uniform points `j / (L - 1)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SineBasisSpec {
    pub k: usize,
    pub l: usize,
}

impl SineBasisSpec {
    /// The grid includes both endpoints, so mode `(L - 1) / 2` vanishes at
    /// every node; recovering modes `1..=K` needs `L >= 2K + 2`.
    pub fn new(k: usize, l: usize) -> Result<Self> {
        if k == 0 || l < 2 * k + 2 {
            return Err(Error::InvalidGrid(format!(
                "sine basis needs L >= 2K+2, got K={k}, L={l}"
            )));
        }
        Ok(SineBasisSpec { k, l })
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.l).map(|j| j as f64 / (self.l - 1) as f64).collect()
    }

    pub fn id(&self) -> BasisId {
        BasisId::Sine { k: self.k }
    }
}

pub fn sine_eval(k: usize, x: f64) -> f64 {
    (2.0 * PI * k as f64 * x).sin()
}

/// `sum_k a_k sin(2 pi k x)`, `k` from 1.
pub fn sine_reconstruct<S: Scalar>(coeffs: &[f64], x: S) -> S {
    let mut s = S::cst(0.0);
    for (i, &a) in coeffs.iter().enumerate() {
        if a != 0.0 {
            s = s + (x * (2.0 * PI * (i + 1) as f64)).sin() * a;
        }
    }
    s
}

/// Precomputed least-squares operator for one spec.
#[derive(Debug, Clone)]
pub struct SineTransform {
    pub spec: SineBasisSpec,
    pinv: DMatrix<f64>,
}

impl SineTransform {
    pub fn new(spec: SineBasisSpec) -> Result<Self> {
        let grid = spec.grid();
        let design = DMatrix::from_fn(spec.l, spec.k, |j, k| sine_eval(k + 1, grid[j]));
        Ok(SineTransform {
            spec,
            pinv: least_squares_operator(design)?,
        })
    }

    pub fn transform(&self, samples: &[f64]) -> Result<SpectralCoeffs> {
        if samples.len() != self.spec.l {
            return Err(Error::ShapeMismatch {
                expected: self.spec.l,
                got: samples.len(),
            });
        }
        SpectralCoeffs::new(self.spec.id(), apply(&self.pinv, samples))
    }

    /// Row-major `K x L` copy of the operator.
    pub fn matrix_row_major(&self) -> Vec<f64> {
        let (r, c) = self.pinv.shape();
        (0..r * c).map(|i| self.pinv[(i / c, i % c)]).collect()
    }
}

pub fn sine_transform(samples: &[f64], spec: SineBasisSpec) -> Result<SpectralCoeffs> {
    SineTransform::new(spec)?.transform(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert!((sine_eval(1, 0.25) - 1.0).abs() < 1e-15);
        assert_eq!(sine_eval(4, 0.0), 0.0);
        assert!((sine_eval(3, 0.1) - (0.6 * PI).sin()).abs() < 1e-15);
        assert!((sine_eval(3, 0.1) - 0.951057).abs() < 1e-6);
    }

    #[test]
    fn transform_round_trips() {
        let spec = SineBasisSpec::new(20, 101).unwrap();
        let g = spec.grid();
        let tr = SineTransform::new(spec).unwrap();
        let f: Vec<f64> = g.iter().map(|&x| sine_eval(3, x)).collect();
        let c = tr.transform(&f).unwrap().values;
        for (i, ci) in c.iter().enumerate() {
            let want = if i == 2 { 1.0 } else { 0.0 };
            assert!((ci - want).abs() < 1e-12);
        }
        assert!(tr.transform(&vec![0.0; 101]).unwrap().values.iter().all(|&v| v == 0.0));
        let f: Vec<f64> = g
            .iter()
            .map(|&x| 0.6 * sine_eval(1, x) + 0.8 * sine_eval(5, x))
            .collect();
        let c = tr.transform(&f).unwrap().values;
        for (i, ci) in c.iter().enumerate() {
            let want = match i {
                0 => 0.6,
                4 => 0.8,
                _ => 0.0,
            };
            assert!((ci - want).abs() < 1e-10);
        }
        for (j, &x) in g.iter().enumerate() {
            assert!((sine_reconstruct(&c, x) - f[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn undersampled_grid_rejected() {
        assert!(SineBasisSpec::new(20, 40).is_err());
        // mode K is zero on all 2K+1 nodes
        assert!(SineBasisSpec::new(2, 5).is_err());
        assert!(SineTransform::new(SineBasisSpec::new(2, 6).unwrap()).is_ok());
    }

    #[test]
    fn rank_deficiency_detected() {
        // L = 2K + 1 but frequency K = (L-1)/2 vanishes on every node.
        let spec = SineBasisSpec { k: 5, l: 11 };
        assert!(matches!(
            SineTransform::new(spec),
            Err(Error::RankDeficient { rank: 4, needed: 5 })
        ));
    }
}
