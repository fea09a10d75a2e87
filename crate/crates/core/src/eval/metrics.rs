use rand::Rng;
use rand_distr::Normal;

use crate::bases::torus::EigenBasis;
use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::model::{reassemble_multi_eval, Model};
use crate::oracle::{
    heat_analytic, imex_bdf4_solve, ImexOptions, PdeSpec, SpectralSystem, SphereSystem, TrajectoryCache,
};
use crate::training::family::{split_rng, Family, Split};

/// Reference values of a set of initial conditions on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub family: Family,
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `truth[ic][time][point]`.
    pub truth: Vec<Vec<Vec<f64>>>,
    /// Largest relative energy of an initial condition lost by projecting
    /// onto the reference basis (zero where the family lies in the basis).
    pub truncation: f64,
}

/// `steps` uniform times `T n / steps`, `n = 1..=steps`.
pub fn uniform_times(t_end: f64, steps: usize) -> Vec<f64> {
    (1..=steps).map(|n| t_end * n as f64 / steps as f64).collect()
}

/// Interval heat reference from the closed-form solution.
pub fn heat_test_set(family: Family, alpha: f64, points: Vec<Vec<f64>>, times: Vec<f64>) -> Result<TestSet> {
    if family.spec.geometry != Geometry::Interval {
        return Err(Error::InvalidVariant("heat reference lives on the interval".into()));
    }
    let truth = family
        .coeffs
        .iter()
        .map(|c| {
            times
                .iter()
                .map(|&t| points.iter().map(|p| heat_analytic(c, p[0], t, alpha)).collect())
                .collect()
        })
        .collect();
    Ok(TestSet { family, points, times, truth, truncation: 0.0 })
}

/// Where the reference solver of a manifold problem lives.
pub enum Reference<'a> {
    Sphere(&'a SphereSystem),
    Torus(&'a EigenBasis),
}

impl Reference<'_> {
    fn system(&self) -> &dyn SpectralSystem {
        match self {
            Reference::Sphere(s) => *s,
            Reference::Torus(b) => *b,
        }
    }
}

/// Allen-Cahn reference by the spectral solver. Values are taken on the
/// family's sample grid at the requested times.
pub fn spectral_test_set(
    family: Family,
    pde: &PdeSpec,
    reference: Reference<'_>,
    opts: &ImexOptions,
    times: Vec<f64>,
    cache: Option<&TrajectoryCache>,
) -> Result<TestSet> {
    let sys = reference.system();
    let points = family.spec.grid_points();
    let mut truth = Vec::with_capacity(family.len());
    let mut truncation: f64 = 0.0;
    for (c, f) in family.coeffs.iter().zip(&family.samples) {
        let c0 = match reference {
            Reference::Sphere(s) => {
                let mut c0 = vec![0.0; s.len()];
                if c.len() > c0.len() {
                    return Err(Error::ShapeMismatch { expected: c0.len(), got: c.len() });
                }
                c0[..c.len()].copy_from_slice(c);
                c0
            }
            Reference::Torus(b) => {
                let c0 = b.transform(f)?;
                let back = b.synthesize(&c0);
                let num: f64 = back.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum();
                let den: f64 = f.iter().map(|v| v * v).sum();
                if den > 0.0 {
                    truncation = truncation.max(num / den);
                }
                c0
            }
        };
        let sol = match cache {
            Some(cache) => cache.solve(&c0, pde, sys, opts)?,
            None => imex_bdf4_solve(&c0, pde, sys, opts)?,
        };
        let mut per_t = Vec::with_capacity(times.len());
        for &t in &times {
            let ct = sol.coeffs_at(t)?;
            per_t.push(match reference {
                Reference::Sphere(_) => points.iter().map(|p| sys.eval_point(ct, (p[0], p[1]))).collect(),
                // grid points are the mesh nodes
                Reference::Torus(b) => b.synthesize(ct),
            });
        }
        truth.push(per_t);
    }
    Ok(TestSet { family, points, times, truth, truncation })
}

fn predictions(model: &Model, samples: &[f64], test: &TestSet) -> Result<Vec<Vec<f64>>> {
    test.times
        .iter()
        .map(|&t| reassemble_multi_eval(model, samples, t, &test.points))
        .collect()
}

/// Mean squared error over all (initial condition, time, point) tuples.
pub fn mse_metric(model: &Model, test: &TestSet) -> Result<f64> {
    let mut s = 0.0;
    let mut n = 0usize;
    for (i, f) in test.family.samples.iter().enumerate() {
        let pred = predictions(model, f, test)?;
        for (pt, tt) in pred.iter().zip(&test.truth[i]) {
            for (a, b) in pt.iter().zip(tt) {
                s += (a - b) * (a - b);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Config("empty test set".into()));
    }
    Ok(s / n as f64)
}

/// `Error(t) = sum_i (1/P) sqrt(sum_p |u_i(p, t) - u~_i(p, t)|^2)` with `P`
/// evaluation points.
pub fn error_vs_time(model: &Model, test: &TestSet) -> Result<Vec<(f64, f64)>> {
    let p = test.points.len() as f64;
    let mut err = vec![0.0; test.times.len()];
    for (i, f) in test.family.samples.iter().enumerate() {
        let pred = predictions(model, f, test)?;
        for (j, (pt, tt)) in pred.iter().zip(&test.truth[i]).enumerate() {
            let ss: f64 = pt.iter().zip(tt).map(|(a, b)| (a - b) * (a - b)).sum();
            err[j] += ss.sqrt() / p;
        }
    }
    Ok(test.times.iter().copied().zip(err).collect())
}

/// Mean over initial conditions of `|u(f + d, ., t) - u(f, ., t)| / |d|`,
/// `d` with independent `N(0, variance)` entries drawn from the noise
/// stream of `seed`.
pub fn stability_metric(
    model: &Model,
    samples: &[Vec<f64>],
    points: &[Vec<f64>],
    variance: f64,
    times: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if !(variance > 0.0) {
        return Err(Error::Config(format!("noise variance must be positive, got {variance}")));
    }
    if samples.is_empty() {
        return Err(Error::Config("no initial conditions".into()));
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = split_rng(seed, Split::Noise);
    let mut acc = vec![0.0; times.len()];
    for f in samples {
        let delta: Vec<f64> = (0..f.len()).map(|_| rng.sample(normal)).collect();
        let dn = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let noisy: Vec<f64> = f.iter().zip(&delta).map(|(a, b)| a + b).collect();
        for (j, &t) in times.iter().enumerate() {
            let u = reassemble_multi_eval(model, f, t, points)?;
            let v = reassemble_multi_eval(model, &noisy, t, points)?;
            let num = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            acc[j] += num / dn;
        }
    }
    let n = samples.len() as f64;
    Ok(times.iter().copied().zip(acc.into_iter().map(|a| a / n)).collect())
}

/// MSE on a larger family.
pub fn generalization_eval(model: &Model, test: &TestSet) -> Result<f64> {
    mse_metric(model, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::training::family::{sample_family, FamilySpec};

    fn exact() -> Model {
        Model::build(&ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap(), 0).unwrap()
    }

    fn interval_set(n: usize, degree: usize, steps: usize) -> TestSet {
        let spec = FamilySpec::interval(degree, 101);
        let fam = sample_family(&spec, n, 5).unwrap();
        heat_test_set(fam, 0.01, spec.grid_points(), uniform_times(0.5, steps)).unwrap()
    }

    #[test]
    fn exact_model_has_zero_error() {
        let ts = interval_set(3, 20, 10);
        assert!(mse_metric(&exact(), &ts).unwrap() <= 1e-12);
        assert!(error_vs_time(&exact(), &ts).unwrap().iter().all(|(_, e)| *e < 1e-10));
    }

    #[test]
    fn zero_model_error_at_start() {
        let mut m = Model::build(&ModelConfig::interval("spectral-mlp-recon", 20, 101, 0.01).unwrap(), 0).unwrap();
        m.set_params(&vec![0.0; m.n_params()]);
        let mut ts = interval_set(4, 20, 1);
        ts.times = vec![0.0];
        ts.truth = ts.family.samples.iter().map(|f| vec![f.clone()]).collect();
        let e = error_vs_time(&m, &ts).unwrap()[0].1;
        let want: f64 = ts
            .family
            .samples
            .iter()
            .map(|f| f.iter().map(|v| v * v).sum::<f64>().sqrt() / 101.0)
            .sum();
        assert!((e - want).abs() < 1e-14);
    }

    #[test]
    fn stability_of_constant_model_is_zero() {
        let mut m = Model::build(&ModelConfig::interval("spectral-mlp-recon", 20, 101, 0.01).unwrap(), 0).unwrap();
        let mut p = vec![0.0; m.n_params()];
        let last = p.len() - 1;
        p[last] = 0.3;
        m.set_params(&p);
        let ts = interval_set(3, 20, 1);
        let s = stability_metric(&m, &ts.family.samples, &ts.points, 0.3, &[0.5], 1).unwrap();
        assert_eq!(s[0].1, 0.0);
        assert!(stability_metric(&m, &ts.family.samples, &ts.points, 0.0, &[0.5], 1).is_err());
    }

    #[test]
    fn exact_model_stability_is_projection_norm() {
        let ts = interval_set(5, 20, 1);
        let s = stability_metric(&exact(), &ts.family.samples, &ts.points, 0.3, &[0.0], 2).unwrap();
        // least-squares projection onto 20 of 101 directions
        assert!(s[0].1 > 0.2 && s[0].1 < 0.7, "{}", s[0].1);
    }

    #[test]
    fn generalization_on_training_family_is_mse() {
        let ts = interval_set(2, 20, 3);
        assert_eq!(generalization_eval(&exact(), &ts).unwrap(), mse_metric(&exact(), &ts).unwrap());
    }

    #[test]
    fn sphere_reference_matches_decay() {
        let sys = SphereSystem::new(2).unwrap();
        let spec = FamilySpec::sphere(2);
        let fam = sample_family(&spec, 1, 1).unwrap();
        let pde = PdeSpec::allen_cahn(0.1, Geometry::Sphere);
        let opts = ImexOptions { dt: 1e-2, nonlinear: false, startup_substeps: 10 };
        let ts = spectral_test_set(fam.clone(), &pde, Reference::Sphere(&sys), &opts, vec![0.0, 0.5], None).unwrap();
        for (a, b) in ts.truth[0][0].iter().zip(&fam.samples[0]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(ts.truncation, 0.0);
    }
}
