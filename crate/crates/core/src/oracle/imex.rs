use super::{PdeKind, PdeSpec, SpectralSystem};
use crate::bases::BasisId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImexOptions {
    pub dt: f64,
    /// Evaluate `u - u^3`; off gives the pure diffusion problem.
    pub nonlinear: bool,
    /// RK4 sub-steps per startup step.
    pub startup_substeps: usize,
}

impl Default for ImexOptions {
    fn default() -> Self {
        ImexOptions {
            dt: 1e-3,
            nonlinear: true,
            startup_substeps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub basis: BasisId,
    /// Coefficients at `t = n dt`, `n = 0..=steps`.
    pub coeffs: Vec<Vec<f64>>,
    pub dt: f64,
    pub steps: usize,
    pub startup: String,
}

impl OracleSolution {
    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Stored step nearest to `t`; `t` must lie within half a step of the grid.
    pub fn coeffs_at(&self, t: f64) -> Result<&[f64]> {
        let n = (t / self.dt).round();
        if !(t >= -0.5 * self.dt) || n > self.steps as f64 || (t - n * self.dt).abs() > 0.5 * self.dt {
            return Err(Error::TimeOutOfRange {
                t,
                t_end: self.t_end(),
            });
        }
        Ok(&self.coeffs[n as usize])
    }
}

struct Rhs<'a> {
    sys: &'a dyn SpectralSystem,
    lambda: Vec<f64>,
    eps: f64,
    nonlinear: bool,
}

impl Rhs<'_> {
    fn nonlin(&self, c: &[f64]) -> Vec<f64> {
        if !self.nonlinear {
            return vec![0.0; c.len()];
        }
        let u = self.sys.nodal(c);
        let f: Vec<f64> = u.iter().map(|&v| v - v * v * v).collect();
        self.sys.project(&f)
    }

    fn full(&self, c: &[f64]) -> Vec<f64> {
        let n = self.nonlin(c);
        c.iter()
            .zip(&self.lambda)
            .zip(n)
            .map(|((&ci, &l), ni)| -self.eps * l * ci + ni)
            .collect()
    }

    fn rk4(&self, c: &[f64], h: f64) -> Vec<f64> {
        let axpy = |a: &[f64], s: f64, b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + s * y).collect()
        };
        let k1 = self.full(c);
        let k2 = self.full(&axpy(c, 0.5 * h, &k1));
        let k3 = self.full(&axpy(c, 0.5 * h, &k2));
        let k4 = self.full(&axpy(c, h, &k3));
        (0..c.len())
            .map(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }
}

fn check(c: &[f64], step: usize, limit: f64) -> Result<()> {
    if let Some(i) = c.iter().position(|v| !v.is_finite()) {
        let _ = step;
        return Err(Error::NonFiniteCoefficient(i));
    }
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > limit {
        return Err(Error::Instability { step, norm });
    }
    Ok(())
}

/// IMEX-BDF4: diffusion implicit and diagonal per mode, `u - u^3` explicit
/// with fourth-order extrapolation. The three starting levels come from RK4
/// with sub-stepping.
pub fn imex_bdf4_solve(
    c0: &[f64],
    pde: &PdeSpec,
    sys: &dyn SpectralSystem,
    opts: &ImexOptions,
) -> Result<OracleSolution> {
    pde.validate()?;
    if c0.len() != sys.len() {
        return Err(Error::ShapeMismatch {
            expected: sys.len(),
            got: c0.len(),
        });
    }
    if !(opts.dt > 0.0) || opts.startup_substeps == 0 {
        return Err(Error::Config(format!("bad time step {}", opts.dt)));
    }
    let rhs = Rhs {
        sys,
        lambda: (0..sys.len()).map(|k| sys.eigenvalue(k)).collect(),
        eps: pde.coef,
        nonlinear: opts.nonlinear && pde.kind == PdeKind::AllenCahn,
    };
    let dt = opts.dt;
    let steps = (pde.t_end / dt + 1e-9).floor() as usize;
    let limit = 1e6 * c0.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut traj: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    traj.push(c0.to_vec());
    let h = dt / opts.startup_substeps as f64;
    while traj.len() < 4.min(steps + 1) {
        let mut c = traj.last().unwrap().clone();
        for _ in 0..opts.startup_substeps {
            c = rhs.rk4(&c, h);
        }
        check(&c, traj.len(), limit)?;
        traj.push(c);
    }
    let mut nl: Vec<Vec<f64>> = traj.iter().map(|c| rhs.nonlin(c)).collect();
    while traj.len() <= steps {
        let n = traj.len() - 1;
        let (u0, u1, u2, u3) = (&traj[n], &traj[n - 1], &traj[n - 2], &traj[n - 3]);
        let (n0, n1, n2, n3) = (&nl[n], &nl[n - 1], &nl[n - 2], &nl[n - 3]);
        let next: Vec<f64> = (0..c0.len())
            .map(|k| {
                let hist = 4.0 * u0[k] - 3.0 * u1[k] + 4.0 / 3.0 * u2[k] - 0.25 * u3[k];
                let ext = 4.0 * n0[k] - 6.0 * n1[k] + 4.0 * n2[k] - n3[k];
                (hist + dt * ext) / (25.0 / 12.0 + dt * rhs.eps * rhs.lambda[k])
            })
            .collect();
        check(&next, n + 1, limit)?;
        nl.push(rhs.nonlin(&next));
        traj.push(next);
    }
    Ok(OracleSolution {
        basis: sys.id(),
        coeffs: traj,
        dt,
        steps,
        startup: format!("rk4 x{} substeps, 3 levels", opts.startup_substeps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::sphere::SphereBasisSpec;
    use crate::bases::Geometry;
    use crate::oracle::SphereSystem;

    #[test]
    fn linear_decay_of_y21() {
        let sys = SphereSystem::new(3).unwrap();
        let mut c0 = vec![0.0; sys.len()];
        let k = SphereBasisSpec::index(2, 1);
        c0[k] = 1.0;
        let pde = PdeSpec::allen_cahn(0.1, Geometry::Sphere);
        let opts = ImexOptions {
            nonlinear: false,
            ..Default::default()
        };
        let sol = imex_bdf4_solve(&c0, &pde, &sys, &opts).unwrap();
        assert_eq!(sol.coeffs.len(), 1001);
        let v = sol.coeffs_at(1.0).unwrap()[k];
        assert!((v - (-0.6f64).exp()).abs() < 1e-6);
        assert!((v - 0.548812).abs() < 1e-6);
    }

    #[test]
    fn zero_stays_zero() {
        let sys = SphereSystem::new(2).unwrap();
        let pde = PdeSpec::allen_cahn(0.1, Geometry::Sphere);
        let sol = imex_bdf4_solve(&vec![0.0; 9], &pde, &sys, &ImexOptions::default()).unwrap();
        assert!(sol.coeffs.iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn time_lookup() {
        let sys = SphereSystem::new(1).unwrap();
        let pde = PdeSpec::allen_cahn(0.1, Geometry::Sphere);
        let sol = imex_bdf4_solve(&[0.1, 0.0, 0.2, 0.0], &pde, &sys, &ImexOptions::default()).unwrap();
        assert_eq!(sol.coeffs_at(0.0).unwrap(), &[0.1, 0.0, 0.2, 0.0]);
        assert!(sol.coeffs_at(1.2).is_err());
        assert!(sol.coeffs_at(-0.1).is_err());
    }
}
