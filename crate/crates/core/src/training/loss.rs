use rayon::prelude::*;

use super::dataset::Dataset;
use crate::autodiff::graph::{Graph, JetEval, Var};
use crate::autodiff::jet::Jet2;
use crate::error::{Error, Result};
use crate::model::{
    coefficients_at, laplacian_coeffs, model_derivatives, reassemble_multi_eval, Model,
};
use crate::oracle::{PdeKind, PdeSpec};

/// Which loss terms enter an objective. All weights are one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Terms {
    pub l0: bool,
    pub ld: bool,
    pub lcoef: bool,
    /// `|F(x) - R(C(F), x)|^2`, used to pretrain the outer blocks.
    pub autoencode: bool,
}

impl Terms {
    pub const PINN: Terms = Terms { l0: true, ld: true, lcoef: false, autoencode: false };
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossReport {
    pub l0: f64,
    pub ld: f64,
    pub lcoef: Option<f64>,
    /// Boundary term; always `None` on the closed domains here.
    pub mse_b: Option<f64>,
    pub autoencode: Option<f64>,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.l0 + self.ld + self.lcoef.unwrap_or(0.0) + self.mse_b.unwrap_or(0.0) + self.autoencode.unwrap_or(0.0)
    }

    fn add_scaled(&mut self, o: &LossReport, s: f64) {
        fn opt(a: &mut Option<f64>, b: Option<f64>, s: f64) {
            if let Some(b) = b {
                *a = Some(a.unwrap_or(0.0) + s * b);
            }
        }
        self.l0 += s * o.l0;
        self.ld += s * o.ld;
        opt(&mut self.lcoef, o.lcoef, s);
        opt(&mut self.mse_b, o.mse_b, s);
        opt(&mut self.autoencode, o.autoencode, s);
    }
}

/// PDE residual and its partials with respect to `(u, u_t, Laplacian u)`.
pub fn residual(pde: &PdeSpec, u: f64, u_t: f64, lap: f64) -> (f64, [f64; 3]) {
    match pde.kind {
        PdeKind::Heat => (u_t - pde.coef * lap, [0.0, 1.0, -pde.coef]),
        PdeKind::AllenCahn => (
            u_t - (pde.coef * lap + u - u * u * u),
            [3.0 * u * u - 1.0, 1.0, -pde.coef],
        ),
    }
}

/// Mean over initial conditions and grid points of `(u(f, x, 0) - f(x))^2`.
/// `samples[i][j]` is the value of initial condition `i` at `grid[j]`.
pub fn loss_initial(model: &Model, samples: &[Vec<f64>], grid: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() || grid.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for f in samples {
        if f.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: f.len() });
        }
        let u = reassemble_multi_eval(model, f, 0.0, grid)?;
        s += u.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(s / (samples.len() * grid.len()) as f64)
}

/// One residual sample: initial-condition samples, point, time.
pub type ResidualSample<'a> = (&'a [f64], &'a [f64], f64);

/// Mean squared PDE residual.
pub fn loss_residual(model: &Model, batch: &[ResidualSample<'_>], pde: &PdeSpec) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for &(f, p, t) in batch {
        let d = model_derivatives(model, f, p, t)?;
        let r = residual(pde, d.u, d.u_t, d.lap).0;
        s += r * r;
    }
    Ok(s / batch.len() as f64)
}

/// `mean_i |D(C(F_i), 0) - C(F_i)|^2 / K`.
pub fn loss_coeff_consistency(model: &Model, samples: &[Vec<f64>]) -> Result<f64> {
    if !model.is_spectral() {
        return Err(Error::InvalidVariant("coefficient consistency needs a time-stepping block".into()));
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for f in samples {
        let d0 = coefficients_at(model, f, 0.0)?;
        let mut ev = JetEval;
        let enc = model.encode(&mut ev, f)?;
        let c = enc.c.expect("spectral encoding");
        s += d0.iter().zip(&c).map(|(a, b)| (a - b.value).powi(2)).sum::<f64>() / d0.len() as f64;
    }
    Ok(s / samples.len() as f64)
}

/// Loss of one training triple; gradients scaled by `scale` are added to `grad`.
pub fn item_loss_grad<'m>(
    model: &'m Model,
    pde: &PdeSpec,
    data: &Dataset,
    grid: &[Vec<f64>],
    item: usize,
    terms: Terms,
    scale: f64,
    grad: &mut [f64],
) -> Result<LossReport> {
    let tr = &data.triples[item];
    let f = &data.family.samples[tr.ic];
    let spectral = model.is_spectral();
    let mut g = Graph::new();
    let enc = model.encode(&mut g, f)?;
    let mut seeds: Vec<(Var, usize, Jet2)> = Vec::new();
    let mut rep = LossReport::default();
    let seed_val = |v: f64| Jet2 { value: v, d1: 0.0, d2: 0.0 };

    let d_zero = if spectral && (terms.l0 || terms.lcoef) {
        Some(model.step(&mut g, &enc, Jet2::constant(0.0))?)
    } else {
        None
    };

    let idx = &data.l0_points[item];
    let fit = |g: &mut Graph<'m>, base: Option<&Var>, seeds: &mut Vec<(Var, usize, Jet2)>| -> Result<f64> {
        let mut s = 0.0;
        let m = idx.len() as f64;
        for &j in idx {
            let pt: Vec<Jet2> = grid[j].iter().map(|&x| Jet2::constant(x)).collect();
            let v = match base {
                Some(d) => model.recon(g, d, &pt)?,
                None => model.eval(g, &enc, &pt, Jet2::constant(0.0))?,
            };
            let e = g.value(v)[0].value - f[j];
            s += e * e / m;
            seeds.push((v, 0, seed_val(2.0 * e * scale / m)));
        }
        Ok(s)
    };

    if terms.l0 && !idx.is_empty() {
        rep.l0 = fit(&mut g, d_zero.as_ref(), &mut seeds)?;
    }
    if terms.autoencode && spectral && !idx.is_empty() {
        let c = enc.c.as_ref().expect("spectral encoding");
        rep.autoencode = Some(fit(&mut g, Some(c), &mut seeds)?);
    }
    if terms.ld {
        let coeffs = laplacian_coeffs(model.geometry(), &tr.point, model.config().radii)?;
        let p = model.passes(&mut g, &enc, &tr.point, tr.t)?;
        let jt = g.value(p.t)[0];
        let ja = g.value(p.a)[0];
        let jb = p.b.map_or(Jet2::ZERO, |b| g.value(b)[0]);
        let lap = coeffs[0] * ja.d2 + coeffs[1] * ja.d1 + coeffs[2] * jb.d2;
        let (r, dr) = residual(pde, jt.value, jt.d1, lap);
        rep.ld = r * r;
        let w = 2.0 * r * scale;
        seeds.push((p.t, 0, Jet2 { value: w * dr[0], d1: w * dr[1], d2: 0.0 }));
        seeds.push((p.a, 0, Jet2 { value: 0.0, d1: w * dr[2] * coeffs[1], d2: w * dr[2] * coeffs[0] }));
        if let Some(b) = p.b {
            seeds.push((b, 0, Jet2 { value: 0.0, d1: 0.0, d2: w * dr[2] * coeffs[2] }));
        }
    }
    if terms.lcoef && spectral {
        let d0 = d_zero.expect("computed above");
        let c = *enc.c.as_ref().expect("spectral encoding");
        let k = g.value(d0).len();
        let mut s = 0.0;
        for i in 0..k {
            let e = g.value(d0)[i].value - g.value(c)[i].value;
            s += e * e / k as f64;
            let w = 2.0 * e * scale / k as f64;
            seeds.push((d0, i, seed_val(w)));
            seeds.push((c, i, seed_val(-w)));
        }
        rep.lcoef = Some(s);
    }
    g.backward(&seeds, grad);
    Ok(rep)
}

/// Number of fixed shards a batch is split into. Shards are reduced in
/// order, so results do not depend on the thread count.
pub const SHARDS: usize = 8;

/// Mean loss over `batch` with its gradient added to `grad`.
pub fn batch_loss_grad(
    model: &Model,
    pde: &PdeSpec,
    data: &Dataset,
    grid: &[Vec<f64>],
    batch: &[usize],
    terms: Terms,
    grad: &mut [f64],
) -> Result<LossReport> {
    let mut rep = LossReport::default();
    if batch.is_empty() {
        return Ok(rep);
    }
    let scale = 1.0 / batch.len() as f64;
    let chunk = batch.len().div_ceil(SHARDS);
    let parts: Vec<Result<(LossReport, Vec<f64>)>> = batch
        .par_chunks(chunk)
        .map(|items| {
            let mut g = vec![0.0; grad.len()];
            let mut r = LossReport::default();
            for &i in items {
                let ri = item_loss_grad(model, pde, data, grid, i, terms, scale, &mut g)?;
                r.add_scaled(&ri, scale);
            }
            Ok((r, g))
        })
        .collect();
    for p in parts {
        let (r, g) = p?;
        rep.add_scaled(&r, 1.0);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::Geometry;
    use crate::model::ModelConfig;
    use crate::training::dataset::build_dataset;
    use crate::training::family::FamilySpec;
    use std::f64::consts::PI;

    #[test]
    fn exact_model_losses_vanish() {
        let m = Model::build(&ModelConfig::interval("spectral-exact", 20, 101, 0.01).unwrap(), 0).unwrap();
        let spec = FamilySpec::interval(20, 101);
        let d = build_dataset(&spec, 0.5, 20, 101, 4).unwrap();
        let grid = spec.grid_points();
        assert!(loss_initial(&m, &d.family.samples, &grid).unwrap() <= 1e-12);
        let batch: Vec<ResidualSample> = d
            .triples
            .iter()
            .map(|t| (d.family.samples[t.ic].as_slice(), t.point.as_slice(), t.t))
            .collect();
        assert!(loss_residual(&m, &batch, &PdeSpec::heat(0.01)).unwrap() <= 1e-8);
        assert_eq!(loss_coeff_consistency(&m, &d.family.samples).unwrap(), 0.0);
    }

    #[test]
    fn zero_model_initial_loss() {
        let mut m = Model::build(&ModelConfig::interval("spectral-mlp-recon", 20, 101, 0.01).unwrap(), 0).unwrap();
        m.set_params(&vec![0.0; m.n_params()]);
        let grid: Vec<Vec<f64>> = (0..101).map(|j| vec![j as f64 / 100.0]).collect();
        let f: Vec<f64> = grid.iter().map(|x| (2.0 * PI * x[0]).sin()).collect();
        let l = loss_initial(&m, &[f], &grid).unwrap();
        assert!((l - 50.0 / 101.0).abs() < 1e-12);
        let fam = crate::training::family::sample_family(&FamilySpec::interval(20, 101), 5, 0).unwrap();
        let want: f64 = fam.samples.iter().flatten().map(|v| v * v).sum::<f64>() / (5.0 * 101.0);
        assert!((loss_initial(&m, &fam.samples, &grid).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn scalar_residuals() {
        let ac = PdeSpec::allen_cahn(0.1, Geometry::Sphere);
        assert_eq!(residual(&ac, 1.0, 0.0, 0.0).0, 0.0);
        let r = residual(&ac, 0.5, 0.0, 0.0).0;
        assert!((r + 0.375).abs() < 1e-15 && (r * r - 0.140625).abs() < 1e-15);
    }

    fn probe(cfg: ModelConfig, spec: FamilySpec, pde: PdeSpec, terms: Terms) {
        let m = Model::build(&cfg, 1).unwrap();
        let d = build_dataset(&spec, pde.t_end, 6, 5, 2).unwrap();
        let grid = spec.grid_points();
        let batch: Vec<usize> = (0..6).collect();
        let mut grad = vec![0.0; m.n_params()];
        let rep = batch_loss_grad(&m, &pde, &d, &grid, &batch, terms, &mut grad).unwrap();
        assert!(rep.total() > 0.0 && rep.total().is_finite());
        let p0 = m.params();
        let n = p0.len();
        for idx in (0..10).map(|i| i * (n - 1) / 9) {
            let h = 1e-6;
            let mut mm = m.clone();
            let mut p = p0.clone();
            let mut tot = |p: &[f64]| {
                mm.set_params(p);
                let mut g = vec![0.0; n];
                batch_loss_grad(&mm, &pde, &d, &grid, &batch, terms, &mut g).unwrap().total()
            };
            p[idx] += h;
            let up = tot(&p);
            p[idx] -= 2.0 * h;
            let dn = tot(&p);
            let fd = (up - dn) / (2.0 * h);
            let scale = fd.abs().max(grad[idx].abs()).max(1e-3);
            assert!((fd - grad[idx]).abs() / scale <= 1e-4, "{idx}: fd {fd} ad {}", grad[idx]);
        }
    }

    #[test]
    fn gradients_match_differences() {
        probe(
            ModelConfig::interval("spectral-mlp-step", 4, 11, 0.01).unwrap(),
            FamilySpec::interval(4, 11),
            PdeSpec::heat(0.01),
            Terms::PINN,
        );
        probe(
            ModelConfig::interval("naive", 4, 11, 0.01).unwrap(),
            FamilySpec::interval(4, 11),
            PdeSpec::heat(0.01),
            Terms::PINN,
        );
        probe(
            ModelConfig::sphere("sphere-a", 1, 0.1, 6).unwrap(),
            FamilySpec::sphere(1),
            PdeSpec::allen_cahn(0.1, Geometry::Sphere),
            Terms { l0: true, ld: true, lcoef: true, autoencode: true },
        );
    }

    #[test]
    fn coefficient_loss_of_untrained_block() {
        let mut m = Model::build(&ModelConfig::sphere("sphere-b", 1, 0.1, 6).unwrap(), 3).unwrap();
        // the transformation starts at zero, where both sides vanish
        let p: Vec<f64> = m.params().iter().enumerate().map(|(i, x)| x + 0.1 * (0.7 * i as f64).sin()).collect();
        m.set_params(&p);
        let d = build_dataset(&FamilySpec::sphere(1), 1.0, 3, 4, 0).unwrap();
        let l = loss_coeff_consistency(&m, &d.family.samples).unwrap();
        assert!(l > 0.0 && l.is_finite());
        let naive = Model::build(&ModelConfig::sphere("naive", 1, 0.1, 6).unwrap(), 3).unwrap();
        assert!(loss_coeff_consistency(&naive, &d.family.samples).is_err());
    }
}
