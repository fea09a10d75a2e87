//! Small tanh networks for products, exponential decays and sines, fitted
//! by training and wired into a time-stepping and a reconstruction block
//! for the heat equation.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::activation::Activation;
use crate::nn::layer::{DenseLayer, ParamHolder};
use crate::nn::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// `x y` on `[-range, range]^2`.
    Mul2 { range: f64 },
    /// `exp(-4 pi^2 k^2 alpha t)` on `[0, 1]`.
    ExpDecay { k: usize, alpha: f64 },
    /// `sin(2 pi k x)` on `[0, 1]`.
    Sine { k: usize },
    Constant { value: f64 },
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Mul2 { .. } => 2,
            _ => 1,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            Target::Mul2 { range } => (-range, *range),
            _ => (0.0, 1.0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Target::Mul2 { .. } => x[0] * x[1],
            Target::ExpDecay { k, alpha } => (-4.0 * PI * PI * (k * k) as f64 * alpha * x[0]).exp(),
            Target::Sine { k } => (2.0 * PI * k as f64 * x[0]).sin(),
            Target::Constant { value } => value,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Target::Mul2 { range } => format!("mul2[{range}]"),
            Target::ExpDecay { k, alpha } => format!("exp_decay(k={k},alpha={alpha})"),
            Target::Sine { k } => format!("sine(k={k})"),
            Target::Constant { value } => format!("constant({value})"),
        }
    }

    /// Held-out evaluation grid: `10^4` points in 1-D, `100 x 100` in 2-D.
    pub fn dense_grid(&self) -> Vec<Vec<f64>> {
        let (lo, hi) = self.domain();
        if self.dim() == 1 {
            (0..10_000).map(|i| vec![lo + (hi - lo) * i as f64 / 9_999.0]).collect()
        } else {
            let mut g = Vec::with_capacity(10_000);
            for i in 0..100 {
                for j in 0..100 {
                    g.push(vec![lo + (hi - lo) * i as f64 / 99.0, lo + (hi - lo) * j as f64 / 99.0]);
                }
            }
            g
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentNetSpec {
    pub target: Target,
    /// Hidden units.
    pub n: usize,
}

/// `x -> sum_j a_j tanh(v_j . x + b_j) + a_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentNet {
    pub spec: ComponentNetSpec,
    pub net: Mlp,
    /// Sup-norm error on the held-out dense grid.
    pub max_error: f64,
}

impl ComponentNet {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.net.forward(x)[0]
    }

    pub fn param_count(&self) -> usize {
        self.net.n_params()
    }
}

/// Parameter count of a component with `n` hidden units on `d` inputs.
pub fn component_param_count(n: usize, d: usize) -> usize {
    n * (d + 2) + 1
}

#[derive(Clone)]
struct Fit {
    n: usize,
    d: usize,
    /// `[W (n x d), b (n), a (n), a0]`
    theta: Vec<f64>,
}

impl Fit {
    fn hidden(&self, x: &[f64], j: usize) -> f64 {
        let w = &self.theta[j * self.d..(j + 1) * self.d];
        let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.theta[self.n * self.d + j];
        z.tanh()
    }

    fn eval_with(&self, theta: &[f64], x: &[f64]) -> f64 {
        let (n, d) = (self.n, self.d);
        let mut s = theta[n * d + 2 * n];
        for j in 0..n {
            let z: f64 = (0..d).map(|l| theta[j * d + l] * x[l]).sum::<f64>() + theta[n * d + j];
            s += theta[n * d + n + j] * z.tanh();
        }
        s
    }

    fn residuals(&self, theta: &[f64], xs: &[Vec<f64>], ys: &[f64]) -> DVector<f64> {
        DVector::from_iterator(xs.len(), xs.iter().zip(ys).map(|(x, y)| self.eval_with(theta, x) - y))
    }

    fn jacobian(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let (n, d) = (self.n, self.d);
        let p = self.theta.len();
        let mut jac = DMatrix::zeros(xs.len(), p);
        for (i, x) in xs.iter().enumerate() {
            for j in 0..n {
                let h = self.hidden(x, j);
                let a = self.theta[n * d + n + j];
                let dz = a * (1.0 - h * h);
                for l in 0..d {
                    jac[(i, j * d + l)] = dz * x[l];
                }
                jac[(i, n * d + j)] = dz;
                jac[(i, n * d + n + j)] = h;
            }
            jac[(i, p - 1)] = 1.0;
        }
        jac
    }

    /// Output weights by least squares for fixed hidden units.
    fn solve_output(&mut self, xs: &[Vec<f64>], ys: &[f64]) {
        let (n, d) = (self.n, self.d);
        let mut h = DMatrix::zeros(xs.len(), n + 1);
        for (i, x) in xs.iter().enumerate() {
            for j in 0..n {
                h[(i, j)] = self.hidden(x, j);
            }
            h[(i, n)] = 1.0;
        }
        let y = DVector::from_column_slice(ys);
        if let Ok(sol) = h.svd(true, true).solve(&y, 1e-12) {
            self.theta[n * d + n..].copy_from_slice(sol.as_slice());
        }
    }

    fn levenberg_marquardt(&mut self, xs: &[Vec<f64>], ys: &[f64], iters: usize) {
        let mut mu = 1e-3;
        let mut r = self.residuals(&self.theta, xs, ys);
        let mut loss = r.norm_squared();
        for _ in 0..iters {
            let jac = self.jacobian(xs);
            let jt = jac.transpose();
            let a = &jt * &jac;
            let g = &jt * &r;
            let mut improved = false;
            while mu < 1e12 {
                let mut m = a.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += mu * (a[(i, i)] + 1e-9);
                }
                let Some(ch) = m.cholesky() else {
                    mu *= 4.0;
                    continue;
                };
                let step = ch.solve(&g);
                let cand: Vec<f64> = self.theta.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
                let rc = self.residuals(&cand, xs, ys);
                let lc = rc.norm_squared();
                if lc.is_finite() && lc < loss {
                    self.theta = cand;
                    r = rc;
                    loss = lc;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved || loss < 1e-26 {
                break;
            }
        }
    }

    fn into_mlp(self) -> Result<Mlp> {
        let (n, d) = (self.n, self.d);
        let mut hid = DenseLayer::new(d, n, true, Activation::Tanh)?;
        hid.weights.copy_from_slice(&self.theta[..n * d]);
        hid.bias = Some(self.theta[n * d..n * d + n].to_vec());
        let mut out = DenseLayer::new(n, 1, true, Activation::Identity)?;
        out.weights.copy_from_slice(&self.theta[n * d + n..n * d + 2 * n]);
        out.bias = Some(vec![self.theta[n * d + 2 * n]]);
        Mlp::from_layers(vec![hid, out])
    }
}

fn training_points<R: Rng>(target: &Target, rng: &mut R) -> Vec<Vec<f64>> {
    let (lo, hi) = target.domain();
    let count = if target.dim() == 1 { 600 } else { 1600 };
    let mut xs: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..target.dim()).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
        .collect();
    // include the corners so the fit does not extrapolate at the edges
    if target.dim() == 1 {
        xs.push(vec![lo]);
        xs.push(vec![hi]);
    } else {
        for a in [lo, hi] {
            for b in [lo, hi] {
                xs.push(vec![a, b]);
            }
        }
    }
    xs
}

/// Fits a component network and measures its sup error on the dense grid.
pub fn fit_component_net(spec: ComponentNetSpec, seed: u64) -> Result<ComponentNet> {
    fit_warm(spec, seed, None).map(|(c, _)| c)
}

/// `warm` must come from a smaller fit of the same target and seed; its
/// hidden units are kept as the first ones.
fn fit_warm(spec: ComponentNetSpec, seed: u64, warm: Option<&Fit>) -> Result<(ComponentNet, Fit)> {
    if spec.n < 4 {
        return Err(Error::InvalidShape(format!("need at least 4 hidden units, got {}", spec.n)));
    }
    let t = spec.target;
    let (n, d) = (spec.n, t.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = training_points(&t, &mut rng);
    let ys: Vec<f64> = xs.iter().map(|x| t.eval(x)).collect();
    let (lo, hi) = t.domain();
    let half = 0.5 * (hi - lo);
    let mut theta = vec![0.0; n * d + 2 * n + 1];
    for j in 0..n {
        // random direction, slope comparable to the unit count, center inside the domain
        let mag = (1.0 + 3.0 * rng.random::<f64>() * (n as f64).powf(1.0 / d as f64).sqrt()) / half;
        let mut dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v *= mag / norm);
        let center: Vec<f64> = (0..d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
        theta[n * d + j] = -dir.iter().zip(&center).map(|(a, b)| a * b).sum::<f64>();
        theta[j * d..(j + 1) * d].copy_from_slice(&dir);
    }
    if let Some(w) = warm.filter(|w| w.d == d && w.n <= n) {
        theta[..w.n * d].copy_from_slice(&w.theta[..w.n * d]);
        theta[n * d..n * d + w.n].copy_from_slice(&w.theta[w.n * d..w.n * d + w.n]);
    }
    let mut fit = Fit { n, d, theta };
    fit.solve_output(&xs, &ys);
    fit.levenberg_marquardt(&xs, &ys, 150);
    if fit.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitDiverged(t.name()));
    }
    let net = fit.clone().into_mlp()?;
    let max_error = t
        .dense_grid()
        .iter()
        .map(|x| (net.forward(x)[0] - t.eval(x)).abs())
        .fold(0.0, f64::max);
    if !max_error.is_finite() {
        return Err(Error::FitDiverged(t.name()));
    }
    Ok((ComponentNet { spec, net, max_error }, fit))
}

/// A component given either by its formula or by a fitted network.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Exact(Target),
    Fitted(ComponentNet),
}

impl Component {
    pub fn target(&self) -> Target {
        match self {
            Component::Exact(t) => *t,
            Component::Fitted(c) => c.spec.target,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Component::Exact(t) => t.eval(x),
            Component::Fitted(c) => c.eval(x),
        }
    }

    pub fn error(&self) -> f64 {
        match self {
            Component::Exact(_) => 0.0,
            Component::Fitted(c) => c.max_error,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Component::Exact(_) => 0,
            Component::Fitted(c) => c.param_count(),
        }
    }
}

/// Time stepping `D~(t, c)_k = M(c_k, E_k(t))` and reconstruction
/// `R~(a, x) = sum_k M(a_k, S_k(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledBlock {
    pub k: usize,
    pub mul: Component,
    pub exps: Vec<Component>,
    /// Empty when only the time-stepping block was assembled.
    pub sines: Vec<Component>,
}

/// Checks that `mul` is a product and that `exps` (and `sines`, if given)
/// hold modes `1..=k` in order.
pub fn assemble_theorem_blocks(
    mul: Component,
    exps: Vec<Component>,
    sines: Vec<Component>,
    k: usize,
) -> Result<AssembledBlock> {
    if !matches!(mul.target(), Target::Mul2 { .. }) {
        return Err(Error::MissingComponent("product network".into()));
    }
    for i in 1..=k {
        match exps.get(i - 1).map(Component::target) {
            Some(Target::ExpDecay { k: kk, .. }) if kk == i => {}
            _ => return Err(Error::MissingComponent(format!("E_{i}"))),
        }
        if !sines.is_empty() {
            match sines.get(i - 1).map(Component::target) {
                Some(Target::Sine { k: kk }) if kk == i => {}
                _ => return Err(Error::MissingComponent(format!("S_{i}"))),
            }
        }
    }
    if exps.len() != k || (!sines.is_empty() && sines.len() != k) {
        return Err(Error::InvalidShape(format!("expected {k} components per family")));
    }
    Ok(AssembledBlock { k, mul, exps, sines })
}

impl AssembledBlock {
    pub fn stepping(&self, t: f64, c: &[f64]) -> Vec<f64> {
        c.iter()
            .zip(&self.exps)
            .map(|(&ck, e)| self.mul.eval(&[ck, e.eval(&[t])]))
            .collect()
    }

    pub fn stepping_exact(&self, t: f64, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.exps).map(|(&ck, e)| ck * e.target().eval(&[t])).collect()
    }

    pub fn reconstruct(&self, a: &[f64], x: f64) -> Result<f64> {
        if self.sines.is_empty() {
            return Err(Error::MissingComponent("sine networks".into()));
        }
        Ok(a.iter().zip(&self.sines).map(|(&ak, s)| self.mul.eval(&[ak, s.eval(&[x])])).sum())
    }

    pub fn reconstruct_exact(&self, a: &[f64], x: f64) -> f64 {
        a.iter().enumerate().map(|(i, &ak)| ak * (2.0 * PI * (i + 1) as f64 * x).sin()).sum()
    }

    /// Sup over `c_k in [-1, 1]`, `t in [0, 1]` (100 x 100 grid per mode)
    /// of `|D~ - D|`. Each output depends on one `(c_k, t)` pair only, so
    /// the grid covers the whole input cube.
    pub fn stepping_sup_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (e, _) in self.exps.iter().zip(0..) {
            for i in 0..100 {
                let c = -1.0 + 2.0 * i as f64 / 99.0;
                for j in 0..100 {
                    let t = j as f64 / 99.0;
                    let got = self.mul.eval(&[c, e.eval(&[t])]);
                    worst = worst.max((got - c * e.target().eval(&[t])).abs());
                }
            }
        }
        worst
    }

    /// Triangle bound for `|c_k| <= 1`: `max_k (e_M + e_{E_k})`.
    pub fn stepping_bound(&self) -> f64 {
        self.exps.iter().map(|e| self.mul.error() + e.error()).fold(0.0, f64::max)
    }

    /// Triangle bound `sum_k (e_M + |a_k| e_{S_k})` at coefficients `a`.
    pub fn reconstruction_bound(&self, a: &[f64]) -> f64 {
        a.iter().zip(&self.sines).map(|(ak, s)| self.mul.error() + ak.abs() * s.error()).sum()
    }

    /// Parameters of the wired time-stepping block, one product network
    /// per mode.
    pub fn stepping_param_count(&self) -> usize {
        self.exps.iter().map(|e| self.mul.param_count() + e.param_count()).sum()
    }

    pub fn reconstruction_param_count(&self) -> usize {
        self.sines.iter().map(|s| self.mul.param_count() + s.param_count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub n: usize,
    pub target: String,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub rows: Vec<LadderRow>,
    /// Each level within 10% of the previous one or better.
    pub non_increasing: bool,
    /// Last error divided by first error.
    pub last_over_first: f64,
}

/// Fits the target at every size of an ascending ladder.
pub fn verify_decay(target: Target, ladder: &[usize], seed: u64) -> Result<DecayReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("ladder must be ascending, got {ladder:?}")));
    }
    let mut rows = Vec::with_capacity(ladder.len());
    // each level starts from the previous fit plus fresh units, so the
    // training loss cannot go up along the ladder
    let mut prev: Option<Fit> = None;
    for &n in ladder {
        let (c, fit) = fit_warm(ComponentNetSpec { target, n }, seed, prev.as_ref())?;
        rows.push(LadderRow { n, target: target.name(), max_error: c.max_error });
        prev = Some(fit);
    }
    let non_increasing = rows.windows(2).all(|w| w[1].max_error <= 1.1 * w[0].max_error + 1e-12);
    let first = rows[0].max_error;
    let last = rows[rows.len() - 1].max_error;
    let last_over_first = if first > 0.0 { last / first } else { 0.0 };
    Ok(DecayReport { rows, non_increasing, last_over_first })
}

/// `n,target,max_error` with a header line.
pub fn write_ladder_csv(w: &mut impl Write, rows: &[LadderRow]) -> Result<()> {
    writeln!(w, "n,target,max_error")?;
    for r in rows {
        writeln!(w, "{},\"{}\",{:e}", r.n, r.target, r.max_error)?;
    }
    Ok(())
}
