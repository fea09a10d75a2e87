//! Second-order forward jets.
//!
//! A [`Jet2`] carries a value together with its first and second derivative
//! along one seeded input direction. Arithmetic follows the truncated
//! second-order Taylor rules, so a single forward pass yields exact `f'` and
//! `f''` along the seeded coordinate.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub const ZERO: Jet2 = Jet2 {
        value: 0.0,
        d1: 0.0,
        d2: 0.0,
    };

    pub const fn new(value: f64, d1: f64, d2: f64) -> Self {
        Jet2 { value, d1, d2 }
    }

    pub const fn constant(value: f64) -> Self {
        Jet2 {
            value,
            d1: 0.0,
            d2: 0.0,
        }
    }

    pub const fn variable(value: f64) -> Self {
        Jet2 {
            value,
            d1: 1.0,
            d2: 0.0,
        }
    }

    pub fn component(&self, c: JetComponent) -> f64 {
        match c {
            JetComponent::Value => self.value,
            JetComponent::D1 => self.d1,
            JetComponent::D2 => self.d2,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }

    /// Composes a scalar function with this jet given `[f, f', f'']` at `self.value`.
    #[inline]
    pub fn chain(self, f: [f64; 3]) -> Jet2 {
        Jet2 {
            value: f[0],
            d1: f[1] * self.d1,
            d2: f[2] * self.d1 * self.d1 + f[1] * self.d2,
        }
    }

    /// Derivative of `chain` with respect to this jet, itself as a jet.
    ///
    /// Given `[f, f', f'', f''']` at `self.value` this is the jet of `f'(x)`,
    /// which is the local partial stored on tapes.
    #[inline]
    pub fn chain_partial(self, f: [f64; 4]) -> Jet2 {
        Jet2 {
            value: f[1],
            d1: f[2] * self.d1,
            d2: f[3] * self.d1 * self.d1 + f[2] * self.d2,
        }
    }

    pub fn recip(self) -> Jet2 {
        let inv = 1.0 / self.value;
        self.chain([inv, -inv * inv, 2.0 * inv * inv * inv])
    }

    pub fn tanh(self) -> Jet2 {
        let d = Elementary::Tanh.derivs(self.value);
        self.chain([d[0], d[1], d[2]])
    }

    pub fn exp(self) -> Jet2 {
        let e = self.value.exp();
        self.chain([e, e, e])
    }

    pub fn sin(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain([s, c, -s])
    }

    pub fn cos(self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain([c, -s, -c])
    }

    pub fn powi(self, n: i32) -> Jet2 {
        let d = Elementary::PowInt(n).derivs(self.value);
        self.chain([d[0], d[1], d[2]])
    }

    pub fn sqrt(self) -> Jet2 {
        let r = self.value.sqrt();
        self.chain([r, 0.5 / r, -0.25 / (r * r * r)])
    }
}

/// Adjoint propagation through multiplication by a jet.
///
/// The map `dx -> p * dx` (jet product) is linear in the three components of
/// `dx`; this returns the transpose applied to the output adjoint `ybar`.
#[inline]
pub fn transpose_mul(p: Jet2, ybar: Jet2) -> Jet2 {
    Jet2 {
        value: p.value * ybar.value + p.d1 * ybar.d1 + p.d2 * ybar.d2,
        d1: p.value * ybar.d1 + 2.0 * p.d1 * ybar.d2,
        d2: p.value * ybar.d2,
    }
}

/// Which component of a jet is selected as a differentiation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetComponent {
    Value,
    D1,
    D2,
}

impl JetComponent {
    pub fn unit(self) -> Jet2 {
        match self {
            JetComponent::Value => Jet2::new(1.0, 0.0, 0.0),
            JetComponent::D1 => Jet2::new(0.0, 1.0, 0.0),
            JetComponent::D2 => Jet2::new(0.0, 0.0, 1.0),
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value + o.value, self.d1 + o.d1, self.d2 + o.d2)
    }
}

impl AddAssign for Jet2 {
    #[inline]
    fn add_assign(&mut self, o: Jet2) {
        self.value += o.value;
        self.d1 += o.d1;
        self.d2 += o.d2;
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.value - o.value, self.d1 - o.d1, self.d2 - o.d2)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.value * o.value,
            self.d1 * o.value + self.value * o.d1,
            self.d2 * o.value + 2.0 * self.d1 * o.d1 + self.value * o.d2,
        )
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    #[inline]
    fn neg(self) -> Jet2 {
        Jet2::new(-self.value, -self.d1, -self.d2)
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, o: f64) -> Jet2 {
        Jet2::new(self.value + o, self.d1, self.d2)
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn sub(self, o: f64) -> Jet2 {
        Jet2::new(self.value - o, self.d1, self.d2)
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: f64) -> Jet2 {
        Jet2::new(self.value * o, self.d1 * o, self.d2 * o)
    }
}

impl Div<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn div(self, o: f64) -> Jet2 {
        Jet2::new(self.value / o, self.d1 / o, self.d2 / o)
    }
}

/// Real-like scalar shared by plain floats and jets, so basis functions and
/// component networks can be written once and differentiated for free.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn sqrt(self) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

impl Scalar for Jet2 {
    fn cst(v: f64) -> Self {
        Jet2::constant(v)
    }
    fn val(&self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        Jet2::sin(self)
    }
    fn cos(self) -> Self {
        Jet2::cos(self)
    }
    fn exp(self) -> Self {
        Jet2::exp(self)
    }
    fn tanh(self) -> Self {
        Jet2::tanh(self)
    }
    fn powi(self, n: i32) -> Self {
        Jet2::powi(self, n)
    }
    fn sqrt(self) -> Self {
        Jet2::sqrt(self)
    }
}

/// Elementary operations understood by [`jet_apply_elementary`] and the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary {
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Exp,
    Sin,
    Cos,
    PowInt(i32),
    Neg,
}

#[inline]
fn mono(c: f64, v: f64, e: i32) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * v.powi(e)
    }
}

impl Elementary {
    pub fn arity(self) -> usize {
        match self {
            Elementary::Add | Elementary::Sub | Elementary::Mul | Elementary::Div => 2,
            _ => 1,
        }
    }

    /// `[f, f', f'', f''']` at `v` for unary operations.
    pub fn derivs(self, v: f64) -> [f64; 4] {
        match self {
            Elementary::Tanh => {
                let s = v.tanh();
                let g = 1.0 - s * s;
                [s, g, -2.0 * s * g, g * (6.0 * s * s - 2.0)]
            }
            Elementary::Exp => {
                let e = v.exp();
                [e; 4]
            }
            Elementary::Sin => {
                let (s, c) = v.sin_cos();
                [s, c, -s, -c]
            }
            Elementary::Cos => {
                let (s, c) = v.sin_cos();
                [c, -s, -c, s]
            }
            Elementary::PowInt(n) => {
                let nf = n as f64;
                [
                    mono(1.0, v, n),
                    mono(nf, v, n - 1),
                    mono(nf * (nf - 1.0), v, n - 2),
                    mono(nf * (nf - 1.0) * (nf - 2.0), v, n - 3),
                ]
            }
            Elementary::Neg => [-v, -1.0, 0.0, 0.0],
            _ => panic!("derivs called on binary op {self:?}"),
        }
    }

    /// Result jet together with the local partials (as jets) with respect to
    /// each operand.
    pub fn eval_with_partials(self, args: &[Jet2]) -> Result<(Jet2, Vec<Jet2>)> {
        if args.len() != self.arity() {
            return Err(Error::ShapeMismatch {
                expected: self.arity(),
                got: args.len(),
            });
        }
        let one = Jet2::constant(1.0);
        Ok(match self {
            Elementary::Add => (args[0] + args[1], vec![one, one]),
            Elementary::Sub => (args[0] - args[1], vec![one, -one]),
            Elementary::Mul => (args[0] * args[1], vec![args[1], args[0]]),
            Elementary::Div => {
                if args[1].value == 0.0 {
                    return Err(Error::DivisionByZero);
                }
                let inv = args[1].recip();
                let q = args[0] * inv;
                (q, vec![inv, -(q * inv)])
            }
            Elementary::PowInt(n) if n < 0 && args[0].value == 0.0 => {
                return Err(Error::DomainError(format!(
                    "0 raised to negative power {n}"
                )))
            }
            _ => {
                let x = args[0];
                let d = self.derivs(x.value);
                (x.chain([d[0], d[1], d[2]]), vec![x.chain_partial(d)])
            }
        })
    }
}

/// Seeds a jet: an active coordinate gets unit first derivative.
pub fn jet_seed(value: f64, direction_active: bool) -> Jet2 {
    if direction_active {
        Jet2::variable(value)
    } else {
        Jet2::constant(value)
    }
}

pub fn jet_apply_elementary(op: Elementary, args: &[Jet2]) -> Result<Jet2> {
    op.eval_with_partials(args).map(|(j, _)| j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn seeding() {
        assert_eq!(jet_seed(3.0, true), Jet2::new(3.0, 1.0, 0.0));
        assert_eq!(jet_seed(3.0, false), Jet2::new(3.0, 0.0, 0.0));
        let x = jet_seed(0.0, true);
        assert_eq!(x * x, Jet2::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn elementary_at_origin() {
        let x = jet_seed(0.0, true);
        assert_eq!(
            jet_apply_elementary(Elementary::Tanh, &[x]).unwrap(),
            Jet2::new(0.0, 1.0, 0.0)
        );
        assert_eq!(
            jet_apply_elementary(Elementary::Sin, &[x]).unwrap(),
            Jet2::new(0.0, 1.0, 0.0)
        );
    }

    #[test]
    fn exp_at_one_matches_finite_differences() {
        let h = 1e-4;
        let j = jet_apply_elementary(Elementary::Exp, &[jet_seed(1.0, true)]).unwrap();
        let e = std::f64::consts::E;
        let fd1 = ((1.0 + h).exp() - (1.0 - h).exp()) / (2.0 * h);
        let fd2 = ((1.0 + h).exp() - 2.0 * e + (1.0 - h).exp()) / (h * h);
        assert!(close(j.value, e, 1e-15));
        assert!(close(j.d1, fd1, 1e-8));
        assert!(close(j.d2, fd2, 1e-6));
    }

    #[test]
    fn division_by_zero_and_domain() {
        let x = jet_seed(1.0, true);
        let z = Jet2::constant(0.0);
        assert!(matches!(
            jet_apply_elementary(Elementary::Div, &[x, z]),
            Err(Error::DivisionByZero)
        ));
        assert!(matches!(
            jet_apply_elementary(Elementary::PowInt(-2), &[z]),
            Err(Error::DomainError(_))
        ));
        assert!(jet_apply_elementary(Elementary::Add, &[x]).is_err());
    }

    #[test]
    fn third_derivatives_match_finite_differences() {
        let h = 1e-3;
        for op in [
            Elementary::Tanh,
            Elementary::Exp,
            Elementary::Sin,
            Elementary::Cos,
            Elementary::PowInt(3),
            Elementary::PowInt(5),
        ] {
            for &v in &[-0.7, 0.2, 1.3] {
                let d = op.derivs(v);
                let f2 = |x: f64| op.derivs(x)[2];
                let fd3 = (f2(v + h) - f2(v - h)) / (2.0 * h);
                assert!(close(d[3], fd3, 1e-5), "{op:?} at {v}: {} vs {fd3}", d[3]);
            }
        }
    }

    #[test]
    fn partial_of_tanh_is_sech_squared() {
        let y = Jet2::constant(0.4);
        let (_, p) = Elementary::Tanh.eval_with_partials(&[y]).unwrap();
        assert!(close(p[0].value, 1.0 - 0.4f64.tanh().powi(2), 1e-15));
    }
}
