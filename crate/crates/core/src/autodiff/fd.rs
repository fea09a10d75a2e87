//! Central finite-difference checks for jet derivatives.

use super::jet::Jet2;

/// Relative error with a unit floor on the scale, so derivatives that vanish
/// are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compares jet first and second derivatives of `f` at `x` with the central
/// differences `(f(x+h) - f(x-h)) / 2h` and `(f(x+h) - 2 f(x) + f(x-h)) / h^2`.
/// Returns the larger of the two relative errors.
pub fn finite_diff_check<F>(f: F, x: f64, h: f64) -> f64
where
    F: Fn(Jet2) -> Jet2,
{
    assert!(h > 0.0, "step must be positive");
    let j = f(Jet2::variable(x));
    let fp = f(Jet2::constant(x + h)).value;
    let f0 = f(Jet2::constant(x)).value;
    let fm = f(Jet2::constant(x - h)).value;
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp - 2.0 * f0 + fm) / (h * h);
    rel_err(j.d1, d1).max(rel_err(j.d2, d2))
}

/// Central difference of a scalar function of one parameter.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_and_exp() {
        assert!(finite_diff_check(|x| x.sin(), 0.7, 1e-4) <= 1e-6);
        assert!(finite_diff_check(|x| x.exp(), 0.0, 1e-4) <= 1e-6);
    }

    #[test]
    fn constant_is_exact() {
        assert_eq!(finite_diff_check(|_| Jet2::constant(2.5), 0.3, 1e-4), 0.0);
    }
}
