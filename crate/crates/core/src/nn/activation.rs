use crate::autodiff::jet::{Elementary, Jet2, Scalar};

/// Coordinate-wise nonlinearities used by dense and convolution layers.
///
/// `SinPow(l)` / `CosPow(l)` are the integer powers `sin^l`, `cos^l` used by
/// the spherical reconstruction block; `l = 0` is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Tanh,
    Exp,
    Sin,
    SinPow(u32),
    CosPow(u32),
}

#[inline]
fn mono(c: f64, v: f64, e: i32) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * v.powi(e)
    }
}

impl Activation {
    /// `[f, f', f'', f''']` at `z`.
    pub fn derivs(self, z: f64) -> [f64; 4] {
        match self {
            Activation::Identity => [z, 1.0, 0.0, 0.0],
            Activation::Tanh => Elementary::Tanh.derivs(z),
            Activation::Exp => Elementary::Exp.derivs(z),
            Activation::Sin => Elementary::Sin.derivs(z),
            Activation::SinPow(l) => {
                let (s, c) = z.sin_cos();
                let l = l as f64;
                let li = l as i32;
                [
                    mono(1.0, s, li),
                    mono(l, s, li - 1) * c,
                    mono(l * (l - 1.0), s, li - 2) * c * c - mono(l, s, li),
                    mono(l * (l - 1.0) * (l - 2.0), s, li - 3) * c * c * c
                        - mono(l * (3.0 * l - 2.0), s, li - 1) * c,
                ]
            }
            Activation::CosPow(l) => {
                let (s, c) = z.sin_cos();
                let l = l as f64;
                let li = l as i32;
                [
                    mono(1.0, c, li),
                    -mono(l, c, li - 1) * s,
                    mono(l * (l - 1.0), c, li - 2) * s * s - mono(l, c, li),
                    -mono(l * (l - 1.0) * (l - 2.0), c, li - 3) * s * s * s
                        + mono(l * (3.0 * l - 2.0), c, li - 1) * s,
                ]
            }
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Exp => z.exp(),
            Activation::Sin => z.sin(),
            Activation::SinPow(l) => z.sin().powi(l as i32),
            Activation::CosPow(l) => z.cos().powi(l as i32),
        }
    }

    #[inline]
    pub fn apply_jet(self, z: Jet2) -> Jet2 {
        match self {
            Activation::Identity => z,
            _ => {
                let d = self.derivs(z.value);
                z.chain([d[0], d[1], d[2]])
            }
        }
    }

    pub fn apply_scalar<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Exp => z.exp(),
            Activation::Sin => z.sin(),
            Activation::SinPow(l) => z.sin().powi(l as i32),
            Activation::CosPow(l) => z.cos().powi(l as i32),
        }
    }

    pub fn code(self) -> (u8, u32) {
        match self {
            Activation::Identity => (0, 0),
            Activation::Tanh => (1, 0),
            Activation::Exp => (2, 0),
            Activation::Sin => (3, 0),
            Activation::SinPow(l) => (4, l),
            Activation::CosPow(l) => (5, l),
        }
    }

    pub fn from_code(code: u8, arg: u32) -> Option<Activation> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Tanh,
            2 => Activation::Exp,
            3 => Activation::Sin,
            4 => Activation::SinPow(arg),
            5 => Activation::CosPow(arg),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_activation_derivatives_match_finite_differences() {
        let h = 1e-4;
        for l in 0..=9u32 {
            for act in [Activation::SinPow(l), Activation::CosPow(l)] {
                for &z in &[-1.1, 0.3, 0.9, 2.4] {
                    let d = act.derivs(z);
                    assert!((d[0] - act.apply(z)).abs() < 1e-14);
                    for k in 0..3 {
                        let fd = (act.derivs(z + h)[k] - act.derivs(z - h)[k]) / (2.0 * h);
                        let scale = 1.0 + fd.abs();
                        assert!(
                            (d[k + 1] - fd).abs() / scale < 1e-6,
                            "{act:?} order {} at {z}: {} vs {fd}",
                            k + 1,
                            d[k + 1]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn zeroth_power_is_constant() {
        assert_eq!(Activation::SinPow(0).derivs(0.7), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(Activation::CosPow(0).apply(1.3), 1.0);
    }

    #[test]
    fn code_roundtrip() {
        for a in [
            Activation::Identity,
            Activation::Tanh,
            Activation::Exp,
            Activation::Sin,
            Activation::SinPow(4),
            Activation::CosPow(7),
        ] {
            let (c, l) = a.code();
            assert_eq!(Activation::from_code(c, l), Some(a));
        }
    }
}
