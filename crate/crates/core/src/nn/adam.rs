use crate::error::{Error, Result};

/// Adam moment accumulators for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(n: usize, lr: f64) -> Self {
        OptimState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Entries with `frozen[i] == true` are left
/// untouched, moments included.
pub fn adam_step(
    state: &mut OptimState,
    params: &mut [f64],
    grads: &[f64],
    frozen: Option<&[bool]>,
) -> Result<()> {
    let n = params.len();
    for len in [grads.len(), state.m.len(), frozen.map_or(n, |f| f.len())] {
        if len != n {
            return Err(Error::ShapeMismatch { expected: n, got: len });
        }
    }
    state.step += 1;
    let b1 = 1.0 - state.beta1.powi(state.step as i32);
    let b2 = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..n {
        if frozen.is_some_and(|f| f[i]) {
            continue;
        }
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let mh = state.m[i] / b1;
        let vh = state.v[i] / b2;
        params[i] -= state.lr * mh / (vh.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = OptimState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        adam_step(&mut s, &mut p, &[0.0; 3], None).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = OptimState::new(2, 0.01);
        let mut p = vec![0.0, 0.0];
        adam_step(&mut s, &mut p, &[3.0, -0.5], None).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn quadratic_converges() {
        let mut s = OptimState::new(1, 0.1);
        let mut w = vec![0.0];
        for _ in 0..200 {
            let g = 2.0 * (w[0] - 2.0);
            adam_step(&mut s, &mut w, &[g], None).unwrap();
        }
        assert!((w[0] - 2.0).abs() <= 1e-2, "{}", w[0]);
    }

    #[test]
    fn shape_checked() {
        let mut s = OptimState::new(2, 0.1);
        assert!(adam_step(&mut s, &mut [0.0; 2], &[1.0], None).is_err());
    }
}
