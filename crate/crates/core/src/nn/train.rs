use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, OptimState};
use crate::error::{Error, Result};

/// A differentiable objective over a flat parameter vector and an indexed
/// dataset.
pub trait Objective {
    fn n_items(&self) -> usize;
    fn n_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
    /// Mean loss over `batch`; its gradient is added into `grad`.
    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub shuffle_seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            shuffle_seed: 0,
        }
    }
}

/// Mean minibatch loss per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub epoch_loss: Vec<f64>,
}

/// Epoch loss treated as an exact fit. Past this point gradients are
/// roundoff, Adam's second moment collapses below `eps`, and the
/// effective step `lr / eps` blows the fit up again.
pub const CONVERGED_LOSS: f64 = 1e-24;

/// Runs `schedule` on `obj`, stopping early once an epoch's mean loss is
/// below [`CONVERGED_LOSS`]. Parameters with `frozen[i]` set stay
/// bit-identical. On a non-finite loss the epochs finished so far remain
/// in `trace` and `Diverged` is returned.
pub fn train_loop<O: Objective>(
    obj: &mut O,
    schedule: &Schedule,
    frozen: Option<&[bool]>,
    state: &mut OptimState,
    trace: &mut Trace,
) -> Result<()> {
    let n = obj.n_items();
    if n == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    if schedule.epochs == 0 || frozen.is_some_and(|f| f.iter().all(|&x| x)) {
        return Ok(());
    }
    state.lr = schedule.lr;
    let mut params = obj.params();
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let bs = schedule.batch_size.clamp(1, n);
    for epoch in 0..schedule.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(bs) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = obj.loss_grad(batch, &mut grad)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            adam_step(state, &mut params, &grad, frozen)?;
            obj.set_params(&params);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        trace.epoch_loss.push(mean);
        if mean < CONVERGED_LOSS {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a x + b fitted to y = 3x - 1.
    struct Line {
        p: Vec<f64>,
        xs: Vec<f64>,
        nan_after: Option<usize>,
        calls: std::cell::Cell<usize>,
    }

    impl Objective for Line {
        fn n_items(&self) -> usize {
            self.xs.len()
        }
        fn n_params(&self) -> usize {
            2
        }
        fn params(&self) -> Vec<f64> {
            self.p.clone()
        }
        fn set_params(&mut self, p: &[f64]) {
            self.p.copy_from_slice(p);
        }
        fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> Result<f64> {
            self.calls.set(self.calls.get() + 1);
            if self.nan_after.is_some_and(|k| self.calls.get() > k) {
                return Ok(f64::NAN);
            }
            let mut l = 0.0;
            for &i in batch {
                let x = self.xs[i];
                let r = self.p[0] * x + self.p[1] - (3.0 * x - 1.0);
                l += r * r;
                grad[0] += 2.0 * r * x / batch.len() as f64;
                grad[1] += 2.0 * r / batch.len() as f64;
            }
            Ok(l / batch.len() as f64)
        }
    }

    fn line() -> Line {
        Line {
            p: vec![0.0, 0.0],
            xs: (0..64).map(|i| i as f64 / 63.0 * 2.0 - 1.0).collect(),
            nan_after: None,
            calls: Default::default(),
        }
    }

    #[test]
    fn zero_epochs_and_frozen() {
        let mut o = line();
        let mut st = OptimState::new(2, 1e-2);
        let mut tr = Trace::default();
        let s = Schedule { epochs: 0, ..Default::default() };
        train_loop(&mut o, &s, None, &mut st, &mut tr).unwrap();
        assert_eq!(o.p, vec![0.0, 0.0]);
        let s = Schedule { epochs: 5, ..Default::default() };
        train_loop(&mut o, &s, Some(&[true, true]), &mut st, &mut tr).unwrap();
        assert_eq!(o.p, vec![0.0, 0.0]);
    }

    #[test]
    fn toy_regression_converges() {
        let mut o = line();
        let mut st = OptimState::new(2, 0.0);
        let mut tr = Trace::default();
        let s = Schedule { epochs: 500, batch_size: 16, lr: 1e-2, shuffle_seed: 1 };
        train_loop(&mut o, &s, None, &mut st, &mut tr).unwrap();
        assert!(tr.epoch_loss.len() <= 500);
        assert!(*tr.epoch_loss.last().unwrap() <= 1e-4);
    }

    #[test]
    fn exact_fit_stops_before_adam_blows_up() {
        let mut o = line();
        let mut st = OptimState::new(2, 0.0);
        let mut tr = Trace::default();
        let s = Schedule { epochs: 5000, batch_size: 16, lr: 1e-2, shuffle_seed: 1 };
        train_loop(&mut o, &s, None, &mut st, &mut tr).unwrap();
        assert!(tr.epoch_loss.len() < 5000);
        assert!(*tr.epoch_loss.last().unwrap() < CONVERGED_LOSS);
        assert!((o.p[0] - 3.0).abs() < 1e-10 && (o.p[1] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let mut o = line();
        o.nan_after = Some(9);
        let mut st = OptimState::new(2, 0.0);
        let mut tr = Trace::default();
        let s = Schedule { epochs: 10, batch_size: 16, lr: 1e-2, shuffle_seed: 1 };
        let r = train_loop(&mut o, &s, None, &mut st, &mut tr);
        assert!(matches!(r, Err(Error::Diverged { epoch: 2, .. })));
        assert_eq!(tr.epoch_loss.len(), 2);
    }
}
