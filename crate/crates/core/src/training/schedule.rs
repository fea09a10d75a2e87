use super::dataset::Dataset;
use super::loss::{batch_loss_grad, LossReport, Terms};
use crate::bases::Geometry;
use crate::error::Result;
use crate::model::{BlockKind, Model};
use crate::nn::adam::OptimState;
use crate::nn::train::{train_loop, Objective, Schedule, Trace};
use crate::oracle::PdeSpec;

/// The PINN objective of a model over a dataset.
pub struct PinnObjective<'d> {
    pub model: Model,
    pub data: &'d Dataset,
    pub pde: PdeSpec,
    pub terms: Terms,
    grid: Vec<Vec<f64>>,
}

impl<'d> PinnObjective<'d> {
    pub fn new(model: Model, data: &'d Dataset, pde: PdeSpec, terms: Terms) -> Self {
        let grid = data.family.spec.grid_points();
        PinnObjective { model, data, pde, terms, grid }
    }

    /// Loss report over `batch` without touching parameters.
    pub fn report(&self, batch: &[usize]) -> Result<LossReport> {
        let mut g = vec![0.0; self.model.n_params()];
        batch_loss_grad(&self.model, &self.pde, self.data, &self.grid, batch, self.terms, &mut g)
    }
}

impl Objective for PinnObjective<'_> {
    fn n_items(&self) -> usize {
        self.data.len()
    }
    fn n_params(&self) -> usize {
        self.model.n_params()
    }
    fn params(&self) -> Vec<f64> {
        self.model.params()
    }
    fn set_params(&mut self, p: &[f64]) {
        self.model.set_params(p)
    }
    fn loss_grad(&self, batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        Ok(batch_loss_grad(&self.model, &self.pde, self.data, &self.grid, batch, self.terms, grad)?.total())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// Autoencoding fit of transformation and reconstruction; time
    /// stepping frozen.
    Pretrain,
    /// Transformation and reconstruction frozen, PINN losses.
    FrozenOuter,
    /// Everything trainable, PINN losses.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub schedule: Schedule,
}

impl Phase {
    pub fn new(kind: PhaseKind, schedule: Schedule) -> Self {
        Phase { kind, schedule }
    }
}

/// Three phases: pretraining, `frozen` epochs with the outer blocks
/// fixed, then `full` epochs with everything trainable.
pub fn staged_phases(pretrain: usize, frozen: usize, full: usize, base: &Schedule) -> Vec<Phase> {
    let s = |epochs, salt: u64| Schedule { epochs, shuffle_seed: base.shuffle_seed.wrapping_add(salt), ..base.clone() };
    vec![
        Phase::new(PhaseKind::Pretrain, s(pretrain, 0)),
        Phase::new(PhaseKind::FrozenOuter, s(frozen, 1)),
        Phase::new(PhaseKind::Full, s(full, 2)),
    ]
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleTrace {
    pub phases: Vec<(PhaseKind, Trace)>,
}

fn phase_setup(model: &Model, kind: PhaseKind) -> (Terms, Vec<BlockKind>) {
    // the coefficient term applies where the time-stepping block is learned
    // against a basis on a manifold
    let lcoef = model.is_spectral() && model.geometry() != Geometry::Interval;
    let pinn = Terms { l0: true, ld: true, lcoef, autoencode: false };
    match kind {
        PhaseKind::Pretrain => (
            Terms { autoencode: true, ..Terms::default() },
            vec![BlockKind::TimeStepping],
        ),
        PhaseKind::FrozenOuter => (pinn, vec![BlockKind::Transformation, BlockKind::Reconstruction]),
        PhaseKind::Full => (pinn, vec![]),
    }
}

/// Runs `phases` in order with a fresh optimizer state per phase.
pub fn run_schedule(model: Model, data: &Dataset, pde: &PdeSpec, phases: &[Phase]) -> Result<(Model, ScheduleTrace)> {
    let mut trace = ScheduleTrace::default();
    let mut model = model;
    for ph in phases {
        if ph.kind == PhaseKind::Pretrain && !model.is_spectral() {
            continue;
        }
        let (terms, frozen) = phase_setup(&model, ph.kind);
        let mask = model.freeze_mask(&frozen);
        let mut obj = PinnObjective::new(model, data, *pde, terms);
        let mut state = OptimState::new(obj.n_params(), ph.schedule.lr);
        let mut t = Trace::default();
        let res = train_loop(&mut obj, &ph.schedule, Some(&mask), &mut state, &mut t);
        model = obj.model;
        trace.phases.push((ph.kind, t));
        res?;
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ReconVariant, SteppingVariant, TransformVariant};
    use crate::training::dataset::build_dataset;
    use crate::training::family::FamilySpec;

    fn small_sphere() -> (Model, Dataset, PdeSpec) {
        let m = Model::build(&ModelConfig::sphere("sphere-b", 1, 0.1, 6).unwrap(), 0).unwrap();
        let d = build_dataset(&FamilySpec::sphere(1), 1.0, 16, 4, 0).unwrap();
        (m, d, PdeSpec::allen_cahn(0.1, Geometry::Sphere))
    }

    #[test]
    fn empty_phases_leave_model() {
        let (m, d, pde) = small_sphere();
        let (out, tr) = run_schedule(m.clone(), &d, &pde, &[]).unwrap();
        assert_eq!(out, m);
        assert!(tr.phases.is_empty());
    }

    #[test]
    fn frozen_phase_keeps_outer_blocks() {
        let (m, d, pde) = small_sphere();
        let sched = Schedule { epochs: 2, batch_size: 4, lr: 1e-2, shuffle_seed: 1 };
        let (out, tr) = run_schedule(m.clone(), &d, &pde, &[Phase::new(PhaseKind::FrozenOuter, sched)]).unwrap();
        let (p0, p1) = (m.params(), out.params());
        for kind in [BlockKind::Transformation, BlockKind::Reconstruction] {
            for i in m.block_range(kind) {
                assert_eq!(p0[i].to_bits(), p1[i].to_bits());
            }
        }
        assert!(m.block_range(BlockKind::TimeStepping).any(|i| p0[i] != p1[i]));
        assert_eq!(tr.phases[0].1.epoch_loss.len(), 2);
    }

    #[test]
    fn pretrain_reduces_autoencoding_loss() {
        let (m, d, pde) = small_sphere();
        let sched = Schedule { epochs: 30, batch_size: 8, lr: 1e-2, shuffle_seed: 1 };
        let (out, tr) = run_schedule(m.clone(), &d, &pde, &[Phase::new(PhaseKind::Pretrain, sched)]).unwrap();
        let l = &tr.phases[0].1.epoch_loss;
        assert!(l.last().unwrap() < &(0.5 * l[0]), "{l:?}");
        for i in m.block_range(BlockKind::TimeStepping) {
            assert_eq!(m.params()[i], out.params()[i]);
        }
    }

    #[test]
    fn realization_with_mlp_stepping_decreases_residual() {
        let mut cfg = ModelConfig::interval("spectral-mlp-step", 20, 101, 0.01).unwrap();
        cfg.blocks = Some((TransformVariant::ExactOperator, SteppingVariant::MlpPlain, ReconVariant::ExactSine));
        let m = Model::build(&cfg, 0).unwrap();
        let d = build_dataset(&FamilySpec::interval(20, 101), 0.5, 64, 8, 0).unwrap();
        let pde = PdeSpec::heat(0.01);
        let mut obj = PinnObjective::new(m, &d, pde, Terms { l0: false, ld: true, lcoef: false, autoencode: false });
        let batch: Vec<usize> = (0..64).collect();
        let mut state = OptimState::new(obj.n_params(), 1e-3);
        let mut prev = obj.report(&batch).unwrap().ld;
        for _ in 0..5 {
            let mut g = vec![0.0; obj.n_params()];
            obj.loss_grad(&batch, &mut g).unwrap();
            let mut p = obj.params();
            crate::nn::adam::adam_step(&mut state, &mut p, &g, None).unwrap();
            obj.set_params(&p);
            let now = obj.report(&batch).unwrap().ld;
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }
}
