//! Initial-condition families, datasets, losses and the staged schedule.

pub mod dataset;
pub mod family;
pub mod loss;
pub mod schedule;

pub use dataset::{build_dataset, cached_dataset, random_point, Dataset, TrainTriple, POLE_BAND};
pub use family::{sample_family, sample_family_with, split_rng, unit_gaussian, Family, FamilySpec, Split};
pub use loss::{
    batch_loss_grad, loss_coeff_consistency, loss_initial, loss_residual, residual, LossReport, ResidualSample, Terms,
};
pub use schedule::{run_schedule, staged_phases, Phase, PhaseKind, PinnObjective, ScheduleTrace};
