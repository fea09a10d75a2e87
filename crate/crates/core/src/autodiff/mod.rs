pub mod fd;
pub mod graph;
pub mod jet;
pub mod tape;

pub use fd::finite_diff_check;
pub use graph::{Graph, JetEval, Ops, Var};
pub use jet::{jet_apply_elementary, jet_seed, Elementary, Jet2, JetComponent, Scalar};
pub use tape::{GradReport, Tape};
