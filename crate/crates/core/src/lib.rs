//! Spectral physics-informed networks for time-dependent PDEs on the unit
//! interval, the sphere and an embedded torus.
//!
//! A model is the composition of three blocks: a transformation from
//! samples of the initial condition to spectral coefficients, a
//! time-stepping block acting on coefficients, and a reconstruction from
//! coefficients back to point values.

pub mod autodiff;
pub mod bases;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod theorem;
pub mod training;

pub use error::{Error, Result};
