use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("design matrix is rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("invalid spherical harmonic order l={l}, m={m}")]
    InvalidOrder { l: i64, m: i64 },
    #[error("point too close to a pole (sin theta = {0:e})")]
    PoleSingularity(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),
    #[error("cholesky factorization of the mass matrix failed")]
    CholeskyFailure,
    #[error("invalid variant: {0}")]
    InvalidVariant(String),
    #[error("time {t} outside stored trajectory [0, {t_end}]")]
    TimeOutOfRange { t: f64, t_end: f64 },
    #[error("time stepping became unstable at step {step} (norm {norm:e})")]
    Instability { step: usize, norm: f64 },
    #[error("non-finite coefficient at step {0}")]
    NonFiniteCoefficient(usize),
    #[error("component fit diverged: {0}")]
    FitDiverged(String),
    #[error("missing component: {0}")]
    MissingComponent(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by numerics rather than by configuration or IO.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_numerical(),
            Error::Diverged { .. }
            | Error::Instability { .. }
            | Error::NonFiniteCoefficient(_)
            | Error::CholeskyFailure
            | Error::RankDeficient { .. }
            | Error::FitDiverged(_)
            | Error::DivisionByZero
            | Error::DomainError(_) => true,
            _ => false,
        }
    }
}
