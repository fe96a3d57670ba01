//! Error type shared by all modules in the crate.

use thiserror::Error;

/// Everything that can go wrong in the simulation and learning routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Matrix or vector dimensions do not line up for the requested
    /// operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of range or internally inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// The integrator produced a non-finite value or the state norm crossed
    /// the blow-up threshold.
    #[error("integration diverged at t = {t}")]
    IntegrationDiverged { t: f64 },

    /// The state left the simulation domain (including its exit margin).
    #[error("state left the domain at t = {t}")]
    DomainExit { t: f64 },

    /// The closed control loop diverged: tracking error or integrator state
    /// crossed the blow-up threshold, or the feedthrough became singular.
    #[error("controller diverged at t = {t}: {reason}")]
    ControllerDiverged { t: f64, reason: String },

    /// A higher-order system was declared with order zero.
    #[error("system order must be at least 1")]
    InvalidOrder,

    /// A gating threshold was negative.
    #[error("gate threshold must be non-negative, got {0}")]
    InvalidThreshold(f64),

    /// A matrix expected to be positive definite is not.
    #[error("matrix is not positive definite (min eigenvalue {min_eig})")]
    NotPositiveDefinite { min_eig: f64 },

    /// The closed-form reference solution is not applicable to this
    /// configuration.
    #[error("closed-form oracle unavailable: {0}")]
    OracleUnavailable(String),

    /// A delay-line consumer was asked to produce output before enough
    /// samples were pushed.
    #[error("need at least {needed} samples, have {have}")]
    NeedMoreSamples { needed: usize, have: usize },

    /// A network relaxation diverged.
    #[error("relaxation diverged at step {step}")]
    RelaxationDiverged { step: usize },

    /// A level of a stacked network diverged during a sweep.
    #[error("hierarchy level {level} diverged at step {step}")]
    LevelDiverged { level: usize, step: usize },

    /// A linear solve hit a singular or near-singular matrix.
    #[error("singular matrix in {0}")]
    SingularMatrix(String),
}

pub type CoreResult<T> = Result<T, CoreError>;
