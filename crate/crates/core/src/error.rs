use thiserror::Error;

use crate::game::Agent;

/// Errors raised by the game model, solvers and verifiers.
///
/// Residuals carried by solver errors are reported as `f64` regardless of the
/// scalar type the computation ran in.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GameError {
    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite {what} at stage {stage}")]
    NonFinite { stage: usize, what: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("stage {stage}: saddle stationarity system singular (condition number {cond:.3e})")]
    SaddleSingular { stage: usize, cond: f64 },

    #[error("open-loop KKT matrix is singular")]
    OpenLoopSingular,

    #[error("maximum iterations reached with residual {residual:.3e}")]
    MaxIters { residual: f64 },

    #[error("line search stalled at iteration {iteration} with residual {residual:.3e}")]
    LineSearchStall { iteration: usize, residual: f64 },

    #[error("Newton step singular at iteration {iteration} after regularization cap")]
    SingularNewtonStep { iteration: usize },

    #[error("complementarity smoothing reached its floor with residual {residual:.3e}")]
    ComplementarityStall { residual: f64 },

    #[error("stage {stage}: extragradient stalled with fixed-point residual {residual:.3e}")]
    ExtragradientStall { stage: usize, residual: f64 },

    #[error("stage {stage}, agent {agent}, coordinate {coord}: lower and upper bound coincide")]
    DegenerateBound {
        stage: usize,
        agent: Agent,
        coord: usize,
    },

    #[error("audit refused: {reason} (residual {residual:.3e})")]
    AuditRefused { reason: String, residual: f64 },

    #[error("problem construction failed: {0}")]
    Construction(String),
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;

pub(crate) fn input_err<S: Into<String>>(msg: S) -> GameError {
    GameError::Input(msg.into())
}
