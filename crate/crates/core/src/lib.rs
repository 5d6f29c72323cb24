//! Two-agent zero-sum dynamic games in discrete time.
//!
//! The crate computes open-loop and feedback Nash equilibria of games with
//! smooth dynamics and costs, and verifies them against first- and
//! second-order optimality conditions, optionally with box bounds on controls.

pub mod constrained;
pub mod derivatives;
pub mod error;
pub mod fbne;
pub mod game;
pub mod io;
pub mod lq;
pub(crate) mod kkt;
pub mod multipliers;
pub mod newton;
pub mod olne;
pub mod policy;
pub mod problems;
pub mod scalar;
pub mod verify;

pub use derivatives::{StageDerivatives, TerminalDerivatives};
pub use error::{GameError, Result};
pub use game::{Agent, CallbackModel, ControlBounds, GameDefinition, GameModel, Trajectory};
pub use multipliers::MultiplierSet;
pub use policy::{AffinePolicy, AffinePolicySet};
pub use scalar::Scalar;

pub type GameF64 = GameDefinition<f64>;
pub type GameF32 = GameDefinition<f32>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type TrajectoryF32 = Trajectory<f32>;
pub type PolicySetF64 = AffinePolicySet<f64>;
pub type PolicySetF32 = AffinePolicySet<f32>;
pub type MultipliersF64 = MultiplierSet<f64>;
pub type MultipliersF32 = MultiplierSet<f32>;
