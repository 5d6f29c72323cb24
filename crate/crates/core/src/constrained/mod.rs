//! Games with box bounds on the controls: equilibrium solvers, multiplier
//! recovery, residual reports and the feedback/open-loop audit.

mod active_set;
mod fbne;
mod olne;
mod recover;
mod theorem2;

pub use active_set::{classify_active_set, ActiveSetClassification, BoundStatus, CoordinateStatus, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL};
pub use fbne::{box_saddle, solve_constrained_fbne, ConstrainedFbneSolution, EXTRAGRADIENT_MAX_ITERS, EXTRAGRADIENT_TOL};
pub use olne::{solve_constrained_olne, ConstrainedOlneSolution, SMOOTHING_SCHEDULE};
pub use recover::{constrained_fb_report, constrained_ol_report, recover_constrained_multipliers};
pub use theorem2::{theorem2_audit, EquilibriumSide, Theorem2Class, Theorem2Verdict};

#[cfg(test)]
mod tests;
