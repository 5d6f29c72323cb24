use nalgebra::DVector;

use super::active_set::{bound_status, BoundStatus, DEFAULT_ACT_TOL};
use crate::derivatives::{evaluate_derivatives, StageDerivatives, TerminalDerivatives};
use crate::error::{input_err, GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory, DEFAULT_DYN_TOL};
use crate::multipliers::MultiplierSet;
use crate::olne::costate_recursion;
use crate::policy::AffinePolicySet;
use crate::scalar::{lit, Scalar};
use crate::verify::first_order::{check_closed_loop, fb_multipliers_from, fb_report_from, ol_report_from, KktResidualReport};

pub(crate) fn require_bounds<T: Scalar>(game: &GameDefinition<T>) -> Result<&crate::game::ControlBounds<T>> {
    game.bounds().ok_or_else(|| GameError::Configuration("game has no control bounds; use the unconstrained solver".into()))
}

/// Attaches bound multipliers to `(λ, ψ)`: zero on inactive coordinates, and on
/// active ones the value that zeroes the own-control stationarity row.
/// Negative solutions are replaced by zero so the row keeps the violation.
pub(crate) fn attach_bound_multipliers<T: Scalar>(
    game: &GameDefinition<T>,
    sds: &[StageDerivatives<T>],
    traj: &Trajectory<T>,
    base: MultiplierSet<T>,
    act_tol: f64,
) -> Result<MultiplierSet<T>> {
    let bounds = require_bounds(game)?;
    let k = game.horizon();
    let mut lower: [Vec<DVector<T>>; 2] = Agent::BOTH.map(|a| vec![DVector::zeros(game.control_dim(a)); k]);
    let mut upper = lower.clone();
    for t in 1..=k {
        let sd = &sds[t - 1];
        for a in Agent::BOTH {
            let ai = a.index();
            let row = sd.grad_u(a, a) + sd.b(a).transpose() * base.lambda(a, t);
            let u = traj.control(a, t);
            let (lo, hi) = (bounds.lower(a, t), bounds.upper(a, t));
            for j in 0..u.len() {
                if lo[j] == hi[j] {
                    return Err(GameError::DegenerateBound { stage: t, agent: a, coord: j });
                }
                match bound_status(u[j].as_f64(), lo[j].as_f64(), hi[j].as_f64(), act_tol) {
                    BoundStatus::LowerActive => lower[ai][t - 1][j] = row[j].max_of(T::zero()),
                    BoundStatus::UpperActive => upper[ai][t - 1][j] = (-row[j]).max_of(T::zero()),
                    BoundStatus::Inactive => {}
                }
            }
        }
    }
    base.with_bound_multipliers(lower, upper)
}

/// Costates, policy multipliers (feedback only) and bound multipliers at a
/// point of a box-constrained game.
///
/// With `policies` the feedback recursion is used along their closed loop;
/// without, the open-loop costate recursion along `traj`.
pub fn recover_constrained_multipliers<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: Option<&[AffinePolicySet<T>; 2]>,
    act_tol: f64,
) -> Result<MultiplierSet<T>> {
    require_bounds(game)?;
    traj.check_dims(game)?;
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    let base = match policies {
        Some(p) => {
            check_closed_loop(game, traj, p)?;
            fb_multipliers_from(&sds, &term, p)
        }
        None => {
            if !traj.is_dynamically_consistent(game, lit(DEFAULT_DYN_TOL))? {
                return Err(input_err("costate recovery needs a dynamically consistent trajectory"));
            }
            costate_recursion(game, traj)?
        }
    };
    attach_bound_multipliers(game, &sds, traj, base, act_tol)
}

fn with_bounds_or_recover<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: Option<&[AffinePolicySet<T>; 2]>,
    multipliers: Option<&MultiplierSet<T>>,
) -> Result<MultiplierSet<T>> {
    match multipliers {
        Some(m) if m.has_bound_multipliers() => {
            m.check_dims(game)?;
            Ok(m.clone())
        }
        Some(_) => Err(input_err("constrained report needs bound multipliers")),
        None => recover_constrained_multipliers(game, traj, policies, DEFAULT_ACT_TOL),
    }
}

fn derivatives<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>) -> Result<(Vec<StageDerivatives<T>>, TerminalDerivatives<T>)> {
    evaluate_derivatives(game, traj, false)
}

/// Open-loop first-order report of a box-constrained game, including the
/// complementarity families. Multipliers are recovered when omitted.
pub fn constrained_ol_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: Option<&MultiplierSet<T>>,
    tol: f64,
) -> Result<KktResidualReport> {
    require_bounds(game)?;
    traj.check_dims(game)?;
    let mult = with_bounds_or_recover(game, traj, None, multipliers)?;
    let (sds, term) = derivatives(game, traj)?;
    ol_report_from(game, &sds, &term, traj, &mult, tol)
}

/// Feedback first-order report of a box-constrained game, including the
/// complementarity families. Multipliers are recovered when omitted.
pub fn constrained_fb_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
    multipliers: Option<&MultiplierSet<T>>,
    tol: f64,
) -> Result<KktResidualReport> {
    require_bounds(game)?;
    traj.check_dims(game)?;
    crate::fbne::check_policies(game, policies)?;
    let mult = with_bounds_or_recover(game, traj, Some(policies), multipliers)?;
    let (sds, term) = derivatives(game, traj)?;
    fb_report_from(game, &sds, &term, traj, policies, &mult, tol)
}
