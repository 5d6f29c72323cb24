use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::derivatives::{evaluate_derivatives, stage_lagrangian_hessian};
use crate::error::{input_err, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::policy::AffinePolicySet;
use crate::scalar::{lit, Scalar};
use crate::verify::cone::{build_critical_cone, ConeOptions, CriticalConeBasis, PolicyResponse};
use crate::verify::first_order::Structure;

/// Default relative margin of the positive-definiteness test.
pub const DEFAULT_PD_TOL_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondOrderClass {
    /// Projected minimum eigenvalue above `pd_tol`.
    Sufficient,
    /// Within `pd_tol` of zero.
    NecessaryOnly,
    /// Below `−pd_tol`.
    Fails,
}

impl SecondOrderClass {
    pub fn classify(min_eig: f64, pd_tol: f64) -> Self {
        if min_eig > pd_tol {
            Self::Sufficient
        } else if min_eig >= -pd_tol {
            Self::NecessaryOnly
        } else {
            Self::Fails
        }
    }
}

/// Second-order test of one agent on one cone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderReport {
    pub structure: Structure,
    pub agent: Agent,
    pub start_stage: usize,
    pub policy_response_dropped: bool,
    pub cone_dim: usize,
    /// Minimum eigenvalue of the projected Hessian; `+∞` on a trivial cone.
    pub min_eig: f64,
    /// Spectral norm of the projected Hessian.
    pub projected_norm: f64,
    pub pd_tol: f64,
    /// `‖P − Pᵀ‖ / max(1, ‖P‖)` before symmetrization.
    pub symmetry_error: f64,
    pub classification: SecondOrderClass,
}

/// Hessian of `agent`'s Lagrangian over the cone layout `[u¹_t, u²_t, x_{t+1}]`.
fn layout_hessian<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: &MultiplierSet<T>,
    agent: Agent,
    include_dynamics_curvature: bool,
) -> Result<DMatrix<T>> {
    let (k, n, [m1, m2]) = (game.horizon(), game.state_dim(), game.control_dims());
    let w = n + m1 + m2;
    let (sds, term) = evaluate_derivatives(game, traj, include_dynamics_curvature)?;
    let mut h = DMatrix::zeros(k * w, k * w);
    for t in 1..=k {
        let lh = stage_lagrangian_hessian(agent, &sds[t - 1], multipliers.lambda(agent, t), None, include_dynamics_curvature)?;
        // Joint index of (x_t, u¹_t, u²_t) mapped into the layout; x_1 is fixed.
        let map = |j: usize| -> Option<usize> {
            if j < n {
                (t >= 2).then(|| (t - 2) * w + m1 + m2 + j)
            } else {
                Some((t - 1) * w + (j - n))
            }
        };
        for r in 0..w {
            let Some(lr) = map(r) else { continue };
            for c in 0..w {
                if let Some(lc) = map(c) {
                    h[(lr, lc)] += lh[(r, c)];
                }
            }
        }
    }
    let off = (k - 1) * w + m1 + m2;
    let mut view = h.view_mut((off, off), (n, n));
    view += &term.hess * agent.sign::<T>();
    Ok(h)
}

/// Projects `agent`'s Lagrangian Hessian onto `cone` and classifies the
/// minimum eigenvalue against `pd_tol = pd_tol_scale · (1 + ‖P‖₂)`.
pub fn second_order_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: &MultiplierSet<T>,
    cone: &CriticalConeBasis<T>,
    agent: Agent,
    pd_tol_scale: f64,
    include_dynamics_curvature: bool,
) -> Result<SecondOrderReport> {
    if cone.agent != agent {
        return Err(input_err(format!("cone was built for agent {}, not {agent}", cone.agent)));
    }
    multipliers.check_dims(game)?;
    let h = layout_hessian(game, traj, multipliers, agent, include_dynamics_curvature)?;
    if h.nrows() != cone.basis.nrows() {
        return Err(input_err("cone does not match the game's layout"));
    }
    let p = cone.basis.transpose() * &h * &cone.basis;
    let (min_eig, norm, sym) = if p.nrows() == 0 {
        (f64::INFINITY, 0.0, 0.0)
    } else {
        let pn = p.norm().as_f64();
        let sym = (&p - p.transpose()).norm().as_f64() / pn.max(1.0);
        let ps = (&p + p.transpose()) * lit::<T>(0.5);
        let eig = SymmetricEigen::new(ps).eigenvalues;
        let norm = eig.iter().fold(0.0f64, |w, e| w.max(e.as_f64().abs()));
        (eig.min().as_f64(), norm, sym)
    };
    let pd_tol = pd_tol_scale * (1.0 + norm);
    Ok(SecondOrderReport {
        structure: cone.structure,
        agent,
        start_stage: cone.start_stage,
        policy_response_dropped: cone.policy_response_dropped,
        cone_dim: cone.dim(),
        min_eig,
        projected_norm: norm,
        pd_tol,
        symmetry_error: sym,
        classification: SecondOrderClass::classify(min_eig, pd_tol),
    })
}

/// Feedback second-order test over every stage subproblem: the report of the
/// subproblem with the smallest projected eigenvalue.
#[allow(clippy::too_many_arguments)]
pub fn fb_second_order_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
    multipliers: &MultiplierSet<T>,
    agent: Agent,
    response: PolicyResponse,
    weak_active_tol: f64,
    pd_tol_scale: f64,
    include_dynamics_curvature: bool,
) -> Result<SecondOrderReport> {
    let mut worst: Option<SecondOrderReport> = None;
    for t in 1..=game.horizon() {
        let opts = ConeOptions { weak_active_tol, response, start_stage: t };
        let cone = build_critical_cone(game, traj, Structure::Feedback, agent, Some(policies), Some(multipliers), &opts)?;
        let rep = second_order_report(game, traj, multipliers, &cone, agent, pd_tol_scale, include_dynamics_curvature)?;
        if worst.as_ref().is_none_or(|w| rep.min_eig < w.min_eig) {
            worst = Some(rep);
        }
    }
    Ok(worst.expect("horizon is at least one"))
}
