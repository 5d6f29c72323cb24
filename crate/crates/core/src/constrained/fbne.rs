use nalgebra::{DMatrix, DVector};

use super::active_set::{bound_status, classify_active_set, ActiveSetClassification, BoundStatus, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL};
use super::recover::{attach_bound_multipliers, require_bounds};
use crate::derivatives::{StageDerivatives, TerminalDerivatives};
use crate::error::{GameError, Result};
use crate::fbne::{ilq_loop, saddle_shift};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::lq::{condition_number, ControlValue, StageDiagnostics, StageSaddle};
use crate::multipliers::MultiplierSet;
use crate::newton::{SolveLog, SolveOptions};
use crate::policy::AffinePolicySet;
use crate::scalar::{lit, Scalar};
use crate::verify::first_order::{fb_multipliers_from, fb_report_from};

/// Iteration cap of the projected extragradient stage solver.
pub const EXTRAGRADIENT_MAX_ITERS: usize = 10_000;
/// Fixed-point residual at which the extragradient iteration stops.
pub const EXTRAGRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedFbneSolution<T: Scalar> {
    /// Policies anchored at the trajectory; rows of active coordinates are zero.
    pub policies: [AffinePolicySet<T>; 2],
    pub trajectory: Trajectory<T>,
    /// Costates, policy multipliers and bound multipliers.
    pub multipliers: MultiplierSet<T>,
    pub log: SolveLog,
    /// Last stage saddles; `masked` lists the zeroed rows of the stacked control.
    pub diagnostics: Vec<StageDiagnostics<T>>,
    pub active_set: ActiveSetClassification,
}

/// Box-constrained stage saddle in deviation variables.
///
/// Agent one minimizes and agent two maximizes `½ vᵀ Z_uu v + Z_uᵀ v` over
/// `lower ≤ v ≤ upper`, `Z_uu` shifted by `±shift` on the diagonal blocks.
/// The variational inequality is solved by projected extragradient with step
/// `1/‖Z_uu‖₂`, then polished by solving the stationarity system on the
/// coordinates left free. Gains solve the same system on free coordinates and
/// are zero on active ones.
pub fn box_saddle<T: Scalar>(
    cv: &ControlValue<T>,
    lower: &DVector<T>,
    upper: &DVector<T>,
    shift: T,
    act_tol: f64,
) -> Result<StageSaddle<T>> {
    let [m1, m2] = cv.control_dims;
    let m = m1 + m2;
    let mut zuu = cv.uu();
    for i in 0..m {
        zuu[(i, i)] += if i < m1 { shift } else { -shift };
    }
    let g = cv.u_grad();
    let sign = DVector::from_fn(m, |i, _| if i < m1 { T::one() } else { -T::one() });
    let field = |v: &DVector<T>| (&zuu * v + &g).component_mul(&sign);
    let project = |v: &DVector<T>| DVector::from_fn(m, |i, _| v[i].max_of(lower[i]).min_of(upper[i]));
    let lip = zuu.clone().singular_values().max();
    let eta = if lip > T::zero() { T::one() / lip } else { T::one() };
    let fixed_point = |v: &DVector<T>| (v - project(&(v - field(v) * eta))).amax();

    let mut v = project(&DVector::zeros(m));
    let mut res = fixed_point(&v);
    let tol = lit::<T>(EXTRAGRADIENT_TOL);
    let mut iters = 0;
    while res > tol && iters < EXTRAGRADIENT_MAX_ITERS {
        let y = project(&(&v - field(&v) * eta));
        v = project(&(&v - field(&y) * eta));
        res = fixed_point(&v);
        iters += 1;
    }

    let status = |v: &DVector<T>| -> Vec<BoundStatus> {
        (0..m).map(|i| bound_status(v[i].as_f64(), lower[i].as_f64(), upper[i].as_f64(), act_tol)).collect()
    };
    if let Some(p) = polish(&zuu, &g, &sign, lower, upper, &status(&v)) {
        let pres = fixed_point(&p);
        if pres <= res.max_of(tol) {
            v = p;
            res = pres;
        }
    }
    if !(res <= tol) {
        return Err(GameError::ExtragradientStall { stage: cv.stage, residual: res.as_f64() });
    }

    let st = status(&v);
    let free: Vec<usize> = (0..m).filter(|&i| !st[i].is_active()).collect();
    let masked: Vec<usize> = (0..m).filter(|&i| st[i].is_active()).collect();
    let n = cv.state_dim;
    let mut gain = DMatrix::zeros(m, n);
    let zff = zuu.select_rows(&free).select_columns(&free);
    let cond = condition_number(&zff);
    if !free.is_empty() {
        let rhs = -cv.ux().select_rows(&free);
        let kf = zff.clone().lu().solve(&rhs).ok_or(GameError::SaddleSingular { stage: cv.stage, cond: f64::INFINITY })?;
        for (r, &i) in free.iter().enumerate() {
            gain.row_mut(i).copy_from(&kf.row(r));
        }
    }
    let (min_eig_u1, max_eig_u2) = cv.saddle_eigs();
    Ok(StageSaddle {
        offset: v,
        gain,
        diagnostics: StageDiagnostics { stage: cv.stage, min_eig_u1, max_eig_u2, cond, regularization: shift, masked },
    })
}

/// Solution with active coordinates pinned at their bounds and the rest
/// stationary, if it is feasible and the pinned coordinates' multipliers have
/// the right sign.
fn polish<T: Scalar>(
    zuu: &DMatrix<T>,
    g: &DVector<T>,
    sign: &DVector<T>,
    lower: &DVector<T>,
    upper: &DVector<T>,
    status: &[BoundStatus],
) -> Option<DVector<T>> {
    let m = g.len();
    let mut v = DVector::zeros(m);
    for i in 0..m {
        match status[i] {
            BoundStatus::LowerActive => v[i] = lower[i],
            BoundStatus::UpperActive => v[i] = upper[i],
            BoundStatus::Inactive => {}
        }
    }
    let free: Vec<usize> = (0..m).filter(|&i| !status[i].is_active()).collect();
    if !free.is_empty() {
        let rhs = -(zuu * &v + g).select_rows(&free);
        let vf = zuu.select_rows(&free).select_columns(&free).lu().solve(&rhs)?;
        for (r, &i) in free.iter().enumerate() {
            v[i] = vf[r];
        }
    }
    let f = (zuu * &v + g).component_mul(sign);
    let slack = lit::<T>(1e-12) * (T::one() + v.amax());
    for i in 0..m {
        let ok = match status[i] {
            BoundStatus::Inactive => v[i] >= lower[i] - slack && v[i] <= upper[i] + slack,
            BoundStatus::LowerActive => f[i] >= -slack,
            BoundStatus::UpperActive => f[i] <= slack,
        };
        if !ok || !v[i].is_finite() {
            return None;
        }
    }
    Some(DVector::from_fn(m, |i, _| v[i].max_of(lower[i]).min_of(upper[i])))
}

/// Feedback equilibrium of a box-constrained game by iterated LQ with
/// box-constrained stage saddles and active-set-masked gains.
pub fn solve_constrained_fbne<T: Scalar>(
    game: &GameDefinition<T>,
    initial: Option<&[AffinePolicySet<T>; 2]>,
    opts: &SolveOptions,
) -> Result<ConstrainedFbneSolution<T>> {
    let bounds = require_bounds(game)?;
    let m1 = game.control_dim(Agent::One);
    let m = m1 + game.control_dim(Agent::Two);
    let stage_solver = |traj: &Trajectory<T>, cv: &ControlValue<T>| -> Result<StageSaddle<T>> {
        let t = cv.stage;
        let stack = |f: &dyn Fn(Agent) -> DVector<T>| {
            let (a, b) = (f(Agent::One), f(Agent::Two));
            DVector::from_fn(m, |i, _| if i < m1 { a[i] } else { b[i - m1] })
        };
        let lower = stack(&|a| bounds.lower(a, t) - traj.control(a, t));
        let upper = stack(&|a| bounds.upper(a, t) - traj.control(a, t));
        box_saddle(cv, &lower, &upper, saddle_shift(cv, opts)?, DEFAULT_ACT_TOL)
    };
    let residual = |sds: &[StageDerivatives<T>], term: &TerminalDerivatives<T>, traj: &Trajectory<T>, pol: &[AffinePolicySet<T>; 2]| {
        let mult = attach_bound_multipliers(game, sds, traj, fb_multipliers_from(sds, term, pol), DEFAULT_ACT_TOL)?;
        let rep = fb_report_from(game, sds, term, traj, pol, &mult, opts.residual_tol)?;
        Ok((rep.max_residual, mult))
    };
    let sol = ilq_loop(game, initial, opts, stage_solver, &residual)?;
    let active_set = classify_active_set(game, &sol.trajectory, &sol.multipliers, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL)?;
    Ok(ConstrainedFbneSolution {
        policies: sol.policies,
        trajectory: sol.trajectory,
        multipliers: sol.multipliers,
        log: sol.log,
        diagnostics: sol.diagnostics,
        active_set,
    })
}
