use nalgebra::{DMatrix, DVector};

use super::active_set::{classify_active_set, ActiveSetClassification, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL};
use super::recover::require_bounds;
use crate::error::{GameError, Result};
use crate::game::{rollout, Agent, GameDefinition};
use crate::kkt::{self, KktIterate, KktLayout};
use crate::multipliers::MultiplierSet;
use crate::newton::{damped_newton, newton_step, Check, SolveLog, SolveOptions};
use crate::olne::{costate_recursion, InitialGuess};
use crate::scalar::{lit, Scalar};

/// Smoothing levels `10⁻², 10⁻³, …, 10⁻¹²`, followed by the unsmoothed system.
pub const SMOOTHING_SCHEDULE: [f64; 12] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12, 0.0];

const POLISH_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedOlneSolution<T: Scalar> {
    pub trajectory: crate::game::Trajectory<T>,
    /// Costates and bound multipliers, the latter clipped at zero.
    pub multipliers: MultiplierSet<T>,
    pub log: SolveLog,
    /// Largest magnitude removed from a negative bound multiplier by clipping.
    pub nu_clip: f64,
    pub active_set: ActiveSetClassification,
}

/// Open-loop equilibrium of a box-constrained game by semismooth Newton on the
/// Fischer–Burmeister reformulation, with continuation in the smoothing `μ`.
pub fn solve_constrained_olne<T: Scalar>(
    game: &GameDefinition<T>,
    guess: &InitialGuess<T>,
    opts: &SolveOptions,
) -> Result<ConstrainedOlneSolution<T>> {
    opts.validate()?;
    let bounds = require_bounds(game)?;
    let k = game.horizon();
    let traj0 = guess.rollout(game)?;
    let projected = Agent::BOTH.map(|a| (1..=k).map(|t| bounds.project(a, t, traj0.control(a, t))).collect::<Vec<_>>());
    let traj0 = rollout(game, &projected[0], &projected[1])?;
    let zeros = Agent::BOTH.map(|a| vec![DVector::zeros(game.control_dim(a)); k]);
    let mult0 = costate_recursion(game, &traj0)?.with_bound_multipliers(zeros.clone(), zeros)?;
    let layout = KktLayout::new(game, true);
    let base = KktIterate::from_parts(&traj0, &mult0);
    let curvature = opts.include_dynamics_curvature;
    let tol = opts.residual_tol;

    let mut z = base.pack(&layout);
    let mut log = SolveLog::default();
    for &mu_f in &SMOOTHING_SCHEDULE {
        let mu = lit::<T>(mu_f);
        let residual = |z: &DVector<T>| -> Result<DVector<T>> {
            let it = base.unpack(&layout, z);
            let (evals, term) = kkt::evaluate(game, &it, false)?;
            Ok(kkt::residual(&layout, &it, &evals, &term, Some(bounds), mu))
        };
        let jacobian = |z: &DVector<T>| -> Result<DMatrix<T>> {
            let it = base.unpack(&layout, z);
            let (evals, term) = kkt::evaluate(game, &it, curvature)?;
            kkt::jacobian(&layout, &it, &evals, &term, curvature, Some(bounds), mu)
        };
        let last = mu_f == 0.0;
        let converged = |z: &DVector<T>, r: &DVector<T>| -> Result<Check<T>> {
            if !last {
                return Ok(if r.amax().as_f64() <= tol.max(mu_f) { Check::Done(z.clone()) } else { Check::Continue });
            }
            if r.amax().as_f64() > tol {
                return Ok(Check::Continue);
            }
            let it = base.unpack(&layout, z);
            let tr = rollout(game, &it.u[0], &it.u[1])?;
            let mut it2 = it.clone();
            it2.states = tr.states().to_vec();
            let (evals, term) = kkt::evaluate(game, &it2, false)?;
            let r2 = kkt::residual(&layout, &it2, &evals, &term, Some(bounds), T::zero());
            Ok(if r2.amax().as_f64() <= tol { Check::Done(it2.pack(&layout)) } else { Check::Continue })
        };
        match damped_newton(z.clone(), residual, jacobian, converged, opts, Some(mu_f), &mut log) {
            Ok(zn) => z = zn,
            Err(e) if last => {
                return Err(match e {
                    GameError::MaxIters { residual } | GameError::LineSearchStall { residual, .. } => GameError::ComplementarityStall { residual },
                    other => other,
                })
            }
            // A failed intermediate level keeps the previous iterate.
            Err(_) => {}
        }
    }
    if log.final_residual > tol {
        return Err(GameError::ComplementarityStall { residual: log.final_residual });
    }

    let z = polish(game, &layout, &base, z, curvature)?;
    let it = base.unpack(&layout, &z);
    let nu = it.nu.as_ref().expect("bounded iterate");
    let most_negative = nu.iter().flatten().flatten().fold(T::zero(), |w, v| w.min_of(v.min()));
    let nu_clip = -most_negative.as_f64();
    if nu_clip > tol {
        return Err(GameError::ComplementarityStall { residual: nu_clip });
    }
    let trajectory = rollout(game, &it.u[0], &it.u[1])?;
    let multipliers = it.multipliers();
    let active_set = classify_active_set(game, &trajectory, &multipliers, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL)?;
    Ok(ConstrainedOlneSolution { trajectory, multipliers, log, nu_clip, active_set })
}

/// Rolls the iterate's controls out so the states satisfy the dynamics and
/// returns the repacked point with its unsmoothed residual.
fn rolled<T: Scalar>(game: &GameDefinition<T>, layout: &KktLayout, base: &KktIterate<T>, z: &DVector<T>) -> Result<(DVector<T>, DVector<T>)> {
    let mut it = base.unpack(layout, z);
    it.states = rollout(game, &it.u[0], &it.u[1])?.states().to_vec();
    let (evals, term) = kkt::evaluate(game, &it, false)?;
    let r = kkt::residual(layout, &it, &evals, &term, game.bounds(), T::zero());
    Ok((it.pack(layout), r))
}

/// Full semismooth Newton steps on the unsmoothed system while they reduce
/// the residual; the continuation stops as soon as the tolerance is met.
fn polish<T: Scalar>(game: &GameDefinition<T>, layout: &KktLayout, base: &KktIterate<T>, z: DVector<T>, curvature: bool) -> Result<DVector<T>> {
    let (mut z, mut r) = rolled(game, layout, base, &z)?;
    for _ in 0..POLISH_STEPS {
        let it = base.unpack(layout, &z);
        let (evals, term) = kkt::evaluate(game, &it, curvature)?;
        let j = kkt::jacobian(layout, &it, &evals, &term, curvature, game.bounds(), T::zero())?;
        let Some(step) = newton_step(&j, &r, T::zero()) else { break };
        let (zc, rc) = rolled(game, layout, base, &(&z + step))?;
        if !(rc.amax() < r.amax()) {
            break;
        }
        z = zc;
        r = rc;
    }
    Ok(z)
}
