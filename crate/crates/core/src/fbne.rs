//! Feedback Nash equilibria by iterated LQ approximation.

use nalgebra::{DMatrix, DVector};

use crate::derivatives::{evaluate_derivatives, StageDerivatives, TerminalDerivatives};
use crate::error::{input_err, GameError, Result};
use crate::game::{rollout_policy, Agent, GameDefinition, Trajectory};
use crate::lq::{backward_pass, unconstrained_saddle, ControlValue, LqStage, StageDiagnostics, StageSaddle, ValueQuadratic};
use crate::multipliers::MultiplierSet;
use crate::newton::{IterationRecord, SolveLog, SolveOptions, Termination};
use crate::policy::{AffinePolicy, AffinePolicySet};
use crate::scalar::{lit, Scalar};
use crate::verify::first_order::{fb_multipliers_from, fb_report_from};

/// Smallest step of the best-response line search is `2^-MAX_HALVINGS`.
const MAX_HALVINGS: i32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct FbneSolution<T: Scalar> {
    /// Policies anchored at the returned trajectory.
    pub policies: [AffinePolicySet<T>; 2],
    pub trajectory: Trajectory<T>,
    /// Feedback multipliers recovered at the returned point.
    pub multipliers: MultiplierSet<T>,
    pub log: SolveLog,
    /// Stage saddle diagnostics of the last LQ approximation.
    pub diagnostics: Vec<StageDiagnostics<T>>,
}

/// Solves the stage saddle after shifting `Z_{u¹u¹}` up and `Z_{u²u²}` down
/// until their definiteness signs are right. The shift starts at
/// `1e-6 (1 + ‖Z_uu‖)` and doubles; exceeding `opts.regularization_max` is
/// reported as a singular saddle.
pub fn regularized_saddle<T: Scalar>(cv: &ControlValue<T>, opts: &SolveOptions) -> Result<StageSaddle<T>> {
    unconstrained_saddle(cv, opts.cond_max, saddle_shift(cv, opts)?)
}

/// Smallest doubling of `10⁻⁶(1 + ‖Z_uu‖_max)` that makes `Z_{u¹u¹} + ρI`
/// positive and `Z_{u²u²} − ρI` negative definite; zero when no shift is needed.
pub(crate) fn saddle_shift<T: Scalar>(cv: &ControlValue<T>, opts: &SolveOptions) -> Result<T> {
    let (e1, e2) = cv.saddle_eigs();
    let mut shift = T::zero();
    if !(e1 > T::zero() && e2 < T::zero()) {
        shift = lit::<T>(1e-6) * (T::one() + cv.uu().amax());
        while !(e1 + shift > T::zero() && e2 - shift < T::zero()) {
            shift += shift;
            if shift.as_f64() > opts.regularization_max {
                return Err(GameError::SaddleSingular { stage: cv.stage, cond: f64::INFINITY });
            }
        }
    }
    Ok(shift)
}

/// Quadratic-model best-response gains of both agents for the step `α k`.
///
/// Agent one's value compares its candidate move against standing still while
/// agent two plays its candidate move, and symmetrically for agent two.
fn model_gains<T: Scalar>(cv: &ControlValue<T>, shift: T, offset: &DVector<T>, alpha: T) -> (T, T) {
    let m1 = cv.control_dims[0];
    let m2 = cv.control_dims[1];
    let zuu = cv.uu();
    let zu = cv.u_grad();
    let (k1, k2) = (offset.rows(0, m1), offset.rows(m1, m2));
    let z11 = zuu.view((0, 0), (m1, m1)).into_owned() + DMatrix::identity(m1, m1) * shift;
    let z22 = zuu.view((m1, m1), (m2, m2)).into_owned() - DMatrix::identity(m2, m2) * shift;
    let z12 = zuu.view((0, m1), (m1, m2));
    let cross = (z12 * k2).dot(&k1) * alpha * alpha;
    let half = lit::<T>(0.5);
    let q1 = zu.rows(0, m1).dot(&k1) * alpha + (&z11 * k1).dot(&k1) * half * alpha * alpha + cross;
    let q2 = zu.rows(m1, m2).dot(&k2) * alpha + (&z22 * k2).dot(&k2) * half * alpha * alpha + cross;
    (q1, q2)
}

fn deviation_model<T: Scalar>(sds: &[StageDerivatives<T>], term: &TerminalDerivatives<T>) -> (Vec<LqStage<T>>, ValueQuadratic<T>) {
    let stages = sds
        .iter()
        .map(|sd| LqStage {
            a: sd.a.clone(),
            b1: sd.b1.clone(),
            b2: sd.b2.clone(),
            c: DVector::zeros(sd.state_dim),
            h: sd.cost_hess.clone(),
            g: sd.cost_grad.clone(),
            offset: T::zero(),
        })
        .collect();
    (stages, ValueQuadratic::new(term.hess.clone(), term.grad.clone(), T::zero()))
}

fn candidate<T: Scalar>(traj: &Trajectory<T>, agent: Agent, gains: &[DMatrix<T>], offsets: &[DVector<T>], alpha: T) -> AffinePolicySet<T> {
    let stages = (1..=traj.horizon())
        .map(|t| AffinePolicy {
            gain: gains[t - 1].clone(),
            u_ref: traj.control(agent, t) + &offsets[t - 1] * alpha,
            x_ref: traj.state(t).clone(),
        })
        .collect();
    AffinePolicySet::new(agent, stages).expect("shapes follow the trajectory")
}

/// Residual evaluator of the iteration: returns the first-order residual and
/// the multipliers at a trajectory with policies anchored there.
pub(crate) type ResidualFn<'a, T> = dyn Fn(&[StageDerivatives<T>], &TerminalDerivatives<T>, &Trajectory<T>, &[AffinePolicySet<T>; 2]) -> Result<(f64, MultiplierSet<T>)> + 'a;

/// The iterated-LQ loop shared by the unconstrained and box-constrained solvers.
pub(crate) fn ilq_loop<T, S>(
    game: &GameDefinition<T>,
    initial: Option<&[AffinePolicySet<T>; 2]>,
    opts: &SolveOptions,
    mut stage_solver: S,
    residual: &ResidualFn<'_, T>,
) -> Result<FbneSolution<T>>
where
    T: Scalar,
    S: FnMut(&Trajectory<T>, &ControlValue<T>) -> Result<StageSaddle<T>>,
{
    opts.validate()?;
    let (k, n) = (game.horizon(), game.state_dim());
    let init = match initial {
        Some(p) => {
            for a in Agent::BOTH {
                p[a.index()].check_dims(game, a)?;
            }
            p.clone()
        }
        None => Agent::BOTH.map(|a| AffinePolicySet::zeros(a, k, game.control_dim(a), n)),
    };
    let mut traj = rollout_policy(game, &init[0], &init[1])?;
    let mut log = SolveLog::default();
    let tol = lit::<T>(opts.residual_tol);

    for iteration in 1..=opts.max_iters + 1 {
        let (sds, term) = evaluate_derivatives(game, &traj, false)?;
        let (stages, terminal) = deviation_model(&sds, &term);
        let mut values: Vec<ControlValue<T>> = Vec::with_capacity(k);
        let lq = backward_pass(&stages, &terminal, |cv| {
            values.push(cv.clone());
            stage_solver(&traj, cv)
        })?;
        values.reverse();

        let gains: [Vec<DMatrix<T>>; 2] = Agent::BOTH.map(|a| (1..=k).map(|t| lq.policies[a.index()].gain(t).clone()).collect());
        let offsets: [Vec<DVector<T>>; 2] = Agent::BOTH.map(|a| (1..=k).map(|t| lq.policies[a.index()].stage(t).u_ref.clone()).collect());
        let anchored = Agent::BOTH.map(|a| AffinePolicySet::anchored(a, &traj, gains[a.index()].clone()).expect("one gain per stage"));
        let (res, mult) = residual(&sds, &term, &traj, &anchored)?;
        log.final_residual = res;
        if res <= opts.residual_tol {
            log.termination = Termination::Converged;
            return Ok(FbneSolution { policies: anchored, trajectory: traj, multipliers: mult, log, diagnostics: lq.diagnostics });
        }
        if iteration > opts.max_iters {
            break;
        }

        let stacked: Vec<DVector<T>> = (0..k)
            .map(|i| {
                let mut v = DVector::zeros(offsets[0][i].len() + offsets[1][i].len());
                v.rows_mut(0, offsets[0][i].len()).copy_from(&offsets[0][i]);
                v.rows_mut(offsets[0][i].len(), offsets[1][i].len()).copy_from(&offsets[1][i]);
                v
            })
            .collect();
        let step_max = stacked.iter().fold(T::zero(), |w, v| w.max_of(v.amax()));
        let mut accepted = None;
        let mut trials = 0;
        for j in 0..=MAX_HALVINGS {
            let alpha = lit::<T>(0.5f64.powi(j));
            trials += 1;
            let (q1, q2) = (0..k).fold((T::zero(), T::zero()), |(a1, a2), i| {
                let (q1, q2) = model_gains(&values[i], lq.diagnostics[i].regularization, &stacked[i], alpha);
                (a1 + q1, a2 + q2)
            });
            if !(q1 <= tol && q2 >= -tol) {
                continue;
            }
            let cand = Agent::BOTH.map(|a| candidate(&traj, a, &gains[a.index()], &offsets[a.index()], alpha));
            if let Ok(tr) = rollout_policy(game, &cand[0], &cand[1]) {
                accepted = Some((alpha, tr, false));
                break;
            }
        }
        let (alpha, next, flagged) = match accepted {
            Some(a) => a,
            None => {
                let alpha = lit::<T>(0.5f64.powi(MAX_HALVINGS));
                let cand = Agent::BOTH.map(|a| candidate(&traj, a, &gains[a.index()], &offsets[a.index()], alpha));
                let tr = rollout_policy(game, &cand[0], &cand[1])
                    .map_err(|_| GameError::LineSearchStall { iteration, residual: res })?;
                (alpha, tr, true)
            }
        };
        let step_norm = (alpha * step_max).as_f64();
        log.iterations.push(IterationRecord {
            iteration,
            residual: res,
            step_norm,
            step_length: alpha.as_f64(),
            regularization: lq.diagnostics.iter().fold(0.0, |w, d| w.max(d.regularization.as_f64())),
            line_search_trials: trials,
            flagged,
            smoothing: None,
        });
        traj = next;
        if step_norm < opts.step_tol {
            let (sds, term) = evaluate_derivatives(game, &traj, false)?;
            let anchored = Agent::BOTH.map(|a| AffinePolicySet::anchored(a, &traj, gains[a.index()].clone()).expect("one gain per stage"));
            let (res, mult) = residual(&sds, &term, &traj, &anchored)?;
            log.final_residual = res;
            log.termination = if res <= opts.residual_tol { Termination::Converged } else { Termination::StepTolerance };
            return Ok(FbneSolution { policies: anchored, trajectory: traj, multipliers: mult, log, diagnostics: lq.diagnostics });
        }
    }
    log.termination = Termination::MaxIters;
    Err(GameError::MaxIters { residual: log.final_residual })
}

/// Local feedback Nash equilibrium by iterated LQ approximation.
///
/// Each iteration rolls out the current policies, solves the LQ game of the
/// deviations, and backtracks on the feedforward step until both agents'
/// quadratic-model best-response inequalities hold. Convergence is declared
/// on the feedback first-order residual.
pub fn solve_fbne_ilq<T: Scalar>(
    game: &GameDefinition<T>,
    initial: Option<&[AffinePolicySet<T>; 2]>,
    opts: &SolveOptions,
) -> Result<FbneSolution<T>> {
    if game.bounds().is_some() {
        return Err(GameError::Configuration("game has control bounds; use the constrained solver".into()));
    }
    let residual = |sds: &[StageDerivatives<T>], term: &TerminalDerivatives<T>, traj: &Trajectory<T>, pol: &[AffinePolicySet<T>; 2]| {
        let mult = fb_multipliers_from(sds, term, pol);
        let rep = fb_report_from(game, sds, term, traj, pol, &mult, opts.residual_tol)?;
        Ok((rep.max_residual, mult))
    };
    ilq_loop(game, initial, opts, |_, cv| regularized_saddle(cv, opts), &residual)
}

/// Checks that every policy set covers the game's horizon.
pub fn check_policies<T: Scalar>(game: &GameDefinition<T>, policies: &[AffinePolicySet<T>; 2]) -> Result<()> {
    for a in Agent::BOTH {
        if policies[a.index()].agent != a {
            return Err(input_err(format!("policy set {} belongs to agent {}", a.index() + 1, policies[a.index()].agent)));
        }
        policies[a.index()].check_dims(game, a)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::CallbackModel;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn sg1() -> GameDefinition<f64> {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| x + u1 + u2,
            |_, _: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| u1[0] * u1[0] - 4.0 * u2[0] * u2[0],
            |x: &DVector<f64>| x[0] * x[0],
        );
        GameDefinition::new(1, 1, [1, 1], v(&[1.0]), Arc::new(model)).unwrap()
    }

    #[test]
    fn one_stage_game_takes_a_single_lq_step() {
        let sol = solve_fbne_ilq(&sg1(), None, &SolveOptions::default()).unwrap();
        // Derivatives come from finite differences here.
        assert!((sol.trajectory.control(Agent::One, 1)[0] + 4.0 / 7.0).abs() < 1e-8);
        assert!((sol.trajectory.control(Agent::Two, 1)[0] - 1.0 / 7.0).abs() < 1e-8);
        assert_eq!(sol.log.iteration_count(), 1);
        assert_eq!(sol.log.iterations[0].step_length, 1.0);
        assert!((sol.multipliers.lambda(Agent::One, 1)[0] - 8.0 / 7.0).abs() < 1e-8);
        assert!(!sol.multipliers.has_psi() || sol.multipliers.psi_max() == 0.0);
    }

    #[test]
    fn wrong_curvature_is_shifted() {
        // Z_uu = [[-1, 0], [0, 1]] has both signs wrong.
        let cv = ControlValue {
            stage: 3,
            state_dim: 1,
            control_dims: [1, 1],
            hess: DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0]),
            grad: v(&[0.0, 1.0, 1.0]),
            constant: 0.0,
        };
        let s = regularized_saddle(&cv, &SolveOptions::default()).unwrap();
        assert!(s.diagnostics.regularization > 1.0 && s.diagnostics.regularization < 2.0 + 1e-3);
        let capped = SolveOptions { regularization_max: 0.5, ..Default::default() };
        assert!(matches!(regularized_saddle(&cv, &capped), Err(GameError::SaddleSingular { stage: 3, .. })));
    }

    #[test]
    fn model_gains_pass_at_full_step_for_exact_saddle() {
        let cv = ControlValue {
            stage: 1,
            state_dim: 1,
            control_dims: [1, 1],
            hess: DMatrix::from_row_slice(3, 3, &[2.0, 2.0, 2.0, 2.0, 4.0, 2.0, 2.0, 2.0, -6.0]),
            grad: v(&[2.0, 2.0, 2.0]),
            constant: 0.0,
        };
        let s = unconstrained_saddle(&cv, 1e12, 0.0).unwrap();
        let (q1, q2) = model_gains(&cv, 0.0, &s.offset, 1.0);
        // Full-step values are −½ kᵢᵀZᵢᵢkᵢ.
        assert!((q1 + 0.5 * 4.0 * 16.0 / 49.0).abs() < 1e-12);
        assert!((q2 - 0.5 * 6.0 / 49.0).abs() < 1e-12);
    }
}
