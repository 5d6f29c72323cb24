use nalgebra::DVector;

use super::*;
use crate::error::GameError;
use crate::fbne::solve_fbne_ilq;
use crate::game::{rollout, Agent, ControlBounds, GameDefinition};
use crate::newton::SolveOptions;
use crate::olne::{solve_olne, InitialGuess};
use crate::problems::{make_bounded_lq, make_double_integrator_pursuit, make_scalar_lq, BoundedLqParams, DoubleIntegratorParams, ScalarLqParams};
use crate::verify::AuditTolerances;

fn v(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn boxed(game: GameDefinition<f64>, lo: [f64; 2], hi: [f64; 2]) -> GameDefinition<f64> {
    let k = game.horizon();
    let [m1, m2] = game.control_dims();
    let lower = [DVector::from_element(m1, lo[0]), DVector::from_element(m2, lo[1])];
    let upper = [DVector::from_element(m1, hi[0]), DVector::from_element(m2, hi[1])];
    game.with_bounds(ControlBounds::uniform(k, lower, upper)).unwrap()
}

fn scalar(k: usize) -> GameDefinition<f64> {
    make_scalar_lq(&ScalarLqParams { horizon: k, ..Default::default() }).unwrap()
}

#[test]
fn open_loop_solver_reproduces_the_clipped_saddle() {
    let game = make_bounded_lq::<f64>(&BoundedLqParams::default()).unwrap();
    let sol = solve_constrained_olne(&game, &InitialGuess::Zero, &SolveOptions::default()).unwrap();
    assert!((sol.trajectory.control(Agent::One, 1)[0] + 9.0 / 16.0).abs() < 1e-8);
    assert!((sol.trajectory.control(Agent::Two, 1)[0] - 1.0 / 8.0).abs() < 1e-8);
    assert!((sol.multipliers.nu_upper(Agent::Two, 1).unwrap()[0] - 1.0 / 8.0).abs() < 1e-8);
    assert!(sol.multipliers.nu_lower(Agent::One, 1).unwrap()[0].abs() < 1e-12);
    assert!(sol.nu_clip < 1e-8);
    assert!(sol.log.converged());
}

#[test]
fn inactive_bounds_reduce_to_the_unconstrained_solvers() {
    let opts = SolveOptions::default();
    let games = [scalar(3), make_double_integrator_pursuit(&DoubleIntegratorParams { horizon: 5, ..Default::default() }).unwrap()];
    for game in games {
        let bounded = boxed(game.clone(), [-1e6; 2], [1e6; 2]);
        let fb = solve_fbne_ilq(&game, None, &opts).unwrap();
        let cfb = solve_constrained_fbne(&bounded, None, &opts).unwrap();
        assert!(fb.trajectory.max_abs_diff(&cfb.trajectory) < 1e-8);
        assert_eq!(cfb.active_set.active_count(), 0);
        let ol = solve_olne(&game, &InitialGuess::Zero, &opts).unwrap();
        let col = solve_constrained_olne(&bounded, &InitialGuess::Zero, &opts).unwrap();
        assert!(ol.trajectory.max_abs_diff(&col.trajectory) < 1e-8);
        assert_eq!(col.active_set.active_count(), 0);
    }
}

#[test]
fn active_rows_of_the_gains_are_masked() {
    let game = boxed(scalar(3), [-10.0, -10.0], [10.0, 0.05]);
    let sol = solve_constrained_fbne(&game, None, &SolveOptions::default()).unwrap();
    assert!(sol.active_set.active_count() >= 1);
    for c in sol.active_set.active() {
        let row = match c.agent {
            Agent::One => c.index,
            Agent::Two => game.control_dim(Agent::One) + c.index,
        };
        assert!(sol.diagnostics[c.stage - 1].masked.contains(&row));
        assert!(sol.policies[c.agent.index()].gain(c.stage).row(c.index).amax() == 0.0);
    }
    for d in &sol.diagnostics {
        for &row in &d.masked {
            let (agent, index) = if row < 1 { (Agent::One, row) } else { (Agent::Two, row - 1) };
            assert!(sol.active_set.status(d.stage, agent, index).unwrap().is_active());
        }
    }
}

#[test]
fn two_stage_relations_hold_on_both_sides() {
    let game = boxed(scalar(2), [-0.35, -10.0], [10.0, 0.08]);
    let opts = SolveOptions::default();
    let tol = AuditTolerances::default();
    let fb = solve_constrained_fbne(&game, None, &opts).unwrap();
    let verdict = theorem2_audit(&game, EquilibriumSide::Feedback { trajectory: &fb.trajectory, policies: &fb.policies }, &tol).unwrap();
    assert_eq!(verdict.classification, Theorem2Class::Pass, "{verdict:#?}");
    assert!(verdict.psi_nu_identity.unwrap() < 1e-6 && verdict.annihilation.unwrap() < 1e-6);
    assert!(verdict.ol_residual.unwrap() < 1e-6 && verdict.embedding_residual.unwrap() < 1e-6);

    let ol = solve_constrained_olne(&game, &InitialGuess::Zero, &opts).unwrap();
    assert!(ol.trajectory.max_abs_diff(&fb.trajectory) < 1e-8);
    let side = EquilibriumSide::OpenLoop { trajectory: &ol.trajectory, multipliers: Some(&ol.multipliers) };
    let verdict = theorem2_audit(&game, side, &tol).unwrap();
    assert_eq!(verdict.classification, Theorem2Class::Pass, "{verdict:#?}");
    assert!(verdict.psi_nu_identity.is_none());
}

#[test]
fn weakly_active_bound_is_not_applicable() {
    // The bound sits exactly at the unconstrained saddle, so its multiplier vanishes.
    let game = boxed(scalar(1), [-10.0, -10.0], [10.0, 1.0 / 7.0]);
    let sol = solve_constrained_fbne(&game, None, &SolveOptions::default()).unwrap();
    assert!(!sol.active_set.strict_complementarity);
    let side = EquilibriumSide::Feedback { trajectory: &sol.trajectory, policies: &sol.policies };
    let verdict = theorem2_audit(&game, side, &AuditTolerances::default()).unwrap();
    assert_eq!(verdict.classification, Theorem2Class::NotApplicable);
}

#[test]
fn sign_violating_bound_multiplier_is_reported_not_hidden() {
    let game = make_bounded_lq::<f64>(&BoundedLqParams::default()).unwrap();
    let traj = rollout(&game, &[v(-9.0 / 16.0)], &[v(1.0 / 8.0)]).unwrap();
    assert!(constrained_ol_report(&game, &traj, None, 1e-10).unwrap().pass);

    // Pin u² to an upper bound of 1/4, above the free saddle value, and let
    // agent one best-respond: its row vanishes while agent two's asks for
    // ν̄² = 1 − 7·(1/4) < 0.
    let game = boxed(scalar(1), [-10.0, -10.0], [10.0, 0.25]);
    let traj = rollout(&game, &[v(-0.625)], &[v(0.25)]).unwrap();
    let mult = recover_constrained_multipliers(&game, &traj, None, DEFAULT_ACT_TOL).unwrap();
    assert_eq!(mult.nu_upper(Agent::Two, 1).unwrap()[0], 0.0);
    let report = constrained_ol_report(&game, &traj, Some(&mult), 1e-10).unwrap();
    assert!((report.per_stage[0].own_control_stationarity - 0.75).abs() < 1e-12, "{report:#?}");
    assert!(!report.pass);
    let classes = classify_active_set(&game, &traj, &mult, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL).unwrap();
    assert_eq!(classes.status(1, Agent::Two, 0), Some(BoundStatus::UpperActive));
    assert!(!classes.strict_complementarity);
}

#[test]
fn coinciding_bounds_are_rejected() {
    let game = boxed(scalar(1), [-10.0, 0.1], [10.0, 0.1]);
    let traj = rollout(&game, &[v(-0.5)], &[v(0.1)]).unwrap();
    let err = recover_constrained_multipliers(&game, &traj, None, DEFAULT_ACT_TOL).unwrap_err();
    assert!(matches!(err, GameError::DegenerateBound { stage: 1, agent: Agent::Two, coord: 0 }), "{err}");
}

#[test]
fn unbounded_games_are_refused() {
    let game = scalar(1);
    assert!(solve_constrained_fbne(&game, None, &SolveOptions::default()).is_err());
    assert!(solve_constrained_olne(&game, &InitialGuess::Zero, &SolveOptions::default()).is_err());
}
