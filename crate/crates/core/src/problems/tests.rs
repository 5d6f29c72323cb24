use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::*;
use crate::constrained::{solve_constrained_fbne, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL};
use crate::derivatives::{evaluate_derivatives, finite_difference_audit};
use crate::error::GameError;
use crate::fbne::solve_fbne_ilq;
use crate::game::{rollout, rollout_policy, stage_costs, Agent, GameDefinition};
use crate::lq::{solve_lq_feedback, solve_lq_openloop};
use crate::newton::SolveOptions;
use crate::olne::{solve_olne, InitialGuess};

fn zero_controls(game: &GameDefinition<f64>) -> [Vec<DVector<f64>>; 2] {
    Agent::BOTH.map(|a| vec![DVector::zeros(game.control_dim(a)); game.horizon()])
}

#[test]
fn scalar_defaults_have_the_hand_saddle() {
    let game = make_scalar_lq::<f64>(&ScalarLqParams::default()).unwrap();
    let sol = solve_olne(&game, &InitialGuess::Zero, &SolveOptions::default()).unwrap();
    assert!((sol.trajectory.control(Agent::One, 1)[0] + 4.0 / 7.0).abs() < 1e-12);
    assert!((sol.trajectory.control(Agent::Two, 1)[0] - 1.0 / 7.0).abs() < 1e-12);
}

#[test]
fn scalar_without_terminal_weight_has_zero_equilibrium() {
    let game = make_scalar_lq::<f64>(&ScalarLqParams { q: 0.0, horizon: 3, ..Default::default() }).unwrap();
    let sol = solve_fbne_ilq(&game, None, &SolveOptions::default()).unwrap();
    for a in Agent::BOTH {
        assert!(sol.trajectory.controls(a).iter().all(|u| u.amax() < 1e-14));
    }
}

#[test]
fn scalar_riccati_and_stacked_solutions_coincide() {
    let p = ScalarLqParams { horizon: 5, ..Default::default() };
    let game = make_scalar_lq::<f64>(&p).unwrap();
    let (stages, terminal) = p.model::<f64>().stages(5);
    let fb = solve_lq_feedback(&stages, &terminal).unwrap();
    let cl = rollout_policy(&game, fb.policy(Agent::One), fb.policy(Agent::Two)).unwrap();
    let ol = solve_lq_openloop(&stages, &terminal, game.initial_state()).unwrap();
    assert!(cl.max_abs_diff(&ol.trajectory) < 1e-8);
}

#[test]
fn pursuit_feedback_and_open_loop_coincide() {
    let game = make_double_integrator_pursuit::<f64>(&DoubleIntegratorParams::default()).unwrap();
    let opts = SolveOptions::default();
    let fb = solve_fbne_ilq(&game, None, &opts).unwrap();
    let ol = solve_olne(&game, &InitialGuess::Zero, &opts).unwrap();
    assert!(fb.trajectory.max_abs_diff(&ol.trajectory) < 1e-8);
    assert!(ol.multipliers.lambda_negation_gap() < 1e-10);
}

#[test]
fn pursuit_without_weights_stays_put() {
    let p = DoubleIntegratorParams { w_stage: 0.0, w_terminal: 0.0, ..Default::default() };
    let game = make_double_integrator_pursuit::<f64>(&p).unwrap();
    let sol = solve_olne(&game, &InitialGuess::Zero, &SolveOptions::default()).unwrap();
    for a in Agent::BOTH {
        assert!(sol.trajectory.controls(a).iter().all(|u| u.amax() < 1e-12));
    }
}

#[test]
fn coincident_unicycles_accumulate_no_cost() {
    let p = UnicycleParams { horizon: 10, x1: vec![1.0, -1.0, 0.3, 1.0, 1.0, -1.0, 0.3, 1.0], ..Default::default() };
    let game = make_unicycle_pursuit::<f64>(&p).unwrap();
    let [u1, u2] = zero_controls(&game);
    let traj = rollout(&game, &u1, &u2).unwrap();
    assert!(stage_costs(&game, &traj).unwrap().iter().all(|c| c.abs() < 1e-15));
}

#[test]
fn unicycles_coast_in_straight_lines() {
    let p = UnicycleParams { horizon: 3, ..Default::default() };
    let game = make_unicycle_pursuit::<f64>(&p).unwrap();
    let [u1, u2] = zero_controls(&game);
    let traj = rollout(&game, &u1, &u2).unwrap();
    // Pursuer heads along +x at speed 1, evader along +y.
    let end = traj.state(4);
    let expected = [0.3, 0.0, 0.0, 1.0, 2.0, 1.3, std::f64::consts::FRAC_PI_2, 1.0];
    for (got, want) in end.iter().zip(expected) {
        assert!((got - want).abs() < 1e-12, "{end}");
    }
}

#[test]
fn unicycle_derivatives_match_finite_differences() {
    let p = UnicycleParams { horizon: 5, ..Default::default() };
    let game = make_unicycle_pursuit::<f64>(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let controls = Agent::BOTH.map(|_| (0..5).map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))).collect::<Vec<_>>());
    let traj = rollout(&game, &controls[0], &controls[1]).unwrap();
    let analytic = evaluate_derivatives(&game, &traj, true).unwrap();
    let report = finite_difference_audit(&game, &traj, &analytic, 1e-5).unwrap();
    assert!(report.pass, "{:?}", report.failing_blocks().collect::<Vec<_>>());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(make_scalar_lq::<f64>(&ScalarLqParams { r1: 0.0, ..Default::default() }).is_err());
    assert!(make_scalar_lq::<f64>(&ScalarLqParams { horizon: 0, ..Default::default() }).is_err());
    assert!(make_unicycle_pursuit::<f64>(&UnicycleParams { dt: 0.0, ..Default::default() }).is_err());
    assert!(make_double_integrator_pursuit::<f64>(&DoubleIntegratorParams { x1: vec![0.0; 3], ..Default::default() }).is_err());
}

#[test]
fn problems_are_addressable_by_name() {
    for name in PROBLEM_NAMES {
        let spec = make_problem::<f64>(name, &serde_json::Value::Null).unwrap();
        assert_eq!(spec.name, name);
        assert!(spec.params.is_object());
    }
    let spec = make_problem::<f64>("scalar_lq", &json!({"horizon": 3})).unwrap();
    assert_eq!(spec.game.horizon(), 3);
    assert_eq!(spec.params["horizon"], json!(3));
    assert!(matches!(make_problem::<f64>("nope", &json!({})), Err(GameError::Configuration(_)) | Err(GameError::Input(_))));
    assert!(make_problem::<f64>("scalar_lq", &json!({"horzion": 3})).is_err());
}

#[test]
fn bounded_default_reproduces_the_clipped_saddle() {
    let game = make_bounded_lq::<f64>(&BoundedLqParams::default()).unwrap();
    let sol = solve_constrained_fbne(&game, None, &SolveOptions::default()).unwrap();
    assert!((sol.trajectory.control(Agent::One, 1)[0] + 9.0 / 16.0).abs() < 1e-8);
    assert!((sol.trajectory.control(Agent::Two, 1)[0] - 1.0 / 8.0).abs() < 1e-8);
    assert!((sol.multipliers.nu_upper(Agent::Two, 1).unwrap()[0] - 1.0 / 8.0).abs() < 1e-8);
    assert_eq!(sol.active_set.active_count(), 1);
    assert!(sol.active_set.strict_complementarity);
}

#[test]
fn bounded_rejects_bounds_that_never_bind() {
    let p = BoundedLqParams { u1_lower: -1e6, u1_upper: 1e6, u2_lower: -1e6, u2_upper: 1e6, ..Default::default() };
    assert!(matches!(make_bounded_lq::<f64>(&p), Err(GameError::Construction(_))));
}

#[test]
fn bounded_two_stage_variant_binds() {
    let p = BoundedLqParams { base_params: json!({"horizon": 2}), u2_upper: 0.0625, ..Default::default() };
    let game = make_bounded_lq::<f64>(&p).unwrap();
    let sol = solve_constrained_fbne(&game, None, &SolveOptions::default()).unwrap();
    let classes = crate::constrained::classify_active_set(&game, &sol.trajectory, &sol.multipliers, DEFAULT_ACT_TOL, DEFAULT_STRICT_TOL).unwrap();
    assert!(classes.active_count() >= 1 && classes.strict_complementarity);
    let unconstrained = solve_fbne_ilq(&game.clone().without_bounds(), None, &SolveOptions::default()).unwrap();
    assert!(unconstrained.trajectory.control(Agent::Two, 1)[0] > 0.0625);
    assert!((sol.trajectory.control(Agent::Two, 1)[0] - 0.0625).abs() < 1e-10);
}
