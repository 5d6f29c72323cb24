use nalgebra::{DMatrix, DVector};

use super::*;
use crate::fbne::solve_fbne_ilq;
use crate::game::{rollout, Agent, GameDefinition};
use crate::lq::{LqStage, ValueQuadratic};
use crate::newton::SolveOptions;
use crate::olne::recover_ol_costates;
use crate::policy::AffinePolicySet;
use crate::problems::{make_scalar_lq, LqGameModel, ScalarLqParams};
use std::sync::Arc;

fn v(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn sg1() -> GameDefinition<f64> {
    make_scalar_lq(&ScalarLqParams::default()).unwrap()
}

fn sg1_saddle(game: &GameDefinition<f64>) -> crate::game::Trajectory<f64> {
    rollout(game, &[v(-4.0 / 7.0)], &[v(1.0 / 7.0)]).unwrap()
}

#[test]
fn sg1_open_loop_cone_is_the_unit_impulse() {
    let game = sg1();
    let traj = sg1_saddle(&game);
    let cone = build_critical_cone(&game, &traj, Structure::OpenLoop, Agent::One, None, None, &ConeOptions::default()).unwrap();
    assert_eq!(cone.dim(), 1);
    // Layout (d_u1, d_u2, d_x2).
    assert_eq!(cone.basis.column(0).as_slice(), &[1.0, 0.0, 1.0]);
    assert!(cone.constraint_residual < 1e-14);
}

#[test]
fn sg1_projected_hessians_are_four_and_six() {
    let game = sg1();
    let traj = sg1_saddle(&game);
    let mult = recover_ol_costates(&game, &traj).unwrap();
    let expected = [4.0, 6.0];
    for a in Agent::BOTH {
        let cone = build_critical_cone(&game, &traj, Structure::OpenLoop, a, None, None, &ConeOptions::default()).unwrap();
        let rep = second_order_report(&game, &traj, &mult, &cone, a, 1e-8, false).unwrap();
        assert!((rep.min_eig - expected[a.index()]).abs() < 1e-12, "agent {a}: {}", rep.min_eig);
        assert_eq!(rep.classification, SecondOrderClass::Sufficient);
    }
}

#[test]
fn indefinite_terminal_cost_fails_the_second_order_test() {
    // Stage cost u1² − 4u2², terminal −3x².
    let stage = LqStage {
        a: DMatrix::from_element(1, 1, 1.0),
        b1: DMatrix::from_element(1, 1, 1.0),
        b2: DMatrix::from_element(1, 1, 1.0),
        c: DVector::zeros(1),
        h: DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, -8.0])),
        g: DVector::zeros(3),
        offset: 0.0,
    };
    let terminal = ValueQuadratic::new(DMatrix::from_element(1, 1, -6.0), DVector::zeros(1), 0.0);
    let game = GameDefinition::new(1, 1, [1, 1], v(1.0), Arc::new(LqGameModel { stage, terminal })).unwrap();
    let traj = rollout(&game, &[v(0.3)], &[v(-0.2)]).unwrap();
    let mult = recover_ol_costates(&game, &traj).unwrap();
    let cone = build_critical_cone(&game, &traj, Structure::OpenLoop, Agent::One, None, None, &ConeOptions::default()).unwrap();
    let rep = second_order_report(&game, &traj, &mult, &cone, Agent::One, 1e-8, false).unwrap();
    assert!((rep.min_eig + 4.0).abs() < 1e-12);
    assert_eq!(rep.classification, SecondOrderClass::Fails);
}

#[test]
fn zero_gain_feedback_report_matches_open_loop_report() {
    let game = make_scalar_lq::<f64>(&ScalarLqParams { horizon: 3, ..Default::default() }).unwrap();
    let traj = rollout(&game, &[v(0.3), v(-0.1), v(0.2)], &[v(0.05), v(0.4), v(-0.3)]).unwrap();
    let mult = recover_ol_costates(&game, &traj).unwrap();
    let zero = Agent::BOTH.map(|a| AffinePolicySet::anchored(a, &traj, vec![DMatrix::zeros(1, 1); 3]).unwrap());
    let ol = ol_first_order_report(&game, &traj, Some(&mult), 1e-8).unwrap();
    let fb = fb_first_order_report(&game, &traj, &zero, Some(&mult), 1e-8).unwrap();
    for ((name, a), (_, b)) in ol.shared_families().iter().zip(fb.shared_families().iter()) {
        assert!((a - b).abs() <= 1e-12, "{name}: {a} vs {b}");
    }
    assert!(ol.own_control_stationarity > 0.1);
    assert_eq!(fb.policy_constraint, Some(0.0));
}

#[test]
fn containment_needs_the_policy_response_dropped() {
    let game = make_scalar_lq::<f64>(&ScalarLqParams { horizon: 2, ..Default::default() }).unwrap();
    let sol = solve_fbne_ilq(&game, None, &SolveOptions::default()).unwrap();
    let gain = sol.policies[1].gain(2)[(0, 0)];
    assert!(gain.abs() > 1e-3);
    let ol = build_critical_cone(&game, &sol.trajectory, Structure::OpenLoop, Agent::One, None, None, &ConeOptions::default()).unwrap();
    let fb_of = |response| {
        let opts = ConeOptions { response, ..Default::default() };
        build_critical_cone(&game, &sol.trajectory, Structure::Feedback, Agent::One, Some(&sol.policies), Some(&sol.multipliers), &opts).unwrap()
    };
    let auto = cone_containment_check(&ol, &fb_of(PolicyResponse::Auto), 1e-10).unwrap();
    assert!(auto.contained && auto.max_lift_residual < 1e-12);
    let keep = cone_containment_check(&ol, &fb_of(PolicyResponse::Keep), 1e-10).unwrap();
    assert!(!keep.contained);
    // The impulse on u¹_1 moves x_2 by one, so the violated response row is |Π²_2|.
    assert!((keep.max_lift_residual - gain.abs()).abs() < 1e-12);
}

#[test]
fn fb_to_ol_audit_certifies_a_short_scalar_game_and_refuses_perturbed_input() {
    let game = make_scalar_lq::<f64>(&ScalarLqParams { horizon: 3, ..Default::default() }).unwrap();
    let sol = solve_fbne_ilq(&game, None, &SolveOptions::default()).unwrap();
    let verdict = theorem1_audit(&game, &sol.trajectory, &sol.policies, &AuditTolerances::default()).unwrap();
    assert_eq!(verdict.classification, Theorem1Class::OlneCertified, "{verdict:#?}");
    assert!(verdict.ol_report.max_residual < 1e-8);

    let mut u1 = sol.trajectory.controls(Agent::One).to_vec();
    u1[0][0] += 0.05;
    let bad = rollout(&game, &u1, sol.trajectory.controls(Agent::Two)).unwrap();
    let bad_policies = Agent::BOTH.map(|a| AffinePolicySet::open_loop(a, &bad));
    assert!(matches!(
        theorem1_audit(&game, &bad, &bad_policies, &AuditTolerances::default()),
        Err(crate::error::GameError::AuditRefused { .. })
    ));
}

// With q = 1, r2 = 4 the maximizer's open-loop Hessian is 8I − 2·11ᵀ, whose
// smallest eigenvalue 8 − 2K turns negative past K = 4, while the feedback
// tests stay positive. The audit must report this as inconsistent.
#[test]
fn long_scalar_game_is_feedback_sufficient_but_not_open_loop_sufficient() {
    for k in [4usize, 5, 10] {
        let game = make_scalar_lq::<f64>(&ScalarLqParams { horizon: k, ..Default::default() }).unwrap();
        let sol = solve_fbne_ilq(&game, None, &SolveOptions::default()).unwrap();
        let verdict = theorem1_audit(&game, &sol.trajectory, &sol.policies, &AuditTolerances::default()).unwrap();
        assert!(verdict.fb_second_order.iter().all(|r| r.min_eig > 1.0), "{verdict:#?}");
        assert!((verdict.ol_second_order[0].min_eig - 2.0).abs() < 1e-9);
        let expected = 8.0 - 2.0 * k as f64;
        assert!((verdict.ol_second_order[1].min_eig - expected).abs() < 1e-9, "K={k}");
        assert_eq!(verdict.classification, Theorem1Class::Inconsistent);
        assert!(verdict.ol_report.max_residual < 1e-8);
    }
}
