//! Analytic derivatives of every library problem against finite differences
//! at random trajectories.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsgame::derivatives::{evaluate_derivatives, finite_difference_audit};
use zsgame::game::rollout;
use zsgame::problems::{make_problem, PROBLEM_NAMES};
use zsgame::Agent;

/// Seed of the trajectory generator.
const SEED: u64 = 20_240_917;
const TRAJECTORIES: usize = 10;
const REL_TOL: f64 = 1e-5;

#[test]
fn library_derivatives_pass_the_finite_difference_audit() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for name in PROBLEM_NAMES {
        let game = make_problem::<f64>(name, &serde_json::Value::Null).unwrap().game;
        let k = game.horizon();
        for _ in 0..TRAJECTORIES {
            let u = Agent::BOTH.map(|a| {
                let m = game.control_dim(a);
                (0..k).map(|_| DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect::<Vec<_>>()
            });
            let traj = rollout(&game, &u[0], &u[1]).unwrap();
            let analytic = evaluate_derivatives(&game, &traj, true).unwrap();
            let report = finite_difference_audit(&game, &traj, &analytic, REL_TOL).unwrap();
            assert!(report.pass, "{name}: {:?}", report.failing_blocks().collect::<Vec<_>>());
        }
    }
}

#[test]
fn corrupted_jacobian_is_flagged() {
    let game = make_problem::<f64>("unicycle_pursuit", &serde_json::json!({"horizon": 3})).unwrap().game;
    let zeros = Agent::BOTH.map(|a| vec![DVector::from_element(game.control_dim(a), 0.2); 3]);
    let traj = rollout(&game, &zeros[0], &zeros[1]).unwrap();
    let (mut stages, terminal) = evaluate_derivatives(&game, &traj, true).unwrap();
    stages[1].a[(0, 2)] += 0.1;
    let report = finite_difference_audit(&game, &traj, &(stages, terminal), REL_TOL).unwrap();
    assert!(!report.pass);
    let failing: Vec<_> = report.failing_blocks().map(|b| (b.stage, b.block.as_str())).collect();
    assert_eq!(failing, vec![(2, "A")]);
}
