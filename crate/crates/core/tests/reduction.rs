//! Zero-gain policies with vanishing policy multipliers turn the feedback
//! residual report into the open-loop one, family by family.

use nalgebra::DVector;
use proptest::prelude::*;
use zsgame::game::rollout;
use zsgame::problems::make_problem;
use zsgame::verify::{fb_first_order_report, ol_first_order_report};
use zsgame::{Agent, AffinePolicySet, GameDefinition, MultiplierSet, Trajectory};

const PROBLEMS: [(&str, &str); 3] = [
    ("scalar_lq", r#"{"horizon": 4}"#),
    ("double_integrator_pursuit", r#"{"horizon": 6}"#),
    ("unicycle_pursuit", r#"{"horizon": 6}"#),
];

fn game(i: usize) -> GameDefinition<f64> {
    let (name, params) = PROBLEMS[i];
    make_problem(name, &serde_json::from_str(params).unwrap()).unwrap().game
}

fn vectors(seed: &[f64], count: usize, dim: usize) -> Vec<DVector<f64>> {
    (0..count).map(|t| DVector::from_fn(dim, |j, _| seed[(t * dim + j) % seed.len()] * (1.0 + 0.1 * j as f64))).collect()
}

fn sample(game: &GameDefinition<f64>, seed: &[f64]) -> (Trajectory<f64>, MultiplierSet<f64>) {
    let k = game.horizon();
    let [m1, m2] = game.control_dims();
    let traj = rollout(game, &vectors(seed, k, m1), &vectors(&seed[1..], k, m2)).unwrap();
    let n = game.state_dim();
    let mult = MultiplierSet::new(vectors(&seed[2..], k, n), vectors(&seed[3..], k, n)).unwrap().with_zero_psi(game);
    (traj, mult)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_gain_feedback_report_equals_open_loop_report(
        which in 0usize..3,
        seed in prop::collection::vec(-1.0f64..1.0, 8..16),
    ) {
        let game = game(which);
        let (traj, mult) = sample(&game, &seed);
        let policies = Agent::BOTH.map(|a| AffinePolicySet::open_loop(a, &traj));
        let fb = fb_first_order_report(&game, &traj, &policies, Some(&mult), 1e-8).unwrap();
        let ol = ol_first_order_report(&game, &traj, Some(&mult), 1e-8).unwrap();
        for ((name, a), (_, b)) in fb.shared_families().iter().zip(ol.shared_families()) {
            prop_assert!((a - b).abs() <= 1e-12, "{name}: {a} vs {b}");
        }
        prop_assert!(fb.policy_constraint.unwrap() <= 1e-12);
        prop_assert!(fb.psi_max == 0.0);
        prop_assert!((fb.lambda_negation_max - ol.lambda_negation_max).abs() <= 1e-12);
    }
}
