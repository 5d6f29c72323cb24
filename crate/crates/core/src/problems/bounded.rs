use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{make_double_integrator_pursuit, make_scalar_lq, parse, DoubleIntegratorParams, ScalarLqParams};
use crate::constrained::solve_constrained_fbne;
use crate::error::{GameError, Result};
use crate::fbne::solve_fbne_ilq;
use crate::game::{Agent, ControlBounds, GameDefinition, Trajectory};
use crate::newton::SolveOptions;
use crate::scalar::{lit, Scalar};

/// Number of times the bounds are tightened after the first attempt.
pub const MAX_TIGHTENINGS: usize = 3;

/// An LQ library game with uniform box bounds on every control coordinate.
///
/// The defaults give the one-stage scalar game with `u² ≤ 1/8` and all other
/// bounds at `±10`. Construction succeeds only if the bounds clip the
/// unconstrained equilibrium and the constrained feedback equilibrium has an
/// active bound with strict complementarity; otherwise every bound is scaled
/// by `tighten` and the check repeated, at most three times. Each box must
/// contain zero so that scaling tightens it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundedLqParams {
    /// `scalar_lq` or `double_integrator_pursuit`.
    pub base: String,
    pub base_params: serde_json::Value,
    pub u1_lower: f64,
    pub u1_upper: f64,
    pub u2_lower: f64,
    pub u2_upper: f64,
    pub tighten: f64,
}

impl Default for BoundedLqParams {
    fn default() -> Self {
        Self {
            base: "scalar_lq".into(),
            base_params: serde_json::Value::Object(Default::default()),
            u1_lower: -10.0,
            u1_upper: 10.0,
            u2_lower: -10.0,
            u2_upper: 0.125,
            tighten: 0.5,
        }
    }
}

impl BoundedLqParams {
    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [("u1", self.u1_lower, self.u1_upper), ("u2", self.u2_lower, self.u2_upper)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && 0.0 <= hi && lo < hi) {
                return Err(GameError::Input(format!("{name} bounds must be finite with lower ≤ 0 ≤ upper and lower < upper")));
            }
        }
        if !(self.tighten > 0.0 && self.tighten < 1.0) {
            return Err(GameError::Input("tighten must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn base_game<T: Scalar>(p: &BoundedLqParams) -> Result<GameDefinition<T>> {
    match p.base.as_str() {
        "scalar_lq" => make_scalar_lq(&parse::<ScalarLqParams>("scalar_lq", &p.base_params)?.0),
        "double_integrator_pursuit" => make_double_integrator_pursuit(&parse::<DoubleIntegratorParams>("double_integrator_pursuit", &p.base_params)?.0),
        other => Err(GameError::Configuration(format!("bounded_lq base must be scalar_lq or double_integrator_pursuit, got '{other}'"))),
    }
}

/// `[u1_lower, u1_upper, u2_lower, u2_upper]` scaled by `scale`.
fn uniform_bounds<T: Scalar>(game: &GameDefinition<T>, b: [f64; 4], scale: f64) -> ControlBounds<T> {
    let fill = |a: Agent, x: f64| DVector::from_element(game.control_dim(a), lit::<T>(x * scale));
    ControlBounds::uniform(
        game.horizon(),
        [fill(Agent::One, b[0]), fill(Agent::Two, b[2])],
        [fill(Agent::One, b[1]), fill(Agent::Two, b[3])],
    )
}

fn clips(traj: &Trajectory<f64>, bounds: &ControlBounds<f64>) -> bool {
    (1..=traj.horizon()).any(|t| {
        Agent::BOTH.iter().any(|&a| {
            let u = traj.control(a, t);
            (0..u.len()).any(|j| u[j] < bounds.lower(a, t)[j] || u[j] > bounds.upper(a, t)[j])
        })
    })
}

/// Outcome of one construction attempt: `Ok(())` if the bounds qualify.
fn check_attempt(base: &GameDefinition<f64>, unconstrained: &Trajectory<f64>, bounds: ControlBounds<f64>) -> std::result::Result<(), String> {
    if !clips(unconstrained, &bounds) {
        return Err("bounds do not clip the unconstrained equilibrium".into());
    }
    let game = base.clone().with_bounds(bounds).map_err(|e| e.to_string())?;
    let sol = solve_constrained_fbne(&game, None, &SolveOptions::default()).map_err(|e| format!("constrained solve failed: {e}"))?;
    if sol.active_set.active_count() == 0 {
        return Err("no bound is active at the constrained equilibrium".into());
    }
    if !sol.active_set.strict_complementarity {
        return Err("strict complementarity fails at the constrained equilibrium".into());
    }
    Ok(())
}

/// Builds a bounded LQ game, validated in double precision as documented on
/// [`BoundedLqParams`].
pub fn make_bounded_lq<T: Scalar>(p: &BoundedLqParams) -> Result<GameDefinition<T>> {
    p.validate()?;
    let base = base_game::<f64>(p)?;
    let unconstrained = solve_fbne_ilq(&base, None, &SolveOptions::default())?.trajectory;
    let b = [p.u1_lower, p.u1_upper, p.u2_lower, p.u2_upper];
    let mut scale = 1.0;
    let mut reasons = Vec::new();
    for _ in 0..=MAX_TIGHTENINGS {
        match check_attempt(&base, &unconstrained, uniform_bounds(&base, b, scale)) {
            Ok(()) => {
                let game = base_game::<T>(p)?;
                let bounds = uniform_bounds(&game, b, scale);
                return game.with_bounds(bounds);
            }
            Err(reason) => reasons.push(format!("scale {scale}: {reason}")),
        }
        scale *= p.tighten;
    }
    Err(GameError::Construction(reasons.join("; ")))
}
