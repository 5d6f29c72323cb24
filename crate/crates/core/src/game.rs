//! Game data model: agents, evaluator callbacks, trajectories, rollout and
//! cumulative cost.
//!
//! Stage indices in every public accessor are 1-based: controls live on
//! stages `1..=K`, states on `1..=K+1`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, GameError, Result};
use crate::policy::AffinePolicySet;
use crate::scalar::{lit, Scalar};

/// One of the two players. Agent one minimizes the cumulative cost, agent two
/// minimizes its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Agent {
    One,
    Two,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::One, Agent::Two];

    pub fn other(self) -> Agent {
        match self {
            Agent::One => Agent::Two,
            Agent::Two => Agent::One,
        }
    }

    /// Zero-based index, for indexing `[_; 2]` arrays.
    pub fn index(self) -> usize {
        match self {
            Agent::One => 0,
            Agent::Two => 1,
        }
    }

    /// Sign applied to agent one's cost to obtain this agent's cost.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Agent::One => T::one(),
            Agent::Two => -T::one(),
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

impl From<Agent> for u8 {
    fn from(a: Agent) -> u8 {
        a.index() as u8 + 1
    }
}

impl TryFrom<u8> for Agent {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Agent::One),
            2 => Ok(Agent::Two),
            other => Err(format!("agent must be 1 or 2, got {other}")),
        }
    }
}

/// Dynamics Jacobians `A = ∂f/∂x`, `B¹ = ∂f/∂u¹`, `B² = ∂f/∂u²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsJacobians<T: Scalar> {
    pub a: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
}

/// Evaluators defining a game. Stage indices passed to the callbacks are 1-based.
///
/// Only the three value evaluators are required. Every derivative hook returns
/// `None` by default, in which case central finite differences are used. Stage
/// cost derivatives are taken over the joint vector `z = (x, u¹, u²)`.
///
/// Implementations must be pure: the library may call them concurrently and in
/// any order.
pub trait GameModel<T: Scalar>: Send + Sync {
    fn dynamics(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> DVector<T>;

    /// Agent one's stage cost; agent two's is its negation.
    fn stage_cost(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> T;

    fn terminal_cost(&self, x: &DVector<T>) -> T;

    fn dynamics_jacobians(
        &self,
        _t: usize,
        _x: &DVector<T>,
        _u1: &DVector<T>,
        _u2: &DVector<T>,
    ) -> Option<DynamicsJacobians<T>> {
        None
    }

    /// Hessians of each output component of `f_t` over `z`, one matrix per component.
    fn dynamics_hessians(
        &self,
        _t: usize,
        _x: &DVector<T>,
        _u1: &DVector<T>,
        _u2: &DVector<T>,
    ) -> Option<Vec<DMatrix<T>>> {
        None
    }

    fn stage_cost_gradient(
        &self,
        _t: usize,
        _x: &DVector<T>,
        _u1: &DVector<T>,
        _u2: &DVector<T>,
    ) -> Option<DVector<T>> {
        None
    }

    fn stage_cost_hessian(
        &self,
        _t: usize,
        _x: &DVector<T>,
        _u1: &DVector<T>,
        _u2: &DVector<T>,
    ) -> Option<DMatrix<T>> {
        None
    }

    fn terminal_cost_gradient(&self, _x: &DVector<T>) -> Option<DVector<T>> {
        None
    }

    fn terminal_cost_hessian(&self, _x: &DVector<T>) -> Option<DMatrix<T>> {
        None
    }
}

type DynFn<T> = dyn Fn(usize, &DVector<T>, &DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync;
type CostFn<T> = dyn Fn(usize, &DVector<T>, &DVector<T>, &DVector<T>) -> T + Send + Sync;
type TermFn<T> = dyn Fn(&DVector<T>) -> T + Send + Sync;

/// A [`GameModel`] assembled from closures, with all derivatives obtained by
/// finite differences.
pub struct CallbackModel<T: Scalar> {
    dynamics: Box<DynFn<T>>,
    stage_cost: Box<CostFn<T>>,
    terminal_cost: Box<TermFn<T>>,
}

impl<T: Scalar> CallbackModel<T> {
    pub fn new<F, L, P>(dynamics: F, stage_cost: L, terminal_cost: P) -> Self
    where
        F: Fn(usize, &DVector<T>, &DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync + 'static,
        L: Fn(usize, &DVector<T>, &DVector<T>, &DVector<T>) -> T + Send + Sync + 'static,
        P: Fn(&DVector<T>) -> T + Send + Sync + 'static,
    {
        Self {
            dynamics: Box::new(dynamics),
            stage_cost: Box::new(stage_cost),
            terminal_cost: Box::new(terminal_cost),
        }
    }
}

impl<T: Scalar> GameModel<T> for CallbackModel<T> {
    fn dynamics(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> DVector<T> {
        (self.dynamics)(t, x, u1, u2)
    }
    fn stage_cost(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> T {
        (self.stage_cost)(t, x, u1, u2)
    }
    fn terminal_cost(&self, x: &DVector<T>) -> T {
        (self.terminal_cost)(x)
    }
}

/// Per-stage box bounds `a ≤ u ≤ b` for both agents. Index `[agent][t-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ControlBounds<T: Scalar> {
    pub lower: [Vec<DVector<T>>; 2],
    pub upper: [Vec<DVector<T>>; 2],
}

impl<T: Scalar> ControlBounds<T> {
    /// The same bounds at every stage.
    pub fn uniform(horizon: usize, lower: [DVector<T>; 2], upper: [DVector<T>; 2]) -> Self {
        let [l1, l2] = lower;
        let [h1, h2] = upper;
        Self {
            lower: [vec![l1; horizon], vec![l2; horizon]],
            upper: [vec![h1; horizon], vec![h2; horizon]],
        }
    }

    pub fn lower(&self, agent: Agent, t: usize) -> &DVector<T> {
        &self.lower[agent.index()][t - 1]
    }

    pub fn upper(&self, agent: Agent, t: usize) -> &DVector<T> {
        &self.upper[agent.index()][t - 1]
    }

    /// Elementwise projection of a control onto the box.
    pub fn project(&self, agent: Agent, t: usize, u: &DVector<T>) -> DVector<T> {
        let lo = self.lower(agent, t);
        let hi = self.upper(agent, t);
        DVector::from_fn(u.len(), |j, _| u[j].max_of(lo[j]).min_of(hi[j]))
    }
}

/// Horizon, dimensions, evaluators, initial state and optional control bounds.
#[derive(Clone)]
pub struct GameDefinition<T: Scalar> {
    horizon: usize,
    state_dim: usize,
    control_dims: [usize; 2],
    initial_state: DVector<T>,
    bounds: Option<ControlBounds<T>>,
    model: Arc<dyn GameModel<T>>,
}

impl<T: Scalar> fmt::Debug for GameDefinition<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameDefinition")
            .field("horizon", &self.horizon)
            .field("state_dim", &self.state_dim)
            .field("control_dims", &self.control_dims)
            .field("initial_state", &self.initial_state.as_slice())
            .field("bounded", &self.bounds.is_some())
            .finish()
    }
}

impl<T: Scalar> GameDefinition<T> {
    pub fn new(
        horizon: usize,
        state_dim: usize,
        control_dims: [usize; 2],
        initial_state: DVector<T>,
        model: Arc<dyn GameModel<T>>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(input_err("horizon must be at least 1"));
        }
        if state_dim == 0 || control_dims.contains(&0) {
            return Err(input_err("state and control dimensions must be positive"));
        }
        if initial_state.len() != state_dim {
            return Err(input_err(format!(
                "initial state has length {}, expected {state_dim}",
                initial_state.len()
            )));
        }
        Ok(Self {
            horizon,
            state_dim,
            control_dims,
            initial_state,
            bounds: None,
            model,
        })
    }

    /// Attaches control bounds after validating shapes and `a ≤ b`.
    pub fn with_bounds(mut self, bounds: ControlBounds<T>) -> Result<Self> {
        for agent in Agent::BOTH {
            let m = self.control_dim(agent);
            let (lo, hi) = (&bounds.lower[agent.index()], &bounds.upper[agent.index()]);
            if lo.len() != self.horizon || hi.len() != self.horizon {
                return Err(input_err(format!("agent {agent} bounds must cover {} stages", self.horizon)));
            }
            for (t, (a, b)) in lo.iter().zip(hi).enumerate() {
                if a.len() != m || b.len() != m {
                    return Err(input_err(format!("agent {agent} stage {} bound has wrong dimension", t + 1)));
                }
                if a.iter().zip(b.iter()).any(|(a, b)| !(a <= b)) {
                    return Err(input_err(format!("agent {agent} stage {}: lower bound exceeds upper bound", t + 1)));
                }
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn without_bounds(mut self) -> Self {
        self.bounds = None;
        self
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self, agent: Agent) -> usize {
        self.control_dims[agent.index()]
    }

    pub fn control_dims(&self) -> [usize; 2] {
        self.control_dims
    }

    /// Dimension of the joint stage vector `(x, u¹, u²)`.
    pub fn joint_dim(&self) -> usize {
        self.state_dim + self.control_dims[0] + self.control_dims[1]
    }

    pub fn initial_state(&self) -> &DVector<T> {
        &self.initial_state
    }

    pub fn bounds(&self) -> Option<&ControlBounds<T>> {
        self.bounds.as_ref()
    }

    pub fn model(&self) -> &dyn GameModel<T> {
        self.model.as_ref()
    }

    /// Evaluates `f_t`, rejecting wrong-sized or non-finite output.
    pub fn step(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> Result<DVector<T>> {
        let next = self.model.dynamics(t, x, u1, u2);
        if next.len() != self.state_dim {
            return Err(input_err(format!(
                "dynamics at stage {t} returned length {}, expected {}",
                next.len(),
                self.state_dim
            )));
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(GameError::NonFinite { stage: t, what: "dynamics output".into() });
        }
        Ok(next)
    }

    /// Evaluates agent one's stage cost `ℓ_t`.
    pub fn stage_cost(&self, t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> Result<T> {
        let c = self.model.stage_cost(t, x, u1, u2);
        if !c.is_finite() {
            return Err(GameError::NonFinite { stage: t, what: "stage cost".into() });
        }
        Ok(c)
    }

    pub fn terminal_cost(&self, x: &DVector<T>) -> Result<T> {
        let c = self.model.terminal_cost(x);
        if !c.is_finite() {
            return Err(GameError::NonFinite { stage: self.horizon + 1, what: "terminal cost".into() });
        }
        Ok(c)
    }

    pub(crate) fn check_controls(&self, agent: Agent, us: &[DVector<T>]) -> Result<()> {
        if us.len() != self.horizon {
            return Err(input_err(format!(
                "agent {agent} control sequence has {} stages, expected {}",
                us.len(),
                self.horizon
            )));
        }
        let m = self.control_dim(agent);
        if let Some(t) = us.iter().position(|u| u.len() != m) {
            return Err(input_err(format!("agent {agent} control at stage {} has wrong dimension", t + 1)));
        }
        Ok(())
    }
}

/// States `x_{1:K+1}` and both agents' controls `u^i_{1:K}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<T: Scalar> {
    states: Vec<DVector<T>>,
    controls: [Vec<DVector<T>>; 2],
}

/// Default tolerance on `‖x_{t+1} − f_t(x_t, u_t)‖∞` for externally supplied trajectories.
pub const DEFAULT_DYN_TOL: f64 = 1e-9;

/// Consistency tolerance for quantities of size `scale`: [`DEFAULT_DYN_TOL`]
/// relative, widened to the precision of `T` when that is coarser.
pub fn consistency_tol<T: Scalar>(scale: T) -> T {
    let floor = lit::<T>(DEFAULT_DYN_TOL).max_of(T::default_epsilon() * lit::<T>(1e3));
    floor * (T::one() + scale)
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(states: Vec<DVector<T>>, controls1: Vec<DVector<T>>, controls2: Vec<DVector<T>>) -> Result<Self> {
        if controls1.is_empty() || controls1.len() != controls2.len() || states.len() != controls1.len() + 1 {
            return Err(input_err(format!(
                "trajectory needs K+1 states and K controls per agent (got {}, {}, {})",
                states.len(),
                controls1.len(),
                controls2.len()
            )));
        }
        Ok(Self { states, controls: [controls1, controls2] })
    }

    pub fn horizon(&self) -> usize {
        self.controls[0].len()
    }

    /// State `x_t`, `t ∈ 1..=K+1`.
    pub fn state(&self, t: usize) -> &DVector<T> {
        &self.states[t - 1]
    }

    /// Control `u^i_t`, `t ∈ 1..=K`.
    pub fn control(&self, agent: Agent, t: usize) -> &DVector<T> {
        &self.controls[agent.index()][t - 1]
    }

    pub fn states(&self) -> &[DVector<T>] {
        &self.states
    }

    pub fn controls(&self, agent: Agent) -> &[DVector<T>] {
        &self.controls[agent.index()]
    }

    /// Checks sequence lengths and vector dimensions against `game`.
    pub fn check_dims(&self, game: &GameDefinition<T>) -> Result<()> {
        if self.horizon() != game.horizon() {
            return Err(input_err(format!(
                "trajectory horizon {} does not match game horizon {}",
                self.horizon(),
                game.horizon()
            )));
        }
        if let Some(t) = self.states.iter().position(|x| x.len() != game.state_dim()) {
            return Err(input_err(format!("state at stage {} has wrong dimension", t + 1)));
        }
        for agent in Agent::BOTH {
            game.check_controls(agent, self.controls(agent))?;
        }
        Ok(())
    }

    /// Largest dynamics defect `max_t ‖x_{t+1} − f_t(x_t, u¹_t, u²_t)‖∞`, including `x_1`
    /// against the game's initial state.
    pub fn dynamics_defect(&self, game: &GameDefinition<T>) -> Result<T> {
        self.check_dims(game)?;
        let mut worst = (self.state(1) - game.initial_state()).amax();
        for t in 1..=self.horizon() {
            let next = game.step(t, self.state(t), self.control(Agent::One, t), self.control(Agent::Two, t))?;
            worst = worst.max_of((self.state(t + 1) - next).amax());
        }
        Ok(worst)
    }

    pub fn is_dynamically_consistent(&self, game: &GameDefinition<T>, dyn_tol: T) -> Result<bool> {
        Ok(self.dynamics_defect(game)? <= dyn_tol)
    }

    /// Largest elementwise difference between two trajectories of equal shape.
    pub fn max_abs_diff(&self, other: &Trajectory<T>) -> T {
        let mut worst = T::zero();
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max_of((a - b).amax());
        }
        for agent in Agent::BOTH {
            for (a, b) in self.controls(agent).iter().zip(other.controls(agent)) {
                worst = worst.max_of((a - b).amax());
            }
        }
        worst
    }

    pub fn max_state_diff(&self, other: &Trajectory<T>) -> T {
        self.states
            .iter()
            .zip(&other.states)
            .fold(T::zero(), |w, (a, b)| w.max_of((a - b).amax()))
    }
}

/// Unrolls the controls from the game's initial state: `x_{t+1} = f_t(x_t, u¹_t, u²_t)`.
pub fn rollout<T: Scalar>(game: &GameDefinition<T>, u1: &[DVector<T>], u2: &[DVector<T>]) -> Result<Trajectory<T>> {
    game.check_controls(Agent::One, u1)?;
    game.check_controls(Agent::Two, u2)?;
    let mut states = Vec::with_capacity(game.horizon() + 1);
    states.push(game.initial_state().clone());
    for t in 1..=game.horizon() {
        let next = game.step(t, &states[t - 1], &u1[t - 1], &u2[t - 1])?;
        states.push(next);
    }
    Trajectory::new(states, u1.to_vec(), u2.to_vec())
}

/// Closed-loop realization of two feedback policy sets:
/// `x_{t+1} = f_t(x_t, π¹_t(x_t), π²_t(x_t))`.
pub fn rollout_policy<T: Scalar>(
    game: &GameDefinition<T>,
    policies1: &AffinePolicySet<T>,
    policies2: &AffinePolicySet<T>,
) -> Result<Trajectory<T>> {
    policies1.check_dims(game, Agent::One)?;
    policies2.check_dims(game, Agent::Two)?;
    let k = game.horizon();
    let mut states = Vec::with_capacity(k + 1);
    let mut u1 = Vec::with_capacity(k);
    let mut u2 = Vec::with_capacity(k);
    states.push(game.initial_state().clone());
    for t in 1..=k {
        let x = &states[t - 1];
        let a = policies1.stage(t).eval(x);
        let b = policies2.stage(t).eval(x);
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(GameError::NonFinite { stage: t, what: "policy output".into() });
        }
        let next = game.step(t, x, &a, &b)?;
        u1.push(a);
        u2.push(b);
        states.push(next);
    }
    Trajectory::new(states, u1, u2)
}

/// Per-stage costs of agent one: `[ℓ_1, …, ℓ_K, ℓ_{K+1}]`.
pub fn stage_costs<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>) -> Result<Vec<T>> {
    traj.check_dims(game)?;
    let mut costs = Vec::with_capacity(game.horizon() + 1);
    for t in 1..=game.horizon() {
        costs.push(game.stage_cost(t, traj.state(t), traj.control(Agent::One, t), traj.control(Agent::Two, t))?);
    }
    costs.push(game.terminal_cost(traj.state(game.horizon() + 1))?);
    Ok(costs)
}

/// Cumulative cost `J = Σ_t ℓ_t + ℓ_{K+1}` of agent one. Agent two's cost is `−J`.
pub fn total_cost<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>) -> Result<T> {
    Ok(stage_costs(game, traj)?.into_iter().fold(T::zero(), |acc, c| acc + c))
}

/// Cumulative cost of `agent` under the zero-sum convention.
pub fn agent_cost<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>, agent: Agent) -> Result<T> {
    Ok(agent.sign::<T>() * total_cost(game, traj)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::AffinePolicySet;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scalar_sum_game(horizon: usize, x1: f64) -> GameDefinition<f64> {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| x + u1 + u2,
            |_, _: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| u1[0] * u1[0] - 4.0 * u2[0] * u2[0],
            |x: &DVector<f64>| x[0] * x[0],
        );
        GameDefinition::new(horizon, 1, [1, 1], v(&[x1]), Arc::new(model)).unwrap()
    }

    #[test]
    fn identity_dynamics_keep_state() {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| x.clone(),
            |_, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| 0.0,
            |_: &DVector<f64>| 0.0,
        );
        let game = GameDefinition::new(4, 2, [1, 1], v(&[1.0, 0.0]), Arc::new(model)).unwrap();
        let u1: Vec<_> = (0..4).map(|t| v(&[t as f64])).collect();
        let u2: Vec<_> = (0..4).map(|t| v(&[-3.0 * t as f64])).collect();
        let traj = rollout(&game, &u1, &u2).unwrap();
        for t in 1..=5 {
            assert_eq!(traj.state(t), &v(&[1.0, 0.0]));
        }
        assert_eq!(total_cost(&game, &traj).unwrap(), 0.0);
    }

    #[test]
    fn one_step_scalar_rollout_and_cost() {
        let game = scalar_sum_game(1, 1.0);
        let traj = rollout(&game, &[v(&[-4.0 / 7.0])], &[v(&[1.0 / 7.0])]).unwrap();
        assert!((traj.state(2)[0] - 4.0 / 7.0).abs() < 1e-15);
        let j = total_cost(&game, &traj).unwrap();
        assert!((j - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(agent_cost(&game, &traj, Agent::Two).unwrap(), -j);
    }

    #[test]
    fn rollout_rejects_bad_dimensions() {
        let game = scalar_sum_game(2, 1.0);
        let err = rollout(&game, &[v(&[0.0])], &[v(&[0.0]), v(&[0.0])]).unwrap_err();
        assert!(matches!(err, GameError::Input(_)));
        let err = rollout(&game, &[v(&[0.0, 1.0]), v(&[0.0])], &[v(&[0.0]), v(&[0.0])]).unwrap_err();
        assert!(matches!(err, GameError::Input(_)));
    }

    #[test]
    fn non_finite_dynamics_names_stage() {
        let model = CallbackModel::new(
            |t, x: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| if t == 2 { x * f64::NAN } else { x.clone() },
            |_, _: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| 0.0,
            |_: &DVector<f64>| 0.0,
        );
        let game = GameDefinition::new(3, 1, [1, 1], v(&[1.0]), Arc::new(model)).unwrap();
        let zeros = vec![v(&[0.0]); 3];
        let err = rollout(&game, &zeros, &zeros).unwrap_err();
        assert_eq!(err, GameError::NonFinite { stage: 2, what: "dynamics output".into() });
    }

    #[test]
    fn zero_policies_match_zero_controls() {
        let game = scalar_sum_game(3, 2.0);
        let zeros = vec![v(&[0.0]); 3];
        let open = rollout(&game, &zeros, &zeros).unwrap();
        let p1 = AffinePolicySet::zeros(Agent::One, 3, 1, 1);
        let p2 = AffinePolicySet::zeros(Agent::Two, 3, 1, 1);
        let closed = rollout_policy(&game, &p1, &p2).unwrap();
        assert_eq!(open, closed);
    }

    #[test]
    fn open_loop_embedding_reproduces_trajectory() {
        let game = scalar_sum_game(3, 2.0);
        let u1 = vec![v(&[0.3]), v(&[-0.2]), v(&[1.5])];
        let u2 = vec![v(&[0.1]), v(&[0.7]), v(&[-0.4])];
        let open = rollout(&game, &u1, &u2).unwrap();
        let p1 = AffinePolicySet::open_loop(Agent::One, &open);
        let p2 = AffinePolicySet::open_loop(Agent::Two, &open);
        assert_eq!(rollout_policy(&game, &p1, &p2).unwrap(), open);
    }

    #[test]
    fn bounds_validation() {
        let game = scalar_sum_game(2, 1.0);
        let bad = ControlBounds::uniform(2, [v(&[1.0]), v(&[-1.0])], [v(&[0.0]), v(&[1.0])]);
        assert!(game.clone().with_bounds(bad).is_err());
        let ok = ControlBounds::uniform(2, [v(&[-1.0]), v(&[-1.0])], [v(&[1.0]), v(&[1.0])]);
        let game = game.with_bounds(ok).unwrap();
        let b = game.bounds().unwrap();
        assert_eq!(b.project(Agent::One, 2, &v(&[3.0])), v(&[1.0]));
    }

    #[test]
    fn defect_of_perturbed_trajectory() {
        let game = scalar_sum_game(2, 1.0);
        let zeros = vec![v(&[0.0]); 2];
        let traj = rollout(&game, &zeros, &zeros).unwrap();
        assert!(traj.is_dynamically_consistent(&game, DEFAULT_DYN_TOL).unwrap());
        let mut states = traj.states().to_vec();
        states[2][0] += 1e-6;
        let traj = Trajectory::new(states, zeros.clone(), zeros).unwrap();
        assert!((traj.dynamics_defect(&game).unwrap() - 1e-6).abs() < 1e-15);
        assert!(!traj.is_dynamically_consistent(&game, DEFAULT_DYN_TOL).unwrap());
    }
}
