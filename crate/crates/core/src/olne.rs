//! Open-loop Nash equilibria from the stacked first-order conditions.

use nalgebra::{DMatrix, DVector};

use crate::derivatives::stage_derivatives_at;
use crate::error::{input_err, GameError, Result};
use crate::game::{rollout, Agent, GameDefinition, Trajectory, DEFAULT_DYN_TOL};
use crate::kkt::{self, KktIterate, KktLayout};
use crate::multipliers::MultiplierSet;
use crate::newton::{damped_newton, Check, SolveLog, SolveOptions};
use crate::scalar::{lit, Scalar};

/// Starting point of an iterative equilibrium solver.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess<T: Scalar> {
    /// All controls zero.
    #[default]
    Zero,
    /// Control sequences of both agents.
    Controls([Vec<DVector<T>>; 2]),
    /// Controls of a trajectory; its states are recomputed by rollout.
    Trajectory(Trajectory<T>),
}

impl<T: Scalar> InitialGuess<T> {
    pub(crate) fn rollout(&self, game: &GameDefinition<T>) -> Result<Trajectory<T>> {
        let k = game.horizon();
        match self {
            InitialGuess::Zero => {
                let [m1, m2] = game.control_dims();
                rollout(game, &vec![DVector::zeros(m1); k], &vec![DVector::zeros(m2); k])
            }
            InitialGuess::Controls([u1, u2]) => rollout(game, u1, u2),
            InitialGuess::Trajectory(tr) => {
                tr.check_dims(game)?;
                rollout(game, tr.controls(Agent::One), tr.controls(Agent::Two))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlneSolution<T: Scalar> {
    pub trajectory: Trajectory<T>,
    pub multipliers: MultiplierSet<T>,
    pub log: SolveLog,
}

fn unbounded<T: Scalar>(mult: &MultiplierSet<T>) -> MultiplierSet<T> {
    MultiplierSet::new(mult.lambdas(Agent::One).to_vec(), mult.lambdas(Agent::Two).to_vec()).expect("shapes already checked")
}

/// Residual of the open-loop first-order conditions at `(traj, mult)`.
///
/// The trajectory need not satisfy the dynamics; the defect rows measure that.
/// Rows are ordered stage-major as documented for the stacked system: for each
/// stage, agent one's control and state stationarity, then agent two's, then
/// the dynamics defect. Bound multipliers in `mult` are ignored.
pub fn assemble_ol_residual<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>, mult: &MultiplierSet<T>) -> Result<DVector<T>> {
    traj.check_dims(game)?;
    mult.check_dims(game)?;
    let it = KktIterate::from_parts(traj, &unbounded(mult));
    let (evals, term) = kkt::evaluate(game, &it, false)?;
    Ok(kkt::residual(&KktLayout::new(game, false), &it, &evals, &term, None, T::zero()))
}

/// Jacobian of [`assemble_ol_residual`] with respect to
/// `(x_{t+1}, u¹_t, u²_t, λ¹_t, λ²_t)` stacked stage-major.
pub fn assemble_ol_jacobian<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    mult: &MultiplierSet<T>,
    include_dynamics_curvature: bool,
) -> Result<DMatrix<T>> {
    traj.check_dims(game)?;
    mult.check_dims(game)?;
    let it = KktIterate::from_parts(traj, &unbounded(mult));
    let (evals, term) = kkt::evaluate(game, &it, include_dynamics_curvature)?;
    kkt::jacobian(&KktLayout::new(game, false), &it, &evals, &term, include_dynamics_curvature, None, T::zero())
}

/// Costates that make the state and terminal stationarity rows vanish along a
/// dynamically consistent trajectory, by the backward recursion
/// `λ^i_K = ∇ℓ^i_{K+1}`, `λ^i_{t−1} = ∇_xℓ^i_t + A_tᵀλ^i_t`.
pub fn recover_ol_costates<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>) -> Result<MultiplierSet<T>> {
    if !traj.is_dynamically_consistent(game, lit(DEFAULT_DYN_TOL))? {
        return Err(input_err("costate recovery needs a dynamically consistent trajectory"));
    }
    costate_recursion(game, traj)
}

pub(crate) fn costate_recursion<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>) -> Result<MultiplierSet<T>> {
    let k = game.horizon();
    let td = crate::derivatives::terminal_derivatives_at(game, traj.state(k + 1))?;
    let mut lam1 = vec![DVector::zeros(game.state_dim()); k];
    lam1[k - 1] = td.grad;
    for t in (2..=k).rev() {
        let sd = stage_derivatives_at(game, t, traj.state(t), traj.control(Agent::One, t), traj.control(Agent::Two, t), false)?;
        lam1[t - 2] = sd.grad_x(Agent::One) + sd.a.transpose() * &lam1[t - 1];
    }
    let lam2 = lam1.iter().map(|l| -l).collect();
    MultiplierSet::new(lam1, lam2)
}

/// Solves the open-loop first-order system by damped Newton steps.
///
/// Convergence is declared only when the residual at the re-rolled-out
/// controls is within `opts.residual_tol`, so the returned trajectory
/// satisfies the dynamics to rounding.
pub fn solve_olne<T: Scalar>(game: &GameDefinition<T>, guess: &InitialGuess<T>, opts: &SolveOptions) -> Result<OlneSolution<T>> {
    opts.validate()?;
    if game.bounds().is_some() {
        return Err(GameError::Configuration("game has control bounds; use the constrained solver".into()));
    }
    let traj0 = guess.rollout(game)?;
    let mult0 = costate_recursion(game, &traj0)?;
    let layout = KktLayout::new(game, false);
    let base = KktIterate::from_parts(&traj0, &mult0);
    let curvature = opts.include_dynamics_curvature;
    let tol = opts.residual_tol;

    let residual = |z: &DVector<T>| -> Result<DVector<T>> {
        let it = base.unpack(&layout, z);
        let (evals, term) = kkt::evaluate(game, &it, false)?;
        Ok(kkt::residual(&layout, &it, &evals, &term, None, T::zero()))
    };
    let jacobian = |z: &DVector<T>| -> Result<DMatrix<T>> {
        let it = base.unpack(&layout, z);
        let (evals, term) = kkt::evaluate(game, &it, curvature)?;
        kkt::jacobian(&layout, &it, &evals, &term, curvature, None, T::zero())
    };
    let converged = |z: &DVector<T>, r: &DVector<T>| -> Result<Check<T>> {
        if r.amax().as_f64() > tol {
            return Ok(Check::Continue);
        }
        let it = base.unpack(&layout, z);
        let tr = rollout(game, &it.u[0], &it.u[1])?;
        let mut it2 = it.clone();
        it2.states = tr.states().to_vec();
        let (evals, term) = kkt::evaluate(game, &it2, false)?;
        let r2 = kkt::residual(&layout, &it2, &evals, &term, None, T::zero());
        Ok(if r2.amax().as_f64() <= tol { Check::Done(it2.pack(&layout)) } else { Check::Continue })
    };

    let mut log = SolveLog::default();
    let z = damped_newton(base.pack(&layout), residual, jacobian, converged, opts, None, &mut log)?;
    let it = base.unpack(&layout, &z);
    let trajectory = rollout(game, &it.u[0], &it.u[1])?;
    Ok(OlneSolution { trajectory, multipliers: it.multipliers(), log })
}
