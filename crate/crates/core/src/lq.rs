//! Linear-quadratic zero-sum games: the feedback Riccati recursion and the
//! open-loop stacked solve.
//!
//! A stage is `x_{t+1} = A x + B¹u¹ + B²u² + c` with agent one paying
//! `½ zᵀ H z + gᵀ z + offset` over `z = (x, u¹, u²)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::derivatives::{join, StageDerivatives, TerminalDerivatives};
use crate::error::{input_err, GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::kkt::{self, KktIterate, KktLayout, StageEval};
use crate::policy::{AffinePolicy, AffinePolicySet};
use crate::scalar::{lit, Scalar};

/// Default ceiling on the condition number of a stage saddle block.
pub const DEFAULT_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LqStage<T: Scalar> {
    pub a: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    pub c: DVector<T>,
    /// Cost Hessian of agent one over `(x, u¹, u²)`.
    pub h: DMatrix<T>,
    pub g: DVector<T>,
    pub offset: T,
}

impl<T: Scalar> LqStage<T> {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dims(&self) -> [usize; 2] {
        [self.b1.ncols(), self.b2.ncols()]
    }

    pub fn jacobian(&self) -> DMatrix<T> {
        let n = self.state_dim();
        let [m1, m2] = self.control_dims();
        let mut f = DMatrix::zeros(n, n + m1 + m2);
        f.view_mut((0, 0), (n, n)).copy_from(&self.a);
        f.view_mut((0, n), (n, m1)).copy_from(&self.b1);
        f.view_mut((0, n + m1), (n, m2)).copy_from(&self.b2);
        f
    }

    fn check(&self, t: usize) -> Result<()> {
        let n = self.state_dim();
        let [m1, m2] = self.control_dims();
        let d = n + m1 + m2;
        let ok = self.a.ncols() == n
            && self.b1.nrows() == n
            && self.b2.nrows() == n
            && self.c.len() == n
            && self.h.shape() == (d, d)
            && self.g.len() == d;
        if !ok {
            return Err(input_err(format!("LQ stage {t} has inconsistent dimensions")));
        }
        Ok(())
    }

    /// Quadratic model of a stage around `z* = (x*, u¹*, u²*)` from its derivatives.
    ///
    /// With `deviation` the model is written in `δz = z − z*` and the dynamics
    /// offset is zero; otherwise it is expressed in absolute coordinates.
    pub fn from_derivatives(sd: &StageDerivatives<T>, cost: T, f: &DVector<T>, z: &DVector<T>, deviation: bool) -> Self {
        let (h, g) = (sd.cost_hess.clone(), sd.cost_grad.clone());
        if deviation {
            let n = sd.state_dim;
            return Self {
                a: sd.a.clone(),
                b1: sd.b1.clone(),
                b2: sd.b2.clone(),
                c: DVector::zeros(n),
                h,
                g,
                offset: cost,
            };
        }
        let hz = &h * z;
        let jac = sd.jacobian();
        Self {
            a: sd.a.clone(),
            b1: sd.b1.clone(),
            b2: sd.b2.clone(),
            c: f - &jac * z,
            offset: cost - g.dot(z) + hz.dot(z) * lit::<T>(0.5),
            g: g - hz,
            h,
        }
    }
}

/// `V(x) = ½ xᵀ P x + pᵀ x + c`, the value of agent one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ValueQuadratic<T: Scalar> {
    pub hess: DMatrix<T>,
    pub grad: DVector<T>,
    pub constant: T,
}

impl<T: Scalar> ValueQuadratic<T> {
    pub fn new(hess: DMatrix<T>, grad: DVector<T>, constant: T) -> Self {
        Self { hess, grad, constant }
    }

    pub fn eval(&self, x: &DVector<T>) -> T {
        (&self.hess * x).dot(x) * lit::<T>(0.5) + self.grad.dot(x) + self.constant
    }

    /// Quadratic model of the terminal cost around `x*`.
    pub fn from_terminal(td: &TerminalDerivatives<T>, cost: T, x: &DVector<T>, deviation: bool) -> Self {
        if deviation {
            return Self::new(td.hess.clone(), td.grad.clone(), cost);
        }
        let px = &td.hess * x;
        Self::new(td.hess.clone(), &td.grad - &px, cost - td.grad.dot(x) + px.dot(x) * lit::<T>(0.5))
    }
}

/// Control-value quadratic `Z_t` over `(x, u¹, u²)` seen by the stage saddle.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlValue<T: Scalar> {
    pub stage: usize,
    pub state_dim: usize,
    pub control_dims: [usize; 2],
    pub hess: DMatrix<T>,
    pub grad: DVector<T>,
    pub constant: T,
}

impl<T: Scalar> ControlValue<T> {
    fn m(&self) -> usize {
        self.control_dims[0] + self.control_dims[1]
    }

    /// `Z_uu` over the stacked control `(u¹, u²)`.
    pub fn uu(&self) -> DMatrix<T> {
        let (n, m) = (self.state_dim, self.m());
        self.hess.view((n, n), (m, m)).into_owned()
    }

    pub fn ux(&self) -> DMatrix<T> {
        let (n, m) = (self.state_dim, self.m());
        self.hess.view((n, 0), (m, n)).into_owned()
    }

    pub fn u_grad(&self) -> DVector<T> {
        self.grad.rows(self.state_dim, self.m()).into_owned()
    }

    /// Diagonal block `Z_{u^i u^i}`.
    pub fn own_block(&self, agent: Agent) -> DMatrix<T> {
        let off = self.state_dim + if agent == Agent::Two { self.control_dims[0] } else { 0 };
        let mi = self.control_dims[agent.index()];
        self.hess.view((off, off), (mi, mi)).into_owned()
    }

    /// `(λ_min(Z_{u¹u¹}), λ_max(Z_{u²u²}))`.
    pub fn saddle_eigs(&self) -> (T, T) {
        (extreme_eig(self.own_block(Agent::One), false), extreme_eig(self.own_block(Agent::Two), true))
    }
}

/// Smallest (or largest) eigenvalue of a symmetric matrix; `±∞` for an empty one.
pub(crate) fn extreme_eig<T: Scalar>(m: DMatrix<T>, largest: bool) -> T {
    if m.nrows() == 0 {
        let inf = lit::<T>(f64::INFINITY);
        return if largest { -inf } else { inf };
    }
    let e = SymmetricEigen::new(m).eigenvalues;
    if largest {
        e.max()
    } else {
        e.min()
    }
}

/// 2-norm condition number of a square matrix; `∞` when singular.
pub(crate) fn condition_number<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::one();
    }
    let sv = m.clone().singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if lo <= T::zero() {
        lit(f64::INFINITY)
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StageDiagnostics<T: Scalar> {
    pub stage: usize,
    /// `λ_min(Z_{u¹u¹})`, positive when agent one's stage problem is convex.
    pub min_eig_u1: T,
    /// `λ_max(Z_{u²u²})`, negative when agent two's stage problem is concave.
    pub max_eig_u2: T,
    pub cond: T,
    /// Symmetric shift applied to the saddle block before solving.
    pub regularization: T,
    /// Stacked control indices whose gain rows were zeroed (active bounds).
    pub masked: Vec<usize>,
}

/// Affine stage law `u = k + Π x` over the stacked control.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSaddle<T: Scalar> {
    pub offset: DVector<T>,
    pub gain: DMatrix<T>,
    pub diagnostics: StageDiagnostics<T>,
}

/// Solves the unconstrained stage saddle `Z_uu u = −(Z_ux x + Z_u)` after
/// shifting `Z_{u¹u¹}` by `+shift` and `Z_{u²u²}` by `−shift`.
pub fn unconstrained_saddle<T: Scalar>(cv: &ControlValue<T>, cond_max: f64, shift: T) -> Result<StageSaddle<T>> {
    let (min_eig_u1, max_eig_u2) = cv.saddle_eigs();
    let mut zuu = cv.uu();
    let m1 = cv.control_dims[0];
    for i in 0..zuu.nrows() {
        zuu[(i, i)] += if i < m1 { shift } else { -shift };
    }
    let cond = condition_number(&zuu);
    if !(cond.as_f64() <= cond_max) {
        return Err(GameError::SaddleSingular { stage: cv.stage, cond: cond.as_f64() });
    }
    let lu = zuu.lu();
    let gain = -lu.solve(&cv.ux()).ok_or(GameError::SaddleSingular { stage: cv.stage, cond: f64::INFINITY })?;
    let offset = -lu.solve(&cv.u_grad()).ok_or(GameError::SaddleSingular { stage: cv.stage, cond: f64::INFINITY })?;
    Ok(StageSaddle {
        offset,
        gain,
        diagnostics: StageDiagnostics { stage: cv.stage, min_eig_u1, max_eig_u2, cond, regularization: shift, masked: Vec::new() },
    })
}

/// Output of the feedback recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct LqFeedbackSolution<T: Scalar> {
    /// Policies `u^i_t = k^i_t + Π^i_t x`.
    pub policies: [AffinePolicySet<T>; 2],
    /// Values `V_1 … V_{K+1}` of agent one.
    pub values: Vec<ValueQuadratic<T>>,
    pub diagnostics: Vec<StageDiagnostics<T>>,
}

impl<T: Scalar> LqFeedbackSolution<T> {
    pub fn value(&self, t: usize) -> &ValueQuadratic<T> {
        &self.values[t - 1]
    }

    pub fn policy(&self, agent: Agent) -> &AffinePolicySet<T> {
        &self.policies[agent.index()]
    }
}

fn check_stages<T: Scalar>(stages: &[LqStage<T>], terminal: &ValueQuadratic<T>) -> Result<(usize, [usize; 2])> {
    let first = stages.first().ok_or_else(|| input_err("LQ game needs at least one stage"))?;
    let (n, m) = (first.state_dim(), first.control_dims());
    for (i, s) in stages.iter().enumerate() {
        s.check(i + 1)?;
        if s.state_dim() != n || s.control_dims() != m {
            return Err(input_err(format!("LQ stage {} changes dimensions", i + 1)));
        }
    }
    if terminal.hess.shape() != (n, n) || terminal.grad.len() != n {
        return Err(input_err("terminal value has wrong dimension"));
    }
    Ok((n, m))
}

/// Backward recursion with a pluggable stage saddle solver.
pub(crate) fn backward_pass<T, S>(
    stages: &[LqStage<T>],
    terminal: &ValueQuadratic<T>,
    mut solve_stage: S,
) -> Result<LqFeedbackSolution<T>>
where
    T: Scalar,
    S: FnMut(&ControlValue<T>) -> Result<StageSaddle<T>>,
{
    let (n, m) = check_stages(stages, terminal)?;
    let k = stages.len();
    let mut values = vec![terminal.clone(); k + 1];
    let mut offsets = vec![DVector::zeros(0); k];
    let mut gains = vec![DMatrix::zeros(0, 0); k];
    let mut diagnostics = Vec::with_capacity(k);
    let half = lit::<T>(0.5);

    for t in (1..=k).rev() {
        let st = &stages[t - 1];
        let next = &values[t];
        let f = st.jacobian();
        let ft_p = f.transpose() * &next.hess;
        let pc_p = &next.hess * &st.c + &next.grad;
        let mut zh = &st.h + &ft_p * &f;
        zh = (&zh + zh.transpose()) * half;
        let zg = &st.g + f.transpose() * &pc_p;
        let zc = st.offset + (&next.hess * &st.c).dot(&st.c) * half + next.grad.dot(&st.c) + next.constant;
        let cv = ControlValue { stage: t, state_dim: n, control_dims: m, hess: zh, grad: zg, constant: zc };
        for (what, bad) in [("control-value Hessian", cv.hess.iter().any(|x| !x.is_finite())), ("control-value gradient", cv.grad.iter().any(|x| !x.is_finite()))] {
            if bad {
                return Err(GameError::NonFinite { stage: t, what: what.into() });
            }
        }

        let saddle = solve_stage(&cv)?;
        let mu = m[0] + m[1];
        let mut big_m = DMatrix::zeros(n + mu, n);
        big_m.view_mut((0, 0), (n, n)).fill_with_identity();
        big_m.view_mut((n, 0), (mu, n)).copy_from(&saddle.gain);
        let mut m0 = DVector::zeros(n + mu);
        m0.rows_mut(n, mu).copy_from(&saddle.offset);

        let zm0 = &cv.hess * &m0;
        let mut vh = big_m.transpose() * &cv.hess * &big_m;
        vh = (&vh + vh.transpose()) * half;
        let vg = big_m.transpose() * (&zm0 + &cv.grad);
        let vc = zm0.dot(&m0) * half + cv.grad.dot(&m0) + cv.constant;
        values[t - 1] = ValueQuadratic::new(vh, vg, vc);
        offsets[t - 1] = saddle.offset;
        gains[t - 1] = saddle.gain;
        diagnostics.push(saddle.diagnostics);
    }
    diagnostics.reverse();

    let policies = Agent::BOTH.map(|a| {
        let (start, len) = if a == Agent::One { (0, m[0]) } else { (m[0], m[1]) };
        let stages = (0..k)
            .map(|i| AffinePolicy {
                gain: gains[i].rows(start, len).into_owned(),
                u_ref: offsets[i].rows(start, len).into_owned(),
                x_ref: DVector::zeros(n),
            })
            .collect();
        AffinePolicySet::new(a, stages).expect("policy shapes follow the stage dimensions")
    });
    Ok(LqFeedbackSolution { policies, values, diagnostics })
}

/// Feedback saddle-point solution of an LQ game by the backward Riccati recursion.
///
/// Fails with [`GameError::SaddleSingular`] when a stage saddle block has
/// condition number above [`DEFAULT_COND_MAX`]. Definiteness of the blocks is
/// reported in the diagnostics, not enforced.
pub fn solve_lq_feedback<T: Scalar>(stages: &[LqStage<T>], terminal: &ValueQuadratic<T>) -> Result<LqFeedbackSolution<T>> {
    solve_lq_feedback_with(stages, terminal, DEFAULT_COND_MAX)
}

pub fn solve_lq_feedback_with<T: Scalar>(
    stages: &[LqStage<T>],
    terminal: &ValueQuadratic<T>,
    cond_max: f64,
) -> Result<LqFeedbackSolution<T>> {
    backward_pass(stages, terminal, |cv| unconstrained_saddle(cv, cond_max, T::zero()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqOpenLoopSolution<T: Scalar> {
    pub trajectory: Trajectory<T>,
    /// Costates `λ^i_1 … λ^i_K`.
    pub lambda: [Vec<DVector<T>>; 2],
}

fn lq_stage_eval<T: Scalar>(t: usize, st: &LqStage<T>, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> StageEval<T> {
    let z = join(x, u1, u2);
    let f = st.jacobian() * &z + &st.c;
    let sd = StageDerivatives {
        stage: t,
        state_dim: st.state_dim(),
        control_dims: st.control_dims(),
        cost_grad: &st.h * &z + &st.g,
        cost_hess: st.h.clone(),
        a: st.a.clone(),
        b1: st.b1.clone(),
        b2: st.b2.clone(),
        dynamics_hessians: None,
    };
    StageEval { sd, f }
}

/// Open-loop saddle point of an LQ game from the stacked first-order system.
///
/// The system is linear, so one factorization solves it; a singular system
/// yields [`GameError::OpenLoopSingular`].
pub fn solve_lq_openloop<T: Scalar>(
    stages: &[LqStage<T>],
    terminal: &ValueQuadratic<T>,
    x1: &DVector<T>,
) -> Result<LqOpenLoopSolution<T>> {
    let (n, m) = check_stages(stages, terminal)?;
    if x1.len() != n {
        return Err(input_err("initial state has wrong dimension"));
    }
    let k = stages.len();
    let layout = KktLayout { k, n, m, bounded: false };
    let mut states = vec![DVector::zeros(n); k + 1];
    states[0] = x1.clone();
    let it = KktIterate {
        states,
        u: [vec![DVector::zeros(m[0]); k], vec![DVector::zeros(m[1]); k]],
        lambda: [vec![DVector::zeros(n); k], vec![DVector::zeros(n); k]],
        nu: None,
    };
    let evals: Vec<_> = (1..=k).map(|t| lq_stage_eval(t, &stages[t - 1], &it.states[t - 1], &it.u[0][t - 1], &it.u[1][t - 1])).collect();
    let term = TerminalDerivatives { grad: &terminal.hess * &it.states[k] + &terminal.grad, hess: terminal.hess.clone() };
    let r = kkt::residual(&layout, &it, &evals, &term, None, T::zero());
    let j = kkt::jacobian(&layout, &it, &evals, &term, false, None, T::zero())?;
    let step = j.lu().solve(&(-r)).ok_or(GameError::OpenLoopSingular)?;
    if step.iter().any(|x| !x.is_finite()) {
        return Err(GameError::OpenLoopSingular);
    }
    let sol = it.unpack(&layout, &(it.pack(&layout) + step));
    Ok(LqOpenLoopSolution { trajectory: sol.trajectory(), lambda: sol.lambda })
}

/// Quadratic model of every stage and the terminal cost along `traj`.
///
/// Exact for games with affine dynamics and quadratic costs. With `deviation`
/// the model is written in deviations from `traj`.
pub fn linearize_game<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    deviation: bool,
) -> Result<(Vec<LqStage<T>>, ValueQuadratic<T>)> {
    traj.check_dims(game)?;
    let k = game.horizon();
    let mut stages = Vec::with_capacity(k);
    for t in 1..=k {
        let (x, u1, u2) = (traj.state(t), traj.control(Agent::One, t), traj.control(Agent::Two, t));
        let sd = crate::derivatives::stage_derivatives_at(game, t, x, u1, u2, false)?;
        let f = game.step(t, x, u1, u2)?;
        let cost = game.stage_cost(t, x, u1, u2)?;
        stages.push(LqStage::from_derivatives(&sd, cost, &f, &join(x, u1, u2), deviation));
    }
    let xk = traj.state(k + 1);
    let td = crate::derivatives::terminal_derivatives_at(game, xk)?;
    let term = ValueQuadratic::from_terminal(&td, game.terminal_cost(xk)?, xk, deviation);
    Ok((stages, term))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    /// `x' = x + u¹ + u²`, cost `u¹² − 4u²²`, terminal `x²`.
    fn sg1() -> (Vec<LqStage<f64>>, ValueQuadratic<f64>) {
        let st = LqStage {
            a: m(1, 1, &[1.0]),
            b1: m(1, 1, &[1.0]),
            b2: m(1, 1, &[1.0]),
            c: DVector::zeros(1),
            h: m(3, 3, &[0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -8.0]),
            g: DVector::zeros(3),
            offset: 0.0,
        };
        (vec![st], ValueQuadratic::new(m(1, 1, &[2.0]), DVector::zeros(1), 0.0))
    }

    #[test]
    fn feedback_one_stage_matches_hand_solution() {
        let (st, term) = sg1();
        let sol = solve_lq_feedback(&st, &term).unwrap();
        // Z_uu = [[4, 2], [2, -6]], Z_ux = [2, 2]: Π = -Z_uu⁻¹ Z_ux = (-4/7, 1/7).
        assert!((sol.policies[0].gain(1)[(0, 0)] + 4.0 / 7.0).abs() < 1e-14);
        assert!((sol.policies[1].gain(1)[(0, 0)] - 1.0 / 7.0).abs() < 1e-14);
        // V_1(x) = (4/7) x².
        assert!((sol.value(1).hess[(0, 0)] - 8.0 / 7.0).abs() < 1e-14);
        assert!((sol.value(1).eval(&DVector::from_element(1, 1.0)) - 4.0 / 7.0).abs() < 1e-14);
        let d = &sol.diagnostics[0];
        assert!((d.min_eig_u1 - 4.0).abs() < 1e-12 && (d.max_eig_u2 + 6.0).abs() < 1e-12);
    }

    #[test]
    fn openloop_one_stage_matches_hand_solution() {
        let (st, term) = sg1();
        let sol = solve_lq_openloop(&st, &term, &DVector::from_element(1, 1.0)).unwrap();
        let tr = &sol.trajectory;
        assert!((tr.control(Agent::One, 1)[0] + 4.0 / 7.0).abs() < 1e-14);
        assert!((tr.control(Agent::Two, 1)[0] - 1.0 / 7.0).abs() < 1e-14);
        assert!((tr.state(2)[0] - 4.0 / 7.0).abs() < 1e-14);
        assert!((sol.lambda[0][0][0] - 8.0 / 7.0).abs() < 1e-14);
        assert!((sol.lambda[1][0][0] + 8.0 / 7.0).abs() < 1e-14);
    }

    #[test]
    fn singular_saddle_is_reported() {
        let (mut st, term) = sg1();
        // Z_uu = [[4, 2], [2, r + 2]] is singular for r = -1.
        st[0].h[(2, 2)] = -1.0;
        let err = solve_lq_feedback(&st, &term).unwrap_err();
        assert!(matches!(err, GameError::SaddleSingular { stage: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (mut st, term) = sg1();
        st[0].g = DVector::zeros(2);
        assert!(matches!(solve_lq_feedback(&st, &term), Err(GameError::Input(_))));
    }
}
