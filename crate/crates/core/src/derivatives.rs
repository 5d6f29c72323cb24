//! First and second derivatives of costs and dynamics along a trajectory.
//!
//! Every stage quantity is expressed over the joint vector `z = (x, u¹, u²)` of
//! length `n + m¹ + m²`. Analytic derivatives are taken from the game model
//! when it provides them and otherwise from central finite differences.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::scalar::{lit, Scalar};

/// Cost and dynamics derivatives of one stage, evaluated at a point `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDerivatives<T: Scalar> {
    pub stage: usize,
    pub state_dim: usize,
    pub control_dims: [usize; 2],
    /// `∇_z ℓ_t` of agent one.
    pub cost_grad: DVector<T>,
    /// `∇²_z ℓ_t` of agent one (symmetric).
    pub cost_hess: DMatrix<T>,
    pub a: DMatrix<T>,
    pub b1: DMatrix<T>,
    pub b2: DMatrix<T>,
    /// `∇²_z f_t^k` for each output component `k`, when requested.
    pub dynamics_hessians: Option<Vec<DMatrix<T>>>,
}

impl<T: Scalar> StageDerivatives<T> {
    pub fn joint_dim(&self) -> usize {
        self.state_dim + self.control_dims[0] + self.control_dims[1]
    }

    pub fn x_range(&self) -> Range<usize> {
        0..self.state_dim
    }

    pub fn u_range(&self, agent: Agent) -> Range<usize> {
        let n = self.state_dim;
        let m1 = self.control_dims[0];
        match agent {
            Agent::One => n..n + m1,
            Agent::Two => n + m1..n + m1 + self.control_dims[1],
        }
    }

    pub fn b(&self, agent: Agent) -> &DMatrix<T> {
        match agent {
            Agent::One => &self.b1,
            Agent::Two => &self.b2,
        }
    }

    /// `[A B¹ B²]`.
    pub fn jacobian(&self) -> DMatrix<T> {
        let n = self.state_dim;
        let mut f = DMatrix::zeros(n, self.joint_dim());
        f.view_mut((0, 0), (n, n)).copy_from(&self.a);
        f.view_mut((0, n), self.b1.shape()).copy_from(&self.b1);
        f.view_mut((0, n + self.control_dims[0]), self.b2.shape()).copy_from(&self.b2);
        f
    }

    /// Gradient of `agent`'s cost with respect to `x`.
    pub fn grad_x(&self, agent: Agent) -> DVector<T> {
        self.cost_grad.rows_range(self.x_range()) * agent.sign::<T>()
    }

    /// Gradient of `agent`'s cost with respect to `u^j`.
    pub fn grad_u(&self, agent: Agent, control_of: Agent) -> DVector<T> {
        self.cost_grad.rows_range(self.u_range(control_of)) * agent.sign::<T>()
    }

    /// `∇²_z (wᵀ f_t)`, or `None` if curvature was not evaluated.
    pub fn curvature_contraction(&self, w: &DVector<T>) -> Option<DMatrix<T>> {
        let hs = self.dynamics_hessians.as_ref()?;
        let d = self.joint_dim();
        Some(hs.iter().zip(w.iter()).fold(DMatrix::zeros(d, d), |acc, (h, wk)| acc + h * *wk))
    }
}

/// Terminal cost derivatives of agent one.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDerivatives<T: Scalar> {
    pub grad: DVector<T>,
    pub hess: DMatrix<T>,
}

/// Finite-difference step for arguments of size `‖z‖∞`.
pub fn fd_step<T: Scalar>(z: &DVector<T>) -> T {
    lit::<T>(1e-6).max_of(lit::<T>(1e-7) * (T::one() + z.amax()))
}

/// Step of the second-difference Hessian stencil.
fn fd_outer_step<T: Scalar>(z: &DVector<T>) -> T {
    lit::<T>(1e-4).max_of(lit::<T>(1e-5) * (T::one() + z.amax()))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<T: Scalar>(f: impl Fn(&DVector<T>) -> T, z: &DVector<T>) -> DVector<T> {
    let h = fd_step(z);
    let two_h = h + h;
    let mut zp = z.clone();
    DVector::from_fn(z.len(), |i, _| {
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        (fp - fm) / two_h
    })
}

/// Central-difference Jacobian of a vector function, with an explicit step.
pub fn fd_jacobian_with_step<T: Scalar>(
    f: impl Fn(&DVector<T>) -> DVector<T>,
    z: &DVector<T>,
    h: T,
) -> DMatrix<T> {
    let two_h = h + h;
    let mut zp = z.clone();
    let mut cols = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        zp[i] = z[i] + h;
        let fp = f(&zp);
        zp[i] = z[i] - h;
        let fm = f(&zp);
        zp[i] = z[i];
        cols.push((fp - fm) / two_h);
    }
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, z.len(), |r, c| cols[c][r])
}

/// Central-difference Jacobian with the default adaptive step.
pub fn fd_jacobian<T: Scalar>(f: impl Fn(&DVector<T>) -> DVector<T>, z: &DVector<T>) -> DMatrix<T> {
    fd_jacobian_with_step(f, z, fd_step(z))
}

/// Hessians of every component of `f` from the four-point second-difference stencil.
pub fn fd_hessians<T: Scalar>(f: impl Fn(&DVector<T>) -> DVector<T>, z: &DVector<T>) -> Vec<DMatrix<T>> {
    let h = fd_outer_step(z);
    let denom = lit::<T>(4.0) * h * h;
    let d = z.len();
    let mut zp = z.clone();
    let mut eval = |i: usize, si: T, j: usize, sj: T| {
        zp.copy_from(z);
        zp[i] += si * h;
        zp[j] += sj * h;
        f(&zp)
    };
    let (one, neg) = (T::one(), -T::one());
    let mut entries = vec![vec![DVector::<T>::zeros(0); d]; d];
    for i in 0..d {
        for j in i..d {
            let v = (eval(i, one, j, one) - eval(i, one, j, neg) - eval(i, neg, j, one) + eval(i, neg, j, neg)) / denom;
            entries[i][j] = v.clone();
            entries[j][i] = v;
        }
    }
    let outputs = entries.first().and_then(|r| r.first()).map_or(0, |v| v.len());
    (0..outputs).map(|k| DMatrix::from_fn(d, d, |i, j| entries[i][j][k])).collect()
}

/// Hessian of a scalar function from the second-difference stencil.
pub fn fd_hessian<T: Scalar>(f: impl Fn(&DVector<T>) -> T, z: &DVector<T>) -> DMatrix<T> {
    fd_hessians(|z: &DVector<T>| DVector::from_element(1, f(z)), z).pop().unwrap_or_else(|| DMatrix::zeros(0, 0))
}

fn symmetrize<T: Scalar>(h: DMatrix<T>) -> DMatrix<T> {
    (&h + h.transpose()) * lit::<T>(0.5)
}

/// Splits `z = (x, u¹, u²)`.
pub(crate) fn split_joint<T: Scalar>(z: &DVector<T>, n: usize, m: [usize; 2]) -> (DVector<T>, DVector<T>, DVector<T>) {
    (
        z.rows(0, n).into_owned(),
        z.rows(n, m[0]).into_owned(),
        z.rows(n + m[0], m[1]).into_owned(),
    )
}

pub(crate) fn join<T: Scalar>(x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> DVector<T> {
    let mut z = DVector::zeros(x.len() + u1.len() + u2.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u1.len()).copy_from(u1);
    z.rows_mut(x.len() + u1.len(), u2.len()).copy_from(u2);
    z
}

fn check_finite_vec<T: Scalar>(v: &DVector<T>, stage: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GameError::NonFinite { stage, what: what.into() })
    }
}

fn check_finite_mat<T: Scalar>(m: &DMatrix<T>, stage: usize, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GameError::NonFinite { stage, what: what.into() })
    }
}

/// Finite-difference reference values for one stage, computed only from model
/// values and, for second derivatives, from analytic first derivatives when the
/// model supplies them.
struct FdStage<T: Scalar> {
    cost_grad: DVector<T>,
    cost_hess: DMatrix<T>,
    jac: DMatrix<T>,
    dyn_hess: Option<Vec<DMatrix<T>>>,
}

fn fd_stage<T: Scalar>(game: &GameDefinition<T>, t: usize, z: &DVector<T>, with_curvature: bool) -> FdStage<T> {
    let n = game.state_dim();
    let m = game.control_dims();
    let model = game.model();
    let cost = |z: &DVector<T>| {
        let (x, a, b) = split_joint(z, n, m);
        model.stage_cost(t, &x, &a, &b)
    };
    let dynamics = |z: &DVector<T>| {
        let (x, a, b) = split_joint(z, n, m);
        model.dynamics(t, &x, &a, &b)
    };
    let cost_grad = fd_gradient(cost, z);

    let (x, a, b) = split_joint(z, n, m);
    let analytic_grad = model.stage_cost_gradient(t, &x, &a, &b).is_some();
    let cost_hess = if analytic_grad {
        fd_jacobian(
            |z: &DVector<T>| {
                let (x, a, b) = split_joint(z, n, m);
                model.stage_cost_gradient(t, &x, &a, &b).expect("gradient hook is pure")
            },
            z,
        )
    } else {
        fd_hessian(cost, z)
    };
    let jac = fd_jacobian(dynamics, z);

    let dyn_hess = with_curvature.then(|| {
        if model.dynamics_jacobians(t, &x, &a, &b).is_none() {
            return fd_hessians(dynamics, z).into_iter().map(symmetrize).collect();
        }
        let jac_fn = |z: &DVector<T>| -> DMatrix<T> {
            let (x, a, b) = split_joint(z, n, m);
            match model.dynamics_jacobians(t, &x, &a, &b) {
                Some(j) => {
                    let sd = StageDerivatives {
                        stage: t,
                        state_dim: n,
                        control_dims: m,
                        cost_grad: DVector::zeros(0),
                        cost_hess: DMatrix::zeros(0, 0),
                        a: j.a,
                        b1: j.b1,
                        b2: j.b2,
                        dynamics_hessians: None,
                    };
                    sd.jacobian()
                }
                None => fd_jacobian(dynamics, z),
            }
        };
        let step = fd_step(z);
        (0..n)
            .map(|k| {
                let row_k = |z: &DVector<T>| jac_fn(z).row(k).transpose();
                symmetrize(fd_jacobian_with_step(row_k, z, step))
            })
            .collect()
    });

    FdStage { cost_grad, cost_hess: symmetrize(cost_hess), jac, dyn_hess }
}

/// Derivatives of stage `t` at an arbitrary point (not necessarily on a rollout).
pub fn stage_derivatives_at<T: Scalar>(
    game: &GameDefinition<T>,
    t: usize,
    x: &DVector<T>,
    u1: &DVector<T>,
    u2: &DVector<T>,
    with_curvature: bool,
) -> Result<StageDerivatives<T>> {
    let n = game.state_dim();
    let m = game.control_dims();
    let model = game.model();
    let z = join(x, u1, u2);

    let grad = model.stage_cost_gradient(t, x, u1, u2);
    let hess = model.stage_cost_hessian(t, x, u1, u2);
    let jacs = model.dynamics_jacobians(t, x, u1, u2);
    let dyn_hess = if with_curvature { model.dynamics_hessians(t, x, u1, u2) } else { None };
    let need_fd = grad.is_none() || hess.is_none() || jacs.is_none() || (with_curvature && dyn_hess.is_none());
    let fd = need_fd.then(|| fd_stage(game, t, &z, with_curvature && dyn_hess.is_none()));

    let cost_grad = grad.unwrap_or_else(|| fd.as_ref().unwrap().cost_grad.clone());
    let cost_hess = hess.unwrap_or_else(|| fd.as_ref().unwrap().cost_hess.clone());
    let (a, b1, b2) = match jacs {
        Some(j) => (j.a, j.b1, j.b2),
        None => {
            let jac = &fd.as_ref().unwrap().jac;
            (
                jac.columns(0, n).into_owned(),
                jac.columns(n, m[0]).into_owned(),
                jac.columns(n + m[0], m[1]).into_owned(),
            )
        }
    };
    let dynamics_hessians = if with_curvature {
        Some(dyn_hess.unwrap_or_else(|| fd.as_ref().unwrap().dyn_hess.clone().unwrap()))
    } else {
        None
    };

    let d = n + m[0] + m[1];
    if cost_grad.len() != d || cost_hess.shape() != (d, d) || a.shape() != (n, n) || b1.shape() != (n, m[0]) || b2.shape() != (n, m[1]) {
        return Err(GameError::Input(format!("derivative hook at stage {t} returned wrong shape")));
    }
    check_finite_vec(&cost_grad, t, "cost gradient")?;
    check_finite_mat(&cost_hess, t, "cost Hessian")?;
    check_finite_mat(&a, t, "dynamics Jacobian A")?;
    check_finite_mat(&b1, t, "dynamics Jacobian B1")?;
    check_finite_mat(&b2, t, "dynamics Jacobian B2")?;
    if let Some(hs) = &dynamics_hessians {
        for h in hs {
            check_finite_mat(h, t, "dynamics Hessian")?;
        }
    }

    Ok(StageDerivatives {
        stage: t,
        state_dim: n,
        control_dims: m,
        cost_grad,
        cost_hess,
        a,
        b1,
        b2,
        dynamics_hessians,
    })
}

pub fn terminal_derivatives_at<T: Scalar>(game: &GameDefinition<T>, x: &DVector<T>) -> Result<TerminalDerivatives<T>> {
    let model = game.model();
    let stage = game.horizon() + 1;
    let grad = match model.terminal_cost_gradient(x) {
        Some(g) => g,
        None => fd_gradient(|x: &DVector<T>| model.terminal_cost(x), x),
    };
    let hess = match model.terminal_cost_hessian(x) {
        Some(h) => h,
        None => symmetrize(terminal_fd_hessian(game, x)),
    };
    check_finite_vec(&grad, stage, "terminal gradient")?;
    check_finite_mat(&hess, stage, "terminal Hessian")?;
    Ok(TerminalDerivatives { grad, hess })
}

fn terminal_fd_hessian<T: Scalar>(game: &GameDefinition<T>, x: &DVector<T>) -> DMatrix<T> {
    let model = game.model();
    if model.terminal_cost_gradient(x).is_some() {
        fd_jacobian(|x: &DVector<T>| model.terminal_cost_gradient(x).expect("gradient hook is pure"), x)
    } else {
        fd_hessian(|y: &DVector<T>| model.terminal_cost(y), x)
    }
}

/// Evaluates all stage and terminal derivatives along `traj`.
pub fn evaluate_derivatives<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    with_dynamics_curvature: bool,
) -> Result<(Vec<StageDerivatives<T>>, TerminalDerivatives<T>)> {
    traj.check_dims(game)?;
    let k = game.horizon();
    let stages = (1..=k)
        .map(|t| {
            stage_derivatives_at(
                game,
                t,
                traj.state(t),
                traj.control(Agent::One, t),
                traj.control(Agent::Two, t),
                with_dynamics_curvature,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let terminal = terminal_derivatives_at(game, traj.state(k + 1))?;
    Ok((stages, terminal))
}

/// Maximum relative error of one derivative block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockError {
    pub stage: usize,
    pub block: String,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdAuditReport {
    pub rel_tol: f64,
    pub max_rel_error: f64,
    pub blocks: Vec<BlockError>,
    pub pass: bool,
}

impl FdAuditReport {
    pub fn failing_blocks(&self) -> impl Iterator<Item = &BlockError> {
        self.blocks.iter().filter(|b| !b.pass)
    }
}

/// `‖a − f‖_max / max(1, ‖f‖_max)`.
fn rel_error<T: Scalar>(analytic: &DMatrix<T>, reference: &DMatrix<T>) -> f64 {
    if analytic.shape() != reference.shape() {
        return f64::INFINITY;
    }
    let diff = (analytic - reference).amax().as_f64();
    diff / reference.amax().as_f64().max(1.0)
}

fn as_col<T: Scalar>(v: &DVector<T>) -> DMatrix<T> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// Compares supplied derivatives against central finite differences, block by block.
pub fn finite_difference_audit<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    analytic: &(Vec<StageDerivatives<T>>, TerminalDerivatives<T>),
    rel_tol: f64,
) -> Result<FdAuditReport> {
    traj.check_dims(game)?;
    let (stages, terminal) = analytic;
    if stages.len() != game.horizon() {
        return Err(GameError::Input("one derivative set per stage required".into()));
    }
    let mut blocks = Vec::new();
    let mut push = |stage: usize, block: &str, err: f64| {
        blocks.push(BlockError { stage, block: block.into(), max_rel_error: err, pass: err <= rel_tol });
    };
    for sd in stages {
        let t = sd.stage;
        let z = join(traj.state(t), traj.control(Agent::One, t), traj.control(Agent::Two, t));
        let fd = fd_stage(game, t, &z, sd.dynamics_hessians.is_some());
        let n = sd.state_dim;
        let m = sd.control_dims;
        push(t, "cost_gradient", rel_error(&as_col(&sd.cost_grad), &as_col(&fd.cost_grad)));
        push(t, "cost_hessian", rel_error(&sd.cost_hess, &fd.cost_hess));
        push(t, "A", rel_error(&sd.a, &fd.jac.columns(0, n).into_owned()));
        push(t, "B1", rel_error(&sd.b1, &fd.jac.columns(n, m[0]).into_owned()));
        push(t, "B2", rel_error(&sd.b2, &fd.jac.columns(n + m[0], m[1]).into_owned()));
        if let (Some(hs), Some(fhs)) = (&sd.dynamics_hessians, &fd.dyn_hess) {
            let err = hs.iter().zip(fhs).map(|(h, f)| rel_error(h, f)).fold(0.0, f64::max);
            push(t, "dynamics_hessian", err);
        }
    }
    let t_end = game.horizon() + 1;
    let x_end = traj.state(t_end);
    let model = game.model();
    let fd_grad = fd_gradient(|x: &DVector<T>| model.terminal_cost(x), x_end);
    push(t_end, "terminal_gradient", rel_error(&as_col(&terminal.grad), &as_col(&fd_grad)));
    let fd_hess = symmetrize(terminal_fd_hessian(game, x_end));
    push(t_end, "terminal_hessian", rel_error(&terminal.hess, &fd_hess));

    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    let pass = blocks.iter().all(|b| b.pass);
    Ok(FdAuditReport { rel_tol, max_rel_error, blocks, pass })
}

/// Hessian over `(x_t, u¹_t, u²_t)` of agent `i`'s stage Lagrangian
/// `σ_i ℓ_t − λᵀ(x_{t+1} − f_t) − ψᵀ(u^{-i} − π^{-i}(x))`.
///
/// `x_{t+1}` enters linearly and the policies are affine, so only `σ_i ∇²ℓ_t`
/// and, when requested, the dynamics curvature `∇²(λᵀ f_t)` contribute. `ψ` is
/// accepted for interface symmetry between the open-loop and feedback forms.
pub fn stage_lagrangian_hessian<T: Scalar>(
    agent: Agent,
    sd: &StageDerivatives<T>,
    lambda: &DVector<T>,
    _psi: Option<&DVector<T>>,
    include_dynamics_curvature: bool,
) -> Result<DMatrix<T>> {
    let mut h = &sd.cost_hess * agent.sign::<T>();
    if include_dynamics_curvature {
        let curv = sd.curvature_contraction(lambda).ok_or_else(|| {
            GameError::Configuration(format!("stage {}: dynamics curvature requested but not evaluated", sd.stage))
        })?;
        h += curv;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{rollout, CallbackModel};
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn quadratic_gradient_and_hessian() {
        let f = |x: &DVector<f64>| x.dot(x);
        let g = fd_gradient(f, &v(&[1.0, 2.0]));
        assert!((g - v(&[2.0, 4.0])).amax() < 1e-8);
        let h = fd_hessian(f, &v(&[1.0, 2.0]));
        assert!((h - DMatrix::identity(2, 2) * 2.0).amax() < 1e-7);
    }

    #[test]
    fn affine_dynamics_have_identity_jacobians_and_no_curvature() {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| x + u1 + u2,
            |_, x: &DVector<f64>, _: &DVector<f64>, _: &DVector<f64>| x.dot(x),
            |_: &DVector<f64>| 0.0,
        );
        let game = GameDefinition::new(1, 2, [2, 2], v(&[1.0, 2.0]), Arc::new(model)).unwrap();
        let traj = rollout(&game, &[v(&[0.5, -0.5])], &[v(&[0.25, 0.0])]).unwrap();
        let (stages, _) = evaluate_derivatives(&game, &traj, true).unwrap();
        let sd = &stages[0];
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!((&sd.a - &eye).amax() < 1e-9);
        assert!((&sd.b1 - &eye).amax() < 1e-9);
        assert!((&sd.b2 - &eye).amax() < 1e-9);
        let curv = sd.curvature_contraction(&v(&[3.0, -7.0])).unwrap();
        assert!(curv.amax() < 1e-6);
        assert!((sd.grad_x(Agent::One) - v(&[2.0, 4.0])).amax() < 1e-8);
        assert!((sd.grad_x(Agent::Two) + v(&[2.0, 4.0])).amax() < 1e-8);
    }

    #[test]
    fn lagrangian_hessian_requires_curvature_when_flagged() {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| x + u1 + u2,
            |_, _: &DVector<f64>, u1: &DVector<f64>, _: &DVector<f64>| u1[0] * u1[0],
            |_: &DVector<f64>| 0.0,
        );
        let game = GameDefinition::new(1, 1, [1, 1], v(&[1.0]), Arc::new(model)).unwrap();
        let traj = rollout(&game, &[v(&[0.0])], &[v(&[0.0])]).unwrap();
        let (stages, _) = evaluate_derivatives(&game, &traj, false).unwrap();
        let err = stage_lagrangian_hessian(Agent::One, &stages[0], &v(&[1.0]), None, true).unwrap_err();
        assert!(matches!(err, GameError::Configuration(_)));
        let h1 = stage_lagrangian_hessian(Agent::One, &stages[0], &v(&[1.0]), None, false).unwrap();
        let h2 = stage_lagrangian_hessian(Agent::Two, &stages[0], &v(&[-1.0]), None, false).unwrap();
        assert_eq!(h1, -h2);
    }

    #[test]
    fn audit_of_same_path_is_exact_and_catches_corruption() {
        let model = CallbackModel::new(
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| {
                v(&[x[0] + x[1].sin() * u1[0], x[1] + u2[0] * x[0]])
            },
            |_, x: &DVector<f64>, u1: &DVector<f64>, u2: &DVector<f64>| x[0] * x[1] + u1[0].powi(2) - u2[0].powi(2),
            |x: &DVector<f64>| x.dot(x),
        );
        let game = GameDefinition::new(2, 2, [1, 1], v(&[0.3, -0.4]), Arc::new(model)).unwrap();
        let traj = rollout(&game, &[v(&[0.2]), v(&[0.1])], &[v(&[-0.3]), v(&[0.5])]).unwrap();
        let mut derivs = evaluate_derivatives(&game, &traj, true).unwrap();
        let report = finite_difference_audit(&game, &traj, &derivs, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.pass);

        derivs.0[1].a[(0, 1)] += 0.1;
        let report = finite_difference_audit(&game, &traj, &derivs, 1e-5).unwrap();
        assert!(!report.pass);
        let failing: Vec<_> = report.failing_blocks().collect();
        assert_eq!(failing.len(), 1);
        assert_eq!((failing[0].stage, failing[0].block.as_str()), (2, "A"));
    }
}
