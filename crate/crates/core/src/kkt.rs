//! Stacked first-order systems of the open-loop equilibrium problem.
//!
//! Unknowns and equations are both ordered stage-major. For stage `t ∈ 1..=K`
//! the unknown block is
//!
//! ```text
//! x_{t+1} | u¹_t | u²_t | λ¹_t | λ²_t | [ν̲¹_t | ν̄¹_t | ν̲²_t | ν̄²_t]
//! ```
//!
//! and the equation block is
//!
//! ```text
//! agent 1: control stationarity of u¹_t, state stationarity of x_{t+1}
//! agent 2: control stationarity of u²_t, state stationarity of x_{t+1}
//! dynamics defect x_{t+1} − f_t
//! [complementarity rows for (u¹−a¹, ν̲¹), (b¹−u¹, ν̄¹), (u²−a², ν̲²), (b²−u², ν̄²)]
//! ```
//!
//! The state stationarity of `x_{t+1}` is `∇_xℓ^i_{t+1} + A_{t+1}ᵀλ^i_{t+1} − λ^i_t`
//! for `t < K` and the terminal condition `∇ℓ^i_{K+1} − λ^i_K` for `t = K`. The
//! bracketed parts exist only for bounded games. Since each equation block
//! touches only neighbouring stages, the Jacobian is block-banded.

use nalgebra::{DMatrix, DVector};

use crate::derivatives::{stage_derivatives_at, stage_lagrangian_hessian, terminal_derivatives_at, StageDerivatives, TerminalDerivatives};
use crate::error::Result;
use crate::game::{Agent, ControlBounds, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct KktLayout {
    pub k: usize,
    pub n: usize,
    pub m: [usize; 2],
    pub bounded: bool,
}

impl KktLayout {
    pub fn new<T: Scalar>(game: &GameDefinition<T>, bounded: bool) -> Self {
        Self { k: game.horizon(), n: game.state_dim(), m: game.control_dims(), bounded }
    }

    pub fn block(&self) -> usize {
        let base = 3 * self.n + self.m[0] + self.m[1];
        if self.bounded {
            base + 2 * (self.m[0] + self.m[1])
        } else {
            base
        }
    }

    pub fn dim(&self) -> usize {
        self.k * self.block()
    }

    fn start(&self, t: usize) -> usize {
        (t - 1) * self.block()
    }

    pub fn var_x(&self, t: usize) -> usize {
        self.start(t)
    }

    pub fn var_u(&self, agent: Agent, t: usize) -> usize {
        self.start(t) + self.n + if agent == Agent::Two { self.m[0] } else { 0 }
    }

    pub fn var_lambda(&self, agent: Agent, t: usize) -> usize {
        self.start(t) + self.n + self.m[0] + self.m[1] + agent.index() * self.n
    }

    pub fn var_nu(&self, agent: Agent, upper: bool, t: usize) -> usize {
        let base = self.start(t) + 3 * self.n + self.m[0] + self.m[1];
        let agent_off = if agent == Agent::Two { 2 * self.m[0] } else { 0 };
        base + agent_off + if upper { self.m[agent.index()] } else { 0 }
    }

    pub fn row_u(&self, agent: Agent, t: usize) -> usize {
        match agent {
            Agent::One => self.start(t),
            Agent::Two => self.start(t) + self.m[0] + self.n,
        }
    }

    pub fn row_x(&self, agent: Agent, t: usize) -> usize {
        self.row_u(agent, t) + self.m[agent.index()]
    }

    pub fn row_dyn(&self, t: usize) -> usize {
        self.start(t) + 2 * self.n + self.m[0] + self.m[1]
    }

    pub fn row_comp(&self, agent: Agent, upper: bool, t: usize) -> usize {
        self.var_nu(agent, upper, t)
    }
}

/// A primal-dual point of the open-loop system.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct KktIterate<T: Scalar> {
    /// `x_1 … x_{K+1}`; `x_1` is fixed to the initial state.
    pub states: Vec<DVector<T>>,
    pub u: [Vec<DVector<T>>; 2],
    pub lambda: [Vec<DVector<T>>; 2],
    /// `[agent][0 = lower, 1 = upper][t-1]`.
    pub nu: Option<[[Vec<DVector<T>>; 2]; 2]>,
}

impl<T: Scalar> KktIterate<T> {
    pub fn from_parts(traj: &Trajectory<T>, mult: &MultiplierSet<T>) -> Self {
        let k = traj.horizon();
        let nu = mult.has_bound_multipliers().then(|| {
            Agent::BOTH.map(|a| {
                [
                    (1..=k).map(|t| mult.nu_lower(a, t).unwrap().clone()).collect(),
                    (1..=k).map(|t| mult.nu_upper(a, t).unwrap().clone()).collect(),
                ]
            })
        });
        Self {
            states: traj.states().to_vec(),
            u: [traj.controls(Agent::One).to_vec(), traj.controls(Agent::Two).to_vec()],
            lambda: [mult.lambdas(Agent::One).to_vec(), mult.lambdas(Agent::Two).to_vec()],
            nu,
        }
    }

    pub fn trajectory(&self) -> Trajectory<T> {
        Trajectory::new(self.states.clone(), self.u[0].clone(), self.u[1].clone()).expect("iterate shapes are consistent")
    }

    pub fn multipliers(&self) -> MultiplierSet<T> {
        let m = MultiplierSet::new(self.lambda[0].clone(), self.lambda[1].clone()).expect("iterate shapes are consistent");
        match &self.nu {
            Some(nu) => {
                let clip = |s: &Vec<DVector<T>>| s.iter().map(|v| v.map(|x| x.max_of(T::zero()))).collect::<Vec<_>>();
                m.with_bound_multipliers([clip(&nu[0][0]), clip(&nu[1][0])], [clip(&nu[0][1]), clip(&nu[1][1])])
                    .expect("clipped multipliers are nonnegative")
            }
            None => m,
        }
    }

    pub fn pack(&self, layout: &KktLayout) -> DVector<T> {
        let mut z = DVector::zeros(layout.dim());
        for t in 1..=layout.k {
            z.rows_mut(layout.var_x(t), layout.n).copy_from(&self.states[t]);
            for a in Agent::BOTH {
                z.rows_mut(layout.var_u(a, t), layout.m[a.index()]).copy_from(&self.u[a.index()][t - 1]);
                z.rows_mut(layout.var_lambda(a, t), layout.n).copy_from(&self.lambda[a.index()][t - 1]);
                if let Some(nu) = &self.nu {
                    for (side, upper) in [(0, false), (1, true)] {
                        z.rows_mut(layout.var_nu(a, upper, t), layout.m[a.index()]).copy_from(&nu[a.index()][side][t - 1]);
                    }
                }
            }
        }
        z
    }

    pub fn unpack(&self, layout: &KktLayout, z: &DVector<T>) -> Self {
        let mut out = self.clone();
        for t in 1..=layout.k {
            out.states[t] = z.rows(layout.var_x(t), layout.n).into_owned();
            for a in Agent::BOTH {
                out.u[a.index()][t - 1] = z.rows(layout.var_u(a, t), layout.m[a.index()]).into_owned();
                out.lambda[a.index()][t - 1] = z.rows(layout.var_lambda(a, t), layout.n).into_owned();
                if let Some(nu) = &mut out.nu {
                    for (side, upper) in [(0, false), (1, true)] {
                        nu[a.index()][side][t - 1] = z.rows(layout.var_nu(a, upper, t), layout.m[a.index()]).into_owned();
                    }
                }
            }
        }
        out
    }
}

/// Derivatives and dynamics value of one stage at the iterate.
#[derive(Debug, Clone)]
pub(crate) struct StageEval<T: Scalar> {
    pub sd: StageDerivatives<T>,
    pub f: DVector<T>,
}

pub(crate) fn evaluate<T: Scalar>(
    game: &GameDefinition<T>,
    it: &KktIterate<T>,
    with_curvature: bool,
) -> Result<(Vec<StageEval<T>>, TerminalDerivatives<T>)> {
    let k = game.horizon();
    let mut evals = Vec::with_capacity(k);
    for t in 1..=k {
        let (x, u1, u2) = (&it.states[t - 1], &it.u[0][t - 1], &it.u[1][t - 1]);
        let sd = stage_derivatives_at(game, t, x, u1, u2, with_curvature)?;
        let f = game.step(t, x, u1, u2)?;
        evals.push(StageEval { sd, f });
    }
    let term = terminal_derivatives_at(game, &it.states[k])?;
    Ok((evals, term))
}

/// Smoothed Fischer–Burmeister function `a + b − √(a² + b² + 2μ)`.
pub(crate) fn fischer_burmeister<T: Scalar>(a: T, b: T, mu: T) -> T {
    a + b - (a * a + b * b + mu + mu).sqrt()
}

/// Partial derivatives of [`fischer_burmeister`]; at the kink of the unsmoothed
/// function the generalized element `(1 − 1/√2, 1 − 1/√2)` is returned.
pub(crate) fn fischer_burmeister_grad<T: Scalar>(a: T, b: T, mu: T) -> (T, T) {
    let s = (a * a + b * b + mu + mu).sqrt();
    if s <= T::zero() {
        let g = T::one() - lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
        return (g, g);
    }
    (T::one() - a / s, T::one() - b / s)
}

/// Residual rows of one stage, grouped by equation family.
#[derive(Debug, Clone)]
pub(crate) struct StageRows<T: Scalar> {
    /// `∇_{u^i}ℓ^i_t + B^iᵀλ^i_t [− ν̲ + ν̄]`.
    pub own_control: [DVector<T>; 2],
    /// State stationarity of `x_{t+1}` (terminal condition when `t = K`).
    pub state: [DVector<T>; 2],
    pub dynamics: DVector<T>,
    /// `[agent][lower, upper]` complementarity rows.
    pub complementarity: Option<[[DVector<T>; 2]; 2]>,
}

pub(crate) fn stage_rows<T: Scalar>(
    it: &KktIterate<T>,
    evals: &[StageEval<T>],
    term: &TerminalDerivatives<T>,
    bounds: Option<&ControlBounds<T>>,
    mu: T,
) -> Vec<StageRows<T>> {
    let k = evals.len();
    (1..=k)
        .map(|t| {
            let ev = &evals[t - 1];
            let own_control = Agent::BOTH.map(|a| {
                let lam = &it.lambda[a.index()][t - 1];
                let mut r = ev.sd.grad_u(a, a) + ev.sd.b(a).transpose() * lam;
                if let Some(nu) = &it.nu {
                    r += &nu[a.index()][1][t - 1];
                    r -= &nu[a.index()][0][t - 1];
                }
                r
            });
            let state = Agent::BOTH.map(|a| {
                let lam_t = &it.lambda[a.index()][t - 1];
                if t < k {
                    let next = &evals[t].sd;
                    next.grad_x(a) + next.a.transpose() * &it.lambda[a.index()][t] - lam_t
                } else {
                    &term.grad * a.sign::<T>() - lam_t
                }
            });
            let dynamics = &it.states[t] - &ev.f;
            let complementarity = match (&it.nu, bounds) {
                (Some(nu), Some(b)) => Some(Agent::BOTH.map(|a| {
                    let u = &it.u[a.index()][t - 1];
                    let lo = b.lower(a, t);
                    let hi = b.upper(a, t);
                    let nl = &nu[a.index()][0][t - 1];
                    let nh = &nu[a.index()][1][t - 1];
                    [
                        DVector::from_fn(u.len(), |j, _| fischer_burmeister(u[j] - lo[j], nl[j], mu)),
                        DVector::from_fn(u.len(), |j, _| fischer_burmeister(hi[j] - u[j], nh[j], mu)),
                    ]
                })),
                _ => None,
            };
            StageRows { own_control, state, dynamics, complementarity }
        })
        .collect()
}

pub(crate) fn residual<T: Scalar>(
    layout: &KktLayout,
    it: &KktIterate<T>,
    evals: &[StageEval<T>],
    term: &TerminalDerivatives<T>,
    bounds: Option<&ControlBounds<T>>,
    mu: T,
) -> DVector<T> {
    let rows = stage_rows(it, evals, term, bounds, mu);
    let mut r = DVector::zeros(layout.dim());
    for (i, sr) in rows.iter().enumerate() {
        let t = i + 1;
        for a in Agent::BOTH {
            r.rows_mut(layout.row_u(a, t), layout.m[a.index()]).copy_from(&sr.own_control[a.index()]);
            r.rows_mut(layout.row_x(a, t), layout.n).copy_from(&sr.state[a.index()]);
        }
        r.rows_mut(layout.row_dyn(t), layout.n).copy_from(&sr.dynamics);
        if layout.bounded {
            let comp = sr.complementarity.as_ref().expect("bounded layout needs bounds and bound multipliers");
            for a in Agent::BOTH {
                for (side, upper) in [(0, false), (1, true)] {
                    r.rows_mut(layout.row_comp(a, upper, t), layout.m[a.index()]).copy_from(&comp[a.index()][side]);
                }
            }
        }
    }
    r
}

fn add_block<T: Scalar>(j: &mut DMatrix<T>, row: usize, col: usize, block: &DMatrix<T>) {
    let mut view = j.view_mut((row, col), block.shape());
    view += block;
}

pub(crate) fn jacobian<T: Scalar>(
    layout: &KktLayout,
    it: &KktIterate<T>,
    evals: &[StageEval<T>],
    term: &TerminalDerivatives<T>,
    with_curvature: bool,
    bounds: Option<&ControlBounds<T>>,
    mu: T,
) -> Result<DMatrix<T>> {
    let (k, n) = (layout.k, layout.n);
    let dim = layout.dim();
    let mut j = DMatrix::zeros(dim, dim);
    let eye_n = DMatrix::<T>::identity(n, n);

    // Lagrangian Hessians per stage and agent, over (x_t, u¹_t, u²_t).
    let hess: Vec<[DMatrix<T>; 2]> = evals
        .iter()
        .enumerate()
        .map(|(i, ev)| -> Result<[DMatrix<T>; 2]> {
            Ok([
                stage_lagrangian_hessian(Agent::One, &ev.sd, &it.lambda[0][i], None, with_curvature)?,
                stage_lagrangian_hessian(Agent::Two, &ev.sd, &it.lambda[1][i], None, with_curvature)?,
            ])
        })
        .collect::<Result<_>>()?;

    for t in 1..=k {
        let ev = &evals[t - 1];
        let sd = &ev.sd;
        let xr = sd.x_range();
        for a in Agent::BOTH {
            let ai = a.index();
            let h = &hess[t - 1][ai];
            let ur = sd.u_range(a);
            let mi = layout.m[ai];

            // Control stationarity of u^a_t.
            let row = layout.row_u(a, t);
            if t >= 2 {
                add_block(&mut j, row, layout.var_x(t - 1), &h.view((ur.start, xr.start), (mi, n)).into_owned());
            }
            for b in Agent::BOTH {
                let vr = sd.u_range(b);
                add_block(&mut j, row, layout.var_u(b, t), &h.view((ur.start, vr.start), (mi, vr.len())).into_owned());
            }
            add_block(&mut j, row, layout.var_lambda(a, t), &sd.b(a).transpose());
            if layout.bounded {
                let eye_m = DMatrix::<T>::identity(mi, mi);
                add_block(&mut j, row, layout.var_nu(a, false, t), &(-&eye_m));
                add_block(&mut j, row, layout.var_nu(a, true, t), &eye_m);
            }

            // State stationarity of x_{t+1}.
            let row = layout.row_x(a, t);
            if t < k {
                let next = &evals[t].sd;
                let hn = &hess[t][ai];
                add_block(&mut j, row, layout.var_x(t), &hn.view((0, 0), (n, n)).into_owned());
                for b in Agent::BOTH {
                    let vr = next.u_range(b);
                    add_block(&mut j, row, layout.var_u(b, t + 1), &hn.view((0, vr.start), (n, vr.len())).into_owned());
                }
                add_block(&mut j, row, layout.var_lambda(a, t + 1), &next.a.transpose());
            } else {
                add_block(&mut j, row, layout.var_x(t), &(&term.hess * a.sign::<T>()));
            }
            add_block(&mut j, row, layout.var_lambda(a, t), &(-&eye_n));
        }

        // Dynamics defect.
        let row = layout.row_dyn(t);
        add_block(&mut j, row, layout.var_x(t), &eye_n);
        if t >= 2 {
            add_block(&mut j, row, layout.var_x(t - 1), &(-&sd.a));
        }
        add_block(&mut j, row, layout.var_u(Agent::One, t), &(-&sd.b1));
        add_block(&mut j, row, layout.var_u(Agent::Two, t), &(-&sd.b2));

        if layout.bounded {
            let (nu, b) = (it.nu.as_ref().expect("bounded iterate"), bounds.expect("bounded game"));
            for a in Agent::BOTH {
                let ai = a.index();
                let u = &it.u[ai][t - 1];
                for (side, upper) in [(0, false), (1, true)] {
                    let row = layout.row_comp(a, upper, t);
                    let nuv = &nu[ai][side][t - 1];
                    for c in 0..u.len() {
                        let slack = if upper { b.upper(a, t)[c] - u[c] } else { u[c] - b.lower(a, t)[c] };
                        let (da, db) = fischer_burmeister_grad(slack, nuv[c], mu);
                        let du = if upper { -da } else { da };
                        j[(row + c, layout.var_u(a, t) + c)] += du;
                        j[(row + c, layout.var_nu(a, upper, t) + c)] += db;
                    }
                }
            }
        }
    }
    Ok(j)
}
