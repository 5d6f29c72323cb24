use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::derivatives::evaluate_derivatives;
use crate::error::{input_err, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::policy::AffinePolicySet;
use crate::scalar::Scalar;
use crate::verify::first_order::{recover_fb_multipliers, Structure};

/// Default threshold on `‖ψ‖∞` below which the policy-response constraint is
/// treated as weakly active.
pub const DEFAULT_WEAK_ACTIVE_TOL: f64 = 1e-6;

/// Treatment of the constraint `d_{u^{-i}_s} = ∇_xπ^{-i}_s d_{x_s}` in a feedback cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyResponse {
    /// Drop the constraint iff it is weakly active (`‖ψ^i‖∞ ≤ weak_active_tol`).
    #[default]
    Auto,
    Keep,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOptions {
    pub weak_active_tol: f64,
    pub response: PolicyResponse,
    /// First stage of the feedback subproblem; the open-loop cone always starts at 1.
    pub start_stage: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        Self { weak_active_tol: DEFAULT_WEAK_ACTIVE_TOL, response: PolicyResponse::Auto, start_stage: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Response<T: Scalar> {
    /// `d_{u^{-i}} ≡ 0`.
    Fixed,
    /// `d_{u^{-i}_s} = Π_s d_{x_s}` after the start stage.
    Policy(Vec<DMatrix<T>>),
    /// Unconstrained after the start stage.
    Free,
}

/// Linear constraints defining a critical cone, over the layout
/// `[d_{u¹_t}, d_{u²_t}, d_{x_{t+1}}]` for `t = 1 … K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraints<T: Scalar> {
    pub agent: Agent,
    pub start_stage: usize,
    state_dim: usize,
    control_dims: [usize; 2],
    jacobians: Vec<[DMatrix<T>; 3]>,
    response: Response<T>,
}

impl<T: Scalar> ConeConstraints<T> {
    fn width(&self) -> usize {
        self.state_dim + self.control_dims[0] + self.control_dims[1]
    }

    fn u_offset(&self, agent: Agent, t: usize) -> usize {
        (t - 1) * self.width() + if agent == Agent::Two { self.control_dims[0] } else { 0 }
    }

    fn x_offset(&self, t: usize) -> usize {
        // x_{t+1} sits at the end of block t.
        (t - 1) * self.width() + self.control_dims[0] + self.control_dims[1]
    }

    fn x(&self, d: &DVector<T>, t: usize) -> DVector<T> {
        if t <= self.start_stage {
            DVector::zeros(self.state_dim)
        } else {
            d.rows(self.x_offset(t - 1), self.state_dim).into_owned()
        }
    }

    fn u(&self, d: &DVector<T>, agent: Agent, t: usize) -> DVector<T> {
        d.rows(self.u_offset(agent, t), self.control_dims[agent.index()]).into_owned()
    }

    /// Max-norm violation of the constraints by direction `d`.
    pub fn residual(&self, d: &DVector<T>) -> T {
        let k = self.jacobians.len();
        let mut worst = T::zero();
        let w = self.width();
        if self.start_stage > 1 {
            worst = worst.max_of(d.rows(0, (self.start_stage - 1) * w).amax());
        }
        let other = self.agent.other();
        for t in self.start_stage..=k {
            let [a, b1, b2] = &self.jacobians[t - 1];
            let dx = self.x(d, t);
            let next = d.rows(self.x_offset(t), self.state_dim);
            let pred = a * &dx + b1 * self.u(d, Agent::One, t) + b2 * self.u(d, Agent::Two, t);
            worst = worst.max_of((next - pred).amax());
            let du = self.u(d, other, t);
            let viol = match (&self.response, t == self.start_stage) {
                (_, true) | (Response::Fixed, _) => du.amax(),
                (Response::Policy(g), false) => (du - &g[t - 1] * &dx).amax(),
                (Response::Free, false) => T::zero(),
            };
            worst = worst.max_of(viol);
        }
        worst
    }
}

/// One free coordinate of a cone basis: a control component of some agent at some stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeCoordinate {
    pub stage: usize,
    pub agent: Agent,
    pub index: usize,
}

/// Basis of a critical cone built from unit control impulses propagated by
/// the linearized dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalConeBasis<T: Scalar> {
    pub structure: Structure,
    pub agent: Agent,
    pub start_stage: usize,
    /// Whether the policy-response constraint was dropped (feedback only).
    pub policy_response_dropped: bool,
    pub free_coordinates: Vec<FreeCoordinate>,
    /// Columns over the layout `[d_{u¹_t}, d_{u²_t}, d_{x_{t+1}}]`, `t = 1 … K`.
    pub basis: DMatrix<T>,
    pub constraint_residual: T,
    /// Smallest singular value of the column-normalized basis.
    pub min_singular_value: T,
    pub constraints: ConeConstraints<T>,
}

impl<T: Scalar> CriticalConeBasis<T> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn impulse_column<T: Scalar>(c: &ConeConstraints<T>, coord: FreeCoordinate) -> DVector<T> {
    let k = c.jacobians.len();
    let mut d = DVector::zeros(k * c.width());
    let other = c.agent.other();
    let mut dx = DVector::zeros(c.state_dim);
    for t in c.start_stage..=k {
        let mut u = [DVector::zeros(c.control_dims[0]), DVector::zeros(c.control_dims[1])];
        if coord.stage == t {
            u[coord.agent.index()][coord.index] = T::one();
        }
        if t > c.start_stage {
            if let Response::Policy(g) = &c.response {
                u[other.index()] = &g[t - 1] * &dx;
            }
        }
        let [a, b1, b2] = &c.jacobians[t - 1];
        dx = a * &dx + b1 * &u[0] + b2 * &u[1];
        for ag in Agent::BOTH {
            d.rows_mut(c.u_offset(ag, t), c.control_dims[ag.index()]).copy_from(&u[ag.index()]);
        }
        d.rows_mut(c.x_offset(t), c.state_dim).copy_from(&dx);
    }
    d
}

/// Critical cone of `agent`'s problem along `traj`.
///
/// The open-loop cone holds the opponent's controls fixed, so its dimension is
/// `K m_i`. The feedback cone is that of the subproblem starting at
/// `opts.start_stage`: the opponent's control at the start stage is fixed and
/// later ones either follow the opponent's policy gains or, when the response
/// constraint is dropped, are free.
pub fn build_critical_cone<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    structure: Structure,
    agent: Agent,
    policies: Option<&[AffinePolicySet<T>; 2]>,
    multipliers: Option<&MultiplierSet<T>>,
    opts: &ConeOptions,
) -> Result<CriticalConeBasis<T>> {
    let k = game.horizon();
    if opts.start_stage < 1 || opts.start_stage > k {
        return Err(input_err(format!("start stage {} outside 1..={k}", opts.start_stage)));
    }
    if structure == Structure::OpenLoop && opts.start_stage != 1 {
        return Err(input_err("the open-loop cone starts at stage 1"));
    }
    let (sds, _) = evaluate_derivatives(game, traj, false)?;
    let jacobians = sds.iter().map(|sd| [sd.a.clone(), sd.b1.clone(), sd.b2.clone()]).collect();
    let other = agent.other();
    let (response, dropped) = match structure {
        Structure::OpenLoop => (Response::Fixed, false),
        Structure::Feedback => {
            let pol = policies.ok_or_else(|| input_err("feedback cone needs the policies"))?;
            let drop = match opts.response {
                PolicyResponse::Keep => false,
                PolicyResponse::Drop => true,
                PolicyResponse::Auto => {
                    let recovered;
                    let mult = match multipliers {
                        Some(m) if m.has_psi() => m,
                        _ => {
                            recovered = recover_fb_multipliers(game, traj, pol)?;
                            &recovered
                        }
                    };
                    let psi = (opts.start_stage + 1..=k).fold(T::zero(), |w, s| w.max_of(mult.psi(agent, s).map_or(T::zero(), |p| p.amax())));
                    psi.as_f64() <= opts.weak_active_tol
                }
            };
            if drop {
                (Response::Free, true)
            } else {
                (Response::Policy((1..=k).map(|t| pol[other.index()].gain(t).clone()).collect()), false)
            }
        }
    };
    let constraints = ConeConstraints {
        agent,
        start_stage: opts.start_stage,
        state_dim: game.state_dim(),
        control_dims: game.control_dims(),
        jacobians,
        response,
    };

    let mut free = Vec::new();
    for t in opts.start_stage..=k {
        free.extend((0..game.control_dim(agent)).map(|index| FreeCoordinate { stage: t, agent, index }));
        if dropped && t > opts.start_stage {
            free.extend((0..game.control_dim(other)).map(|index| FreeCoordinate { stage: t, agent: other, index }));
        }
    }
    let cols: Vec<DVector<T>> = free.iter().map(|&c| impulse_column(&constraints, c)).collect();
    let rows = k * constraints.width();
    let basis = if cols.is_empty() { DMatrix::zeros(rows, 0) } else { DMatrix::from_columns(&cols) };
    let constraint_residual = cols.iter().fold(T::zero(), |w, c| w.max_of(constraints.residual(c)));
    let min_singular_value = if cols.is_empty() {
        T::one()
    } else {
        let normalized = DMatrix::from_columns(&cols.iter().map(|c| c / c.norm()).collect::<Vec<_>>());
        normalized.singular_values().min()
    };
    Ok(CriticalConeBasis {
        structure,
        agent,
        start_stage: opts.start_stage,
        policy_response_dropped: dropped,
        free_coordinates: free,
        basis,
        constraint_residual,
        min_singular_value,
        constraints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContainmentResult {
    pub contained: bool,
    pub max_lift_residual: f64,
}

/// Checks that every open-loop cone direction, lifted with `d_{u^{-i}} = 0`,
/// satisfies the feedback cone's constraints. The layout already carries the
/// opponent's coordinates, which the open-loop basis holds at zero, so the lift
/// is the identity.
pub fn cone_containment_check<T: Scalar>(ol_cone: &CriticalConeBasis<T>, fb_cone: &CriticalConeBasis<T>, tol: f64) -> Result<ContainmentResult> {
    if ol_cone.structure != Structure::OpenLoop || fb_cone.structure != Structure::Feedback {
        return Err(input_err("containment compares an open-loop cone with a feedback cone"));
    }
    if ol_cone.agent != fb_cone.agent || ol_cone.basis.nrows() != fb_cone.basis.nrows() {
        return Err(input_err("cones belong to different agents or games"));
    }
    let worst = ol_cone
        .basis
        .column_iter()
        .fold(T::zero(), |w, c| w.max_of(fb_cone.constraints.residual(&c.into_owned())))
        .as_f64();
    Ok(ContainmentResult { contained: worst <= tol, max_lift_residual: worst })
}
