use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{nonnegative, positive};
use crate::error::{input_err, Result};
use crate::game::{DynamicsJacobians, GameDefinition, GameModel};
use crate::scalar::{lit, Scalar};

/// Two unicycles, the pursuer (agent one) and the evader (agent two).
///
/// Each vehicle has state `(p_x, p_y, θ, v)` and controls `(ω, a)`:
/// `p' = p + dt·v·(cos θ, sin θ)`, `θ' = θ + dt·ω`, `v' = v + dt·a`.
/// Agent one's stage cost is
/// `w_distance ‖p¹ − p²‖² + r1 ‖u¹‖² − r2 ‖u²‖² + w_speed ((v¹/v_max)⁴ − (v²/v_max)⁴)`,
/// the last term softly limiting each vehicle's speed, and its terminal cost
/// `w_terminal ‖p¹ − p²‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnicycleParams {
    pub dt: f64,
    pub horizon: usize,
    pub w_distance: f64,
    pub w_terminal: f64,
    pub r1: f64,
    pub r2: f64,
    pub w_speed: f64,
    pub v_max: f64,
    pub x1: Vec<f64>,
}

impl Default for UnicycleParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 40,
            w_distance: 0.1,
            w_terminal: 1.0,
            r1: 0.5,
            r2: 5.0,
            w_speed: 0.1,
            v_max: 2.0,
            x1: vec![0.0, 0.0, 0.0, 1.0, 2.0, 1.0, std::f64::consts::FRAC_PI_2, 1.0],
        }
    }
}

impl UnicycleParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        nonnegative("w_distance", self.w_distance)?;
        nonnegative("w_terminal", self.w_terminal)?;
        positive("r1", self.r1)?;
        positive("r2", self.r2)?;
        nonnegative("w_speed", self.w_speed)?;
        positive("v_max", self.v_max)?;
        if self.horizon < 1 {
            return Err(input_err("horizon must be at least 1"));
        }
        if self.x1.len() != 8 || self.x1.iter().any(|x| !x.is_finite()) {
            return Err(input_err("x1 must hold 8 finite entries"));
        }
        Ok(())
    }
}

/// Analytic model of [`UnicycleParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnicycleModel<T: Scalar> {
    dt: T,
    w_distance: T,
    w_terminal: T,
    r: [T; 2],
    w_speed: T,
    v_max: T,
}

impl<T: Scalar> UnicycleModel<T> {
    pub fn new(p: &UnicycleParams) -> Self {
        Self {
            dt: lit(p.dt),
            w_distance: lit(p.w_distance),
            w_terminal: lit(p.w_terminal),
            r: [lit(p.r1), lit(p.r2)],
            w_speed: lit(p.w_speed),
            v_max: lit(p.v_max),
        }
    }

    fn delta(x: &DVector<T>) -> (T, T) {
        (x[0] - x[4], x[1] - x[5])
    }

    /// `∓ w_speed (v/v_max)⁴` and its first two derivatives in `v`, signed for vehicle `i`.
    fn speed_term(&self, v: T, i: usize) -> (T, T, T) {
        let s = if i == 0 { T::one() } else { -T::one() };
        let vm4 = self.v_max.powi(4);
        let w = self.w_speed * s / vm4;
        (w * v.powi(4), w * lit::<T>(4.0) * v.powi(3), w * lit::<T>(12.0) * v * v)
    }

    fn distance_grad(w: T, x: &DVector<T>, out: &mut DVector<T>) {
        let (dx, dy) = Self::delta(x);
        let two = lit::<T>(2.0) * w;
        out[0] += two * dx;
        out[1] += two * dy;
        out[4] -= two * dx;
        out[5] -= two * dy;
    }

    fn distance_hess(w: T, h: &mut DMatrix<T>) {
        let two = lit::<T>(2.0) * w;
        for i in 0..2 {
            h[(i, i)] += two;
            h[(4 + i, 4 + i)] += two;
            h[(i, 4 + i)] -= two;
            h[(4 + i, i)] -= two;
        }
    }
}

impl<T: Scalar> GameModel<T> for UnicycleModel<T> {
    fn dynamics(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> DVector<T> {
        let mut out = x.clone();
        for (b, u) in [(0usize, u1), (4, u2)] {
            let (th, v) = (x[b + 2], x[b + 3]);
            out[b] += self.dt * v * th.cos();
            out[b + 1] += self.dt * v * th.sin();
            out[b + 2] += self.dt * u[0];
            out[b + 3] += self.dt * u[1];
        }
        out
    }

    fn stage_cost(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> T {
        let (dx, dy) = Self::delta(x);
        self.w_distance * (dx * dx + dy * dy) + self.r[0] * u1.norm_squared() - self.r[1] * u2.norm_squared()
            + self.speed_term(x[3], 0).0
            + self.speed_term(x[7], 1).0
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        let (dx, dy) = Self::delta(x);
        self.w_terminal * (dx * dx + dy * dy)
    }

    fn dynamics_jacobians(&self, _t: usize, x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<DynamicsJacobians<T>> {
        let mut a = DMatrix::identity(8, 8);
        let mut b1 = DMatrix::zeros(8, 2);
        let mut b2 = DMatrix::zeros(8, 2);
        for (base, b) in [(0usize, &mut b1), (4, &mut b2)] {
            let (th, v) = (x[base + 2], x[base + 3]);
            a[(base, base + 2)] = -self.dt * v * th.sin();
            a[(base, base + 3)] = self.dt * th.cos();
            a[(base + 1, base + 2)] = self.dt * v * th.cos();
            a[(base + 1, base + 3)] = self.dt * th.sin();
            b[(base + 2, 0)] = self.dt;
            b[(base + 3, 1)] = self.dt;
        }
        Some(DynamicsJacobians { a, b1, b2 })
    }

    fn dynamics_hessians(&self, _t: usize, x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<Vec<DMatrix<T>>> {
        let mut hs = vec![DMatrix::zeros(12, 12); 8];
        for base in [0usize, 4] {
            let (th, v) = (x[base + 2], x[base + 3]);
            let (i, j) = (base + 2, base + 3);
            let hx = &mut hs[base];
            hx[(i, i)] = -self.dt * v * th.cos();
            hx[(i, j)] = -self.dt * th.sin();
            hx[(j, i)] = -self.dt * th.sin();
            let hy = &mut hs[base + 1];
            hy[(i, i)] = -self.dt * v * th.sin();
            hy[(i, j)] = self.dt * th.cos();
            hy[(j, i)] = self.dt * th.cos();
        }
        Some(hs)
    }

    fn stage_cost_gradient(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> Option<DVector<T>> {
        let mut g = DVector::zeros(12);
        Self::distance_grad(self.w_distance, x, &mut g);
        g[3] += self.speed_term(x[3], 0).1;
        g[7] += self.speed_term(x[7], 1).1;
        let two = lit::<T>(2.0);
        for k in 0..2 {
            g[8 + k] = two * self.r[0] * u1[k];
            g[10 + k] = -two * self.r[1] * u2[k];
        }
        Some(g)
    }

    fn stage_cost_hessian(&self, _t: usize, x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<DMatrix<T>> {
        let mut h = DMatrix::zeros(12, 12);
        Self::distance_hess(self.w_distance, &mut h);
        h[(3, 3)] += self.speed_term(x[3], 0).2;
        h[(7, 7)] += self.speed_term(x[7], 1).2;
        let two = lit::<T>(2.0);
        for k in 0..2 {
            h[(8 + k, 8 + k)] = two * self.r[0];
            h[(10 + k, 10 + k)] = -two * self.r[1];
        }
        Some(h)
    }

    fn terminal_cost_gradient(&self, x: &DVector<T>) -> Option<DVector<T>> {
        let mut g = DVector::zeros(8);
        Self::distance_grad(self.w_terminal, x, &mut g);
        Some(g)
    }

    fn terminal_cost_hessian(&self, _x: &DVector<T>) -> Option<DMatrix<T>> {
        let mut h = DMatrix::zeros(8, 8);
        Self::distance_hess(self.w_terminal, &mut h);
        Some(h)
    }
}

pub fn make_unicycle_pursuit<T: Scalar>(p: &UnicycleParams) -> Result<GameDefinition<T>> {
    p.validate()?;
    let x1 = DVector::from_iterator(8, p.x1.iter().map(|&x| lit::<T>(x)));
    GameDefinition::new(p.horizon, 8, [2, 2], x1, Arc::new(UnicycleModel::new(p)))
}
