use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lq_model::LqGameModel;
use super::{nonnegative, positive};
use crate::error::{input_err, Result};
use crate::game::GameDefinition;
use crate::lq::{LqStage, ValueQuadratic};
use crate::scalar::{lit, Scalar};

/// Planar double integrators: the pursuer (agent one) and evader (agent two)
/// each control a 2-D acceleration.
///
/// State `[p¹, v¹, p², v²]` (each 2-D). Stage cost
/// `w_stage ‖p¹ − p²‖² + r1 ‖u¹‖² − r2 ‖u²‖²`, terminal `w_terminal ‖p¹ − p²‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorParams {
    pub dt: f64,
    pub horizon: usize,
    pub w_stage: f64,
    pub w_terminal: f64,
    pub r1: f64,
    pub r2: f64,
    pub x1: Vec<f64>,
}

impl Default for DoubleIntegratorParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            horizon: 20,
            w_stage: 1.0,
            w_terminal: 10.0,
            r1: 1.0,
            r2: 4.0,
            x1: vec![0.0, 0.0, 1.0, 0.0, 3.0, 2.0, 0.0, 0.5],
        }
    }
}

/// Blocks of the relative-position quadratic `‖E x‖²` with `E = [I 0 −I 0]`.
fn relative_position<T: Scalar>(w: f64) -> DMatrix<T> {
    let mut e = DMatrix::<T>::zeros(2, 8);
    for i in 0..2 {
        e[(i, i)] = T::one();
        e[(i, 4 + i)] = -T::one();
    }
    e.transpose() * e * lit::<T>(2.0 * w)
}

impl DoubleIntegratorParams {
    pub fn validate(&self) -> Result<()> {
        positive("dt", self.dt)?;
        nonnegative("w_stage", self.w_stage)?;
        nonnegative("w_terminal", self.w_terminal)?;
        positive("r1", self.r1)?;
        positive("r2", self.r2)?;
        if self.horizon < 1 {
            return Err(input_err("horizon must be at least 1"));
        }
        if self.x1.len() != 8 || self.x1.iter().any(|x| !x.is_finite()) {
            return Err(input_err("x1 must hold 8 finite entries"));
        }
        Ok(())
    }

    pub fn model<T: Scalar>(&self) -> LqGameModel<T> {
        let dt = self.dt;
        let mut a = DMatrix::<T>::identity(8, 8);
        let mut b = [DMatrix::<T>::zeros(8, 2), DMatrix::<T>::zeros(8, 2)];
        for (v, base) in [(0usize, 0usize), (1, 4)] {
            for i in 0..2 {
                a[(base + i, base + 2 + i)] = lit(dt);
                b[v][(base + i, i)] = lit(0.5 * dt * dt);
                b[v][(base + 2 + i, i)] = lit(dt);
            }
        }
        let mut h = DMatrix::<T>::zeros(12, 12);
        h.view_mut((0, 0), (8, 8)).copy_from(&relative_position::<T>(self.w_stage));
        for i in 0..2 {
            h[(8 + i, 8 + i)] = lit(2.0 * self.r1);
            h[(10 + i, 10 + i)] = lit(-2.0 * self.r2);
        }
        let [b1, b2] = b;
        LqGameModel {
            stage: LqStage { a, b1, b2, c: DVector::zeros(8), h, g: DVector::zeros(12), offset: T::zero() },
            terminal: ValueQuadratic::new(relative_position(self.w_terminal), DVector::zeros(8), T::zero()),
        }
    }
}

pub fn make_double_integrator_pursuit<T: Scalar>(p: &DoubleIntegratorParams) -> Result<GameDefinition<T>> {
    p.validate()?;
    let x1 = DVector::from_iterator(8, p.x1.iter().map(|&x| lit::<T>(x)));
    GameDefinition::new(p.horizon, 8, [2, 2], x1, Arc::new(p.model::<T>()))
}
