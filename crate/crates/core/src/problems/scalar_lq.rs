use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lq_model::LqGameModel;
use super::{positive, nonnegative};
use crate::error::{input_err, Result};
use crate::game::GameDefinition;
use crate::lq::{LqStage, ValueQuadratic};
use crate::scalar::{lit, Scalar};

/// `x_{t+1} = x_t + u¹_t + u²_t`, `ℓ_t = r1 (u¹)² − r2 (u²)²`, `ℓ_{K+1} = q x²`.
///
/// The defaults give the one-stage game with saddle `u¹ = −4/7`, `u² = 1/7`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarLqParams {
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
    pub horizon: usize,
    pub x1: f64,
}

impl Default for ScalarLqParams {
    fn default() -> Self {
        Self { q: 1.0, r1: 1.0, r2: 4.0, horizon: 1, x1: 1.0 }
    }
}

impl ScalarLqParams {
    pub fn validate(&self) -> Result<()> {
        nonnegative("q", self.q)?;
        positive("r1", self.r1)?;
        positive("r2", self.r2)?;
        if self.horizon < 1 {
            return Err(input_err("horizon must be at least 1"));
        }
        if !self.x1.is_finite() {
            return Err(input_err("x1 must be finite"));
        }
        Ok(())
    }

    pub fn model<T: Scalar>(&self) -> LqGameModel<T> {
        let one = DMatrix::from_element(1, 1, T::one());
        let mut h = DMatrix::zeros(3, 3);
        h[(1, 1)] = lit::<T>(2.0 * self.r1);
        h[(2, 2)] = lit::<T>(-2.0 * self.r2);
        LqGameModel {
            stage: LqStage { a: one.clone(), b1: one.clone(), b2: one, c: DVector::zeros(1), h, g: DVector::zeros(3), offset: T::zero() },
            terminal: ValueQuadratic::new(DMatrix::from_element(1, 1, lit::<T>(2.0 * self.q)), DVector::zeros(1), T::zero()),
        }
    }
}

pub fn make_scalar_lq<T: Scalar>(p: &ScalarLqParams) -> Result<GameDefinition<T>> {
    p.validate()?;
    GameDefinition::new(p.horizon, 1, [1, 1], DVector::from_element(1, lit::<T>(p.x1)), Arc::new(p.model::<T>()))
}
