use nalgebra::{DMatrix, DVector};

use crate::derivatives::join;
use crate::game::{DynamicsJacobians, GameModel};
use crate::lq::{LqStage, ValueQuadratic};
use crate::scalar::{lit, Scalar};

/// Time-invariant LQ game with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LqGameModel<T: Scalar> {
    pub stage: LqStage<T>,
    pub terminal: ValueQuadratic<T>,
}

impl<T: Scalar> LqGameModel<T> {
    /// The LQ stage sequence and terminal value, as used by the LQ kernel.
    pub fn stages(&self, horizon: usize) -> (Vec<LqStage<T>>, ValueQuadratic<T>) {
        (vec![self.stage.clone(); horizon], self.terminal.clone())
    }
}

impl<T: Scalar> GameModel<T> for LqGameModel<T> {
    fn dynamics(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> DVector<T> {
        let s = &self.stage;
        &s.a * x + &s.b1 * u1 + &s.b2 * u2 + &s.c
    }

    fn stage_cost(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> T {
        let z = join(x, u1, u2);
        (&self.stage.h * &z).dot(&z) * lit::<T>(0.5) + self.stage.g.dot(&z) + self.stage.offset
    }

    fn terminal_cost(&self, x: &DVector<T>) -> T {
        self.terminal.eval(x)
    }

    fn dynamics_jacobians(&self, _t: usize, _x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<DynamicsJacobians<T>> {
        Some(DynamicsJacobians { a: self.stage.a.clone(), b1: self.stage.b1.clone(), b2: self.stage.b2.clone() })
    }

    fn dynamics_hessians(&self, _t: usize, _x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<Vec<DMatrix<T>>> {
        let d = self.stage.h.nrows();
        Some(vec![DMatrix::zeros(d, d); self.stage.a.nrows()])
    }

    fn stage_cost_gradient(&self, _t: usize, x: &DVector<T>, u1: &DVector<T>, u2: &DVector<T>) -> Option<DVector<T>> {
        Some(&self.stage.h * join(x, u1, u2) + &self.stage.g)
    }

    fn stage_cost_hessian(&self, _t: usize, _x: &DVector<T>, _u1: &DVector<T>, _u2: &DVector<T>) -> Option<DMatrix<T>> {
        Some(self.stage.h.clone())
    }

    fn terminal_cost_gradient(&self, x: &DVector<T>) -> Option<DVector<T>> {
        Some(&self.terminal.hess * x + &self.terminal.grad)
    }

    fn terminal_cost_hessian(&self, _x: &DVector<T>) -> Option<DMatrix<T>> {
        Some(self.terminal.hess.clone())
    }
}
