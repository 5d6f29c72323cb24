//! Affine feedback policies `π_t(x) = ū_t + Π_t (x − x̄_t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::scalar::Scalar;

/// One stage of an affine feedback policy. The state gradient `∇_x π` is the
/// stored gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AffinePolicy<T: Scalar> {
    pub gain: DMatrix<T>,
    pub u_ref: DVector<T>,
    pub x_ref: DVector<T>,
}

impl<T: Scalar> AffinePolicy<T> {
    pub fn eval(&self, x: &DVector<T>) -> DVector<T> {
        &self.u_ref + &self.gain * (x - &self.x_ref)
    }

    pub fn gradient(&self) -> &DMatrix<T> {
        &self.gain
    }

    /// Same affine map expressed around a different reference state.
    pub fn reanchored(&self, x_ref: &DVector<T>) -> Self {
        Self {
            gain: self.gain.clone(),
            u_ref: self.eval(x_ref),
            x_ref: x_ref.clone(),
        }
    }
}

/// Per-stage affine policies of one agent over the full horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AffinePolicySet<T: Scalar> {
    pub agent: Agent,
    stages: Vec<AffinePolicy<T>>,
}

impl<T: Scalar> AffinePolicySet<T> {
    pub fn new(agent: Agent, stages: Vec<AffinePolicy<T>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(input_err("policy set must cover at least one stage"));
        }
        let (m, n) = stages[0].gain.shape();
        for (t, p) in stages.iter().enumerate() {
            if p.gain.shape() != (m, n) || p.u_ref.len() != m || p.x_ref.len() != n {
                return Err(input_err(format!("policy stage {} has inconsistent dimensions", t + 1)));
            }
        }
        Ok(Self { agent, stages })
    }

    /// Zero gains and zero offsets.
    pub fn zeros(agent: Agent, horizon: usize, control_dim: usize, state_dim: usize) -> Self {
        let stage = AffinePolicy {
            gain: DMatrix::zeros(control_dim, state_dim),
            u_ref: DVector::zeros(control_dim),
            x_ref: DVector::zeros(state_dim),
        };
        Self { agent, stages: vec![stage; horizon] }
    }

    /// Zero-gain policies whose offsets are `agent`'s controls in `traj`.
    pub fn open_loop(agent: Agent, traj: &Trajectory<T>) -> Self {
        let stages = (1..=traj.horizon())
            .map(|t| AffinePolicy {
                gain: DMatrix::zeros(traj.control(agent, t).len(), traj.state(t).len()),
                u_ref: traj.control(agent, t).clone(),
                x_ref: traj.state(t).clone(),
            })
            .collect();
        Self { agent, stages }
    }

    /// Policies with the given gains anchored at `traj`: `ū_t = u_t`, `x̄_t = x_t`.
    pub fn anchored(agent: Agent, traj: &Trajectory<T>, gains: Vec<DMatrix<T>>) -> Result<Self> {
        if gains.len() != traj.horizon() {
            return Err(input_err("one gain per stage required"));
        }
        let stages = gains
            .into_iter()
            .enumerate()
            .map(|(i, gain)| AffinePolicy {
                gain,
                u_ref: traj.control(agent, i + 1).clone(),
                x_ref: traj.state(i + 1).clone(),
            })
            .collect();
        Self::new(agent, stages)
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    /// Policy at stage `t ∈ 1..=K`.
    pub fn stage(&self, t: usize) -> &AffinePolicy<T> {
        &self.stages[t - 1]
    }

    pub fn stages(&self) -> &[AffinePolicy<T>] {
        &self.stages
    }

    pub fn gain(&self, t: usize) -> &DMatrix<T> {
        &self.stages[t - 1].gain
    }

    pub fn check_dims(&self, game: &GameDefinition<T>, agent: Agent) -> Result<()> {
        if self.agent != agent {
            return Err(input_err(format!("policy set belongs to agent {}, expected {agent}", self.agent)));
        }
        if self.horizon() != game.horizon() {
            return Err(input_err(format!(
                "agent {agent} policies cover {} stages, expected {}",
                self.horizon(),
                game.horizon()
            )));
        }
        let shape = (game.control_dim(agent), game.state_dim());
        if let Some(t) = self.stages.iter().position(|p| p.gain.shape() != shape) {
            return Err(input_err(format!("agent {agent} policy at stage {} has wrong shape", t + 1)));
        }
        Ok(())
    }

    /// Largest absolute gain entry over all stages.
    pub fn max_gain(&self) -> T {
        self.stages.iter().fold(T::zero(), |w, p| w.max_of(p.gain.amax()))
    }
}
