use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::game::{Agent, GameDefinition};
use crate::scalar::Scalar;

/// Lagrange multipliers of the equilibrium problems.
///
/// * `λ^i_t`, `t ∈ 1..=K`: costates of the dynamics constraints.
/// * `ψ^i_s`, `s ∈ 2..=K`: multipliers of the constraint forcing agent `−i` to play
///   its feedback policy (`ψ^i_s ∈ ℝ^{m_{−i}}`).
/// * `ν̲^i_t`, `ν̄^i_t`, `t ∈ 1..=K`: nonnegative control bound multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MultiplierSet<T: Scalar> {
    lambda: [Vec<DVector<T>>; 2],
    psi: Option<[Vec<DVector<T>>; 2]>,
    nu_lower: Option<[Vec<DVector<T>>; 2]>,
    nu_upper: Option<[Vec<DVector<T>>; 2]>,
}

impl<T: Scalar> MultiplierSet<T> {
    pub fn new(lambda1: Vec<DVector<T>>, lambda2: Vec<DVector<T>>) -> Result<Self> {
        if lambda1.is_empty() || lambda1.len() != lambda2.len() {
            return Err(input_err("costate sequences must be nonempty and of equal length"));
        }
        Ok(Self { lambda: [lambda1, lambda2], psi: None, nu_lower: None, nu_upper: None })
    }

    /// Attaches `ψ` for stages `2..=K` (each sequence has `K − 1` entries).
    pub fn with_psi(mut self, psi1: Vec<DVector<T>>, psi2: Vec<DVector<T>>) -> Result<Self> {
        let k = self.horizon();
        if psi1.len() + 1 != k || psi2.len() + 1 != k {
            return Err(input_err(format!("psi sequences must have {} entries", k - 1)));
        }
        self.psi = Some([psi1, psi2]);
        Ok(self)
    }

    /// Attaches bound multipliers. Indexing `[agent]` then stage.
    pub fn with_bound_multipliers(mut self, lower: [Vec<DVector<T>>; 2], upper: [Vec<DVector<T>>; 2]) -> Result<Self> {
        let k = self.horizon();
        if lower.iter().chain(upper.iter()).any(|s| s.len() != k) {
            return Err(input_err(format!("bound multiplier sequences must have {k} entries")));
        }
        let negative = lower.iter().chain(upper.iter()).flatten().flat_map(|v| v.iter()).any(|x| *x < T::zero());
        if negative {
            return Err(input_err("bound multipliers must be nonnegative"));
        }
        self.nu_lower = Some(lower);
        self.nu_upper = Some(upper);
        Ok(self)
    }

    /// Zero `ψ` sized for `game`.
    pub fn with_zero_psi(self, game: &GameDefinition<T>) -> Self {
        let k = game.horizon();
        let psi1 = vec![DVector::zeros(game.control_dim(Agent::Two)); k - 1];
        let psi2 = vec![DVector::zeros(game.control_dim(Agent::One)); k - 1];
        self.with_psi(psi1, psi2).expect("sizes derived from the game")
    }

    pub fn horizon(&self) -> usize {
        self.lambda[0].len()
    }

    pub fn lambda(&self, agent: Agent, t: usize) -> &DVector<T> {
        &self.lambda[agent.index()][t - 1]
    }

    pub fn lambdas(&self, agent: Agent) -> &[DVector<T>] {
        &self.lambda[agent.index()]
    }

    pub fn has_psi(&self) -> bool {
        self.psi.is_some()
    }

    /// `ψ^i_s` for `s ∈ 2..=K`, if present.
    pub fn psi(&self, agent: Agent, s: usize) -> Option<&DVector<T>> {
        self.psi.as_ref().map(|p| &p[agent.index()][s - 2])
    }

    pub fn psis(&self, agent: Agent) -> Option<&[DVector<T>]> {
        self.psi.as_ref().map(|p| p[agent.index()].as_slice())
    }

    pub fn has_bound_multipliers(&self) -> bool {
        self.nu_lower.is_some()
    }

    pub fn nu_lower(&self, agent: Agent, t: usize) -> Option<&DVector<T>> {
        self.nu_lower.as_ref().map(|n| &n[agent.index()][t - 1])
    }

    pub fn nu_upper(&self, agent: Agent, t: usize) -> Option<&DVector<T>> {
        self.nu_upper.as_ref().map(|n| &n[agent.index()][t - 1])
    }

    /// `max_t ‖λ¹_t + λ²_t‖∞`.
    pub fn lambda_negation_gap(&self) -> T {
        self.lambda[0]
            .iter()
            .zip(&self.lambda[1])
            .fold(T::zero(), |w, (a, b)| w.max_of((a + b).amax()))
    }

    /// `max_{s,i} ‖ψ^i_s‖∞`, zero when `ψ` is absent or empty.
    pub fn psi_max(&self) -> T {
        self.psi
            .iter()
            .flat_map(|p| p.iter())
            .flatten()
            .fold(T::zero(), |w, v| w.max_of(v.amax()))
    }

    pub fn check_dims(&self, game: &GameDefinition<T>) -> Result<()> {
        let k = game.horizon();
        if self.horizon() != k {
            return Err(input_err(format!("multipliers cover {} stages, expected {k}", self.horizon())));
        }
        let n = game.state_dim();
        if self.lambda.iter().flatten().any(|l| l.len() != n) {
            return Err(input_err("costate has wrong dimension"));
        }
        if let Some(psi) = &self.psi {
            for agent in Agent::BOTH {
                let m = game.control_dim(agent.other());
                if psi[agent.index()].iter().any(|p| p.len() != m) {
                    return Err(input_err(format!("psi of agent {agent} has wrong dimension")));
                }
            }
        }
        for nu in [&self.nu_lower, &self.nu_upper].into_iter().flatten() {
            for agent in Agent::BOTH {
                if nu[agent.index()].iter().any(|v| v.len() != game.control_dim(agent)) {
                    return Err(input_err(format!("bound multiplier of agent {agent} has wrong dimension")));
                }
            }
        }
        Ok(())
    }
}
