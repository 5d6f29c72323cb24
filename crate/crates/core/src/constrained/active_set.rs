use serde::{Deserialize, Serialize};

use crate::error::{input_err, GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::scalar::Scalar;

/// Absolute slack below which a bound counts as active.
pub const DEFAULT_ACT_TOL: f64 = 1e-7;
/// Threshold separating positive from vanishing multipliers and slacks.
pub const DEFAULT_STRICT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    LowerActive,
    UpperActive,
    Inactive,
}

impl BoundStatus {
    pub fn is_active(self) -> bool {
        self != BoundStatus::Inactive
    }
}

/// Activity of `u` in `[lo, hi]` from slacks alone; the nearer bound wins when
/// both are within `act_tol`.
pub(crate) fn bound_status(u: f64, lo: f64, hi: f64, act_tol: f64) -> BoundStatus {
    let (sl, sh) = (u - lo, hi - u);
    if sl <= act_tol && sl <= sh {
        BoundStatus::LowerActive
    } else if sh <= act_tol {
        BoundStatus::UpperActive
    } else {
        BoundStatus::Inactive
    }
}

/// Classification of one control coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateStatus {
    pub stage: usize,
    pub agent: Agent,
    pub index: usize,
    pub status: BoundStatus,
    /// Slack to the active bound, or to the nearer bound when inactive.
    pub slack: f64,
    /// Multiplier of the active bound, or the larger of both when inactive.
    pub multiplier: f64,
    pub strictly_complementary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetClassification {
    pub act_tol: f64,
    pub strict_tol: f64,
    /// Ordered by stage, then agent, then coordinate.
    pub coordinates: Vec<CoordinateStatus>,
    /// Conjunction of the per-coordinate flags.
    pub strict_complementarity: bool,
}

impl ActiveSetClassification {
    pub fn status(&self, stage: usize, agent: Agent, index: usize) -> Option<BoundStatus> {
        self.coordinates
            .iter()
            .find(|c| c.stage == stage && c.agent == agent && c.index == index)
            .map(|c| c.status)
    }

    pub fn active(&self) -> impl Iterator<Item = &CoordinateStatus> {
        self.coordinates.iter().filter(|c| c.status.is_active())
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }
}

/// Classifies every bounded coordinate of `traj` given bound multipliers.
pub fn classify_active_set<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: &MultiplierSet<T>,
    act_tol: f64,
    strict_tol: f64,
) -> Result<ActiveSetClassification> {
    let bounds = game.bounds().ok_or_else(|| GameError::Configuration("game has no control bounds".into()))?;
    traj.check_dims(game)?;
    multipliers.check_dims(game)?;
    if !multipliers.has_bound_multipliers() {
        return Err(input_err("active-set classification needs bound multipliers"));
    }
    let mut coordinates = Vec::new();
    for t in 1..=game.horizon() {
        for a in Agent::BOTH {
            let u = traj.control(a, t);
            let (lo, hi) = (bounds.lower(a, t), bounds.upper(a, t));
            let (nl, nh) = (multipliers.nu_lower(a, t).unwrap(), multipliers.nu_upper(a, t).unwrap());
            for j in 0..u.len() {
                let (uj, l, h) = (u[j].as_f64(), lo[j].as_f64(), hi[j].as_f64());
                if l == h {
                    return Err(GameError::DegenerateBound { stage: t, agent: a, coord: j });
                }
                let status = bound_status(uj, l, h, act_tol);
                let (slack, multiplier) = match status {
                    BoundStatus::LowerActive => (uj - l, nl[j].as_f64()),
                    BoundStatus::UpperActive => (h - uj, nh[j].as_f64()),
                    BoundStatus::Inactive => ((uj - l).min(h - uj), nl[j].as_f64().max(nh[j].as_f64())),
                };
                let strictly_complementary = if status.is_active() {
                    multiplier > strict_tol
                } else {
                    slack > strict_tol && multiplier < strict_tol
                };
                coordinates.push(CoordinateStatus { stage: t, agent: a, index: j, status, slack, multiplier, strictly_complementary });
            }
        }
    }
    let strict_complementarity = coordinates.iter().all(|c| c.strictly_complementary);
    Ok(ActiveSetClassification { act_tol, strict_tol, coordinates, strict_complementarity })
}
