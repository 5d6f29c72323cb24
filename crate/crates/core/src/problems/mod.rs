//! Parameterized benchmark games. Every constructor is deterministic and
//! supplies analytic derivatives.

mod bounded;
mod lq_model;
mod pursuit;
mod scalar_lq;
mod unicycle;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use bounded::{make_bounded_lq, BoundedLqParams, MAX_TIGHTENINGS};
pub use lq_model::LqGameModel;
pub use pursuit::{make_double_integrator_pursuit, DoubleIntegratorParams};
pub use scalar_lq::{make_scalar_lq, ScalarLqParams};
pub use unicycle::{make_unicycle_pursuit, UnicycleModel, UnicycleParams};

use crate::error::{input_err, GameError, Result};
use crate::game::GameDefinition;
use crate::scalar::Scalar;

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(input_err(format!("{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(input_err(format!("{name} must be nonnegative and finite, got {v}")))
    }
}

/// Names accepted by [`make_problem`].
pub const PROBLEM_NAMES: [&str; 4] = ["scalar_lq", "double_integrator_pursuit", "unicycle_pursuit", "bounded_lq"];

/// A library game together with the normalized parameters that produced it.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Scalar> {
    pub name: String,
    /// Parameters with every default filled in.
    pub params: serde_json::Value,
    pub game: GameDefinition<T>,
}

pub(crate) fn parse<P: DeserializeOwned + Serialize>(name: &str, params: &serde_json::Value) -> Result<(P, serde_json::Value)> {
    let value = if params.is_null() { serde_json::Value::Object(Default::default()) } else { params.clone() };
    let p: P = serde_json::from_value(value).map_err(|e| GameError::Configuration(format!("{name} parameters: {e}")))?;
    let normalized = serde_json::to_value(&p).map_err(|e| GameError::Configuration(e.to_string()))?;
    Ok((p, normalized))
}

/// Builds a library game by name from a JSON parameter object; missing
/// parameters take their documented defaults.
pub fn make_problem<T: Scalar>(name: &str, params: &serde_json::Value) -> Result<ProblemSpec<T>> {
    let (game, params) = match name {
        "scalar_lq" => {
            let (p, v) = parse::<ScalarLqParams>(name, params)?;
            (make_scalar_lq(&p)?, v)
        }
        "double_integrator_pursuit" => {
            let (p, v) = parse::<DoubleIntegratorParams>(name, params)?;
            (make_double_integrator_pursuit(&p)?, v)
        }
        "unicycle_pursuit" => {
            let (p, v) = parse::<UnicycleParams>(name, params)?;
            (make_unicycle_pursuit(&p)?, v)
        }
        "bounded_lq" => {
            let (p, v) = parse::<BoundedLqParams>(name, params)?;
            (make_bounded_lq(&p)?, v)
        }
        _ => return Err(GameError::Configuration(format!("unknown problem '{name}'; known: {}", PROBLEM_NAMES.join(", ")))),
    };
    Ok(ProblemSpec { name: name.to_string(), params, game })
}

#[cfg(test)]
mod tests;
