//! Run configuration: which problem, which solvers, which audits, where to write.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use zsgame::newton::SolveOptions;
use zsgame::problems::PROBLEM_NAMES;
use zsgame::verify::AuditTolerances;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("problem construction failed: {0}")]
    Problem(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StructureChoice {
    OpenLoop,
    Feedback,
    #[default]
    Both,
}

impl StructureChoice {
    pub fn open_loop(self) -> bool {
        self != StructureChoice::Feedback
    }

    pub fn feedback(self) -> bool {
        self != StructureChoice::OpenLoop
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StructureChoice::OpenLoop => "open_loop",
            StructureChoice::Feedback => "feedback",
            StructureChoice::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub structure: StructureChoice,
    /// Overrides of the solver defaults.
    pub options: SolveOptions,
    /// Solve the box-constrained game; the problem must carry bounds.
    pub constrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub first_order: bool,
    pub second_order: bool,
    pub theorem1: bool,
    pub theorem2: bool,
    pub tolerances: AuditTolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { first_order: true, second_order: false, theorem1: false, theorem2: false, tolerances: AuditTolerances::default() }
    }
}

impl VerifyConfig {
    pub fn none() -> Self {
        Self { first_order: false, ..Default::default() }
    }
}

pub const DEFAULT_OUTPUT_DIR: &str = "zsgame-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    pub emit_trajectory: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from(DEFAULT_OUTPUT_DIR), formats: vec![Format::Json, Format::Csv], emit_trajectory: false }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        serde_json::from_value(v).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Cross-field checks that need no problem construction.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if !PROBLEM_NAMES.contains(&self.problem.name.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "unknown problem `{}` (known: {})",
                self.problem.name,
                PROBLEM_NAMES.join(", ")
            )));
        }
        self.solver.options.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let v = &self.verify;
        if v.theorem2 && !self.solver.constrained {
            return invalid("verify.theorem2 requires solver.constrained = true");
        }
        if v.theorem1 && self.solver.constrained {
            return invalid("verify.theorem1 applies to unconstrained games; use verify.theorem2 with solver.constrained");
        }
        if v.theorem1 && !self.solver.structure.feedback() {
            return invalid("verify.theorem1 audits a feedback equilibrium; solver.structure must be feedback or both");
        }
        if v.second_order && self.solver.constrained {
            return invalid("verify.second_order is available for unconstrained games only");
        }
        let t = &v.tolerances;
        let tols = [
            ("first_order_gate", t.first_order_gate),
            ("ol_residual", t.ol_residual),
            ("fb_residual", t.fb_residual),
            ("cascade", t.cascade),
            ("weak_active", t.weak_active),
            ("pd_tol_scale", t.pd_tol_scale),
            ("containment", t.containment),
            ("act_tol", t.act_tol),
            ("strict_tol", t.strict_tol),
            ("theorem2", t.theorem2),
        ];
        for (name, x) in tols {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(ConfigError::Invalid(format!("verify.tolerances.{name} must be finite and nonnegative")));
            }
        }
        if self.output.formats.is_empty() {
            return invalid("output.formats must name at least one of json, csv");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn config(v: Value) -> RunConfig {
        RunConfig::from_value(v).unwrap()
    }

    #[test]
    fn defaults_solve_both_structures_and_check_first_order() {
        let c = config(json!({"problem": {"name": "scalar_lq"}}));
        assert_eq!(c.solver.structure, StructureChoice::Both);
        assert!(c.verify.first_order && !c.verify.theorem1);
        assert_eq!(c.output.formats, [Format::Json, Format::Csv]);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn audits_need_matching_solver_settings() {
        let t2 = config(json!({"problem": {"name": "scalar_lq"}, "verify": {"theorem2": true}}));
        assert!(matches!(t2.validate(), Err(ConfigError::Invalid(_))));
        let t1 = config(json!({"problem": {"name": "scalar_lq"}, "solver": {"structure": "open_loop"}, "verify": {"theorem1": true}}));
        assert!(t1.validate().is_err());
        let t1c = config(json!({"problem": {"name": "bounded_lq"}, "solver": {"constrained": true}, "verify": {"theorem1": true}}));
        assert!(t1c.validate().is_err());
        let ok = config(json!({"problem": {"name": "bounded_lq"}, "solver": {"constrained": true}, "verify": {"theorem2": true}}));
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn solver_overrides_are_validated() {
        let c = config(json!({"problem": {"name": "scalar_lq"}, "solver": {"options": {"max_iters": 0}}}));
        assert!(c.validate().is_err());
        assert!(RunConfig::from_value(json!({"problem": {"name": "scalar_lq"}, "solver": {"options": {"max_iter": 5}}})).is_err());
    }

    #[test]
    fn formats_parse_from_flags() {
        assert_eq!("json".parse::<Format>(), Ok(Format::Json));
        assert_eq!(" csv".parse::<Format>(), Ok(Format::Csv));
        assert!("xml".parse::<Format>().is_err());
    }
}
