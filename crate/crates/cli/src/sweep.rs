//! Batches of runs from an explicit list or a parameter grid.

use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::config::{ConfigError, RunConfig};
use crate::run::{execute, prepare, Mode, RunOutcome};

/// `configs` are taken as given (each merged over `base` when present); `grid`
/// maps dotted paths into the configuration to lists of values and expands to
/// their Cartesian product over `base`, first key varying slowest.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: Option<Value>,
    pub grid: Map<String, Value>,
    pub configs: Vec<Value>,
}

fn merge(base: &Value, over: &Value) -> Value {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let mut out = b.clone();
            for (k, v) in o {
                let merged = match out.get(k) {
                    Some(bv) => merge(bv, v),
                    None => v.clone(),
                };
                out.insert(k.clone(), merged);
            }
            Value::Object(out)
        }
        _ => over.clone(),
    }
}

fn set_path(target: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = target;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::Invalid(format!("grid path `{path}` has an empty segment")));
        }
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur.as_object_mut().ok_or_else(|| ConfigError::Invalid(format!("grid path `{path}` crosses a non-object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Raw configurations in run order. Individual entries are validated
    /// later, one run at a time, so a bad entry does not stop the others.
    pub fn expand(&self) -> Result<Vec<Value>, ConfigError> {
        let base = self.base.clone().unwrap_or(Value::Object(Map::new()));
        let mut out: Vec<Value> = self.configs.iter().map(|c| merge(&base, c)).collect();
        if !self.grid.is_empty() {
            let mut points = vec![base.clone()];
            for (path, values) in &self.grid {
                let values = values.as_array().ok_or_else(|| ConfigError::Invalid(format!("grid entry `{path}` must be a list")))?;
                if values.is_empty() {
                    return Err(ConfigError::Invalid(format!("grid entry `{path}` is empty")));
                }
                let mut next = Vec::with_capacity(points.len() * values.len());
                for p in &points {
                    for v in values {
                        let mut q = p.clone();
                        set_path(&mut q, path, v.clone())?;
                        next.push(q);
                    }
                }
                points = next;
            }
            out.extend(points);
        } else if self.configs.is_empty() && self.base.is_some() {
            out.push(base);
        }
        if out.is_empty() {
            return Err(ConfigError::Invalid("sweep needs at least one configuration".into()));
        }
        Ok(out)
    }
}

fn problem_name(v: &Value) -> String {
    v.pointer("/problem/name").and_then(Value::as_str).unwrap_or("").to_string()
}

/// Identifier of the `index`-th run of a sweep.
pub fn run_id(index: usize, problem: &str) -> String {
    if problem.is_empty() {
        format!("{index:03}")
    } else {
        format!("{index:03}_{problem}")
    }
}

/// Runs every configuration independently, in parallel, and returns the
/// outcomes in input order. Invalid entries yield configuration-error outcomes.
pub fn run_sweep(configs: &[Value], mode: Mode) -> Vec<(RunConfigSlot, RunOutcome)> {
    configs
        .par_iter()
        .enumerate()
        .map(|(i, raw)| {
            let name = problem_name(raw);
            let id = run_id(i, &name);
            match RunConfig::from_value(raw.clone()).and_then(prepare) {
                Ok(run) => {
                    let outcome = execute(&id, &run, mode);
                    (RunConfigSlot(Some(run.config)), outcome)
                }
                Err(e) => (RunConfigSlot(None), RunOutcome::config_error(&id, &name, &e)),
            }
        })
        .collect()
}

/// The parsed configuration of a sweep entry, absent when it failed validation.
pub struct RunConfigSlot(pub Option<RunConfig>);

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[test]
    fn grid_expands_first_key_slowest() {
        let s: SweepConfig = serde_json::from_value(json!({
            "base": {"problem": {"name": "scalar_lq", "params": {"q": 2.0}}},
            "grid": {"problem.params.horizon": [1, 2], "solver.structure": ["feedback", "both"]}
        }))
        .unwrap();
        let runs = s.expand().unwrap();
        let pairs: Vec<(i64, &str)> = runs
            .iter()
            .map(|r| (r.pointer("/problem/params/horizon").unwrap().as_i64().unwrap(), r.pointer("/solver/structure").unwrap().as_str().unwrap()))
            .collect();
        assert_eq!(pairs, [(1, "feedback"), (1, "both"), (2, "feedback"), (2, "both")]);
        assert!(runs.iter().all(|r| r.pointer("/problem/params/q") == Some(&json!(2.0))));
    }

    #[test]
    fn listed_configs_merge_over_base() {
        let s: SweepConfig = serde_json::from_value(json!({
            "base": {"problem": {"name": "scalar_lq"}, "verify": {"theorem1": true}},
            "configs": [{"problem": {"params": {"horizon": 3}}}, {"verify": {"theorem1": false}}]
        }))
        .unwrap();
        let runs = s.expand().unwrap();
        assert_eq!(runs[0].pointer("/problem/name"), Some(&json!("scalar_lq")));
        assert_eq!(runs[0].pointer("/verify/theorem1"), Some(&json!(true)));
        assert_eq!(runs[1].pointer("/verify/theorem1"), Some(&json!(false)));
    }

    #[test]
    fn empty_or_malformed_sweeps_are_rejected() {
        assert!(SweepConfig::default().expand().is_err());
        let s: SweepConfig = serde_json::from_value(json!({"grid": {"problem.name": "scalar_lq"}})).unwrap();
        assert!(s.expand().is_err());
        assert!(SweepConfig::from_json(r#"{"grids": {}}"#).is_err());
    }
}
