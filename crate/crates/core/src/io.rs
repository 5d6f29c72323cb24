//! Report serialization: trajectories and policies as CSV or JSON, and JSON
//! with a fixed float format so identical inputs give identical bytes.

use serde::Serialize;
use serde_json::Value;

use crate::error::{GameError, Result};
use crate::game::{Agent, Trajectory};
use crate::policy::AffinePolicySet;
use crate::scalar::Scalar;

/// C-style `%.12e` for finite values; `inf`, `-inf` and `nan` otherwise.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Rust prints `1.5e-7`; match C's `%.12e`, which signs and pads the exponent.
        let s = format!("{x:.12e}");
        let (mantissa, exp) = s.split_once('e').expect("scientific notation has an exponent");
        let (sign, digits) = exp.strip_prefix('-').map_or(("+", exp), |d| ("-", d));
        format!("{mantissa}e{sign}{digits:0>2}")
    }
}

fn io_err<E: std::fmt::Display>(e: E) -> GameError {
    GameError::Input(format!("serialization: {e}"))
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |out: &mut String, n: usize| out.extend(std::iter::repeat_n(' ', n));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if x.is_finite() {
                    out.push_str(&format_float(x));
                } else {
                    out.push_str("null");
                }
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            if items.iter().all(|i| matches!(i, Value::Number(_) | Value::Null | Value::Bool(_))) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, item, indent + 2);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, indent + 2);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// Pretty JSON with fields in declaration order and floats in [`format_float`] form.
/// Non-finite floats become `null`.
pub fn to_json_string<S: Serialize + ?Sized>(value: &S) -> Result<String> {
    let v = serde_json::to_value(value).map_err(io_err)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

/// CSV with columns `t, x_1…x_n, u1_1…u1_m1, u2_1…u2_m2`; the row of
/// `t = K + 1` leaves the control columns empty.
pub fn trajectory_csv<T: Scalar>(traj: &Trajectory<T>) -> Result<String> {
    let n = traj.state(1).len();
    let m = Agent::BOTH.map(|a| traj.control(a, 1).len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    for (a, mi) in [("u1", m[0]), ("u2", m[1])] {
        header.extend((1..=mi).map(|i| format!("{a}_{i}")));
    }
    w.write_record(&header).map_err(io_err)?;
    let k = traj.horizon();
    for t in 1..=k + 1 {
        let mut row = vec![t.to_string()];
        row.extend(traj.state(t).iter().map(|x| format_float(x.as_f64())));
        for a in Agent::BOTH {
            if t <= k {
                row.extend(traj.control(a, t).iter().map(|x| format_float(x.as_f64())));
            } else {
                row.extend(std::iter::repeat_n(String::new(), m[a.index()]));
            }
        }
        w.write_record(&row).map_err(io_err)?;
    }
    String::from_utf8(w.into_inner().map_err(io_err)?).map_err(io_err)
}

#[derive(Serialize)]
struct TrajectoryDoc {
    horizon: usize,
    state_dim: usize,
    control_dims: [usize; 2],
    states: Vec<Vec<f64>>,
    controls1: Vec<Vec<f64>>,
    controls2: Vec<Vec<f64>>,
}

fn to_f64<T: Scalar>(v: &nalgebra::DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

pub fn trajectory_json<T: Scalar>(traj: &Trajectory<T>) -> Result<String> {
    let doc = TrajectoryDoc {
        horizon: traj.horizon(),
        state_dim: traj.state(1).len(),
        control_dims: Agent::BOTH.map(|a| traj.control(a, 1).len()),
        states: traj.states().iter().map(to_f64).collect(),
        controls1: traj.controls(Agent::One).iter().map(to_f64).collect(),
        controls2: traj.controls(Agent::Two).iter().map(to_f64).collect(),
    };
    to_json_string(&doc)
}

#[derive(Serialize)]
struct PolicyStageDoc {
    t: usize,
    /// Row-major.
    gain: Vec<f64>,
    u_ref: Vec<f64>,
    x_ref: Vec<f64>,
}

#[derive(Serialize)]
struct PolicyDoc {
    agent: u8,
    state_dim: usize,
    control_dim: usize,
    stages: Vec<PolicyStageDoc>,
}

/// Both agents' policies as a JSON array; gains are stored row-major.
pub fn policies_json<T: Scalar>(policies: &[AffinePolicySet<T>; 2]) -> Result<String> {
    let docs: Vec<PolicyDoc> = policies
        .iter()
        .map(|p| {
            let (m, n) = p.gain(1).shape();
            PolicyDoc {
                agent: p.agent.into(),
                state_dim: n,
                control_dim: m,
                stages: p
                    .stages()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| PolicyStageDoc {
                        t: i + 1,
                        gain: s.gain.transpose().iter().map(|x| x.as_f64()).collect(),
                        u_ref: to_f64(&s.u_ref),
                        x_ref: to_f64(&s.x_ref),
                    })
                    .collect(),
            }
        })
        .collect();
    to_json_string(&docs)
}
