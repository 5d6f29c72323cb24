//! Flat CSV rows and report files.

use std::fs;
use std::path::Path;

use zsgame::constrained::Theorem2Class;
use zsgame::io::{format_float, policies_json, to_json_string, trajectory_csv, trajectory_json};
use zsgame::verify::Theorem1Class;

use crate::config::{ConfigError, Format, OutputConfig};
use crate::run::{RunOutcome, RunReport, SideReport};

/// Column order of every report CSV.
pub const CSV_COLUMNS: [&str; 17] = [
    "run_id",
    "problem",
    "K",
    "structure",
    "converged",
    "iters",
    "ol_residual",
    "fb_residual",
    "lambda_negation_max",
    "psi_max",
    "soc_min_eig_a1",
    "soc_min_eig_a2",
    "cone_containment",
    "strict_complementarity",
    "theorem1_verdict",
    "theorem2_verdict",
    "wall_ms",
];

fn float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn snake<S: serde::Serialize>(v: &S) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn first_order_residual(side: Option<&SideReport>) -> Option<f64> {
    let side = side?;
    side.first_order.as_ref().map(|r| r.max_residual).or_else(|| side.solve.as_ref().map(|s| s.final_residual))
}

fn theorem2_verdict(r: &RunReport) -> String {
    let classes: Vec<Theorem2Class> = [&r.open_loop, &r.feedback]
        .into_iter()
        .flatten()
        .filter_map(|s| s.theorem2.as_ref().map(|v| v.classification))
        .collect();
    let refused = r.checks.iter().any(|c| c.name.ends_with("theorem2") && c.detail.is_some());
    if refused {
        "refused".into()
    } else if classes.contains(&Theorem2Class::Fail) {
        snake(&Theorem2Class::Fail)
    } else if classes.contains(&Theorem2Class::NotApplicable) {
        snake(&Theorem2Class::NotApplicable)
    } else if classes.is_empty() {
        String::new()
    } else {
        snake(&Theorem2Class::Pass)
    }
}

/// One CSV row in [`CSV_COLUMNS`] order.
///
/// Residuals are read at the solved equilibrium of each structure; when only
/// one structure was solved, the other residual comes from the audit that
/// evaluates it there. Cells that do not apply are empty.
pub fn csv_row(outcome: &RunOutcome) -> Vec<String> {
    let r = &outcome.report;
    let (ol, fb) = (r.open_loop.as_ref(), r.feedback.as_ref());
    let t1 = r.theorem1.as_ref();
    let verdict = t1.and_then(|t| t.verdict.as_ref());
    let sides = [ol, fb];
    let solves: Vec<_> = sides.iter().flatten().filter_map(|s| s.solve.as_ref()).collect();
    let converged = r.structure.is_some() && solves.len() == sides.iter().flatten().count() && solves.iter().all(|s| s.converged);
    let iters = if r.structure.is_some() { solves.iter().map(|s| s.iterations).sum::<usize>().to_string() } else { String::new() };

    let ol_residual = first_order_residual(ol).or_else(|| verdict.map(|v| v.ol_report.max_residual));
    let fb_residual = first_order_residual(fb).or_else(|| t1.and_then(|t| t.converse.as_ref()).map(|c| c.fb_report.max_residual));
    let cascade_source = fb.and_then(|s| s.first_order.as_ref()).or(verdict.map(|v| &v.fb_report)).or(ol.and_then(|s| s.first_order.as_ref()));
    let lambda_negation = cascade_source.map(|rep| rep.lambda_negation_max);
    let psi = cascade_source.filter(|rep| rep.cross_control_stationarity.is_some()).map(|rep| rep.psi_max);

    let soc = fb
        .and_then(|s| s.second_order.as_ref())
        .or(verdict.map(|v| &v.fb_second_order))
        .or(ol.and_then(|s| s.second_order.as_ref()))
        .map(|reps| [reps[0].min_eig, reps[1].min_eig]);
    let strict = fb.or(ol).and_then(|s| s.active_set.as_ref()).map(|a| a.strict_complementarity.to_string()).unwrap_or_default();
    let theorem1 = match (t1, verdict) {
        (_, Some(v)) => snake::<Theorem1Class>(&v.classification),
        (Some(_), None) => "refused".into(),
        _ => String::new(),
    };

    vec![
        r.run_id.clone(),
        r.problem.clone(),
        r.horizon.map(|k| k.to_string()).unwrap_or_default(),
        r.structure.map(|s| s.as_str().to_string()).unwrap_or_default(),
        converged.to_string(),
        iters,
        float(ol_residual),
        float(fb_residual),
        float(lambda_negation),
        float(psi),
        float(soc.map(|s| s[0])),
        float(soc.map(|s| s[1])),
        float(verdict.map(|v| v.containment_residual())),
        strict,
        theorem1,
        theorem2_verdict(r),
        format!("{:.3}", outcome.wall_ms),
    ]
}

/// CSV text with the header and one row per outcome.
pub fn csv_table<'a>(outcomes: impl IntoIterator<Item = &'a RunOutcome>) -> Result<String, ConfigError> {
    let err = |e: csv::Error| ConfigError::Output(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(err)?;
    for o in outcomes {
        w.write_record(csv_row(o)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| ConfigError::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ConfigError::Output(e.to_string()))
}

pub fn report_json(report: &RunReport) -> Result<String, ConfigError> {
    to_json_string(report).map_err(|e| ConfigError::Output(e.to_string()))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), ConfigError> {
    fs::write(dir.join(name), text).map_err(|e| ConfigError::Output(format!("{}: {e}", dir.join(name).display())))
}

/// Writes `<run_id>.report.json`, `<run_id>.report.csv` and, when requested,
/// the trajectories and feedback policies of the run.
pub fn write_outputs(dir: &Path, output: &OutputConfig, outcome: &RunOutcome) -> Result<(), ConfigError> {
    fs::create_dir_all(dir).map_err(|e| ConfigError::Output(format!("{}: {e}", dir.display())))?;
    let id = &outcome.report.run_id;
    let ser = |e: zsgame::GameError| ConfigError::Output(e.to_string());
    if output.wants(Format::Json) {
        write(dir, &format!("{id}.report.json"), &report_json(&outcome.report)?)?;
    }
    if output.wants(Format::Csv) {
        write(dir, &format!("{id}.report.csv"), &csv_table([outcome])?)?;
    }
    if output.emit_trajectory {
        let s = &outcome.solutions;
        let trajectories = [("open_loop", s.open_loop.as_ref()), ("feedback", s.feedback.as_ref().map(|f| &f.0))];
        for (side, traj) in trajectories {
            let Some(traj) = traj else { continue };
            if output.wants(Format::Json) {
                write(dir, &format!("{id}.{side}.trajectory.json"), &trajectory_json(traj).map_err(ser)?)?;
            }
            if output.wants(Format::Csv) {
                write(dir, &format!("{id}.{side}.trajectory.csv"), &trajectory_csv(traj).map_err(ser)?)?;
            }
        }
        if let Some((_, policies)) = &s.feedback {
            write(dir, &format!("{id}.feedback.policies.json"), &policies_json(policies).map_err(ser)?)?;
        }
    }
    Ok(())
}
