//! One configured run: build the problem, solve, audit, and collect the report.

use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use zsgame::constrained::{
    constrained_fb_report, constrained_ol_report, solve_constrained_fbne, solve_constrained_olne, theorem2_audit, ActiveSetClassification,
    EquilibriumSide, Theorem2Class, Theorem2Verdict,
};
use zsgame::fbne::solve_fbne_ilq;
use zsgame::newton::{SolveLog, Termination};
use zsgame::olne::{solve_olne, InitialGuess};
use zsgame::problems::make_problem;
use zsgame::verify::{
    build_critical_cone, fb_first_order_report, fb_second_order_report, ol_first_order_report, second_order_report, theorem1_audit,
    theorem1_converse_audit, ConeOptions, KktResidualReport, PolicyResponse, SecondOrderClass, SecondOrderReport, Structure, Theorem1Class,
    Theorem1ConverseVerdict, Theorem1Verdict,
};
use zsgame::{Agent, GameF64, MultipliersF64, PolicySetF64, TrajectoryF64};

use crate::config::{ConfigError, RunConfig, StructureChoice, VerifyConfig};

/// Process exit status of a run. Larger is worse; a sweep reports the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success = 0,
    AuditFailed = 1,
    SolverFailed = 2,
    ConfigError = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// A validated configuration with its game built.
pub struct PreparedRun {
    pub config: RunConfig,
    pub game: GameF64,
    /// Problem parameters with defaults filled in.
    pub params: Value,
}

/// Validates `config` and constructs its game. Nothing is solved here beyond
/// what problem construction itself requires.
pub fn prepare(config: RunConfig) -> Result<PreparedRun, ConfigError> {
    config.validate()?;
    let spec = make_problem::<f64>(&config.problem.name, &config.problem.params).map_err(|e| ConfigError::Problem(e.to_string()))?;
    let bounded = spec.game.bounds().is_some();
    if config.solver.constrained && !bounded {
        return Err(ConfigError::Invalid(format!("solver.constrained needs a problem with bounds; `{}` has none", spec.name)));
    }
    if !config.solver.constrained && bounded {
        return Err(ConfigError::Invalid(format!("problem `{}` has control bounds; set solver.constrained = true", spec.name)));
    }
    Ok(PreparedRun { config, game: spec.game, params: spec.params })
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    pub final_residual: f64,
}

impl SolveSummary {
    fn from_log(log: &SolveLog) -> Self {
        Self { converged: log.converged(), termination: log.termination, iterations: log.iteration_count(), final_residual: log.final_residual }
    }
}

/// Results for one information structure.
#[derive(Debug, Clone, Serialize)]
pub struct SideReport {
    pub solve: Option<SolveSummary>,
    pub error: Option<String>,
    pub first_order: Option<KktResidualReport>,
    pub second_order: Option<[SecondOrderReport; 2]>,
    pub active_set: Option<ActiveSetClassification>,
    /// Largest negative bound multiplier clipped by the constrained open-loop solver.
    pub nu_clip: Option<f64>,
    pub theorem2: Option<Theorem2Verdict>,
}

impl SideReport {
    fn empty() -> Self {
        Self { solve: None, error: None, first_order: None, second_order: None, active_set: None, nu_clip: None, theorem2: None }
    }

    fn failed(error: String) -> Self {
        Self { error: Some(error), ..Self::empty() }
    }

    fn solved(log: &SolveLog) -> Self {
        Self { solve: Some(SolveSummary::from_log(log)), ..Self::empty() }
    }

    fn converged(&self) -> bool {
        self.solve.as_ref().is_some_and(|s| s.converged)
    }
}

/// Pass or fail of one requested audit.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Section {
    pub verdict: Option<Theorem1Verdict>,
    pub refused: Option<String>,
    pub converse: Option<Theorem1ConverseVerdict>,
    pub converse_refused: Option<String>,
}

/// Everything a run produced, serialized as the JSON report. Timing is kept
/// out so identical runs give identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub run_id: String,
    pub problem: String,
    pub params: Value,
    pub horizon: Option<usize>,
    pub structure: Option<StructureChoice>,
    pub constrained: Option<bool>,
    pub verify: Option<VerifyConfig>,
    pub exit_code: i32,
    pub error: Option<String>,
    pub open_loop: Option<SideReport>,
    pub feedback: Option<SideReport>,
    pub theorem1: Option<Theorem1Section>,
    pub checks: Vec<CheckOutcome>,
}

/// Solutions kept for trajectory output.
#[derive(Default)]
pub struct Solutions {
    pub open_loop: Option<TrajectoryF64>,
    pub feedback: Option<(TrajectoryF64, [PolicySetF64; 2])>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub status: ExitStatus,
    pub wall_ms: f64,
    pub solutions: Solutions,
}

impl RunOutcome {
    /// Outcome of a configuration that never reached the solvers.
    pub fn config_error(run_id: &str, problem: &str, err: &ConfigError) -> Self {
        let report = RunReport {
            run_id: run_id.into(),
            problem: problem.into(),
            params: Value::Null,
            horizon: None,
            structure: None,
            constrained: None,
            verify: None,
            exit_code: ExitStatus::ConfigError.code(),
            error: Some(err.to_string()),
            open_loop: None,
            feedback: None,
            theorem1: None,
            checks: Vec::new(),
        };
        Self { report, status: ExitStatus::ConfigError, wall_ms: 0.0, solutions: Solutions::default() }
    }
}

/// Whether audits from the `verify` section are run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SolveOnly,
    Audit,
}

struct OlSolution {
    trajectory: TrajectoryF64,
    multipliers: MultipliersF64,
}

struct FbSolution {
    trajectory: TrajectoryF64,
    policies: [PolicySetF64; 2],
    multipliers: MultipliersF64,
}

fn solve_open_loop(run: &PreparedRun) -> (SideReport, Option<OlSolution>) {
    let opts = &run.config.solver.options;
    if run.config.solver.constrained {
        match solve_constrained_olne(&run.game, &InitialGuess::Zero, opts) {
            Ok(s) => {
                let mut side = SideReport::solved(&s.log);
                side.active_set = Some(s.active_set);
                side.nu_clip = Some(s.nu_clip);
                (side, Some(OlSolution { trajectory: s.trajectory, multipliers: s.multipliers }))
            }
            Err(e) => (SideReport::failed(e.to_string()), None),
        }
    } else {
        match solve_olne(&run.game, &InitialGuess::Zero, opts) {
            Ok(s) => (SideReport::solved(&s.log), Some(OlSolution { trajectory: s.trajectory, multipliers: s.multipliers })),
            Err(e) => (SideReport::failed(e.to_string()), None),
        }
    }
}

fn solve_feedback(run: &PreparedRun) -> (SideReport, Option<FbSolution>) {
    let opts = &run.config.solver.options;
    if run.config.solver.constrained {
        match solve_constrained_fbne(&run.game, None, opts) {
            Ok(s) => {
                let mut side = SideReport::solved(&s.log);
                side.active_set = Some(s.active_set);
                (side, Some(FbSolution { trajectory: s.trajectory, policies: s.policies, multipliers: s.multipliers }))
            }
            Err(e) => (SideReport::failed(e.to_string()), None),
        }
    } else {
        match solve_fbne_ilq(&run.game, None, opts) {
            Ok(s) => (SideReport::solved(&s.log), Some(FbSolution { trajectory: s.trajectory, policies: s.policies, multipliers: s.multipliers })),
            Err(e) => (SideReport::failed(e.to_string()), None),
        }
    }
}

struct Checks(Vec<CheckOutcome>);

impl Checks {
    fn push(&mut self, name: &str, pass: bool, detail: Option<String>) {
        self.0.push(CheckOutcome { name: name.into(), pass, detail });
    }

    fn error(&mut self, name: &str, e: impl std::fmt::Display) {
        self.push(name, false, Some(e.to_string()));
    }
}

fn second_order_passes(reports: &[SecondOrderReport; 2]) -> bool {
    reports.iter().all(|r| r.classification != SecondOrderClass::Fails)
}

fn audit_open_loop(run: &PreparedRun, side: &mut SideReport, sol: &OlSolution, checks: &mut Checks) {
    let (game, v) = (&run.game, &run.config.verify);
    let tol = &v.tolerances;
    if v.first_order {
        let rep = if run.config.solver.constrained {
            constrained_ol_report(game, &sol.trajectory, Some(&sol.multipliers), tol.first_order_gate)
        } else {
            ol_first_order_report(game, &sol.trajectory, Some(&sol.multipliers), tol.first_order_gate)
        };
        match rep {
            Ok(r) => {
                checks.push("open_loop.first_order", r.pass, None);
                side.first_order = Some(r);
            }
            Err(e) => checks.error("open_loop.first_order", e),
        }
    }
    if v.second_order {
        let reports = Agent::BOTH.map(|a| {
            build_critical_cone(game, &sol.trajectory, Structure::OpenLoop, a, None, None, &ConeOptions::default()).and_then(|cone| {
                second_order_report(game, &sol.trajectory, &sol.multipliers, &cone, a, tol.pd_tol_scale, tol.include_dynamics_curvature)
            })
        });
        match reports {
            [Ok(r1), Ok(r2)] => {
                let reps = [r1, r2];
                checks.push("open_loop.second_order", second_order_passes(&reps), None);
                side.second_order = Some(reps);
            }
            [Err(e), _] | [_, Err(e)] => checks.error("open_loop.second_order", e),
        }
    }
    if v.theorem2 {
        let eq = EquilibriumSide::OpenLoop { trajectory: &sol.trajectory, multipliers: Some(&sol.multipliers) };
        match theorem2_audit(game, eq, tol) {
            Ok(verdict) => {
                checks.push("open_loop.theorem2", verdict.classification != Theorem2Class::Fail, None);
                side.theorem2 = Some(verdict);
            }
            Err(e) => checks.error("open_loop.theorem2", e),
        }
    }
}

fn audit_feedback(run: &PreparedRun, side: &mut SideReport, sol: &FbSolution, checks: &mut Checks) {
    let (game, v) = (&run.game, &run.config.verify);
    let tol = &v.tolerances;
    if v.first_order {
        let rep = if run.config.solver.constrained {
            constrained_fb_report(game, &sol.trajectory, &sol.policies, None, tol.first_order_gate)
        } else {
            fb_first_order_report(game, &sol.trajectory, &sol.policies, None, tol.first_order_gate)
        };
        match rep {
            Ok(r) => {
                checks.push("feedback.first_order", r.pass, None);
                side.first_order = Some(r);
            }
            Err(e) => checks.error("feedback.first_order", e),
        }
    }
    if v.second_order {
        let reports = Agent::BOTH.map(|a| {
            fb_second_order_report(
                game,
                &sol.trajectory,
                &sol.policies,
                &sol.multipliers,
                a,
                PolicyResponse::Keep,
                tol.weak_active,
                tol.pd_tol_scale,
                tol.include_dynamics_curvature,
            )
        });
        match reports {
            [Ok(r1), Ok(r2)] => {
                let reps = [r1, r2];
                checks.push("feedback.second_order", second_order_passes(&reps), None);
                side.second_order = Some(reps);
            }
            [Err(e), _] | [_, Err(e)] => checks.error("feedback.second_order", e),
        }
    }
    if v.theorem2 {
        let eq = EquilibriumSide::Feedback { trajectory: &sol.trajectory, policies: &sol.policies };
        match theorem2_audit(game, eq, tol) {
            Ok(verdict) => {
                checks.push("feedback.theorem2", verdict.classification != Theorem2Class::Fail, None);
                side.theorem2 = Some(verdict);
            }
            Err(e) => checks.error("feedback.theorem2", e),
        }
    }
}

fn audit_theorem1(run: &PreparedRun, ol: Option<&OlSolution>, fb: &FbSolution, checks: &mut Checks) -> Theorem1Section {
    let tol = &run.config.verify.tolerances;
    let mut section = Theorem1Section { verdict: None, refused: None, converse: None, converse_refused: None };
    match theorem1_audit(&run.game, &fb.trajectory, &fb.policies, tol) {
        Ok(v) => {
            checks.push("theorem1", v.classification != Theorem1Class::Inconsistent, None);
            section.verdict = Some(v);
        }
        Err(e) => {
            checks.error("theorem1", &e);
            section.refused = Some(e.to_string());
        }
    }
    if let Some(ol) = ol {
        match theorem1_converse_audit(&run.game, &ol.trajectory, &ol.multipliers, tol) {
            Ok(v) => {
                checks.push("theorem1.converse", v.pass, None);
                section.converse = Some(v);
            }
            Err(e) => {
                checks.error("theorem1.converse", &e);
                section.converse_refused = Some(e.to_string());
            }
        }
    }
    section
}

/// Runs the solvers of a prepared configuration and, in audit mode, its audits.
pub fn execute(run_id: &str, run: &PreparedRun, mode: Mode) -> RunOutcome {
    let start = Instant::now();
    let structure = run.config.solver.structure;
    let verify = match mode {
        Mode::Audit => run.config.verify.clone(),
        Mode::SolveOnly => VerifyConfig::none(),
    };
    let run = &PreparedRun { config: RunConfig { verify: verify.clone(), ..run.config.clone() }, game: run.game.clone(), params: run.params.clone() };
    let mut checks = Checks(Vec::new());
    let mut solutions = Solutions::default();

    let (mut ol_side, ol_sol) = if structure.open_loop() { Some(solve_open_loop(run)) } else { None }.unzip();
    let (mut fb_side, fb_sol) = if structure.feedback() { Some(solve_feedback(run)) } else { None }.unzip();
    let (ol_sol, fb_sol) = (ol_sol.flatten(), fb_sol.flatten());
    let solver_ok = ol_side.iter().chain(fb_side.iter()).all(SideReport::converged);

    if let (Some(side), Some(sol)) = (ol_side.as_mut(), ol_sol.as_ref()) {
        audit_open_loop(run, side, sol, &mut checks);
        solutions.open_loop = Some(sol.trajectory.clone());
    }
    if let (Some(side), Some(sol)) = (fb_side.as_mut(), fb_sol.as_ref()) {
        audit_feedback(run, side, sol, &mut checks);
        solutions.feedback = Some((sol.trajectory.clone(), sol.policies.clone()));
    }
    let theorem1 = match (&fb_sol, verify.theorem1) {
        (Some(fb), true) => Some(audit_theorem1(run, ol_sol.as_ref(), fb, &mut checks)),
        _ => None,
    };

    let status = if !solver_ok {
        ExitStatus::SolverFailed
    } else if checks.0.iter().any(|c| !c.pass) {
        ExitStatus::AuditFailed
    } else {
        ExitStatus::Success
    };
    let report = RunReport {
        run_id: run_id.into(),
        problem: run.config.problem.name.clone(),
        params: run.params.clone(),
        horizon: Some(run.game.horizon()),
        structure: Some(structure),
        constrained: Some(run.config.solver.constrained),
        verify: Some(verify),
        exit_code: status.code(),
        error: None,
        open_loop: ol_side,
        feedback: fb_side,
        theorem1,
        checks: checks.0,
    };
    RunOutcome { report, status, wall_ms: start.elapsed().as_secs_f64() * 1e3, solutions }
}
