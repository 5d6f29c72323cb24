//! Damped Newton iteration shared by the open-loop and constrained solvers,
//! and the option and log types shared by every iterative solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::scalar::{lit, Scalar};

/// Options of the iterative solvers. Tolerances are absolute and apply to the
/// max-norm of the relevant residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Stop when the accepted step is smaller than this in max-norm.
    pub step_tol: f64,
    /// Initial Levenberg–Marquardt damping; zero means plain Newton steps first.
    pub levenberg_initial: f64,
    /// Damping used the first time a plain step has to be regularized.
    pub levenberg_base: f64,
    pub levenberg_growth: f64,
    pub levenberg_shrink: f64,
    pub levenberg_max: f64,
    pub line_search_shrink: f64,
    pub line_search_min_step: f64,
    /// Sufficient decrease factor of the max-norm merit.
    pub armijo: f64,
    /// Add `∇²(λᵀf)` to the Lagrangian Hessians.
    pub include_dynamics_curvature: bool,
    /// Condition number above which a stage saddle block counts as singular.
    pub cond_max: f64,
    /// Largest symmetric shift the feedback iteration may apply to a saddle block.
    pub regularization_max: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            residual_tol: 1e-8,
            step_tol: 1e-12,
            levenberg_initial: 0.0,
            levenberg_base: 1e-8,
            levenberg_growth: 10.0,
            levenberg_shrink: 0.2,
            levenberg_max: 1e6,
            line_search_shrink: 0.5,
            line_search_min_step: 1e-6,
            armijo: 1e-4,
            include_dynamics_curvature: false,
            cond_max: 1e12,
            regularization_max: 1e6,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("residual_tol", self.residual_tol),
            ("levenberg_base", self.levenberg_base),
            ("levenberg_max", self.levenberg_max),
            ("line_search_min_step", self.line_search_min_step),
            ("cond_max", self.cond_max),
            ("regularization_max", self.regularization_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GameError::Configuration(format!("{name} must be positive and finite")));
            }
        }
        if self.max_iters == 0 {
            return Err(GameError::Configuration("max_iters must be at least 1".into()));
        }
        if !(self.step_tol >= 0.0) || !(self.levenberg_initial >= 0.0) {
            return Err(GameError::Configuration("step_tol and levenberg_initial must be nonnegative".into()));
        }
        if !(self.levenberg_growth > 1.0) {
            return Err(GameError::Configuration("levenberg_growth must exceed 1".into()));
        }
        for (name, v) in [("levenberg_shrink", self.levenberg_shrink), ("line_search_shrink", self.line_search_shrink)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(GameError::Configuration(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.armijo >= 0.0 && self.armijo < 1.0) {
            return Err(GameError::Configuration("armijo must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    StepTolerance,
    MaxIters,
    LineSearchStall,
    SingularStep,
    ComplementarityStall,
    NotStarted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Merit before the step.
    pub residual: f64,
    pub step_norm: f64,
    pub step_length: f64,
    pub regularization: f64,
    pub line_search_trials: usize,
    /// Set when the line search fell back to its smallest step.
    pub flagged: bool,
    /// Smoothing parameter of the complementarity rows, when present.
    pub smoothing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_residual: f64,
}

impl Default for SolveLog {
    fn default() -> Self {
        Self { iterations: Vec::new(), termination: Termination::NotStarted, final_residual: f64::NAN }
    }
}

impl SolveLog {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Converged | Termination::StepTolerance)
    }
}

/// Solves `J Δ = −r`, or `(JᵀJ + μI) Δ = −Jᵀr` when `mu > 0`.
pub(crate) fn newton_step<T: Scalar>(j: &DMatrix<T>, r: &DVector<T>, mu: T) -> Option<DVector<T>> {
    let step = if mu > T::zero() {
        let jt = j.transpose();
        let mut normal = &jt * j;
        for i in 0..normal.nrows() {
            normal[(i, i)] += mu;
        }
        normal.cholesky()?.solve(&(-(jt * r)))
    } else {
        j.clone().lu().solve(&(-r))?
    };
    step.iter().all(|x| x.is_finite()).then_some(step)
}

/// Outcome of the convergence test at an accepted iterate.
pub(crate) enum Check<T: Scalar> {
    Done(DVector<T>),
    Continue,
}

/// Damped Newton iteration on `r(z) = 0` with a max-norm backtracking line
/// search and Levenberg–Marquardt fallback.
///
/// `converged` inspects each iterate before a step is taken and may return a
/// corrected point (for instance a re-rolled-out trajectory) to finish with.
/// `smoothing` is only recorded in the log.
pub(crate) fn damped_newton<T, R, J, C>(
    mut z: DVector<T>,
    mut residual: R,
    mut jacobian: J,
    mut converged: C,
    opts: &SolveOptions,
    smoothing: Option<f64>,
    log: &mut SolveLog,
) -> Result<DVector<T>>
where
    T: Scalar,
    R: FnMut(&DVector<T>) -> Result<DVector<T>>,
    J: FnMut(&DVector<T>) -> Result<DMatrix<T>>,
    C: FnMut(&DVector<T>, &DVector<T>) -> Result<Check<T>>,
{
    let mut mu = opts.levenberg_initial;
    let mut r = residual(&z)?;
    for iteration in 1..=opts.max_iters + 1 {
        let merit = r.amax().as_f64();
        log.final_residual = merit;
        if let Check::Done(zf) = converged(&z, &r)? {
            log.termination = Termination::Converged;
            return Ok(zf);
        }
        if iteration > opts.max_iters {
            break;
        }
        let jac = jacobian(&z)?;
        let mut trials = 0;
        let accepted = loop {
            let step = match newton_step(&jac, &r, lit::<T>(mu)) {
                Some(s) => s,
                None => {
                    mu = if mu > 0.0 { mu * opts.levenberg_growth } else { opts.levenberg_base };
                    if mu > opts.levenberg_max {
                        log.termination = Termination::SingularStep;
                        return Err(GameError::SingularNewtonStep { iteration });
                    }
                    continue;
                }
            };
            let mut alpha = 1.0;
            let mut found = None;
            while alpha >= opts.line_search_min_step {
                trials += 1;
                let cand = &z + &step * lit::<T>(alpha);
                if let Ok(rc) = residual(&cand) {
                    let mc = rc.amax().as_f64();
                    if mc.is_finite() && mc <= (1.0 - opts.armijo * alpha) * merit {
                        found = Some((cand, rc, alpha, step.amax().as_f64()));
                        break;
                    }
                }
                alpha *= opts.line_search_shrink;
            }
            if let Some(f) = found {
                break f;
            }
            mu = if mu > 0.0 { mu * opts.levenberg_growth } else { opts.levenberg_base };
            if mu > opts.levenberg_max {
                log.termination = Termination::LineSearchStall;
                return Err(GameError::LineSearchStall { iteration, residual: merit });
            }
        };
        let (cand, rc, alpha, step_norm) = accepted;
        log.iterations.push(IterationRecord {
            iteration,
            residual: merit,
            step_norm,
            step_length: alpha,
            regularization: mu,
            line_search_trials: trials,
            flagged: false,
            smoothing,
        });
        mu *= opts.levenberg_shrink;
        if mu < opts.levenberg_base {
            mu = opts.levenberg_initial;
        }
        z = cand;
        r = rc;
        if alpha * step_norm < opts.step_tol {
            log.final_residual = r.amax().as_f64();
            if let Check::Done(zf) = converged(&z, &r)? {
                log.termination = Termination::Converged;
                return Ok(zf);
            }
            log.termination = Termination::StepTolerance;
            return Ok(z);
        }
    }
    log.termination = Termination::MaxIters;
    Err(GameError::MaxIters { residual: log.final_residual })
}
