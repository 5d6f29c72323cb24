use serde::{Deserialize, Serialize};

use crate::derivatives::evaluate_derivatives;
use crate::error::{GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::policy::AffinePolicySet;
use crate::scalar::Scalar;
use crate::verify::cone::{build_critical_cone, cone_containment_check, ConeOptions, ContainmentResult, PolicyResponse, DEFAULT_WEAK_ACTIVE_TOL};
use crate::verify::first_order::{fb_first_order_report, fb_multipliers_from, fb_report_from, ol_first_order_report, KktResidualReport, Structure};
use crate::verify::second_order::{fb_second_order_report, second_order_report, SecondOrderClass, SecondOrderReport, DEFAULT_PD_TOL_SCALE};

/// Tolerances of the equilibrium audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditTolerances {
    /// Gate on the first-order residual of the supplied equilibrium.
    pub first_order_gate: f64,
    /// Open-loop residual required at a feedback equilibrium.
    pub ol_residual: f64,
    /// Feedback residual required at an embedded open-loop equilibrium.
    pub fb_residual: f64,
    /// Bound on `‖λ¹ + λ²‖∞` and `‖ψ‖∞`.
    pub cascade: f64,
    pub weak_active: f64,
    pub pd_tol_scale: f64,
    pub containment: f64,
    pub include_dynamics_curvature: bool,
    /// Slack below which a bound counts as active.
    pub act_tol: f64,
    /// Margin of strict complementarity.
    pub strict_tol: f64,
    /// Bound on the multiplier identities of the constrained audit.
    pub theorem2: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self {
            first_order_gate: 1e-6,
            ol_residual: 1e-4,
            fb_residual: 1e-6,
            cascade: 1e-4,
            weak_active: DEFAULT_WEAK_ACTIVE_TOL,
            pd_tol_scale: DEFAULT_PD_TOL_SCALE,
            containment: 1e-10,
            include_dynamics_curvature: true,
            act_tol: 1e-7,
            strict_tol: 1e-7,
            theorem2: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem1Class {
    /// Feedback sufficiency holds for both agents and open-loop sufficiency is observed.
    OlneCertified,
    /// First-order relations hold; second order is only necessary on some side.
    NecessaryOnly,
    /// A feedback second-order test fails, so no open-loop conclusion is drawn.
    FbSecondOrderFails,
    /// Some implication is violated beyond tolerance.
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeCheck {
    pub lambda_negation_max: f64,
    pub psi_max: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Verdict {
    pub fb_report: KktResidualReport,
    pub cascade: CascadeCheck,
    /// Open-loop residual at the feedback trajectory, with the feedback costates.
    pub ol_report: KktResidualReport,
    /// Feedback second order with the policy response kept, worst stage subproblem.
    pub fb_second_order: [SecondOrderReport; 2],
    pub ol_second_order: [SecondOrderReport; 2],
    /// Open-loop cone inside the weak-activity-reduced feedback cone.
    pub containment: [ContainmentResult; 2],
    pub classification: Theorem1Class,
}

impl Theorem1Verdict {
    pub fn containment_residual(&self) -> f64 {
        self.containment.iter().fold(0.0, |w, c| w.max(c.max_lift_residual))
    }

    pub fn contained(&self) -> bool {
        self.containment.iter().all(|c| c.contained)
    }
}

fn classify(cascade: bool, ol: bool, contained: bool, fb: &[SecondOrderReport; 2], olso: &[SecondOrderReport; 2]) -> Theorem1Class {
    use SecondOrderClass::*;
    let fb_suff = fb.iter().all(|r| r.classification == Sufficient);
    let ol_suff = olso.iter().all(|r| r.classification == Sufficient);
    let fb_nec = fb.iter().all(|r| r.classification != Fails);
    let ol_nec = olso.iter().all(|r| r.classification != Fails);
    if !cascade || !ol || !contained || (fb_suff && !ol_suff) || (fb_nec && !ol_nec) {
        Theorem1Class::Inconsistent
    } else if fb_suff {
        Theorem1Class::OlneCertified
    } else if !fb_nec {
        Theorem1Class::FbSecondOrderFails
    } else {
        Theorem1Class::NecessaryOnly
    }
}

/// Checks that a feedback equilibrium satisfies the open-loop first- and
/// second-order conditions.
///
/// Refused when the feedback first-order residual exceeds
/// `tol.first_order_gate`.
pub fn theorem1_audit<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
    tol: &AuditTolerances,
) -> Result<Theorem1Verdict> {
    let fb_report = fb_first_order_report(game, traj, policies, None, tol.first_order_gate)?;
    if !fb_report.pass {
        return Err(GameError::AuditRefused { reason: "feedback first-order residual above gate".into(), residual: fb_report.max_residual });
    }
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    let mult = fb_multipliers_from(&sds, &term, policies);
    let cascade = CascadeCheck {
        lambda_negation_max: fb_report.lambda_negation_max,
        psi_max: fb_report.psi_max,
        tol: tol.cascade,
        pass: fb_report.lambda_negation_max <= tol.cascade && fb_report.psi_max <= tol.cascade,
    };
    let ol_mult = MultiplierSet::new(mult.lambdas(Agent::One).to_vec(), mult.lambdas(Agent::Two).to_vec())?;
    let ol_report = ol_first_order_report(game, traj, Some(&ol_mult), tol.ol_residual)?;

    let curv = tol.include_dynamics_curvature;
    let fb_second_order = Agent::BOTH
        .map(|a| fb_second_order_report(game, traj, policies, &mult, a, PolicyResponse::Keep, tol.weak_active, tol.pd_tol_scale, curv));
    let [f1, f2] = fb_second_order;
    let fb_second_order = [f1?, f2?];

    let mut ol_second_order = Vec::with_capacity(2);
    let mut containment = Vec::with_capacity(2);
    for a in Agent::BOTH {
        let ol_cone = build_critical_cone(game, traj, Structure::OpenLoop, a, None, None, &ConeOptions::default())?;
        ol_second_order.push(second_order_report(game, traj, &ol_mult, &ol_cone, a, tol.pd_tol_scale, curv)?);
        let opts = ConeOptions { weak_active_tol: tol.weak_active, response: PolicyResponse::Auto, start_stage: 1 };
        let fb_cone = build_critical_cone(game, traj, Structure::Feedback, a, Some(policies), Some(&mult), &opts)?;
        containment.push(cone_containment_check(&ol_cone, &fb_cone, tol.containment)?);
    }
    let ol_second_order: [SecondOrderReport; 2] = ol_second_order.try_into().expect("two agents");
    let containment: [ContainmentResult; 2] = containment.try_into().expect("two agents");
    let classification = classify(
        cascade.pass,
        ol_report.pass,
        containment.iter().all(|c| c.contained),
        &fb_second_order,
        &ol_second_order,
    );
    Ok(Theorem1Verdict { fb_report, cascade, ol_report, fb_second_order, ol_second_order, containment, classification })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1ConverseVerdict {
    pub ol_report: KktResidualReport,
    /// Feedback residual of the zero-gain embedding with `ψ ≡ 0`.
    pub fb_report: KktResidualReport,
    pub pass: bool,
}

/// Embeds an open-loop equilibrium as zero-gain policies with `ψ ≡ 0` and
/// checks the feedback first-order conditions.
///
/// Refused when the open-loop residual exceeds `tol.first_order_gate`.
pub fn theorem1_converse_audit<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: &MultiplierSet<T>,
    tol: &AuditTolerances,
) -> Result<Theorem1ConverseVerdict> {
    let ol_report = ol_first_order_report(game, traj, Some(multipliers), tol.first_order_gate)?;
    if !ol_report.pass {
        return Err(GameError::AuditRefused { reason: "open-loop first-order residual above gate".into(), residual: ol_report.max_residual });
    }
    let policies = Agent::BOTH.map(|a| AffinePolicySet::open_loop(a, traj));
    let mult = MultiplierSet::new(multipliers.lambdas(Agent::One).to_vec(), multipliers.lambdas(Agent::Two).to_vec())?.with_zero_psi(game);
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    let fb_report = fb_report_from(game, &sds, &term, traj, &policies, &mult, tol.fb_residual)?;
    let pass = fb_report.pass;
    Ok(Theorem1ConverseVerdict { ol_report, fb_report, pass })
}
