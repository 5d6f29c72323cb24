use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::active_set::{classify_active_set, ActiveSetClassification};
use super::recover::{recover_constrained_multipliers, require_bounds};
use crate::derivatives::evaluate_derivatives;
use crate::error::{input_err, GameError, Result};
use crate::game::{Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::policy::AffinePolicySet;
use crate::scalar::Scalar;
use crate::verify::first_order::{fb_report_from, ol_report_from, KktResidualReport, Structure};
use crate::verify::AuditTolerances;

/// The equilibrium handed to [`theorem2_audit`].
#[derive(Debug, Clone, Copy)]
pub enum EquilibriumSide<'a, T: Scalar> {
    Feedback { trajectory: &'a Trajectory<T>, policies: &'a [AffinePolicySet<T>; 2] },
    /// Multipliers are recovered when omitted.
    OpenLoop { trajectory: &'a Trajectory<T>, multipliers: Option<&'a MultiplierSet<T>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem2Class {
    Pass,
    Fail,
    /// Strict complementarity fails, so the relations are not implied.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Verdict {
    pub side: Structure,
    /// First-order report of the supplied side, which gates the audit.
    pub gate: KktResidualReport,
    pub active_set: ActiveSetClassification,
    pub strict_complementarity: bool,
    /// `max ‖ψ^i_t − (ν̄^{-i}_t − ν̲^{-i}_t)‖∞` over `t ≥ 2`; feedback side with `K ≥ 2` only.
    pub psi_nu_identity: Option<f64>,
    /// `max ‖(∇_xπ^{-i}_t)ᵀψ^i_t‖∞` over `t ≥ 2`; feedback side with `K ≥ 2` only.
    pub annihilation: Option<f64>,
    /// `max_t ‖λ¹_t + λ²_t‖∞`.
    pub lambda_negation: f64,
    /// Constrained open-loop residual at the feedback equilibrium.
    pub ol_residual: Option<f64>,
    /// Constrained feedback residual of the open-loop point embedded with
    /// `ψ^i = ν̄^{-i} − ν̲^{-i}` and zero-gain policies.
    pub embedding_residual: Option<f64>,
    pub tol: f64,
    pub classification: Theorem2Class,
}

fn nu_difference<T: Scalar>(mult: &MultiplierSet<T>, agent: Agent, t: usize) -> DVector<T> {
    mult.nu_upper(agent, t).expect("bound multipliers present") - mult.nu_lower(agent, t).expect("bound multipliers present")
}

/// `(λ, ν)` of `mult` without the policy multipliers.
fn open_loop_part<T: Scalar>(mult: &MultiplierSet<T>) -> Result<MultiplierSet<T>> {
    let k = mult.horizon();
    let side = |upper: bool| {
        Agent::BOTH.map(|a| {
            (1..=k)
                .map(|t| if upper { mult.nu_upper(a, t) } else { mult.nu_lower(a, t) }.expect("bound multipliers present").clone())
                .collect::<Vec<_>>()
        })
    };
    MultiplierSet::new(mult.lambdas(Agent::One).to_vec(), mult.lambdas(Agent::Two).to_vec())?.with_bound_multipliers(side(false), side(true))
}

/// Feedback residual of `(traj, ol)` embedded with zero gains and
/// `ψ^i_t = ν̄^{-i}_t − ν̲^{-i}_t`.
fn embedding_residual<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>, ol: &MultiplierSet<T>, tol: f64) -> Result<f64> {
    let (k, n) = (game.horizon(), game.state_dim());
    let psi = Agent::BOTH.map(|a| (2..=k).map(|t| nu_difference(ol, a.other(), t)).collect::<Vec<_>>());
    let [p1, p2] = psi;
    let mult = open_loop_part(ol)?.with_psi(p1, p2)?;
    let policies = Agent::BOTH.map(|a| {
        AffinePolicySet::anchored(a, traj, vec![DMatrix::zeros(game.control_dim(a), n); k]).expect("one gain per stage")
    });
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    Ok(fb_report_from(game, &sds, &term, traj, &policies, &mult, tol)?.max_residual)
}

/// Checks the first-order relations between box-constrained feedback and
/// open-loop equilibria under strict complementarity.
///
/// For a feedback equilibrium: the `ψ`–`ν` identity, the annihilation of `ψ`
/// by the other agent's policy gradient, costate negation, the constrained
/// open-loop residual and the reverse embedding. For an open-loop
/// equilibrium: costate negation and the embedding into the feedback system.
pub fn theorem2_audit<T: Scalar>(game: &GameDefinition<T>, side: EquilibriumSide<'_, T>, tol: &AuditTolerances) -> Result<Theorem2Verdict> {
    require_bounds(game)?;
    let k = game.horizon();
    let t2 = tol.theorem2;
    let (structure, traj, mult, gate) = match side {
        EquilibriumSide::Feedback { trajectory, policies } => {
            crate::fbne::check_policies(game, policies)?;
            let mult = recover_constrained_multipliers(game, trajectory, Some(policies), tol.act_tol)?;
            let (sds, term) = evaluate_derivatives(game, trajectory, false)?;
            let gate = fb_report_from(game, &sds, &term, trajectory, policies, &mult, tol.first_order_gate)?;
            (Structure::Feedback, trajectory, mult, gate)
        }
        EquilibriumSide::OpenLoop { trajectory, multipliers } => {
            let mult = match multipliers {
                Some(m) if m.has_bound_multipliers() => m.clone(),
                Some(_) => return Err(input_err("open-loop side needs bound multipliers")),
                None => recover_constrained_multipliers(game, trajectory, None, tol.act_tol)?,
            };
            mult.check_dims(game)?;
            let (sds, term) = evaluate_derivatives(game, trajectory, false)?;
            let gate = ol_report_from(game, &sds, &term, trajectory, &mult, tol.first_order_gate)?;
            (Structure::OpenLoop, trajectory, mult, gate)
        }
    };
    if !gate.pass {
        return Err(GameError::AuditRefused { reason: "supplied equilibrium fails its first-order conditions".into(), residual: gate.max_residual });
    }
    let active_set = classify_active_set(game, traj, &mult, tol.act_tol, tol.strict_tol)?;
    let strict = active_set.strict_complementarity;
    let lambda_negation = mult.lambda_negation_gap().as_f64();

    let (mut psi_nu_identity, mut annihilation, mut ol_residual) = (None, None, None);
    if let EquilibriumSide::Feedback { policies, .. } = side {
        if k >= 2 {
            let (mut id, mut ann) = (0.0f64, 0.0f64);
            for t in 2..=k {
                for a in Agent::BOTH {
                    let psi = mult.psi(a, t).expect("feedback recovery yields psi");
                    id = id.max((psi - nu_difference(&mult, a.other(), t)).amax().as_f64());
                    ann = ann.max((policies[a.other().index()].gain(t).transpose() * psi).amax().as_f64());
                }
            }
            psi_nu_identity = Some(id);
            annihilation = Some(ann);
        }
        let ol = open_loop_part(&mult)?;
        let (sds, term) = evaluate_derivatives(game, traj, false)?;
        ol_residual = Some(ol_report_from(game, &sds, &term, traj, &ol, t2)?.max_residual);
    }
    let embedding = embedding_residual(game, traj, &mult, t2)?;

    let checks = [psi_nu_identity, annihilation, Some(lambda_negation), ol_residual, Some(embedding)];
    let classification = if !strict {
        Theorem2Class::NotApplicable
    } else if checks.iter().flatten().all(|&v| v <= t2) {
        Theorem2Class::Pass
    } else {
        Theorem2Class::Fail
    };
    Ok(Theorem2Verdict {
        side: structure,
        gate,
        active_set,
        strict_complementarity: strict,
        psi_nu_identity,
        annihilation,
        lambda_negation,
        ol_residual,
        embedding_residual: Some(embedding),
        tol: t2,
        classification,
    })
}
