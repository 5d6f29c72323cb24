use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::derivatives::{evaluate_derivatives, StageDerivatives, TerminalDerivatives};
use crate::error::{input_err, Result};
use crate::game::{consistency_tol, rollout_policy, Agent, GameDefinition, Trajectory};
use crate::multipliers::MultiplierSet;
use crate::olne::recover_ol_costates;
use crate::policy::AffinePolicySet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    OpenLoop,
    Feedback,
}

/// Max-norms of the residual families at one stage (both agents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResidual {
    pub stage: usize,
    /// Stationarity in `x_t`; zero at `t = 1` where `x_1` is fixed.
    pub state_stationarity: f64,
    pub own_control_stationarity: f64,
    pub cross_control_stationarity: Option<f64>,
    /// `x_{t+1} − f_t(x_t, u_t)`.
    pub dynamics: f64,
    pub policy_constraint: Option<f64>,
    pub complementarity: Option<f64>,
}

/// Residual norms of a first-order system, grouped by equation family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktResidualReport {
    pub structure: Structure,
    pub state_stationarity: f64,
    pub own_control_stationarity: f64,
    pub cross_control_stationarity: Option<f64>,
    pub terminal: f64,
    /// Includes the mismatch of `x_1` with the initial state.
    pub dynamics: f64,
    pub policy_constraint: Option<f64>,
    /// `|min(u − a, ν̲)|` over all coordinates.
    pub complementarity_lower: Option<f64>,
    /// `|min(b − u, ν̄)|` over all coordinates.
    pub complementarity_upper: Option<f64>,
    pub per_stage: Vec<StageResidual>,
    /// `max_t ‖λ¹_t + λ²_t‖∞`.
    pub lambda_negation_max: f64,
    /// `max_{s,i} ‖ψ^i_s‖∞`.
    pub psi_max: f64,
    pub tol: f64,
    pub max_residual: f64,
    pub pass: bool,
}

impl KktResidualReport {
    /// The families every structure shares, as `(name, value)` pairs.
    pub fn shared_families(&self) -> [(&'static str, f64); 4] {
        [
            ("state_stationarity", self.state_stationarity),
            ("own_control_stationarity", self.own_control_stationarity),
            ("terminal", self.terminal),
            ("dynamics", self.dynamics),
        ]
    }

    /// Every present family as `(name, value)` pairs.
    pub fn families(&self) -> Vec<(&'static str, f64)> {
        let mut out = self.shared_families().to_vec();
        let optional = [
            ("cross_control_stationarity", self.cross_control_stationarity),
            ("policy_constraint", self.policy_constraint),
            ("complementarity_lower", self.complementarity_lower),
            ("complementarity_upper", self.complementarity_upper),
        ];
        out.extend(optional.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))));
        out
    }

    fn finish(mut self) -> Self {
        self.max_residual = self.families().into_iter().fold(0.0, |w, (_, v)| if v.is_nan() || v > w { v } else { w });
        self.pass = self.max_residual <= self.tol;
        self
    }
}

fn norm<T: Scalar>(v: &DVector<T>) -> f64 {
    v.amax().as_f64()
}

fn fmax(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Families common to both structures: own-control stationarity (with bound
/// multipliers when present), terminal, dynamics and complementarity.
fn common_families<T: Scalar>(
    game: &GameDefinition<T>,
    sds: &[StageDerivatives<T>],
    term: &TerminalDerivatives<T>,
    traj: &Trajectory<T>,
    mult: &MultiplierSet<T>,
    structure: Structure,
    tol: f64,
) -> Result<KktResidualReport> {
    let k = game.horizon();
    let bounded = mult.has_bound_multipliers();
    let bounds = game.bounds();
    if bounded && bounds.is_none() {
        return Err(input_err("bound multipliers given for a game without bounds"));
    }
    let mut per_stage = Vec::with_capacity(k);
    let (mut own, mut dynamics, mut comp_lo, mut comp_hi) = (0.0, norm(&(traj.state(1) - game.initial_state())), 0.0, 0.0);
    for t in 1..=k {
        let sd = &sds[t - 1];
        let mut stage_own = 0.0;
        let mut stage_comp = 0.0;
        for a in Agent::BOTH {
            let mut r = sd.grad_u(a, a) + sd.b(a).transpose() * mult.lambda(a, t);
            if bounded {
                r += mult.nu_upper(a, t).unwrap();
                r -= mult.nu_lower(a, t).unwrap();
                let b = bounds.unwrap();
                let u = traj.control(a, t);
                let (nl, nh) = (mult.nu_lower(a, t).unwrap(), mult.nu_upper(a, t).unwrap());
                for j in 0..u.len() {
                    let lo = (u[j] - b.lower(a, t)[j]).min_of(nl[j]).abs().as_f64();
                    let hi = (b.upper(a, t)[j] - u[j]).min_of(nh[j]).abs().as_f64();
                    comp_lo = fmax(comp_lo, lo);
                    comp_hi = fmax(comp_hi, hi);
                    stage_comp = fmax(stage_comp, fmax(lo, hi));
                }
            }
            stage_own = fmax(stage_own, norm(&r));
        }
        let f = game.step(t, traj.state(t), traj.control(Agent::One, t), traj.control(Agent::Two, t))?;
        let stage_dyn = norm(&(traj.state(t + 1) - f));
        own = fmax(own, stage_own);
        dynamics = fmax(dynamics, stage_dyn);
        per_stage.push(StageResidual {
            stage: t,
            state_stationarity: 0.0,
            own_control_stationarity: stage_own,
            cross_control_stationarity: None,
            dynamics: stage_dyn,
            policy_constraint: None,
            complementarity: bounded.then_some(stage_comp),
        });
    }
    let terminal = Agent::BOTH
        .iter()
        .map(|&a| norm(&(&term.grad * a.sign::<T>() - mult.lambda(a, k))))
        .fold(0.0, fmax);
    Ok(KktResidualReport {
        structure,
        state_stationarity: 0.0,
        own_control_stationarity: own,
        cross_control_stationarity: None,
        terminal,
        dynamics,
        policy_constraint: None,
        complementarity_lower: bounded.then_some(comp_lo),
        complementarity_upper: bounded.then_some(comp_hi),
        per_stage,
        lambda_negation_max: mult.lambda_negation_gap().as_f64(),
        psi_max: mult.psi_max().as_f64(),
        tol,
        max_residual: 0.0,
        pass: false,
    })
}

pub(crate) fn ol_report_from<T: Scalar>(
    game: &GameDefinition<T>,
    sds: &[StageDerivatives<T>],
    term: &TerminalDerivatives<T>,
    traj: &Trajectory<T>,
    mult: &MultiplierSet<T>,
    tol: f64,
) -> Result<KktResidualReport> {
    let mut rep = common_families(game, sds, term, traj, mult, Structure::OpenLoop, tol)?;
    for s in 2..=game.horizon() {
        let sd = &sds[s - 1];
        let r = Agent::BOTH
            .iter()
            .map(|&a| norm(&(sd.grad_x(a) + sd.a.transpose() * mult.lambda(a, s) - mult.lambda(a, s - 1))))
            .fold(0.0, fmax);
        rep.per_stage[s - 1].state_stationarity = r;
        rep.state_stationarity = fmax(rep.state_stationarity, r);
    }
    Ok(rep.finish())
}

pub(crate) fn fb_report_from<T: Scalar>(
    game: &GameDefinition<T>,
    sds: &[StageDerivatives<T>],
    term: &TerminalDerivatives<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
    mult: &MultiplierSet<T>,
    tol: f64,
) -> Result<KktResidualReport> {
    let mut rep = common_families(game, sds, term, traj, mult, Structure::Feedback, tol)?;
    let (mut cross, mut policy) = (0.0, 0.0);
    for s in 1..=game.horizon() {
        let sd = &sds[s - 1];
        let x = traj.state(s);
        let stage_policy = Agent::BOTH
            .iter()
            .map(|&a| norm(&(traj.control(a, s) - policies[a.index()].stage(s).eval(x))))
            .fold(0.0, fmax);
        let (mut stage_cross, mut stage_state) = (None, 0.0);
        if s >= 2 {
            let mut c = 0.0;
            for a in Agent::BOTH {
                let o = a.other();
                let zero = DVector::zeros(game.control_dim(o));
                let psi = mult.psi(a, s).unwrap_or(&zero);
                let lam = mult.lambda(a, s);
                c = fmax(c, norm(&(sd.grad_u(a, o) + sd.b(o).transpose() * lam - psi)));
                let gain = policies[o.index()].gain(s);
                let r = sd.grad_x(a) + sd.a.transpose() * lam + gain.transpose() * psi - mult.lambda(a, s - 1);
                stage_state = fmax(stage_state, norm(&r));
            }
            stage_cross = Some(c);
            cross = fmax(cross, c);
        }
        policy = fmax(policy, stage_policy);
        let ps = &mut rep.per_stage[s - 1];
        ps.cross_control_stationarity = stage_cross.or(Some(0.0));
        ps.policy_constraint = Some(stage_policy);
        ps.state_stationarity = stage_state;
        rep.state_stationarity = fmax(rep.state_stationarity, stage_state);
    }
    rep.cross_control_stationarity = Some(cross);
    rep.policy_constraint = Some(policy);
    Ok(rep.finish())
}

/// Costates and policy multipliers that satisfy the terminal, cross-control
/// and state stationarity rows of the feedback system exactly.
pub(crate) fn fb_multipliers_from<T: Scalar>(
    sds: &[StageDerivatives<T>],
    term: &TerminalDerivatives<T>,
    policies: &[AffinePolicySet<T>; 2],
) -> MultiplierSet<T> {
    let k = sds.len();
    let mut lambda: [Vec<DVector<T>>; 2] = [vec![DVector::zeros(0); k], vec![DVector::zeros(0); k]];
    let mut psi: [Vec<DVector<T>>; 2] = [vec![DVector::zeros(0); k - 1], vec![DVector::zeros(0); k - 1]];
    for a in Agent::BOTH {
        let (ai, o) = (a.index(), a.other());
        lambda[ai][k - 1] = &term.grad * a.sign::<T>();
        for s in (2..=k).rev() {
            let sd = &sds[s - 1];
            let lam = &lambda[ai][s - 1];
            let p = sd.grad_u(a, o) + sd.b(o).transpose() * lam;
            let prev = sd.grad_x(a) + sd.a.transpose() * lam + policies[o.index()].gain(s).transpose() * &p;
            psi[ai][s - 2] = p;
            lambda[ai][s - 2] = prev;
        }
    }
    let [l1, l2] = lambda;
    let [p1, p2] = psi;
    MultiplierSet::new(l1, l2).and_then(|m| m.with_psi(p1, p2)).expect("shapes follow the horizon")
}

pub(crate) fn check_closed_loop<T: Scalar>(game: &GameDefinition<T>, traj: &Trajectory<T>, policies: &[AffinePolicySet<T>; 2]) -> Result<()> {
    traj.check_dims(game)?;
    let cl = rollout_policy(game, &policies[0], &policies[1])?;
    let scale = traj.states().iter().fold(T::zero(), |w, x| w.max_of(x.amax()));
    let diff = cl.max_abs_diff(traj);
    if !(diff <= consistency_tol(scale)) {
        return Err(input_err(format!(
            "trajectory differs from the closed-loop rollout of the policies by {:.3e}",
            diff.as_f64()
        )));
    }
    Ok(())
}

/// Feedback multipliers `(λ¹, λ², ψ¹, ψ²)` by backward recursion along the
/// closed-loop trajectory of `policies`.
pub fn recover_fb_multipliers<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
) -> Result<MultiplierSet<T>> {
    check_closed_loop(game, traj, policies)?;
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    Ok(fb_multipliers_from(&sds, &term, policies))
}

/// Open-loop first-order residual report; costates are recovered when omitted.
pub fn ol_first_order_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    multipliers: Option<&MultiplierSet<T>>,
    tol: f64,
) -> Result<KktResidualReport> {
    traj.check_dims(game)?;
    let recovered;
    let mult = match multipliers {
        Some(m) => m,
        None => {
            recovered = recover_ol_costates(game, traj)?;
            &recovered
        }
    };
    mult.check_dims(game)?;
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    ol_report_from(game, &sds, &term, traj, mult, tol)
}

/// Feedback first-order residual report; multipliers are recovered when
/// omitted. A multiplier set without `ψ` is read as `ψ ≡ 0`.
pub fn fb_first_order_report<T: Scalar>(
    game: &GameDefinition<T>,
    traj: &Trajectory<T>,
    policies: &[AffinePolicySet<T>; 2],
    multipliers: Option<&MultiplierSet<T>>,
    tol: f64,
) -> Result<KktResidualReport> {
    traj.check_dims(game)?;
    for a in Agent::BOTH {
        policies[a.index()].check_dims(game, a)?;
    }
    let (sds, term) = evaluate_derivatives(game, traj, false)?;
    let recovered;
    let mult = match multipliers {
        Some(m) => m,
        None => {
            check_closed_loop(game, traj, policies)?;
            recovered = fb_multipliers_from(&sds, &term, policies);
            &recovered
        }
    };
    mult.check_dims(game)?;
    fb_report_from(game, &sds, &term, traj, policies, mult, tol)
}

/// Default tolerance of the first-order reports.
pub const DEFAULT_FIRST_ORDER_TOL: f64 = 1e-8;

