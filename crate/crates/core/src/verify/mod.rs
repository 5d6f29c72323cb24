//! First-order residual reports, critical cones, second-order tests and the
//! audits relating feedback and open-loop equilibria.

pub mod cone;
pub mod first_order;
pub mod second_order;
pub mod theorem1;

pub use cone::{build_critical_cone, cone_containment_check, ConeOptions, ContainmentResult, CriticalConeBasis, FreeCoordinate, PolicyResponse};
pub use first_order::{
    fb_first_order_report, ol_first_order_report, recover_fb_multipliers, KktResidualReport, StageResidual, Structure,
    DEFAULT_FIRST_ORDER_TOL,
};
pub use second_order::{fb_second_order_report, second_order_report, SecondOrderClass, SecondOrderReport};
pub use theorem1::{theorem1_audit, theorem1_converse_audit, AuditTolerances, Theorem1Class, Theorem1ConverseVerdict, Theorem1Verdict};

#[cfg(test)]
mod tests;
