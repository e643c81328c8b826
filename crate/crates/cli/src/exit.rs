//! Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 internal
//! invariant violation.

use std::fmt;

use catp_core::context::ContextError;
use catp_core::cost::CostError;
use catp_core::datagen::DatagenError;
use catp_core::executor::ExecError;
use catp_core::tpl::TplError;
use catp_core::universe::UniverseError;
use catp_planner::PlannerError;

pub const VALIDATION: u8 = 1;
pub const IO: u8 = 2;
pub const INTERNAL: u8 = 3;

/// A user-facing input problem detected by the command layer itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn internal_planner(e: &PlannerError) -> bool {
    matches!(e, PlannerError::NonFinite(_) | PlannerError::DeadEnd { .. })
}

fn internal_cost(e: &CostError) -> bool {
    matches!(e, CostError::MissingPerformance | CostError::UnexpectedPerformance)
}

/// Maps an error chain to an exit code. Any I/O failure in the chain wins;
/// errors of known input-checking types are validation failures; the rest
/// are internal.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
        return IO;
    }
    for c in err.chain() {
        if c.downcast_ref::<PlannerError>().is_some_and(internal_planner)
            || c.downcast_ref::<CostError>().is_some_and(internal_cost)
            || matches!(c.downcast_ref::<TplError>(), Some(TplError::DeadEnd))
        {
            return INTERNAL;
        }
    }
    let known = |c: &(dyn std::error::Error + 'static)| {
        c.is::<Invalid>()
            || c.is::<UniverseError>()
            || c.is::<DatagenError>()
            || c.is::<PlannerError>()
            || c.is::<ExecError>()
            || c.is::<TplError>()
            || c.is::<CostError>()
            || c.is::<ContextError>()
            || c.is::<serde_json::Error>()
            || c.is::<csv::Error>()
    };
    if err.chain().any(known) {
        VALIDATION
    } else {
        INTERNAL
    }
}
