//! Constraint collection over primitive inputs, branch flipping and the
//! reference solver.

pub mod flip;
pub mod solver;
pub mod sym;

use thiserror::Error;

use crate::txn::{ArgBinding, Transaction};
use crate::vm::{execute, ExecOptions, ExecResult, Program, WorldState};

pub use flip::{choose_flips, flip_and_solve, flip_goals, solve_flips, FlipOutcome, TERMINAL};
pub use solver::{solve, Assignment, ReferenceSolver, SolveOutcome, Solver, DEFAULT_BUDGET};
pub use sym::{Constraint, ConstraintKind, Goal, InputVar, PathCondition, Site, SymExpr};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConcolicError {
    #[error("shadow trace diverged from concrete execution at f{}@{}: {constraint}", .site.function, .site.pc)]
    TraceDivergence { site: Site, constraint: String },
    #[error("{0} is not a primitive input of the transaction")]
    BindingMiss(InputVar),
}

/// A traced execution together with its path condition.
#[derive(Clone, Debug)]
pub struct Collected {
    pub path: PathCondition,
    pub result: ExecResult,
}

/// Runs `txn` with shadow tracking and checks that every recorded
/// constraint holds, and the terminal guard fails, under the concrete inputs.
pub fn collect_constraints(
    prog: &Program,
    state: &WorldState,
    txn: &Transaction,
    gas_limit: u64,
) -> Result<Collected, ConcolicError> {
    let mut result = execute(prog, state, txn, &ExecOptions { gas_limit, trace: true });
    let path = result.trace.as_mut().map(|t| t.path.clone()).unwrap_or_default();
    let env = |v: InputVar| path.value_of(v);
    for c in &path.constraints {
        if !c.holds(&env) {
            return Err(ConcolicError::TraceDivergence { site: c.site, constraint: c.to_string() });
        }
    }
    if let Some(t) = &path.terminal {
        if !t.goal().negated().holds(&env) {
            return Err(ConcolicError::TraceDivergence { site: t.site, constraint: t.to_string() });
        }
    }
    Ok(Collected { path, result })
}

/// Replaces the literal inputs named in `a`; everything else is kept.
pub fn apply_assignment(txn: &Transaction, a: &Assignment) -> Result<Transaction, ConcolicError> {
    let mut out = txn.clone();
    for (v, value) in a {
        let miss = || ConcolicError::BindingMiss(*v);
        let arg = out
            .calls
            .get_mut(v.call as usize)
            .and_then(|c| c.args.get_mut(v.arg as usize))
            .ok_or_else(miss)?;
        match (arg, v.elem) {
            (ArgBinding::Literal(p, x), None) if *value <= p.max_value() => *x = *value,
            (ArgBinding::LiteralVector(p, xs), Some(e)) if *value <= p.max_value() => {
                *xs.get_mut(e as usize).ok_or_else(miss)? = *value;
            }
            _ => return Err(miss()),
        }
    }
    Ok(out)
}
