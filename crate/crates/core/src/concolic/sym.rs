//! Symbolic expressions over primitive transaction inputs and the path
//! constraints built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use primitive_types::U256;

use crate::model::Prim;
use crate::vm::arith::{binop, cast, BinOp, CmpOp};

/// A primitive input of a transaction: call index, argument position and,
/// for literal vectors, the element index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputVar {
    pub call: u32,
    pub arg: u32,
    pub elem: Option<u32>,
}

impl fmt::Display for InputVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in{}_{}", self.call, self.arg)?;
        if let Some(e) = self.elem {
            write!(f, "_{e}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SymExpr {
    Input(InputVar, Prim),
    Const(Prim, U256),
    Bin(BinOp, Prim, Arc<SymExpr>, Arc<SymExpr>),
    /// Conversion to the given width.
    Cast(Prim, Arc<SymExpr>),
    Cmp(CmpOp, Arc<SymExpr>, Arc<SymExpr>),
    Not(Arc<SymExpr>),
}

impl SymExpr {
    pub fn width(&self) -> Prim {
        match self {
            SymExpr::Input(_, p) | SymExpr::Const(p, _) | SymExpr::Bin(_, p, ..) | SymExpr::Cast(p, _) => *p,
            SymExpr::Cmp(..) | SymExpr::Not(_) => Prim::Bool,
        }
    }

    pub fn bool_const(b: bool) -> SymExpr {
        SymExpr::Const(Prim::Bool, U256::from(b as u8))
    }

    /// Evaluates under `env`; `None` when some subterm aborts.
    pub fn eval(&self, env: &dyn Fn(InputVar) -> U256) -> Option<U256> {
        match self {
            SymExpr::Input(v, _) => Some(env(*v)),
            SymExpr::Const(_, c) => Some(*c),
            SymExpr::Bin(op, p, a, b) => binop(*op, *p, a.eval(env)?, b.eval(env)?).ok(),
            SymExpr::Cast(p, a) => cast(*p, a.eval(env)?).ok(),
            SymExpr::Cmp(op, a, b) => Some(U256::from(op.eval(a.eval(env)?, b.eval(env)?) as u8)),
            SymExpr::Not(a) => Some(U256::from(a.eval(env)?.is_zero() as u8)),
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<InputVar>) {
        match self {
            SymExpr::Input(v, _) => {
                out.insert(*v);
            }
            SymExpr::Const(..) => {}
            SymExpr::Bin(_, _, a, b) | SymExpr::Cmp(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            SymExpr::Cast(_, a) | SymExpr::Not(a) => a.vars(out),
        }
    }

    pub fn has_vars(&self) -> bool {
        match self {
            SymExpr::Input(..) => true,
            SymExpr::Const(..) => false,
            SymExpr::Bin(_, _, a, b) | SymExpr::Cmp(_, a, b) => a.has_vars() || b.has_vars(),
            SymExpr::Cast(_, a) | SymExpr::Not(a) => a.has_vars(),
        }
    }

    /// Integer constants mentioned in the expression.
    pub fn constants(&self, out: &mut BTreeSet<U256>) {
        match self {
            SymExpr::Input(..) => {}
            SymExpr::Const(p, c) => {
                if p.is_int() {
                    out.insert(*c);
                }
            }
            SymExpr::Bin(_, _, a, b) | SymExpr::Cmp(_, a, b) => {
                a.constants(out);
                b.constants(out);
            }
            SymExpr::Cast(_, a) | SymExpr::Not(a) => a.constants(out),
        }
    }
}

/// Prefix notation, used by the constraint dump.
impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Input(v, p) => write!(f, "{v}:{p}"),
            SymExpr::Const(Prim::Bool, c) => write!(f, "{}", !c.is_zero()),
            SymExpr::Const(p, c) => write!(f, "{c}{p}"),
            SymExpr::Bin(op, _, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            SymExpr::Cast(p, a) => write!(f, "(as-{p} {a})"),
            SymExpr::Cmp(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
            SymExpr::Not(a) => write!(f, "(! {a})"),
        }
    }
}

/// Function index and instruction offset inside the loaded program.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub function: u32,
    pub pc: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    /// The condition evaluated to `value` on the recorded path.
    BranchCond { value: bool },
    /// The arithmetic expression did not abort.
    NoOverflow,
    /// The cast expression stayed in range.
    CastInRange,
    /// The boolean expression `index < length` held.
    VecIndexInBounds,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub expr: Arc<SymExpr>,
    pub site: Site,
}

impl Constraint {
    pub fn is_branch(&self) -> bool {
        matches!(self.kind, ConstraintKind::BranchCond { .. })
    }

    /// Whether the constraint holds as recorded under `env`.
    pub fn holds(&self, env: &dyn Fn(InputVar) -> U256) -> bool {
        self.goal().holds(env)
    }

    /// The constraint as a solver goal.
    pub fn goal(&self) -> Goal {
        match self.kind {
            ConstraintKind::BranchCond { value } => Goal::Truth(self.expr.clone(), value),
            ConstraintKind::NoOverflow | ConstraintKind::CastInRange => Goal::Defined(self.expr.clone(), true),
            ConstraintKind::VecIndexInBounds => Goal::Truth(self.expr.clone(), true),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ConstraintKind::BranchCond { value: true } => "branch-true",
            ConstraintKind::BranchCond { value: false } => "branch-false",
            ConstraintKind::NoOverflow => "no-overflow",
            ConstraintKind::CastInRange => "cast-in-range",
            ConstraintKind::VecIndexInBounds => "index-in-bounds",
        };
        write!(f, "({tag} f{}@{} {})", self.site.function, self.site.pc, self.expr)
    }
}

/// A solver obligation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Goal {
    /// The boolean expression evaluates (without aborting) to the flag.
    Truth(Arc<SymExpr>, bool),
    /// With `true`, the expression evaluates without aborting; with
    /// `false`, the outermost operation aborts while its operands do not.
    Defined(Arc<SymExpr>, bool),
}

impl Goal {
    pub fn expr(&self) -> &Arc<SymExpr> {
        match self {
            Goal::Truth(e, _) | Goal::Defined(e, _) => e,
        }
    }

    pub fn holds(&self, env: &dyn Fn(InputVar) -> U256) -> bool {
        match self {
            Goal::Truth(e, want) => e.eval(env) == Some(U256::from(*want as u8)),
            Goal::Defined(e, true) => e.eval(env).is_some(),
            Goal::Defined(e, false) => {
                let operands_ok = match &**e {
                    SymExpr::Bin(_, _, a, b) => a.eval(env).is_some() && b.eval(env).is_some(),
                    SymExpr::Cast(_, a) => a.eval(env).is_some(),
                    _ => false,
                };
                operands_ok && e.eval(env).is_none()
            }
        }
    }

    pub fn negated(&self) -> Goal {
        match self {
            Goal::Truth(e, v) => Goal::Truth(e.clone(), !v),
            Goal::Defined(e, v) => Goal::Defined(e.clone(), !v),
        }
    }
}

/// Constraints collected along one concrete execution.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathCondition {
    pub constraints: Vec<Constraint>,
    /// A guard that failed and ended the run in an abort.
    pub terminal: Option<Constraint>,
    /// Width and concrete value of every input variable.
    pub vars: BTreeMap<InputVar, (Prim, U256)>,
}

impl PathCondition {
    pub fn value_of(&self, v: InputVar) -> U256 {
        self.vars.get(&v).map(|(_, x)| *x).unwrap_or_default()
    }

    /// One constraint per line in prefix notation.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (v, (p, x)) in &self.vars {
            s.push_str(&format!("(input {v} {p} {x})\n"));
        }
        for c in &self.constraints {
            s.push_str(&format!("{c}\n"));
        }
        if let Some(t) = &self.terminal {
            s.push_str(&format!("(violated {t})\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Arc<SymExpr> {
        Arc::new(SymExpr::Input(InputVar { call: 0, arg: 0, elem: None }, Prim::U64))
    }

    #[test]
    fn eval_follows_abort_semantics() {
        let e = SymExpr::Bin(BinOp::Div, Prim::U64, x(), Arc::new(SymExpr::Const(Prim::U64, 0.into())));
        assert_eq!(e.eval(&|_| 5.into()), None);
        let e = SymExpr::Bin(BinOp::Add, Prim::U64, x(), Arc::new(SymExpr::Const(Prim::U64, 5.into())));
        assert_eq!(e.eval(&|_| 7.into()), Some(12.into()));
    }

    #[test]
    fn defined_false_needs_operands_defined() {
        let big = Arc::new(SymExpr::Const(Prim::U64, U256::from(u64::MAX)));
        let sum = Arc::new(SymExpr::Bin(BinOp::Add, Prim::U64, x(), big));
        let g = Goal::Defined(sum, false);
        assert!(g.holds(&|_| 1.into()));
        assert!(!g.holds(&|_| 0.into()));
    }
}
