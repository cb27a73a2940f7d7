//! A package linked for execution: functions indexed, call targets
//! resolved, and branch arms numbered for coverage.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::*;
use crate::stdlib::{burn_ref, mint_ref, transfer_ref};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Native {
    Mint,
    Burn,
    Transfer,
}

#[derive(Clone, Debug)]
pub struct LoadedFunction {
    pub fref: FunctionRef,
    pub decl: FunctionDecl,
    /// Resolved callee index for each `Call` instruction.
    pub call_targets: Vec<u32>,
    /// First coverage arm of each conditional branch; the taken arm is +1.
    pub arm_base: Vec<u32>,
    /// Conditional branches that control a loop.
    pub loop_branch: Vec<bool>,
    pub native: Option<Native>,
}

/// Marks conditional branches lying inside a backward-jump range with an
/// arm that leaves the range.
fn loop_branches(code: &[Instruction]) -> Vec<bool> {
    let ranges: Vec<(usize, usize)> = code
        .iter()
        .enumerate()
        .filter_map(|(pc, i)| i.branch_target().map(|t| (t as usize, pc)).filter(|(t, pc)| t <= pc))
        .collect();
    let outside = |x: usize, (lo, hi): (usize, usize)| x < lo || x > hi;
    code.iter()
        .enumerate()
        .map(|(pc, ins)| {
            if !ins.is_conditional_branch() {
                return false;
            }
            let t = ins.branch_target().unwrap() as usize;
            ranges.iter().any(|&r| {
                if outside(pc, r) {
                    return false;
                }
                if t <= pc && r.1 == pc {
                    return true;
                }
                let next_exits = match code.get(pc + 1) {
                    Some(Instruction::Branch(j)) => outside(*j as usize, r),
                    _ => false,
                };
                outside(t, r) || outside(pc + 1, r) || next_exits
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Program {
    pub package: Arc<Package>,
    pub functions: Vec<LoadedFunction>,
    index: HashMap<FunctionRef, u32>,
    pub total_arms: u32,
}

impl Program {
    pub fn load(package: Arc<Package>) -> Program {
        let mut functions = Vec::new();
        let mut index = HashMap::new();
        for m in package.all_modules() {
            for f in &m.functions {
                let fref = QualifiedName { module: m.name.clone(), name: f.name.clone() };
                index.insert(fref.clone(), functions.len() as u32);
                let native = match f.body {
                    Body::Native if fref == mint_ref() => Some(Native::Mint),
                    Body::Native if fref == burn_ref() => Some(Native::Burn),
                    Body::Native if fref == transfer_ref() => Some(Native::Transfer),
                    Body::Native => None,
                    Body::Bytecode(_) => None,
                };
                functions.push(LoadedFunction {
                    fref,
                    decl: f.clone(),
                    call_targets: vec![],
                    arm_base: vec![],
                    loop_branch: vec![],
                    native,
                });
            }
        }
        let mut arms = 0u32;
        for lf in &mut functions {
            let code = lf.decl.instructions();
            lf.call_targets = code
                .iter()
                .map(|i| match i {
                    Instruction::Call(r, _) => *index.get(r).expect("verified call target"),
                    _ => u32::MAX,
                })
                .collect();
            lf.loop_branch = loop_branches(code);
            lf.arm_base = code
                .iter()
                .map(|i| {
                    if i.is_conditional_branch() {
                        arms += 2;
                        arms - 2
                    } else {
                        u32::MAX
                    }
                })
                .collect();
        }
        Program { package, functions, index, total_arms: arms }
    }

    pub fn function_index(&self, r: &FunctionRef) -> Option<u32> {
        self.index.get(r).copied()
    }

    /// Arm id to (function, pc, taken).
    pub fn describe_arm(&self, arm: u32) -> Option<(FunctionRef, usize, bool)> {
        for lf in &self.functions {
            for (pc, &b) in lf.arm_base.iter().enumerate() {
                if b != u32::MAX && (arm == b || arm == b + 1) {
                    return Some((lf.fref.clone(), pc, arm == b + 1));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn while_loop_condition_is_a_loop_branch() {
        use Instruction::*;
        // 0: cond, 1: br_false 4, 2: body, 3: branch 0, 4: ret
        let code = vec![LdConst(Prim::Bool, Literal::Bool(true)), BrFalse(4), Not, Branch(0), Ret];
        assert_eq!(loop_branches(&code), vec![false, true, false, false, false]);
        let straight = vec![LdConst(Prim::Bool, Literal::Bool(true)), BrFalse(3), Ret, Ret];
        assert!(loop_branches(&straight).iter().all(|b| !b));
    }
}
