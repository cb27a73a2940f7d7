//! The bytecode interpreter and transaction executor.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use primitive_types::U256;

use crate::concolic::sym::{Constraint, ConstraintKind, InputVar, PathCondition, Site, SymExpr};
use crate::model::*;
use crate::stdlib::coin_ref;
use crate::txn::{ArgBinding, Transaction};
use crate::vm::arith::{binop, cast, shl_discards_bits, AbortKind, BinOp, CmpOp};
use crate::vm::program::{Native, Program};
use crate::vm::shadow::{Scalar, Shadow, MAX_SYM_DEPTH};
use crate::vm::state::{Owner, WorldState};
use crate::vm::value::Value;

pub const DEFAULT_GAS_LIMIT: u64 = 100_000;
const MAX_CALL_DEPTH: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    pub gas_limit: u64,
    /// Track shadow facts for oracles and constraint collection.
    pub trace: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { gas_limit: DEFAULT_GAS_LIMIT, trace: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    Abort { kind: AbortKind, function: FunctionRef, pc: usize },
    OutOfGas,
}

impl Status {
    pub fn is_success(&self) -> bool {
        *self == Status::Success
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Status::Success => write!(f, "success"),
            Status::Abort { kind: AbortKind::Explicit(c), function, pc } => write!(f, "abort {c} in {function}@{pc}"),
            Status::Abort { kind, function, pc } => write!(f, "abort {kind:?} ({}) in {function}@{pc}", kind.code()),
            Status::OutOfGas => write!(f, "out of gas"),
        }
    }
}

/// Traversal record of a loop-controlling branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopStat {
    pub count: u64,
    pub first: [U256; 2],
    /// Condition operands were identical on every traversal.
    pub constant: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecTrace {
    pub path: PathCondition,
    /// Divisions that truncated a nonzero remainder.
    pub lossy_divs: BTreeSet<Site>,
    /// Multiplication site mapped to the lossy division feeding it.
    pub amplified: BTreeMap<Site, Site>,
    pub unnecessary_casts: BTreeSet<Site>,
    pub unnecessary_bools: BTreeSet<Site>,
    pub shl_overflows: BTreeSet<Site>,
    pub loops: BTreeMap<Site, LoopStat>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecResult {
    pub status: Status,
    /// Sorted branch-arm ids reached.
    pub coverage: Vec<u32>,
    pub gas_used: u64,
    pub balances_before: BTreeMap<TypeTag, u128>,
    pub balances_after: BTreeMap<TypeTag, u128>,
    pub events: Vec<(u64, Value)>,
    /// Post-state of a successful run.
    pub final_state: Option<WorldState>,
    pub trace: Option<ExecTrace>,
}

enum Stop {
    Abort(AbortKind, u32, usize),
    OutOfGas,
}

struct Frame {
    func: u32,
    pc: usize,
    locals: Vec<Option<Value>>,
    slocals: Vec<Shadow>,
    targs: Arc<Vec<TypeTag>>,
    base: usize,
}

struct Machine<'a> {
    prog: &'a Program,
    state: &'a mut WorldState,
    stack: Vec<Value>,
    sstack: Vec<Shadow>,
    frames: Vec<Frame>,
    gas_used: u64,
    gas_limit: u64,
    tracing: bool,
    cov: Vec<u64>,
    trace: ExecTrace,
}

type Outcome = Result<Vec<(Value, Shadow)>, Stop>;

fn join_lossy(a: &Shadow, b: &Shadow) -> Option<Site> {
    a.lossy().or(b.lossy())
}

fn sym_or_const(s: &Shadow, p: Prim, v: U256) -> (Arc<SymExpr>, u16) {
    match s.as_scalar() {
        Some(Scalar { sym: Some(e), depth, .. }) => (e.clone(), *depth),
        _ => (Arc::new(SymExpr::Const(p, v)), 0),
    }
}

fn cmp_op(ins: &Instruction) -> CmpOp {
    match ins {
        Instruction::Eq => CmpOp::Eq,
        Instruction::Neq => CmpOp::Neq,
        Instruction::Lt => CmpOp::Lt,
        Instruction::Le => CmpOp::Le,
        Instruction::Gt => CmpOp::Gt,
        _ => CmpOp::Ge,
    }
}

fn bin_op(ins: &Instruction) -> BinOp {
    match ins {
        Instruction::Add => BinOp::Add,
        Instruction::Sub => BinOp::Sub,
        Instruction::Mul => BinOp::Mul,
        Instruction::Div => BinOp::Div,
        Instruction::Mod => BinOp::Mod,
        Instruction::Shl => BinOp::Shl,
        Instruction::Shr => BinOp::Shr,
        Instruction::BitAnd => BinOp::And,
        Instruction::BitOr => BinOp::Or,
        _ => BinOp::Xor,
    }
}

impl<'a> Machine<'a> {
    fn new(prog: &'a Program, state: &'a mut WorldState, opts: &ExecOptions) -> Self {
        Machine {
            prog,
            state,
            stack: Vec::new(),
            sstack: Vec::new(),
            frames: Vec::new(),
            gas_used: 0,
            gas_limit: opts.gas_limit,
            tracing: opts.trace,
            cov: vec![0; (prog.total_arms as usize).div_ceil(64)],
            trace: ExecTrace::default(),
        }
    }

    fn push(&mut self, v: Value, s: Shadow) {
        self.stack.push(v);
        if self.tracing {
            self.sstack.push(s);
        }
    }

    fn pop(&mut self) -> (Value, Shadow) {
        let v = self.stack.pop().expect("verified stack");
        let s = if self.tracing { self.sstack.pop().expect("shadow stack") } else { Shadow::None };
        (v, s)
    }

    fn pop_n(&mut self, n: usize) -> Vec<(Value, Shadow)> {
        let at = self.stack.len() - n;
        let vals = self.stack.split_off(at);
        let shadows = if self.tracing { self.sstack.split_off(at) } else { vec![Shadow::None; n] };
        vals.into_iter().zip(shadows).collect()
    }

    fn record(&mut self, kind: ConstraintKind, expr: Arc<SymExpr>, site: Site) {
        if expr.has_vars() {
            self.trace.path.constraints.push(Constraint { kind, expr, site });
        }
    }

    fn violated(&mut self, kind: ConstraintKind, expr: Arc<SymExpr>, site: Site) {
        if expr.has_vars() {
            self.trace.path.terminal = Some(Constraint { kind, expr, site });
        }
    }

    fn native(&mut self, n: Native, targs: &[TypeTag], mut args: Vec<(Value, Shadow)>) -> Vec<(Value, Shadow)> {
        match n {
            Native::Mint => {
                let (amount, s) = args.pop().unwrap();
                *self.state.supply.entry(targs[0].clone()).or_default() += amount.as_int().as_u64() as i128;
                let ty = TypeTag::Datatype(coin_ref(), targs.to_vec());
                let shadow = if self.tracing { Shadow::composite(vec![s], false) } else { Shadow::None };
                vec![(Value::Struct(Arc::new(ty), vec![amount]), shadow)]
            }
            Native::Burn => {
                let (coin, _) = args.pop().unwrap();
                if let Value::Struct(_, fields) = coin {
                    *self.state.supply.entry(targs[0].clone()).or_default() -= fields[0].as_int().as_u64() as i128;
                }
                vec![]
            }
            Native::Transfer => {
                let (coin, _) = args.pop().unwrap();
                let ty = TypeTag::Datatype(coin_ref(), targs.to_vec());
                self.state.insert_owned(ty, coin);
                vec![]
            }
        }
    }

    fn enter(&mut self, func: u32, targs: Arc<Vec<TypeTag>>, args: Vec<(Value, Shadow)>) -> Result<(), Stop> {
        if self.frames.len() >= MAX_CALL_DEPTH {
            let (f, pc) = self.frames.last().map(|f| (f.func, f.pc - 1)).unwrap_or((func, 0));
            return Err(Stop::Abort(AbortKind::CallStackOverflow, f, pc));
        }
        let decl = &self.prog.functions[func as usize].decl;
        let mut locals: Vec<Option<Value>> = Vec::with_capacity(decl.slot_count());
        let mut slocals = Vec::new();
        for (v, s) in args {
            locals.push(Some(v));
            if self.tracing {
                slocals.push(s);
            }
        }
        locals.resize(decl.slot_count(), None);
        if self.tracing {
            slocals.resize(decl.slot_count(), Shadow::None);
        }
        self.frames.push(Frame { func, pc: 0, locals, slocals, targs, base: self.stack.len() });
        Ok(())
    }

    /// Runs a top-level call; returns outputs followed by final values of
    /// mutable-reference parameters.
    fn invoke(&mut self, func: u32, targs: Vec<TypeTag>, args: Vec<(Value, Shadow)>) -> Outcome {
        if let Some(n) = self.prog.functions[func as usize].native {
            return Ok(self.native(n, &targs, args));
        }
        self.enter(func, Arc::new(targs), args)?;
        self.run()
    }

    fn run(&mut self) -> Outcome {
        let prog = self.prog;
        loop {
            if self.gas_used >= self.gas_limit {
                return Err(Stop::OutOfGas);
            }
            self.gas_used += 1;
            let fi = self.frames.len() - 1;
            let (func, pc) = (self.frames[fi].func, self.frames[fi].pc);
            self.frames[fi].pc = pc + 1;
            let lf = &prog.functions[func as usize];
            let ins = &lf.decl.instructions()[pc];
            let site = Site { function: func, pc: pc as u32 };
            let abort = |k: AbortKind| Stop::Abort(k, func, pc);
            use Instruction::*;
            match ins {
                LdConst(p, lit) => {
                    let (v, s) = match lit {
                        Literal::Bool(b) => (
                            Value::Bool(*b),
                            Shadow::scalar(Scalar { const_bool: self.tracing, ..Default::default() }),
                        ),
                        Literal::Int(x) => (Value::Int(*p, *x), Shadow::None),
                    };
                    self.push(v, s);
                }
                LdParam(i) | CopyLocal(i) => {
                    let f = &self.frames[fi];
                    let v = f.locals[*i as usize].clone().ok_or(abort(AbortKind::UnavailableLocal))?;
                    let s = if self.tracing { f.slocals[*i as usize].clone() } else { Shadow::None };
                    self.push(v, s);
                }
                MoveLocal(i) => {
                    let i = *i as usize;
                    let keep = i < lf.decl.inputs.len() && lf.decl.inputs[i].mode.is_ref();
                    let f = &mut self.frames[fi];
                    let v = if keep { f.locals[i].clone() } else { f.locals[i].take() };
                    let v = v.ok_or(abort(AbortKind::UnavailableLocal))?;
                    let s = if self.tracing { f.slocals[i].clone() } else { Shadow::None };
                    self.push(v, s);
                }
                StoreLocal(i) => {
                    let (v, s) = self.pop();
                    let f = &mut self.frames[fi];
                    f.locals[*i as usize] = Some(v);
                    if self.tracing {
                        f.slocals[*i as usize] = s;
                    }
                }
                Add | Sub | Mul | Div | Mod | Shl | Shr | BitAnd | BitOr | BitXor => {
                    let op = bin_op(ins);
                    let (vb, sb) = self.pop();
                    let (va, sa) = self.pop();
                    let Value::Int(p, a) = va else { unreachable!("verified operand") };
                    let (pb, b) = match vb {
                        Value::Int(pb, b) => (pb, b),
                        _ => unreachable!("verified operand"),
                    };
                    let res = binop(op, p, a, b);
                    if !self.tracing {
                        self.push(Value::Int(p, res.map_err(abort)?), Shadow::None);
                        continue;
                    }
                    let symbolic = sa.sym_expr().is_some() || sb.sym_expr().is_some();
                    let can_abort = !matches!(op, BinOp::And | BinOp::Or | BinOp::Xor);
                    let mut expr = None;
                    let mut depth = 0;
                    if symbolic {
                        let (ea, da) = sym_or_const(&sa, p, a);
                        let (eb, db) = sym_or_const(&sb, pb, b);
                        depth = da.max(db) + 1;
                        expr = Some(Arc::new(SymExpr::Bin(op, p, ea, eb)));
                    }
                    let r = match res {
                        Ok(r) => r,
                        Err(k) => {
                            if let Some(e) = expr {
                                self.violated(ConstraintKind::NoOverflow, e, site);
                            }
                            return Err(abort(k));
                        }
                    };
                    if let (Some(e), true) = (&expr, can_abort) {
                        self.record(ConstraintKind::NoOverflow, e.clone(), site);
                    }
                    let mut lossy = join_lossy(&sa, &sb);
                    match op {
                        BinOp::Div if !(a % b).is_zero() => {
                            self.trace.lossy_divs.insert(site);
                            lossy = Some(site);
                        }
                        BinOp::Mul => {
                            if let Some(d) = lossy {
                                self.trace.amplified.entry(site).or_insert(d);
                            }
                        }
                        BinOp::Shl if shl_discards_bits(p, a, b) => {
                            self.trace.shl_overflows.insert(site);
                        }
                        _ => {}
                    }
                    if depth > MAX_SYM_DEPTH {
                        expr = None;
                        depth = 0;
                    }
                    let s = Shadow::scalar(Scalar { sym: expr, depth, lossy, ..Default::default() });
                    self.push(Value::Int(p, r), s);
                }
                Not => {
                    let (v, s) = self.pop();
                    let r = !v.as_bool();
                    let s = match s.as_scalar() {
                        Some(sc) if self.tracing => Shadow::scalar(Scalar {
                            sym: sc.sym.as_ref().map(|e| Arc::new(SymExpr::Not(e.clone()))),
                            depth: sc.depth + 1,
                            cmp: sc.cmp,
                            ..Default::default()
                        }),
                        _ => Shadow::None,
                    };
                    self.push(Value::Bool(r), s);
                }
                Eq | Neq | Lt | Le | Gt | Ge => {
                    let op = cmp_op(ins);
                    let (vb, sb) = self.pop();
                    let (va, sa) = self.pop();
                    let r = match (va.raw(), vb.raw()) {
                        (Some(a), Some(b)) => op.eval(a, b),
                        _ => match op {
                            CmpOp::Eq => va == vb,
                            _ => va != vb,
                        },
                    };
                    if !self.tracing {
                        self.push(Value::Bool(r), Shadow::None);
                        continue;
                    }
                    let const_bool = |s: &Shadow| s.as_scalar().is_some_and(|x| x.const_bool);
                    if matches!(op, CmpOp::Eq | CmpOp::Neq) && (const_bool(&sa) || const_bool(&sb)) {
                        self.trace.unnecessary_bools.insert(site);
                    }
                    let s = match (va.raw(), vb.raw()) {
                        (Some(a), Some(b)) => {
                            let p = match &va {
                                Value::Int(p, _) => *p,
                                _ => Prim::Bool,
                            };
                            let mut sc = Scalar { cmp: Some([a, b]), ..Default::default() };
                            if sa.sym_expr().is_some() || sb.sym_expr().is_some() {
                                let (ea, da) = sym_or_const(&sa, p, a);
                                let (eb, db) = sym_or_const(&sb, p, b);
                                sc.depth = da.max(db) + 1;
                                sc.sym = Some(Arc::new(SymExpr::Cmp(op, ea, eb)));
                            }
                            Shadow::scalar(sc)
                        }
                        _ => Shadow::None,
                    };
                    self.push(Value::Bool(r), s);
                }
                Cast(to) => {
                    let (v, s) = self.pop();
                    let Value::Int(from, x) = v else { unreachable!("verified operand") };
                    if self.tracing && from == *to {
                        self.trace.unnecessary_casts.insert(site);
                    }
                    let expr = match s.as_scalar() {
                        Some(Scalar { sym: Some(e), depth, .. }) if self.tracing => {
                            Some((Arc::new(SymExpr::Cast(*to, e.clone())), depth + 1))
                        }
                        _ => None,
                    };
                    let narrowing = to.bits() < from.bits();
                    match cast(*to, x) {
                        Ok(r) => {
                            if let (Some((e, _)), true) = (&expr, narrowing) {
                                self.record(ConstraintKind::CastInRange, e.clone(), site);
                            }
                            let s = match expr {
                                Some((e, d)) => Shadow::scalar(Scalar { sym: Some(e), depth: d, lossy: s.lossy(), ..Default::default() }),
                                None if self.tracing => Shadow::scalar(Scalar { lossy: s.lossy(), ..Default::default() }),
                                None => Shadow::None,
                            };
                            self.push(Value::Int(*to, r), s);
                        }
                        Err(k) => {
                            if let Some((e, _)) = expr {
                                self.violated(ConstraintKind::CastInRange, e, site);
                            }
                            return Err(abort(k));
                        }
                    }
                }
                Branch(t) => self.frames[fi].pc = *t as usize,
                BrTrue(t) | BrFalse(t) => {
                    let (v, s) = self.pop();
                    let cond = v.as_bool();
                    let taken = if matches!(ins, BrTrue(_)) { cond } else { !cond };
                    let arm = lf.arm_base[pc] + taken as u32;
                    self.cov[arm as usize / 64] |= 1 << (arm % 64);
                    if self.tracing {
                        if let Some(e) = s.sym_expr() {
                            self.record(ConstraintKind::BranchCond { value: cond }, e.clone(), site);
                        }
                        if lf.loop_branch[pc] {
                            let key = s.as_scalar().and_then(|x| x.cmp).unwrap_or([U256::from(cond as u8), U256::zero()]);
                            let st = self.trace.loops.entry(site).or_insert(LoopStat { count: 0, first: key, constant: true });
                            st.count += 1;
                            if st.first != key {
                                st.constant = false;
                            }
                        }
                    }
                    if taken {
                        self.frames[fi].pc = *t as usize;
                    }
                }
                Abort(code) => return Err(abort(AbortKind::Explicit(*code))),
                Call(_, targs) => {
                    let callee = lf.call_targets[pc];
                    let targs: Vec<TypeTag> = if targs.is_empty() {
                        Vec::new()
                    } else {
                        let outer = &self.frames[fi].targs;
                        targs.iter().map(|t| substitute(t, outer).expect("verified type arguments")).collect()
                    };
                    let cf = &prog.functions[callee as usize];
                    let args = self.pop_n(cf.decl.inputs.len());
                    if let Some(n) = cf.native {
                        for (v, s) in self.native(n, &targs, args) {
                            self.push(v, s);
                        }
                    } else {
                        self.enter(callee, Arc::new(targs), args)?;
                    }
                }
                Pack(r, targs) => {
                    let decl = prog.package.datatype(r).expect("verified datatype");
                    let ty = substitute(&TypeTag::Datatype(r.clone(), targs.clone()), &self.frames[fi].targs)
                        .expect("verified type arguments");
                    let fields = self.pop_n(decl.fields.len());
                    let (vals, shadows): (Vec<Value>, Vec<Shadow>) = fields.into_iter().unzip();
                    let s = if self.tracing { Shadow::composite(shadows, false) } else { Shadow::None };
                    self.push(Value::Struct(Arc::new(ty), vals), s);
                }
                Unpack(..) => {
                    let (v, s) = self.pop();
                    let Value::Struct(_, fields) = v else { unreachable!("verified operand") };
                    let parts = if self.tracing { s.parts(fields.len()) } else { vec![Shadow::None; fields.len()] };
                    for (f, fs) in fields.into_iter().zip(parts) {
                        self.push(f, fs);
                    }
                }
                VecNew(_) => self.push(Value::Vec(Vec::new()), Shadow::None),
                VecPush => {
                    let (e, se) = self.pop();
                    let (v, sv) = self.pop();
                    let Value::Vec(mut items) = v else { unreachable!("verified operand") };
                    let s = if self.tracing {
                        let mut parts = sv.parts(items.len());
                        parts.push(se);
                        Shadow::composite(parts, true)
                    } else {
                        Shadow::None
                    };
                    items.push(e);
                    self.push(Value::Vec(items), s);
                }
                VecPop => {
                    let (v, sv) = self.pop();
                    let Value::Vec(mut items) = v else { unreachable!("verified operand") };
                    let Some(e) = items.pop() else { return Err(abort(AbortKind::VectorBounds)) };
                    let (rest, se) = if self.tracing {
                        let mut parts = sv.parts(items.len() + 1);
                        let se = parts.pop().unwrap();
                        (Shadow::composite(parts, true), se)
                    } else {
                        (Shadow::None, Shadow::None)
                    };
                    self.push(Value::Vec(items), rest);
                    self.push(e, se);
                }
                VecLen => {
                    let (v, _) = self.pop();
                    let Value::Vec(items) = v else { unreachable!("verified operand") };
                    self.push(Value::u64(items.len() as u64), Shadow::None);
                }
                VecBorrow => {
                    let (idx, si) = self.pop();
                    let (v, sv) = self.pop();
                    let Value::Vec(items) = v else { unreachable!("verified operand") };
                    let i = idx.as_int();
                    let len = items.len();
                    let bound = si.sym_expr().map(|e| {
                        let c = Arc::new(SymExpr::Const(Prim::U64, U256::from(len)));
                        Arc::new(SymExpr::Cmp(CmpOp::Lt, e.clone(), c))
                    });
                    if i >= U256::from(len) {
                        if let Some(b) = bound {
                            self.violated(ConstraintKind::VecIndexInBounds, b, site);
                        }
                        return Err(abort(AbortKind::VectorBounds));
                    }
                    if let Some(b) = bound {
                        self.record(ConstraintKind::VecIndexInBounds, b, site);
                    }
                    let i = i.as_usize();
                    let se = if self.tracing { sv.parts(len).swap_remove(i) } else { Shadow::None };
                    self.push(items[i].clone(), se);
                }
                EmitEvent(tag) => {
                    let (v, _) = self.pop();
                    self.state.events.push((*tag, v));
                }
                Ret => {
                    let n = lf.decl.outputs.len();
                    let mut outs = self.pop_n(n);
                    let mut frame = self.frames.pop().unwrap();
                    debug_assert_eq!(self.stack.len(), frame.base);
                    for (i, p) in lf.decl.inputs.iter().enumerate() {
                        if p.mode == RefMode::ByMutRef {
                            let v = frame.locals[i].take().ok_or(abort(AbortKind::UnavailableLocal))?;
                            let s = if self.tracing { std::mem::take(&mut frame.slocals[i]) } else { Shadow::None };
                            outs.push((v, s));
                        }
                    }
                    if self.frames.is_empty() {
                        return Ok(outs);
                    }
                    for (v, s) in outs {
                        self.push(v, s);
                    }
                }
            }
        }
    }

    fn coverage(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for (w, bits) in self.cov.iter().enumerate() {
            let mut b = *bits;
            while b != 0 {
                let k = b.trailing_zeros();
                out.push(w as u32 * 64 + k);
                b &= b - 1;
            }
        }
        out
    }
}

fn input_shadow(tracing: bool, var: InputVar, p: Prim) -> Shadow {
    if tracing {
        Shadow::sym(Arc::new(SymExpr::Input(var, p)), 0)
    } else {
        Shadow::None
    }
}

/// Executes `txn` against a copy of `genesis`.
pub fn execute(prog: &Program, genesis: &WorldState, txn: &Transaction, opts: &ExecOptions) -> ExecResult {
    let pkg = &prog.package;
    let mut state = genesis.clone();
    let balances_before = genesis.sender_balances();
    let mut m = Machine::new(prog, &mut state, opts);
    let mut results: Vec<Vec<Option<(Value, Shadow)>>> = Vec::new();
    let mut result_types: Vec<Vec<TypeTag>> = Vec::new();
    let mut status = Status::Success;
    for (ci, call) in txn.calls.iter().enumerate() {
        let func = prog.function_index(&call.function).expect("validated function");
        let decl = &prog.functions[func as usize].decl;
        let (ins, outs) = signature_of(decl, &call.type_args).expect("validated signature");
        let mut args = Vec::with_capacity(call.args.len());
        for (ai, (arg, ty)) in call.args.iter().zip(&ins).enumerate() {
            let mode = decl.inputs[ai].mode;
            let var = |elem: Option<usize>| InputVar { call: ci as u32, arg: ai as u32, elem: elem.map(|e| e as u32) };
            let entry = match arg {
                ArgBinding::Literal(p, v) => {
                    if m.tracing {
                        m.trace.path.vars.insert(var(None), (*p, *v));
                    }
                    (Value::prim(*p, *v), input_shadow(m.tracing, var(None), *p))
                }
                ArgBinding::LiteralVector(p, vs) => {
                    let mut items = Vec::with_capacity(vs.len());
                    let mut shadows = Vec::with_capacity(vs.len());
                    for (e, v) in vs.iter().enumerate() {
                        if m.tracing {
                            m.trace.path.vars.insert(var(Some(e)), (*p, *v));
                        }
                        items.push(Value::prim(*p, *v));
                        shadows.push(input_shadow(m.tracing, var(Some(e)), *p));
                    }
                    (Value::Vec(items), Shadow::composite(shadows, true))
                }
                ArgBinding::Result(i, j) => {
                    let slot = &mut results[*i][*j];
                    if mode == RefMode::ByValue && !pkg.is_copyable(ty) {
                        slot.take().expect("validated linear use")
                    } else {
                        slot.clone().expect("validated liveness")
                    }
                }
                ArgBinding::PoolObject(id) => {
                    let v = if mode == RefMode::ByValue {
                        m.state.objects.remove(id).expect("validated object").value
                    } else {
                        m.state.objects[id].value.clone()
                    };
                    (v, Shadow::None)
                }
            };
            args.push(entry);
        }
        match m.invoke(func, call.type_args.clone(), args) {
            Ok(mut values) => {
                let finals = values.split_off(outs.len());
                let mut finals = finals.into_iter();
                for (ai, arg) in call.args.iter().enumerate() {
                    if decl.inputs[ai].mode != RefMode::ByMutRef {
                        continue;
                    }
                    let (v, s) = finals.next().expect("one final value per mutable reference");
                    match arg {
                        ArgBinding::PoolObject(id) => {
                            if let Some(o) = m.state.objects.get_mut(id) {
                                o.value = v;
                            }
                        }
                        ArgBinding::Result(i, j) => results[*i][*j] = Some((v, s)),
                        _ => {}
                    }
                }
                results.push(values.into_iter().map(Some).collect());
                result_types.push(outs);
            }
            Err(Stop::Abort(kind, f, pc)) => {
                status = Status::Abort { kind, function: prog.functions[f as usize].fref.clone(), pc };
                break;
            }
            Err(Stop::OutOfGas) => {
                status = Status::OutOfGas;
                break;
            }
        }
    }
    let coverage = m.coverage();
    let gas_used = m.gas_used;
    let trace = if m.tracing { Some(std::mem::take(&mut m.trace)) } else { None };
    drop(m);
    let mut events = std::mem::take(&mut state.events);
    let (balances_after, final_state) = if status.is_success() {
        for (outs, tys) in results.into_iter().zip(result_types) {
            for (slot, ty) in outs.into_iter().zip(tys) {
                if let Some((v, _)) = slot {
                    let a = pkg.abilities_of(&ty);
                    if a.has(Ability::Store) || a.has(Ability::Key) {
                        state.insert_owned(ty, v);
                    }
                }
            }
        }
        state.events = events.clone();
        (state.sender_balances(), Some(state))
    } else {
        events.clear();
        (balances_before.clone(), None)
    };
    ExecResult { status, coverage, gas_used, balances_before, balances_after, events, final_state, trace }
}

/// Runs module initializers once over `genesis`; their outputs become
/// sender-owned objects.
pub fn run_initializers(prog: &Program, genesis: &mut WorldState, gas_limit: u64) -> Result<(), (FunctionRef, Status)> {
    for m in &prog.package.modules {
        let Some(init) = m.init() else { continue };
        let fref = QualifiedName { module: m.name.clone(), name: init.name.clone() };
        let func = prog.function_index(&fref).expect("loaded initializer");
        let opts = ExecOptions { gas_limit, trace: false };
        let mut machine = Machine::new(prog, genesis, &opts);
        match machine.invoke(func, vec![], vec![]) {
            Ok(outs) => {
                drop(machine);
                for ((v, _), ty) in outs.into_iter().zip(&init.outputs) {
                    genesis.insert_owned(ty.clone(), v);
                }
            }
            Err(Stop::Abort(kind, f, pc)) => {
                let function = prog.functions[f as usize].fref.clone();
                return Err((fref, Status::Abort { kind, function, pc }));
            }
            Err(Stop::OutOfGas) => return Err((fref, Status::OutOfGas)),
        }
    }
    genesis.events.clear();
    Ok(())
}

impl ExecResult {
    /// Objects owned by the sender after a successful run.
    pub fn owned_after(&self) -> impl Iterator<Item = (&u64, &crate::vm::state::Object)> {
        self.final_state.iter().flat_map(|s| s.objects.iter()).filter(|(_, o)| o.owner == Owner::Sender)
    }
}
