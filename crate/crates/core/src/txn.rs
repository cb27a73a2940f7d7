//! Straight-line transactions, their replay text format, and the
//! independent well-typedness checker.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use primitive_types::U256;
use thiserror::Error;

use crate::lexer::{parse_u256, tokenize, Cursor, ParseError, Tok};
use crate::model::*;
use crate::parse::{NameTable, TypeScope};
use crate::synth::TraceMeta;
use crate::vm::state::{Owner, WorldState};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArgBinding {
    /// A primitive value; bools are 0/1.
    Literal(Prim, U256),
    LiteralVector(Prim, Vec<U256>),
    /// Output `1` of earlier call `0`.
    Result(usize, usize),
    PoolObject(u64),
}

fn write_lit(f: &mut fmt::Formatter<'_>, p: Prim, v: U256) -> fmt::Result {
    match p {
        Prim::Bool => write!(f, "{}", !v.is_zero()),
        p => write!(f, "{v}{p}"),
    }
}

impl fmt::Display for ArgBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgBinding::Literal(p, v) => write_lit(f, *p, *v),
            ArgBinding::LiteralVector(p, vs) => {
                write!(f, "vector<{p}>[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    match p {
                        Prim::Bool => write!(f, "{}", !v.is_zero())?,
                        _ => write!(f, "{v}")?,
                    }
                }
                f.write_str("]")
            }
            ArgBinding::Result(c, o) => write!(f, "r{c}.{o}"),
            ArgBinding::PoolObject(id) => write!(f, "@{id}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CallSpec {
    pub function: FunctionRef,
    pub type_args: Vec<TypeTag>,
    pub args: Vec<ArgBinding>,
}

impl fmt::Display for CallSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "call {}", self.function)?;
        write_type_args(f, &self.type_args)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Transaction {
    pub calls: Vec<CallSpec>,
    /// Originating graph trace, kept so mutators can work structurally.
    pub meta: Option<Arc<TraceMeta>>,
}

impl PartialEq for Transaction {
    fn eq(&self, other: &Self) -> bool {
        self.calls == other.calls
    }
}

impl Eq for Transaction {}

impl Transaction {
    pub fn new(calls: Vec<CallSpec>) -> Self {
        Transaction { calls, meta: None }
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    /// Replay text: one `call` line per call.
    pub fn to_replay(&self) -> String {
        let mut s = String::new();
        for c in &self.calls {
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    /// Positions of all primitive inputs, as (call, arg, element).
    pub fn literal_slots(&self) -> Vec<(usize, usize, Option<usize>)> {
        let mut out = Vec::new();
        for (ci, c) in self.calls.iter().enumerate() {
            for (ai, a) in c.args.iter().enumerate() {
                match a {
                    ArgBinding::Literal(..) => out.push((ci, ai, None)),
                    ArgBinding::LiteralVector(_, vs) => out.extend((0..vs.len()).map(|e| (ci, ai, Some(e)))),
                    _ => {}
                }
            }
        }
        out
    }
}

impl fmt::Display for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_replay())
    }
}

fn parse_literal_token(cur: &mut Cursor, s: &str) -> Result<ArgBinding, ParseError> {
    let split = s.find(|c: char| c == 'u').ok_or_else(|| cur.err(format!("literal `{s}` needs a width suffix")))?;
    let (num, suffix) = s.split_at(split);
    let p = Prim::from_name(suffix).filter(|p| p.is_int()).ok_or_else(|| cur.err(format!("bad suffix `{suffix}`")))?;
    let v = parse_u256(num).ok_or_else(|| cur.err(format!("invalid number `{num}`")))?;
    if v > p.max_value() {
        return Err(cur.err(format!("literal does not fit in {p}")));
    }
    Ok(ArgBinding::Literal(p, v))
}

fn parse_arg(cur: &mut Cursor, scope: &TypeScope) -> Result<ArgBinding, ParseError> {
    match cur.peek() {
        Some(Tok::Num(s)) => {
            let s = s.clone();
            let b = parse_literal_token(cur, &s)?;
            cur.next();
            Ok(b)
        }
        Some(Tok::Sym("@")) => {
            cur.next();
            let id = cur.number()?;
            if id > U256::from(u64::MAX) {
                return Err(cur.err("object id does not fit in u64"));
            }
            Ok(ArgBinding::PoolObject(id.as_u64()))
        }
        Some(Tok::Ident(s)) if s == "true" || s == "false" => {
            let b = s == "true";
            cur.next();
            Ok(ArgBinding::Literal(Prim::Bool, U256::from(b as u8)))
        }
        Some(Tok::Ident(s)) if s == "vector" => {
            let t = scope.parse_type(cur)?;
            let p = match t {
                TypeTag::Vector(e) => e.as_prim().ok_or_else(|| cur.err("literal vectors hold primitives"))?,
                _ => unreachable!(),
            };
            cur.expect_sym("[")?;
            let mut vs = Vec::new();
            if !cur.eat_sym("]") {
                loop {
                    let v = if p == Prim::Bool {
                        match cur.ident()? {
                            "true" => U256::one(),
                            "false" => U256::zero(),
                            other => return Err(cur.err(format!("invalid bool `{other}`"))),
                        }
                    } else {
                        let v = cur.number()?;
                        if v > p.max_value() {
                            return Err(cur.err(format!("element does not fit in {p}")));
                        }
                        v
                    };
                    vs.push(v);
                    if cur.eat_sym("]") {
                        break;
                    }
                    cur.expect_sym(",")?;
                }
            }
            Ok(ArgBinding::LiteralVector(p, vs))
        }
        Some(Tok::Ident(s)) if s.starts_with('r') => {
            let call = s[1..].parse::<usize>().map_err(|_| cur.err(format!("bad result reference `{s}`")))?;
            cur.next();
            cur.expect_sym(".")?;
            let out = cur.number()?;
            Ok(ArgBinding::Result(call, out.as_usize()))
        }
        _ => Err(cur.err("expected argument")),
    }
}

/// Reads the replay format produced by [`Transaction::to_replay`].
pub fn parse_transaction(pkg: &Package, text: &str) -> Result<Transaction, ParseError> {
    let names = NameTable::from_package(pkg);
    let scope = TypeScope { names: &names, module: None, type_params: &[] };
    let mut calls = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let toks = tokenize(raw, i + 1)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(&toks, i + 1);
        if !cur.eat_keyword("call") {
            return Err(cur.err("expected `call`"));
        }
        let function = scope.qualified(&mut cur, false)?;
        let type_args = scope.type_args(&mut cur)?;
        let mut args = Vec::new();
        while !cur.at_end() {
            args.push(parse_arg(&mut cur, &scope)?);
        }
        calls.push(CallSpec { function, type_args, args });
    }
    Ok(Transaction::new(calls))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxnError {
    #[error("call {call}: unknown function {function}")]
    UnknownFunction { call: usize, function: String },
    #[error("call {call}: {function} is not public")]
    NotPublic { call: usize, function: String },
    #[error("call {call}: bad type arguments: {msg}")]
    TypeArgs { call: usize, msg: String },
    #[error("call {call}: expected {expected} arguments, got {actual}")]
    ArgCount { call: usize, expected: usize, actual: usize },
    #[error("call {call} argument {position}: expected {expected}, found {actual}")]
    Mismatch { call: usize, position: usize, expected: TypeTag, actual: TypeTag },
    #[error("call {call} argument {position}: {msg}")]
    Binding { call: usize, position: usize, msg: String },
    #[error("unconsumed hot potato at call {call} output {output}")]
    UnconsumedHotPotato { call: usize, output: usize },
}

impl TxnError {
    pub fn call(&self) -> usize {
        match self {
            TxnError::UnknownFunction { call, .. }
            | TxnError::NotPublic { call, .. }
            | TxnError::TypeArgs { call, .. }
            | TxnError::ArgCount { call, .. }
            | TxnError::Mismatch { call, .. }
            | TxnError::Binding { call, .. }
            | TxnError::UnconsumedHotPotato { call, .. } => *call,
        }
    }
}

fn literal_type(b: &ArgBinding) -> Option<TypeTag> {
    match b {
        ArgBinding::Literal(p, _) => Some(TypeTag::Prim(*p)),
        ArgBinding::LiteralVector(p, _) => Some(TypeTag::vector(TypeTag::Prim(*p))),
        _ => None,
    }
}

/// Checks every call against its signature, result and pool references,
/// linear use of non-copyable values, and that no hot potato survives.
pub fn validate(txn: &Transaction, pkg: &Package, pool: &WorldState) -> Result<(), TxnError> {
    let mut outputs: Vec<Vec<(TypeTag, bool)>> = Vec::new();
    let mut pool_taken: BTreeSet<u64> = BTreeSet::new();
    for (ci, call) in txn.calls.iter().enumerate() {
        let f = pkg
            .function(&call.function)
            .ok_or_else(|| TxnError::UnknownFunction { call: ci, function: call.function.to_string() })?;
        if !f.is_public() {
            return Err(TxnError::NotPublic { call: ci, function: call.function.to_string() });
        }
        for t in &call.type_args {
            crate::verify::check_type(pkg, t, 0).map_err(|msg| TxnError::TypeArgs { call: ci, msg })?;
        }
        let (ins, outs) = signature_of(f, &call.type_args).map_err(|e| TxnError::TypeArgs { call: ci, msg: e.to_string() })?;
        if call.args.len() != ins.len() {
            return Err(TxnError::ArgCount { call: ci, expected: ins.len(), actual: call.args.len() });
        }
        let mut pool_here: BTreeSet<u64> = BTreeSet::new();
        for (pos, (arg, want)) in call.args.iter().zip(&ins).enumerate() {
            let mode = f.inputs[pos].mode;
            let bind_err = |msg: String| TxnError::Binding { call: ci, position: pos, msg };
            let mismatch = |actual: TypeTag| TxnError::Mismatch { call: ci, position: pos, expected: want.clone(), actual };
            match arg {
                ArgBinding::Literal(p, v) => {
                    let got = literal_type(arg).unwrap();
                    if &got != want {
                        return Err(mismatch(got));
                    }
                    if *v > p.max_value() {
                        return Err(bind_err(format!("literal {v} does not fit in {p}")));
                    }
                }
                ArgBinding::LiteralVector(p, vs) => {
                    let got = literal_type(arg).unwrap();
                    if &got != want {
                        return Err(mismatch(got));
                    }
                    if vs.iter().any(|v| *v > p.max_value()) {
                        return Err(bind_err(format!("vector element does not fit in {p}")));
                    }
                }
                ArgBinding::Result(src, out) => {
                    if *src >= ci {
                        return Err(bind_err(format!("r{src}.{out} does not refer to an earlier call")));
                    }
                    let slot = outputs[*src]
                        .get_mut(*out)
                        .ok_or_else(|| bind_err(format!("call {src} has no output {out}")))?;
                    if &slot.0 != want {
                        return Err(mismatch(slot.0.clone()));
                    }
                    if mode == RefMode::ByMutRef {
                        return Err(bind_err("mutable references bind pool objects only".into()));
                    }
                    if slot.1 {
                        return Err(bind_err(format!("r{src}.{out} was already consumed")));
                    }
                    if mode == RefMode::ByValue && !pkg.is_copyable(want) {
                        slot.1 = true;
                    }
                }
                ArgBinding::PoolObject(id) => {
                    let obj = pool.objects.get(id).ok_or_else(|| bind_err(format!("object @{id} is not in the pool")))?;
                    if &obj.ty != want {
                        return Err(mismatch(obj.ty.clone()));
                    }
                    if pool_taken.contains(id) {
                        return Err(bind_err(format!("object @{id} was already consumed")));
                    }
                    if !pool_here.insert(*id) && (mode == RefMode::ByMutRef || mode == RefMode::ByValue) {
                        return Err(bind_err(format!("object @{id} is bound twice in one call")));
                    }
                    match (obj.owner, mode) {
                        (Owner::Shared, RefMode::ByValue) => {
                            return Err(bind_err(format!("shared object @{id} can only be passed by reference")));
                        }
                        (Owner::Sender, RefMode::ByValue) => {
                            pool_taken.insert(*id);
                        }
                        _ => {}
                    }
                }
            }
        }
        outputs.push(outs.into_iter().map(|t| (t, false)).collect());
    }
    for (ci, outs) in outputs.iter().enumerate() {
        for (oi, (t, consumed)) in outs.iter().enumerate() {
            if !consumed && pkg.is_hot_potato_type(t) {
                return Err(TxnError::UnconsumedHotPotato { call: ci, output: oi });
            }
        }
    }
    Ok(())
}
