//! The reference solver: isolation of single variables, interval
//! propagation with monotone search, then seeded random search.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use primitive_types::U256;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::concolic::sym::{Goal, InputVar, SymExpr};
use crate::model::Prim;
use crate::vm::arith::{BinOp, CmpOp};

pub type Assignment = BTreeMap<InputVar, U256>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    Sat(Assignment),
    Unsat,
    Unknown,
}

/// A solving backend. `hint` carries the width and current value of every
/// variable; `budget` bounds the number of search trials.
pub trait Solver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, goals: &[Goal], hint: &BTreeMap<InputVar, (Prim, U256)>, budget: u32, seed: u64) -> SolveOutcome;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceSolver;

impl Solver for ReferenceSolver {
    fn name(&self) -> &'static str {
        "reference"
    }

    fn solve(&self, goals: &[Goal], hint: &BTreeMap<InputVar, (Prim, U256)>, budget: u32, seed: u64) -> SolveOutcome {
        solve(goals, hint, budget, seed)
    }
}

pub const DEFAULT_BUDGET: u32 = 10_000;

fn env(a: &Assignment) -> impl Fn(InputVar) -> U256 + '_ {
    move |v| a.get(&v).copied().unwrap_or_default()
}

fn satisfied(goals: &[Goal], a: &Assignment) -> usize {
    let e = env(a);
    goals.iter().filter(|g| g.holds(&e)).count()
}

fn widths(e: &SymExpr, out: &mut BTreeMap<InputVar, Prim>) {
    match e {
        SymExpr::Input(v, p) => {
            out.insert(*v, *p);
        }
        SymExpr::Const(..) => {}
        SymExpr::Bin(_, _, a, b) | SymExpr::Cmp(_, a, b) => {
            widths(a, out);
            widths(b, out);
        }
        SymExpr::Cast(_, a) | SymExpr::Not(a) => widths(a, out),
    }
}

fn mentions(e: &SymExpr, v: InputVar) -> bool {
    match e {
        SymExpr::Input(x, _) => *x == v,
        SymExpr::Const(..) => false,
        SymExpr::Bin(_, _, a, b) | SymExpr::Cmp(_, a, b) => mentions(a, v) || mentions(b, v),
        SymExpr::Cast(_, a) | SymExpr::Not(a) => mentions(a, v),
    }
}

fn flip_sides(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        o => o,
    }
}

/// Values of `v` making `e op t` true when `e` is the variable itself.
fn leaf_candidates(op: CmpOp, t: U256, max: U256) -> Vec<U256> {
    let one = U256::one();
    let mut out = Vec::new();
    match op {
        CmpOp::Eq => out.push(t),
        CmpOp::Neq => {
            out.push(t.saturating_add(one));
            if !t.is_zero() {
                out.push(t - one);
            }
        }
        CmpOp::Lt => {
            if !t.is_zero() {
                out.push(t - one);
                out.push(U256::zero());
            }
        }
        CmpOp::Le => {
            out.push(t);
            out.push(U256::zero());
        }
        CmpOp::Gt => {
            out.push(t.saturating_add(one));
            out.push(max);
        }
        CmpOp::Ge => {
            out.push(t);
            out.push(max);
        }
    }
    out.retain(|x| *x <= max);
    out
}

/// Candidate values for `v` such that `e op t` holds, with all other
/// variables fixed by `a`. `e` must mention `v`.
fn invert(e: &SymExpr, v: InputVar, op: CmpOp, t: U256, a: &Assignment, depth: u32) -> Vec<U256> {
    if depth > 64 {
        return Vec::new();
    }
    let ev = env(a);
    let one = U256::one();
    match e {
        SymExpr::Input(x, p) if *x == v => leaf_candidates(op, t, p.max_value()),
        SymExpr::Cast(_, inner) => invert(inner, v, op, t, a, depth + 1),
        SymExpr::Bin(bop, _, l, r) => {
            let (in_l, in_r) = (mentions(l, v), mentions(r, v));
            if in_l && in_r {
                return monotone_candidates(e, v, op, t, a);
            }
            let (inner, other, left) = if in_l { (l, r, true) } else { (r, l, false) };
            let Some(c) = other.eval(&ev) else { return Vec::new() };
            let rec = |op2: CmpOp, t2: U256| invert(inner, v, op2, t2, a, depth + 1);
            match (bop, left) {
                (BinOp::Add, _) => {
                    if t >= c {
                        rec(op, t - c)
                    } else {
                        match op {
                            CmpOp::Gt | CmpOp::Ge | CmpOp::Neq => rec(CmpOp::Ge, U256::zero()),
                            _ => Vec::new(),
                        }
                    }
                }
                (BinOp::Sub, true) => match t.checked_add(c) {
                    Some(t2) => rec(op, t2),
                    None => Vec::new(),
                },
                (BinOp::Sub, false) => {
                    // c - r op t
                    if t > c {
                        match op {
                            CmpOp::Lt | CmpOp::Le | CmpOp::Neq => rec(CmpOp::Le, c),
                            _ => Vec::new(),
                        }
                    } else {
                        let b = c - t;
                        match op {
                            CmpOp::Eq => rec(CmpOp::Eq, b),
                            CmpOp::Neq => rec(CmpOp::Neq, b),
                            CmpOp::Lt => rec(CmpOp::Gt, b),
                            CmpOp::Le => rec(CmpOp::Ge, b),
                            CmpOp::Gt => rec(CmpOp::Lt, b),
                            CmpOp::Ge => rec(CmpOp::Le, b),
                        }
                    }
                }
                (BinOp::Mul, _) => {
                    if c.is_zero() {
                        return Vec::new();
                    }
                    match op {
                        CmpOp::Eq if (t % c).is_zero() => rec(CmpOp::Eq, t / c),
                        CmpOp::Eq => Vec::new(),
                        CmpOp::Neq => rec(CmpOp::Neq, t / c),
                        CmpOp::Lt if t.is_zero() => Vec::new(),
                        CmpOp::Lt => rec(CmpOp::Le, (t - one) / c),
                        CmpOp::Le => rec(CmpOp::Le, t / c),
                        CmpOp::Gt => rec(CmpOp::Ge, t / c + one),
                        CmpOp::Ge => rec(CmpOp::Ge, t.div_ceil_u(c)),
                    }
                }
                (BinOp::Div, true) => {
                    if c.is_zero() {
                        return Vec::new();
                    }
                    let Some(lo) = t.checked_mul(c) else { return Vec::new() };
                    let hi = lo.saturating_add(c - one);
                    match op {
                        CmpOp::Eq => {
                            let mut out = rec(CmpOp::Ge, lo);
                            out.extend(rec(CmpOp::Le, hi));
                            out
                        }
                        CmpOp::Neq => rec(CmpOp::Ge, hi.saturating_add(one)),
                        CmpOp::Lt => rec(CmpOp::Lt, lo),
                        CmpOp::Le => rec(CmpOp::Le, hi),
                        CmpOp::Gt => rec(CmpOp::Gt, hi),
                        CmpOp::Ge => rec(CmpOp::Ge, lo),
                    }
                }
                (BinOp::Div, false) => {
                    // c / r op t
                    let mut out = Vec::new();
                    if !t.is_zero() {
                        out.extend(rec(CmpOp::Eq, c / t));
                    }
                    out.extend(rec(CmpOp::Eq, c / t.saturating_add(one) + one));
                    out.extend(rec(CmpOp::Eq, one));
                    out
                }
                (BinOp::Shr, true) => {
                    if c >= U256::from(256) {
                        return Vec::new();
                    }
                    let s = c.as_usize();
                    let Some(lo) = t.checked_mul(U256::one() << s) else { return Vec::new() };
                    let hi = lo | ((U256::one() << s) - one);
                    match op {
                        CmpOp::Eq => rec(CmpOp::Ge, lo).into_iter().chain(rec(CmpOp::Le, hi)).collect(),
                        CmpOp::Neq => rec(CmpOp::Gt, hi),
                        CmpOp::Lt => rec(CmpOp::Lt, lo),
                        CmpOp::Le => rec(CmpOp::Le, hi),
                        CmpOp::Gt => rec(CmpOp::Gt, hi),
                        CmpOp::Ge => rec(CmpOp::Ge, lo),
                    }
                }
                (BinOp::Shl, true) if op == CmpOp::Eq => {
                    if c >= U256::from(256) {
                        return Vec::new();
                    }
                    let s = c.as_usize();
                    if (t & ((U256::one() << s) - one)).is_zero() {
                        rec(CmpOp::Eq, t >> s)
                    } else {
                        Vec::new()
                    }
                }
                (BinOp::Shl, true) => {
                    // Candidates from the range where the shift keeps every bit.
                    if c >= U256::from(256) {
                        return Vec::new();
                    }
                    let s = c.as_usize();
                    let low = (U256::one() << s) - one;
                    let up = if (t & low).is_zero() { t >> s } else { (t >> s) + one };
                    match op {
                        CmpOp::Neq => rec(CmpOp::Neq, t >> s),
                        CmpOp::Lt if t.is_zero() => Vec::new(),
                        CmpOp::Lt => rec(CmpOp::Le, (t - one) >> s),
                        CmpOp::Le => rec(CmpOp::Le, t >> s),
                        CmpOp::Gt => rec(CmpOp::Ge, (t >> s) + one),
                        CmpOp::Ge => rec(CmpOp::Ge, up),
                        CmpOp::Eq => unreachable!("handled above"),
                    }
                }
                (BinOp::Xor, _) if op == CmpOp::Eq => rec(CmpOp::Eq, t ^ c),
                _ => monotone_candidates(e, v, op, t, a),
            }
        }
        _ => Vec::new(),
    }
}

trait DivCeil {
    fn div_ceil_u(self, d: U256) -> U256;
}

impl DivCeil for U256 {
    fn div_ceil_u(self, d: U256) -> U256 {
        let q = self / d;
        if (self % d).is_zero() {
            q
        } else {
            q + U256::one()
        }
    }
}

/// Whether `e` is non-decreasing in `v` wherever it is defined.
fn monotone(e: &SymExpr, v: InputVar) -> bool {
    match e {
        SymExpr::Input(..) | SymExpr::Const(..) => true,
        SymExpr::Cast(_, a) => monotone(a, v),
        SymExpr::Bin(op, _, a, b) => match op {
            BinOp::Add | BinOp::Mul => monotone(a, v) && monotone(b, v),
            BinOp::Sub | BinOp::Div | BinOp::Shr => monotone(a, v) && !mentions(b, v),
            _ => !mentions(e, v),
        },
        _ => !mentions(e, v),
    }
}

/// Smallest x in [0, max] with f(x) >= t (undefined counts as infinite).
fn least_at_least(e: &SymExpr, v: InputVar, t: U256, max: U256, a: &Assignment) -> Option<U256> {
    let mut probe = a.clone();
    let mut at_least = |x: U256| {
        probe.insert(v, x);
        e.eval(&env(&probe)).is_none_or(|y| y >= t)
    };
    if !at_least(max) {
        return None;
    }
    let (mut lo, mut hi) = (U256::zero(), max);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if at_least(mid) {
            hi = mid;
        } else {
            lo = mid + U256::one();
        }
    }
    Some(lo)
}

fn monotone_candidates(e: &SymExpr, v: InputVar, op: CmpOp, t: U256, a: &Assignment) -> Vec<U256> {
    if !monotone(e, v) {
        return Vec::new();
    }
    let mut w = BTreeMap::new();
    widths(e, &mut w);
    let Some(max) = w.get(&v).map(|p| p.max_value()) else { return Vec::new() };
    let one = U256::one();
    let ge = least_at_least(e, v, t, max, a);
    let gt = match t.checked_add(one) {
        Some(t1) => least_at_least(e, v, t1, max, a),
        None => None,
    };
    let mut out = Vec::new();
    match op {
        CmpOp::Eq => out.extend(ge),
        CmpOp::Neq => {
            out.extend(gt);
            out.extend(ge.filter(|x| !x.is_zero()).map(|x| x - one));
        }
        CmpOp::Lt => out.extend(ge.map(|x| x.saturating_sub(one))),
        CmpOp::Le => out.extend(gt.map(|x| x.saturating_sub(one)).or(Some(max))),
        CmpOp::Gt => out.extend(gt),
        CmpOp::Ge => out.extend(ge),
    }
    out
}

/// Candidate values for `v` that may make `g` hold.
fn isolate(g: &Goal, v: InputVar, a: &Assignment) -> Vec<U256> {
    match g {
        Goal::Truth(e, want) => truth_candidates(e, *want, v, a),
        Goal::Defined(e, false) => abort_candidates(e, v, a),
        Goal::Defined(e, true) => defined_candidates(e, v, a),
    }
}

fn truth_candidates(e: &SymExpr, want: bool, v: InputVar, a: &Assignment) -> Vec<U256> {
    match e {
        SymExpr::Not(inner) => truth_candidates(inner, !want, v, a),
        SymExpr::Input(x, _) if *x == v => vec![U256::from(want as u8)],
        SymExpr::Cmp(op, l, r) => {
            let op = if want { *op } else { op.negate() };
            let ev = env(a);
            let (in_l, in_r) = (mentions(l, v), mentions(r, v));
            if in_l && !in_r {
                r.eval(&ev).map_or(Vec::new(), |t| invert(l, v, op, t, a, 0))
            } else if in_r && !in_l {
                l.eval(&ev).map_or(Vec::new(), |t| invert(r, v, flip_sides(op), t, a, 0))
            } else {
                Vec::new()
            }
        }
        _ => Vec::new(),
    }
}

/// Values of `v` making the outermost operation of `e` abort.
fn abort_candidates(e: &SymExpr, v: InputVar, a: &Assignment) -> Vec<U256> {
    let ev = env(a);
    match e {
        SymExpr::Cast(p, inner) => invert(inner, v, CmpOp::Gt, p.max_value(), a, 0),
        SymExpr::Bin(op, p, l, r) => {
            let max = p.max_value();
            let (in_l, in_r) = (mentions(l, v), mentions(r, v));
            if in_l && in_r {
                return Vec::new();
            }
            let (lv, rv) = (l.eval(&ev), r.eval(&ev));
            match op {
                BinOp::Add => {
                    if in_l {
                        rv.map_or(vec![], |c| if c.is_zero() { vec![] } else { invert(l, v, CmpOp::Gt, max - c, a, 0) })
                    } else {
                        lv.map_or(vec![], |c| if c.is_zero() { vec![] } else { invert(r, v, CmpOp::Gt, max - c, a, 0) })
                    }
                }
                BinOp::Sub => {
                    if in_l {
                        rv.map_or(vec![], |c| invert(l, v, CmpOp::Lt, c, a, 0))
                    } else {
                        lv.map_or(vec![], |c| invert(r, v, CmpOp::Gt, c, a, 0))
                    }
                }
                BinOp::Mul => {
                    let (side, c) = if in_l { (l, rv) } else { (r, lv) };
                    match c {
                        Some(c) if !c.is_zero() => invert(side, v, CmpOp::Gt, max / c, a, 0),
                        _ => vec![],
                    }
                }
                BinOp::Div | BinOp::Mod if in_r => invert(r, v, CmpOp::Eq, U256::zero(), a, 0),
                BinOp::Shl | BinOp::Shr if in_r => invert(r, v, CmpOp::Ge, U256::from(p.bits()), a, 0),
                _ => vec![],
            }
        }
        _ => vec![],
    }
}

/// Values of `v` keeping every subterm of `e` in range.
fn defined_candidates(e: &SymExpr, v: InputVar, a: &Assignment) -> Vec<U256> {
    let mut w = BTreeMap::new();
    widths(e, &mut w);
    let Some(p) = w.get(&v) else { return vec![] };
    let cur = a.get(&v).copied().unwrap_or_default();
    let mut out = vec![U256::zero(), U256::one(), cur / 2, p.max_value()];
    if monotone(e, v) {
        // Defined values form a prefix: search the last defined point.
        let mut probe = a.clone();
        let (mut lo, mut hi) = (U256::zero(), p.max_value());
        probe.insert(v, lo);
        if e.eval(&env(&probe)).is_some() {
            while lo < hi {
                let mid = lo + (hi - lo + U256::one()) / 2;
                probe.insert(v, mid);
                if e.eval(&env(&probe)).is_some() {
                    lo = mid;
                } else {
                    hi = mid - U256::one();
                }
            }
            out.push(lo);
            out.push(lo / 2);
        }
    }
    out
}

/// Closed interval per variable.
type Domains = BTreeMap<InputVar, (U256, U256)>;

fn tighten(d: &mut Domains, v: InputVar, lo: U256, hi: U256) {
    if let Some(cur) = d.get_mut(&v) {
        cur.0 = cur.0.max(lo);
        cur.1 = cur.1.min(hi);
    }
}

fn single_var(e: &SymExpr) -> Option<InputVar> {
    let mut vs = BTreeSet::new();
    e.vars(&mut vs);
    if vs.len() == 1 {
        vs.into_iter().next()
    } else {
        None
    }
}

/// Bounds implied by operands that must not abort.
fn definedness_bounds(e: &SymExpr, d: &mut Domains) {
    match e {
        SymExpr::Input(..) | SymExpr::Const(..) => {}
        SymExpr::Cmp(_, a, b) => {
            definedness_bounds(a, d);
            definedness_bounds(b, d);
        }
        SymExpr::Not(a) => definedness_bounds(a, d),
        SymExpr::Cast(..) | SymExpr::Bin(..) => {
            if let SymExpr::Bin(_, _, a, b) = e {
                definedness_bounds(a, d);
                definedness_bounds(b, d);
            } else if let SymExpr::Cast(_, a) = e {
                definedness_bounds(a, d);
            }
            if let Some(v) = single_var(e) {
                if monotone(e, v) {
                    bound_monotone_defined(e, v, d);
                }
            }
        }
    }
}

fn bound_monotone_defined(e: &SymExpr, v: InputVar, d: &mut Domains) {
    let Some(&(lo, hi)) = d.get(&v) else { return };
    let mut a = Assignment::new();
    a.insert(v, lo);
    if e.eval(&env(&a)).is_none() {
        // Division by a zero divisor at the low end is the only non-prefix case.
        if let SymExpr::Bin(BinOp::Div | BinOp::Mod, ..) = e {
            return;
        }
        tighten(d, v, U256::one(), U256::zero());
        return;
    }
    let (mut l, mut h) = (lo, hi);
    while l < h {
        let mid = l + (h - l + U256::one()) / 2;
        a.insert(v, mid);
        if e.eval(&env(&a)).is_some() {
            l = mid;
        } else {
            h = mid - U256::one();
        }
    }
    tighten(d, v, lo, l);
}

/// Bounds from a top-level comparison of a monotone single-variable term
/// against a constant.
fn comparison_bounds(e: &SymExpr, want: bool, d: &mut Domains) {
    match e {
        SymExpr::Not(inner) => comparison_bounds(inner, !want, d),
        SymExpr::Cmp(op, l, r) => {
            let op = if want { *op } else { op.negate() };
            let (f, t, op) = match (l.has_vars(), r.has_vars()) {
                (true, false) => (l, r.eval(&|_| U256::zero()), op),
                (false, true) => (r, l.eval(&|_| U256::zero()), flip_sides(op)),
                _ => return,
            };
            let (Some(t), Some(v)) = (t, single_var(f)) else { return };
            if !monotone(f, v) {
                return;
            }
            let Some(&(lo, hi)) = d.get(&v) else { return };
            let mut a = Assignment::new();
            a.insert(v, lo);
            let base = a;
            let one = U256::one();
            // x >= first point where f(x) >= t, and so on.
            let first_ge = least_at_least(f, v, t, hi, &base).filter(|x| *x >= lo);
            let first_gt = t.checked_add(one).and_then(|t1| least_at_least(f, v, t1, hi, &base));
            match op {
                CmpOp::Ge => match first_ge {
                    Some(x) => tighten(d, v, x, hi),
                    None => tighten(d, v, one, U256::zero()),
                },
                CmpOp::Gt => match first_gt {
                    Some(x) => tighten(d, v, x, hi),
                    None => tighten(d, v, one, U256::zero()),
                },
                CmpOp::Lt => match least_at_least(f, v, t, hi, &base) {
                    Some(x) if x.is_zero() => tighten(d, v, one, U256::zero()),
                    Some(x) => tighten(d, v, lo, x - one),
                    None => {}
                },
                CmpOp::Le => match first_gt {
                    Some(x) if x.is_zero() => tighten(d, v, one, U256::zero()),
                    Some(x) => tighten(d, v, lo, x - one),
                    None => {}
                },
                CmpOp::Eq => {
                    match first_ge {
                        Some(x) => tighten(d, v, x, hi),
                        None => tighten(d, v, one, U256::zero()),
                    }
                    if let Some(x) = first_gt {
                        if x.is_zero() {
                            tighten(d, v, one, U256::zero());
                        } else {
                            tighten(d, v, lo, x - one);
                        }
                    }
                }
                CmpOp::Neq => {}
            }
        }
        _ => {}
    }
}

/// Derives per-variable intervals; `None` when some domain is empty or a
/// variable-free goal is false.
fn propagate(goals: &[Goal], widths: &BTreeMap<InputVar, Prim>) -> Option<Domains> {
    let mut d: Domains = widths.iter().map(|(v, p)| (*v, (U256::zero(), p.max_value()))).collect();
    for g in goals {
        if !g.expr().has_vars() {
            if !g.holds(&|_| U256::zero()) {
                return None;
            }
            continue;
        }
        match g {
            Goal::Truth(e, want) => {
                definedness_bounds(e, &mut d);
                comparison_bounds(e, *want, &mut d);
            }
            Goal::Defined(e, true) => definedness_bounds(e, &mut d),
            Goal::Defined(e, false) => match &**e {
                SymExpr::Bin(_, _, a, b) => {
                    definedness_bounds(a, &mut d);
                    definedness_bounds(b, &mut d);
                }
                SymExpr::Cast(_, a) => definedness_bounds(a, &mut d),
                _ => {}
            },
        }
    }
    if d.values().any(|(lo, hi)| lo > hi) {
        None
    } else {
        Some(d)
    }
}

/// Greedy repair: for the first failing goal, try isolated values of each
/// of its variables and keep the one satisfying the most goals.
fn repair(goals: &[Goal], a: &mut Assignment, d: &Domains, rounds: usize) -> bool {
    for _ in 0..rounds {
        let Some(g) = goals.iter().find(|g| !g.holds(&env(a))) else { return true };
        let mut vs = BTreeSet::new();
        g.expr().vars(&mut vs);
        let mut best: Option<(usize, InputVar, U256)> = None;
        for v in vs {
            let (lo, hi) = d.get(&v).copied().unwrap_or((U256::zero(), U256::MAX));
            for c in isolate(g, v, a) {
                if c < lo || c > hi {
                    continue;
                }
                let mut trial = a.clone();
                trial.insert(v, c);
                if !g.holds(&env(&trial)) {
                    continue;
                }
                let score = satisfied(goals, &trial);
                if best.as_ref().is_none_or(|b| score > b.0) {
                    best = Some((score, v, c));
                }
            }
        }
        match best {
            Some((_, v, c)) => {
                a.insert(v, c);
            }
            None => return false,
        }
    }
    satisfied(goals, a) == goals.len()
}

fn interesting_values(goals: &[Goal], max: U256) -> Vec<U256> {
    let mut cs = BTreeSet::new();
    for g in goals {
        g.expr().constants(&mut cs);
    }
    let one = U256::one();
    let mut out: BTreeSet<U256> = BTreeSet::new();
    for c in cs {
        out.insert(c);
        out.insert(c.saturating_add(one));
        out.insert(c.saturating_sub(one));
    }
    for k in 0..256usize {
        let p = one << k;
        if p > max {
            break;
        }
        out.insert(p);
        out.insert(p - one);
        out.insert(p + one);
    }
    out.insert(U256::zero());
    out.insert(max);
    out.into_iter().filter(|x| *x <= max).collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: U256, hi: U256) -> U256 {
    let span = hi - lo;
    if span == U256::MAX {
        return U256(rng.gen());
    }
    let r = U256(rng.gen());
    lo + r % (span + U256::one())
}

/// Solves `goals` with the reference backend.
pub fn solve(goals: &[Goal], hint: &BTreeMap<InputVar, (Prim, U256)>, budget: u32, seed: u64) -> SolveOutcome {
    let mut w: BTreeMap<InputVar, Prim> = BTreeMap::new();
    for g in goals {
        widths(g.expr(), &mut w);
    }
    let mut a: Assignment = w.keys().map(|v| (*v, hint.get(v).map(|(_, x)| *x).unwrap_or_default())).collect();
    let finish = |a: Assignment| {
        let ok = satisfied(goals, &a) == goals.len();
        assert!(ok, "solver returned an assignment violating its goals");
        SolveOutcome::Sat(a)
    };
    if satisfied(goals, &a) == goals.len() {
        return finish(a);
    }
    let unbounded: Domains = w.iter().map(|(v, p)| (*v, (U256::zero(), p.max_value()))).collect();
    let rounds = 2 * goals.len() + 8;
    let mut first = a.clone();
    if repair(goals, &mut first, &unbounded, rounds) {
        return finish(first);
    }
    let Some(d) = propagate(goals, &w) else { return SolveOutcome::Unsat };
    for (v, (lo, hi)) in &d {
        let x = a.get_mut(v).unwrap();
        *x = (*x).clamp(*lo, *hi);
    }
    if satisfied(goals, &a) == goals.len() {
        return finish(a);
    }
    let mut second = a.clone();
    if repair(goals, &mut second, &d, rounds) {
        return finish(second);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: BTreeMap<InputVar, Vec<U256>> = d
        .iter()
        .map(|(v, (lo, hi))| (*v, interesting_values(goals, w[v].max_value()).into_iter().filter(|x| x >= lo && x <= hi).collect()))
        .collect();
    for _ in 0..budget {
        let mut trial = a.clone();
        for (v, (lo, hi)) in &d {
            let pool = &pools[v];
            let x = match rng.gen_range(0..5) {
                0 => a[v],
                1 => *[lo, hi][rng.gen_range(0..2)],
                2 if !pool.is_empty() => pool[rng.gen_range(0..pool.len())],
                _ => uniform(&mut rng, *lo, *hi),
            };
            trial.insert(*v, x);
        }
        if repair(goals, &mut trial, &d, 3) {
            return finish(trial);
        }
    }
    SolveOutcome::Unknown
}

pub fn var_expr(v: InputVar, p: Prim) -> Arc<SymExpr> {
    Arc::new(SymExpr::Input(v, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(i: u32) -> InputVar {
        InputVar { call: i, arg: 0, elem: None }
    }

    fn c(p: Prim, v: u64) -> Arc<SymExpr> {
        Arc::new(SymExpr::Const(p, v.into()))
    }

    fn cmp(op: CmpOp, a: Arc<SymExpr>, b: Arc<SymExpr>) -> Arc<SymExpr> {
        Arc::new(SymExpr::Cmp(op, a, b))
    }

    fn bin(op: BinOp, p: Prim, a: Arc<SymExpr>, b: Arc<SymExpr>) -> Arc<SymExpr> {
        Arc::new(SymExpr::Bin(op, p, a, b))
    }

    #[test]
    fn isolates_linear_equality() {
        let x = var_expr(var(0), Prim::U64);
        let g = Goal::Truth(cmp(CmpOp::Eq, bin(BinOp::Add, Prim::U64, x, c(Prim::U64, 5)), c(Prim::U64, 12)), true);
        let hint = BTreeMap::from([(var(0), (Prim::U64, U256::zero()))]);
        let SolveOutcome::Sat(a) = solve(&[g], &hint, 100, 1) else { panic!() };
        assert_eq!(a[&var(0)], U256::from(7));
    }

    #[test]
    fn empty_interval_is_unsat() {
        let x = var_expr(var(0), Prim::U8);
        let gs = [
            Goal::Truth(cmp(CmpOp::Lt, x.clone(), c(Prim::U8, 3)), true),
            Goal::Truth(cmp(CmpOp::Gt, x, c(Prim::U8, 5)), true),
        ];
        assert_eq!(solve(&gs, &BTreeMap::new(), 100, 1), SolveOutcome::Unsat);
    }

    #[test]
    fn constant_goal_is_unsat() {
        let g = Goal::Truth(Arc::new(SymExpr::bool_const(true)), false);
        assert_eq!(solve(&[g], &BTreeMap::new(), 100, 1), SolveOutcome::Unsat);
    }

    #[test]
    fn repayment_relation() {
        let x = var_expr(var(0), Prim::U64);
        let y = var_expr(var(1), Prim::U64);
        let fee = bin(BinOp::Div, Prim::U64, x.clone(), c(Prim::U64, 1000));
        let gs = [
            Goal::Truth(cmp(CmpOp::Eq, y.clone(), bin(BinOp::Add, Prim::U64, x, fee)), true),
            Goal::Truth(cmp(CmpOp::Eq, y, c(Prim::U64, 1001)), true),
        ];
        let SolveOutcome::Sat(a) = solve(&gs, &BTreeMap::new(), 1000, 1) else { panic!() };
        assert_eq!((a[&var(0)], a[&var(1)]), (U256::from(1000), U256::from(1001)));
    }

    #[test]
    fn solicits_overflow() {
        let x = var_expr(var(0), Prim::U8);
        let g = Goal::Defined(bin(BinOp::Add, Prim::U8, x, c(Prim::U8, 200)), false);
        let SolveOutcome::Sat(a) = solve(&[g], &BTreeMap::new(), 100, 1) else { panic!() };
        assert!(a[&var(0)] >= U256::from(56));
    }
}
