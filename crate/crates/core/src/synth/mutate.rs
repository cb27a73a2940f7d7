//! Mutators over seeds: literal havoc, trace extension, call insertion and
//! call removal. Structural mutators work on the seed's stored trace.

use std::collections::BTreeSet;

use primitive_types::U256;
use rand::seq::SliceRandom;
use rand::Rng;

use super::build::Builder;
use super::instantiate::{instantiate, sample_prim};
use super::*;
use crate::txn::Transaction;

/// Draws for [`insert_call`] before the seed is returned unchanged.
const INSERT_DRAWS: usize = 8;

fn mutate_prim(p: Prim, v: U256, rng: &mut impl Rng) -> U256 {
    if p == Prim::Bool {
        return U256::from(v.is_zero() as u8);
    }
    let max = p.max_value();
    let bits = p.bits();
    match rng.gen_range(0..5) {
        0 => v ^ (U256::one() << rng.gen_range(0..bits)),
        1 => {
            let byte = rng.gen_range(0..bits / 8);
            let mask = U256::from(0xffu8) << (byte * 8);
            (v & !mask) | (U256::from(rng.gen::<u8>()) << (byte * 8))
        }
        2 => {
            let d = U256::from(rng.gen_range(1..=16u8));
            if rng.gen_bool(0.5) {
                v.overflowing_add(d).0 & max
            } else {
                v.overflowing_sub(d).0 & max
            }
        }
        _ => sample_prim(p, rng),
    }
}

/// Mutates one literal in place: a bit flip, a byte overwrite, a small
/// arithmetic delta, or a fresh draw. Vectors may also grow or shrink.
pub fn mutate_literal(b: &mut ArgBinding, rng: &mut impl Rng) {
    match b {
        ArgBinding::Literal(p, v) => *v = mutate_prim(*p, *v, rng),
        ArgBinding::LiteralVector(p, vs) => match rng.gen_range(0..4) {
            0 if vs.len() < 8 => vs.push(sample_prim(*p, rng)),
            1 if !vs.is_empty() => {
                vs.pop();
            }
            _ if !vs.is_empty() => {
                let i = rng.gen_range(0..vs.len());
                vs[i] = mutate_prim(*p, vs[i], rng);
            }
            _ => vs.push(sample_prim(*p, rng)),
        },
        _ => {}
    }
}

/// Changes one to four literal arguments; the call structure is kept.
pub fn mutate_values(seed: &Transaction, rng: &mut impl Rng) -> Transaction {
    let mut out = seed.clone();
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (ci, c) in out.calls.iter().enumerate() {
        for (ai, a) in c.args.iter().enumerate() {
            if matches!(a, ArgBinding::Literal(..) | ArgBinding::LiteralVector(..)) {
                slots.push((ci, ai));
            }
        }
    }
    if slots.is_empty() {
        return out;
    }
    let n = rng.gen_range(1..=slots.len().min(4));
    for &(ci, ai) in slots.choose_multiple(rng, n) {
        mutate_literal(&mut out.calls[ci].args[ai], rng);
    }
    out
}

fn finish(syn: &Synthesizer, mut trace: GraphTrace, rng: &mut impl Rng) -> Option<Transaction> {
    substitute_trace_types(&mut trace, &syn.candidates, syn.package(), rng).ok()?;
    instantiate(syn, trace, rng).ok()
}

/// Grows the seed's trace from an open value; `None` when no open value
/// has a consumer.
pub fn extend_trace(seed: &Transaction, syn: &Synthesizer, rng: &mut impl Rng) -> Option<Transaction> {
    let meta = seed.meta.as_ref()?;
    let trace = meta.synced_trace(seed);
    let mut b = Builder::new(syn, trace, rng);
    if !b.extend_once() {
        return None;
    }
    let trace = b.trace;
    finish(syn, trace, rng)
}

/// Connects a random function to an open value of the seed, or appends a
/// fresh trace starting at it. Returns the seed unchanged when every draw
/// fails.
pub fn insert_call(seed: &Transaction, syn: &Synthesizer, rng: &mut impl Rng) -> Transaction {
    let Some(meta) = seed.meta.as_ref() else { return seed.clone() };
    let base = meta.synced_trace(seed);
    let pkg = syn.package();
    for _ in 0..INSERT_DRAWS {
        let Some(f) = syn.functions.choose(rng).cloned() else { break };
        let decl = syn.decl(&f);
        let mut b = Builder::new(syn, base.clone(), rng);
        let mut open = b.trace.open_outputs(pkg);
        open.retain(|(_, _, t)| !is_literal_shape(t));
        open.shuffle(b.rng);
        let mut connected = false;
        'outer: for (c, o, _) in open {
            for pos in 0..decl.inputs.len() {
                if decl.inputs[pos].mode == RefMode::ByMutRef || is_literal_shape(&decl.inputs[pos].ty) {
                    continue;
                }
                let snapshot = b.trace.clone();
                if b.add_call(&f, Some((pos, Src::Result { call: c, output: o })), 0).is_some() && b.close() {
                    connected = true;
                    break 'outer;
                }
                b.trace = snapshot;
            }
        }
        if !connected && syn.starts.contains(&f) {
            connected = b.add_call(&f, None, 0).is_some() && b.close();
        }
        if connected {
            let trace = b.trace;
            if let Some(t) = finish(syn, trace, rng) {
                return t;
            }
        }
    }
    seed.clone()
}

/// Removes one call and every call that can no longer stand without it:
/// users of its outputs, and producers of hot potatoes it consumed.
pub fn remove_call(seed: &Transaction, syn: &Synthesizer, rng: &mut impl Rng) -> Transaction {
    if seed.calls.is_empty() {
        return seed.clone();
    }
    let pkg = syn.package();
    let Some(meta) = seed.meta.as_ref() else {
        let k = rng.gen_range(0..seed.calls.len());
        return remove_plain(seed, k, pkg);
    };
    let trace = meta.synced_trace(seed);
    let victim = meta.order[rng.gen_range(0..meta.order.len())];
    let removed = removal_closure(&trace, pkg, victim);
    let mut index = vec![usize::MAX; trace.calls.len()];
    let mut calls = Vec::new();
    for (i, c) in trace.calls.iter().enumerate() {
        if !removed.contains(&i) {
            index[i] = calls.len();
            calls.push(c.clone());
        }
    }
    for c in &mut calls {
        for s in &mut c.inputs {
            if let Src::Result { call, .. } = s {
                *call = index[*call];
            }
        }
    }
    let trace = GraphTrace { calls, vars: trace.vars };
    instantiate(syn, trace, rng).unwrap_or_else(|_| seed.clone())
}

/// Calls removed together with `victim`.
pub(crate) fn removal_closure(trace: &GraphTrace, pkg: &Package, victim: usize) -> BTreeSet<usize> {
    let mut removed = BTreeSet::from([victim]);
    loop {
        let mut grew = false;
        for (i, c) in trace.calls.iter().enumerate() {
            if removed.contains(&i) {
                continue;
            }
            let uses_removed = c.inputs.iter().any(|s| matches!(s, Src::Result { call, .. } if removed.contains(call)));
            if uses_removed {
                removed.insert(i);
                grew = true;
            }
        }
        for &r in removed.clone().iter() {
            let f = pkg.function(&trace.calls[r].function).expect("trace function exists");
            for (pos, s) in trace.calls[r].inputs.iter().enumerate() {
                if let Src::Result { call, output } = s {
                    let t = trace.output_term(pkg, *call, *output);
                    if f.inputs[pos].mode == RefMode::ByValue && pkg.is_hot_potato_type(&t) && removed.insert(*call) {
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            return removed;
        }
    }
}

/// Removal on a transaction without a stored trace: users of removed
/// outputs and producers of hot potatoes consumed by removed calls go too,
/// and result references are renumbered.
fn remove_plain(seed: &Transaction, k: usize, pkg: &Package) -> Transaction {
    let out_type = |ci: usize, oi: usize| -> Option<TypeTag> {
        let c = &seed.calls[ci];
        let f = pkg.function(&c.function)?;
        signature_of(f, &c.type_args).ok()?.1.get(oi).cloned()
    };
    let mut removed = BTreeSet::from([k]);
    loop {
        let mut grew = false;
        for (i, c) in seed.calls.iter().enumerate() {
            let hit = c.args.iter().any(|a| matches!(a, ArgBinding::Result(s, _) if removed.contains(s)));
            if hit && removed.insert(i) {
                grew = true;
            }
        }
        for &r in removed.clone().iter() {
            for a in &seed.calls[r].args {
                if let ArgBinding::Result(s, o) = a {
                    if out_type(*s, *o).is_some_and(|t| pkg.is_hot_potato_type(&t)) && removed.insert(*s) {
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    let mut index = vec![usize::MAX; seed.calls.len()];
    let mut calls = Vec::new();
    for (i, c) in seed.calls.iter().enumerate() {
        if !removed.contains(&i) {
            index[i] = calls.len();
            let mut c = c.clone();
            for a in &mut c.args {
                if let ArgBinding::Result(s, _) = a {
                    *s = index[*s];
                }
            }
            calls.push(c);
        }
    }
    Transaction::new(calls)
}
