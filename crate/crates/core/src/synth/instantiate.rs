//! Type substitution, width-first linearization, and value filling.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use primitive_types::U256;
use rand::Rng;

use super::*;
use crate::txn::{CallSpec, Transaction};
use crate::typegraph::{pattern_of, TypeGraph};

/// Binds every free type variable of the trace to a candidate type. Up to
/// [`MAX_ASSIGNMENTS`] random assignments are tried; an assignment is
/// accepted when every instantiated type is well formed.
pub fn substitute_trace_types(trace: &mut GraphTrace, candidates: &[TypeTag], pkg: &Package, rng: &mut impl Rng) -> Result<(), SynthError> {
    let mut free = BTreeSet::new();
    for c in &trace.calls {
        for t in &c.type_args {
            trace.vars.free_vars(t, &mut free);
        }
    }
    if free.is_empty() {
        return if well_formed(trace, pkg) { Ok(()) } else { Err(SynthError::NoAssignment) };
    }
    if candidates.is_empty() {
        return Err(SynthError::NoAssignment);
    }
    for _ in 0..MAX_ASSIGNMENTS {
        let mut trial = trace.vars.clone();
        for &v in &free {
            let pick = &candidates[rng.gen_range(0..candidates.len())];
            trial.unify(&TypeTag::Param(v), pick);
        }
        let mut t = GraphTrace { calls: trace.calls.clone(), vars: trial };
        if well_formed(&t, pkg) {
            for c in &mut t.calls {
                for a in &mut c.type_args {
                    *a = t.vars.resolve(a);
                }
            }
            *trace = t;
            return Ok(());
        }
    }
    Err(SynthError::NoAssignment)
}

fn well_formed(trace: &GraphTrace, pkg: &Package) -> bool {
    trace.calls.iter().all(|c| {
        c.type_args.iter().all(|a| {
            let a = trace.vars.resolve(a);
            a.is_concrete() && crate::verify::check_type(pkg, &a, 0).is_ok()
        })
    })
}

/// Width-first call order: each call's level is one more than the deepest
/// call it depends on. Ties go by the earliest type node among the call's
/// non-literal inputs, then by function node, then by trace order. A value
/// borrowed by some calls and moved by another is borrowed first.
pub fn linearize(trace: &GraphTrace, graph: &TypeGraph) -> Vec<usize> {
    let pkg = &*graph.package;
    let n = trace.calls.len();
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let uses = trace.uses(pkg);
    for (i, c) in trace.calls.iter().enumerate() {
        for s in &c.inputs {
            if let Src::Result { call, .. } = s {
                deps[i].insert(*call);
            }
        }
    }
    for us in uses.values() {
        for &(mover, _, mode) in us {
            if mode == RefMode::ByValue {
                for &(other, _, m) in us {
                    if other != mover && m != RefMode::ByValue {
                        deps[mover].insert(other);
                    }
                }
            }
        }
    }
    let mut pool_users: BTreeMap<u64, Vec<(usize, RefMode)>> = BTreeMap::new();
    for (i, c) in trace.calls.iter().enumerate() {
        let f = pkg.function(&c.function).expect("trace function exists");
        for (pos, s) in c.inputs.iter().enumerate() {
            if let Src::Pool(id) = s {
                pool_users.entry(*id).or_default().push((i, f.inputs[pos].mode));
            }
        }
    }
    for us in pool_users.values() {
        for &(mover, mode) in us {
            if mode == RefMode::ByValue {
                for &(other, _) in us {
                    if other != mover {
                        deps[mover].insert(other);
                    }
                }
            }
        }
    }
    let mut level = vec![0usize; n];
    for i in 0..n {
        debug_assert!(deps[i].iter().all(|&d| d < i));
        level[i] = deps[i].iter().map(|&d| level[d] + 1).max().unwrap_or(0);
    }
    let tie = |i: usize| {
        let c = &trace.calls[i];
        let decl = pkg.function(&c.function).expect("trace function exists");
        let ty = c
            .inputs
            .iter()
            .zip(&decl.inputs)
            .filter(|(s, _)| !matches!(s, Src::Literal(_)))
            .filter_map(|(_, p)| graph.node_of_type_pattern(&pattern_of(&p.ty).0))
            .min()
            .unwrap_or(usize::MAX);
        (ty, graph.node_of_function(&c.function).unwrap_or(usize::MAX))
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (level[i], tie(i), i));
    order
}

fn boundary_values(p: Prim) -> Vec<U256> {
    let max = p.max_value();
    let mut out = vec![U256::zero(), U256::one(), U256::from(2), max, max - 1];
    for k in 1..p.bits() {
        let v = U256::one() << k;
        out.extend([v - 1, v, v + 1]);
    }
    out.sort();
    out.dedup();
    out
}

/// A random primitive: half the time from the boundary set, otherwise
/// uniform over the type's range.
pub fn sample_prim(p: Prim, rng: &mut impl Rng) -> U256 {
    if p == Prim::Bool {
        return U256::from(rng.gen_bool(0.5) as u8);
    }
    if rng.gen_bool(0.5) {
        let b = boundary_values(p);
        b[rng.gen_range(0..b.len())]
    } else {
        let mut bytes = [0u8; 32];
        rng.fill(&mut bytes);
        U256::from_little_endian(&bytes) & p.max_value()
    }
}

/// A random literal of a literal-shaped type.
pub fn sample_literal(t: &TypeTag, rng: &mut impl Rng) -> ArgBinding {
    match t {
        TypeTag::Prim(p) => ArgBinding::Literal(*p, sample_prim(*p, rng)),
        TypeTag::Vector(e) => {
            let p = e.as_prim().expect("literal vectors hold primitives");
            let len = rng.gen_range(0..=4);
            ArgBinding::LiteralVector(p, (0..len).map(|_| sample_prim(p, rng)).collect())
        }
        _ => unreachable!("not a literal type: {t}"),
    }
}

pub(crate) fn literal_fits(b: &ArgBinding, t: &TypeTag) -> bool {
    match (b, t) {
        (ArgBinding::Literal(p, _), TypeTag::Prim(q)) => p == q,
        (ArgBinding::LiteralVector(p, _), TypeTag::Vector(e)) => e.as_prim() == Some(*p),
        _ => false,
    }
}

/// Builds the transaction of a concrete trace. Missing literals are drawn
/// and recorded in the trace; result references follow the linearization.
pub fn instantiate(syn: &Synthesizer, mut trace: GraphTrace, rng: &mut impl Rng) -> Result<Transaction, SynthError> {
    let pkg = syn.package();
    for c in &trace.calls {
        if c.type_args.iter().any(|a| !trace.vars.resolve(a).is_concrete()) {
            return Err(SynthError::NoAssignment);
        }
    }
    for ci in 0..trace.calls.len() {
        for pos in 0..trace.calls[ci].inputs.len() {
            match &trace.calls[ci].inputs[pos] {
                Src::Literal(v) => {
                    let t = trace.input_term(pkg, ci, pos);
                    if !v.as_ref().is_some_and(|b| literal_fits(b, &t)) {
                        let lit = sample_literal(&t, rng);
                        trace.calls[ci].inputs[pos] = Src::Literal(Some(lit));
                    }
                }
                Src::Pool(id) => {
                    if !syn.pool.objects.contains_key(id) {
                        return Err(SynthError::PoolMiss(*id));
                    }
                }
                Src::Result { .. } => {}
            }
        }
    }
    for c in &mut trace.calls {
        for a in &mut c.type_args {
            *a = trace.vars.resolve(a);
        }
    }
    let order = linearize(&trace, &syn.graph);
    let mut position = vec![0usize; order.len()];
    for (k, &ti) in order.iter().enumerate() {
        position[ti] = k;
    }
    let calls = order
        .iter()
        .map(|&ti| {
            let c = &trace.calls[ti];
            let args = c
                .inputs
                .iter()
                .map(|s| match s {
                    Src::Literal(v) => v.clone().expect("filled above"),
                    Src::Result { call, output } => ArgBinding::Result(position[*call], *output),
                    Src::Pool(id) => ArgBinding::PoolObject(*id),
                })
                .collect();
            let function = syn.cfg.rename.get(&c.function).cloned().unwrap_or_else(|| c.function.clone());
            CallSpec { function, type_args: c.type_args.clone(), args }
        })
        .collect();
    Ok(Transaction { calls, meta: Some(Arc::new(TraceMeta { trace, order })) })
}
