//! Structure-unaware generation and mutation over call lists, used when
//! the type graph is disabled. Object arguments are bound without regard
//! to their types and type arguments are arbitrary type terms, so most
//! results fail validation.

use rand::Rng;

use super::instantiate::sample_literal;
use super::mutate::mutate_literal;
use super::*;
use crate::txn::{CallSpec, Transaction};

/// Nesting depth of type arguments drawn without the type graph.
const TYPE_DEPTH: usize = 2;

/// Number of type terms of depth at most `depth` over primitives, vectors
/// and datatypes of the given arities.
fn term_count(arities: &[usize], depth: usize) -> f64 {
    let prims = Prim::ALL.len() as f64;
    if depth == 0 {
        return prims;
    }
    let c = term_count(arities, depth - 1);
    prims + c + arities.iter().map(|&a| c.powi(a as i32)).sum::<f64>()
}

/// A type term drawn uniformly among all terms of depth at most `depth`
/// over every primitive, vectors and every declared datatype, ignoring
/// abilities and parameter constraints.
fn random_type(pkg: &Package, depth: usize, rng: &mut impl Rng) -> TypeTag {
    let datatypes: Vec<(QualifiedName, usize)> = pkg
        .all_modules()
        .into_iter()
        .flat_map(|m| m.datatypes.iter().map(move |d| (QualifiedName { module: m.name.clone(), name: d.name.clone() }, d.arity())))
        .collect();
    let arities: Vec<usize> = datatypes.iter().map(|(_, a)| *a).collect();
    let mut r = rng.gen::<f64>() * term_count(&arities, depth);
    for p in Prim::ALL {
        if r < 1.0 || depth == 0 {
            return TypeTag::Prim(p);
        }
        r -= 1.0;
    }
    let c = term_count(&arities, depth - 1);
    if r < c {
        return TypeTag::Vector(Box::new(random_type(pkg, depth - 1, rng)));
    }
    r -= c;
    for (name, arity) in &datatypes {
        let w = c.powi(*arity as i32);
        if r < w {
            return TypeTag::Datatype(name.clone(), (0..*arity).map(|_| random_type(pkg, depth - 1, rng)).collect());
        }
        r -= w;
    }
    TypeTag::Prim(Prim::ALL[0])
}

fn random_call(syn: &Synthesizer, prior: &[CallSpec], rng: &mut impl Rng) -> Option<CallSpec> {
    let f = syn.functions.get(rng.gen_range(0..syn.functions.len().max(1)))?.clone();
    let decl = syn.decl(&f);
    let type_args: Vec<TypeTag> = (0..decl.arity()).map(|_| random_type(syn.package(), TYPE_DEPTH, rng)).collect();
    let (ins, _) = signature_of(decl, &type_args).ok()?;
    let mut refs: Vec<ArgBinding> = Vec::new();
    for (ci, c) in prior.iter().enumerate() {
        let outs = syn.package().function(&c.function).map_or(0, |d| d.outputs.len());
        refs.extend((0..outs).map(|o| ArgBinding::Result(ci, o)));
    }
    refs.extend(syn.pool.objects.keys().map(|id| ArgBinding::PoolObject(*id)));
    let mut args = Vec::with_capacity(ins.len());
    for t in &ins {
        if is_literal_shape(t) {
            args.push(sample_literal(t, rng));
        } else if refs.is_empty() {
            args.push(sample_literal(&TypeTag::Prim(Prim::U64), rng));
        } else {
            args.push(refs[rng.gen_range(0..refs.len())].clone());
        }
    }
    let function = syn.cfg.rename.get(&f).cloned().unwrap_or(f);
    Some(CallSpec { function, type_args, args })
}

/// A random call list of length 1 to the call limit. Object arguments with
/// no value to refer to get a literal and fail validation.
pub fn havoc_generate(syn: &Synthesizer, rng: &mut impl Rng) -> Transaction {
    let len = rng.gen_range(1..=syn.cfg.max_calls.max(1));
    let mut calls = Vec::new();
    for _ in 0..len {
        if let Some(c) = random_call(syn, &calls, rng) {
            calls.push(c);
        }
    }
    Transaction::new(calls)
}

/// One to three random edits: literal changes, call appends, deletions and
/// duplications. Result references are renumbered but not retyped.
pub fn havoc_mutate(seed: &Transaction, syn: &Synthesizer, rng: &mut impl Rng) -> Transaction {
    let mut calls = seed.calls.clone();
    for _ in 0..rng.gen_range(1..=3) {
        match rng.gen_range(0..4) {
            0 => {
                let slots: Vec<(usize, usize)> = calls
                    .iter()
                    .enumerate()
                    .flat_map(|(ci, c)| {
                        c.args.iter().enumerate().filter_map(move |(ai, a)| {
                            matches!(a, ArgBinding::Literal(..) | ArgBinding::LiteralVector(..)).then_some((ci, ai))
                        })
                    })
                    .collect();
                if !slots.is_empty() {
                    let (ci, ai) = slots[rng.gen_range(0..slots.len())];
                    mutate_literal(&mut calls[ci].args[ai], rng);
                }
            }
            1 if calls.len() < syn.cfg.max_calls => {
                if let Some(c) = random_call(syn, &calls, rng) {
                    calls.push(c);
                }
            }
            2 if !calls.is_empty() => {
                let k = rng.gen_range(0..calls.len());
                calls.remove(k);
                for c in calls.iter_mut().skip(k) {
                    for a in &mut c.args {
                        if let ArgBinding::Result(s, _) = a {
                            if *s > k {
                                *s -= 1;
                            }
                        }
                    }
                }
            }
            3 if !calls.is_empty() && calls.len() < syn.cfg.max_calls => {
                let k = rng.gen_range(0..calls.len());
                calls.push(calls[k].clone());
            }
            _ => {}
        }
    }
    Transaction::new(calls)
}
