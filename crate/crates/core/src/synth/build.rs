//! Graph walks that grow a trace: adding function occurrences, closing open
//! hot potatoes, and random extension from open values.

use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::typegraph::{pattern_of, Direction, NodeKind};
use crate::vm::state::Owner;

/// Nesting bound for producers added to satisfy an input.
const PRODUCER_DEPTH: usize = 3;

pub(crate) struct Builder<'s, R: Rng> {
    pub syn: &'s Synthesizer,
    pub trace: GraphTrace,
    pub rng: &'s mut R,
    /// Sources taken by calls still under construction.
    reserved: Vec<Src>,
}

impl<'s, R: Rng> Builder<'s, R> {
    pub fn new(syn: &'s Synthesizer, trace: GraphTrace, rng: &'s mut R) -> Self {
        Builder { syn, trace, rng, reserved: Vec::new() }
    }

    fn pkg(&self) -> &'s Package {
        &self.syn.graph.package
    }

    /// Functions with an input (by value when `by_value`) whose declared
    /// type may unify with `t`, as (function, position).
    pub fn consumers(&self, t: &TypeTag, by_value: bool) -> Vec<(FunctionRef, usize)> {
        self.graph_neighbours(t, Direction::Input)
            .into_iter()
            .filter(|(f, pos)| !by_value || self.syn.decl(f).inputs[*pos].mode == RefMode::ByValue)
            .collect()
    }

    /// Functions with an output whose declared type may unify with `t`.
    pub fn producers(&self, t: &TypeTag) -> Vec<(FunctionRef, usize)> {
        self.graph_neighbours(t, Direction::Output)
    }

    fn graph_neighbours(&self, t: &TypeTag, dir: Direction) -> Vec<(FunctionRef, usize)> {
        let g = &self.syn.graph;
        let (pattern, _) = pattern_of(t);
        let mut nodes = Vec::new();
        match g.node_of_type_pattern(&pattern) {
            Some(n) => nodes.push(n),
            None if matches!(t, TypeTag::Param(_)) => nodes.extend(g.matching_nodes(&pattern)),
            None => {}
        }
        if let Some(n) = g.node_of_type_pattern(&TypeTag::Param(0)) {
            if !nodes.contains(&n) {
                nodes.push(n);
            }
        }
        let mut out = Vec::new();
        for n in nodes {
            let edges: Vec<_> = match dir {
                Direction::Input => g.outgoing(n).collect(),
                Direction::Output => g.incoming(n).collect(),
            };
            for e in edges {
                let fnode = if dir == Direction::Input { e.to } else { e.from };
                let NodeKind::Function(f) = &g.nodes[fnode] else { continue };
                if !self.syn.functions.contains(f) {
                    continue;
                }
                for &pos in &e.positions {
                    let decl = self.syn.decl(f);
                    let declared = if dir == Direction::Input { &decl.inputs[pos].ty } else { &decl.outputs[pos] };
                    if self.fresh_unifiable(declared, decl.arity(), t) {
                        out.push((f.clone(), pos));
                    }
                }
            }
        }
        out
    }

    /// Whether `declared`, with fresh variables for the function's type
    /// parameters, unifies with `t`.
    fn fresh_unifiable(&self, declared: &TypeTag, arity: usize, t: &TypeTag) -> bool {
        let mut u = self.trace.vars.clone();
        let Some(vars) = (0..arity).map(|_| u.fresh()).collect::<Option<Vec<_>>>() else { return false };
        let d = substitute(declared, &vars).expect("arity matches");
        u.unify(&d, t)
    }

    /// Adds an occurrence of `f`, optionally with one input pre-bound, and
    /// satisfies its remaining inputs. The trace is unchanged on failure.
    pub fn add_call(&mut self, f: &FunctionRef, fixed: Option<(usize, Src)>, depth: usize) -> Option<usize> {
        let snapshot = self.trace.clone();
        let mark = self.reserved.len();
        let r = self.add_call_inner(f, fixed, depth);
        self.reserved.truncate(mark);
        if r.is_none() {
            self.trace = snapshot;
        }
        r
    }

    fn add_call_inner(&mut self, f: &FunctionRef, fixed: Option<(usize, Src)>, depth: usize) -> Option<usize> {
        if self.trace.calls.len() >= self.syn.cfg.max_calls {
            return None;
        }
        let pkg = self.pkg();
        let decl = self.syn.decl(f);
        let type_args: Vec<TypeTag> = (0..decl.arity()).map(|_| self.trace.vars.fresh()).collect::<Option<_>>()?;
        let term = |tr: &GraphTrace, pos: usize| tr.vars.resolve(&substitute(&decl.inputs[pos].ty, &type_args).unwrap());
        let mut inputs: Vec<Option<Src>> = vec![None; decl.inputs.len()];
        if let Some((pos, src)) = fixed {
            let want = term(&self.trace, pos);
            let have = match &src {
                Src::Result { call, output } => self.trace.output_term(pkg, *call, *output),
                Src::Pool(id) => self.syn.pool.objects.get(id)?.ty.clone(),
                Src::Literal(_) => return None,
            };
            if !self.trace.vars.try_unify(&want, &have) {
                return None;
            }
            self.reserved.push(src.clone());
            inputs[pos] = Some(src);
        }
        for pos in 0..decl.inputs.len() {
            if inputs[pos].is_some() {
                continue;
            }
            let mode = decl.inputs[pos].mode;
            let t = term(&self.trace, pos);
            if is_literal_shape(&t) {
                inputs[pos] = Some(Src::Literal(None));
                continue;
            }
            if let Some(src) = self.pick_source(&t, mode) {
                self.reserved.push(src.clone());
                inputs[pos] = Some(src);
                continue;
            }
            if literal_capable(&t) && mode == RefMode::ByValue {
                let mut vs = std::collections::BTreeSet::new();
                t.params(&mut vs);
                for v in vs {
                    let p = Prim::ALL[self.rng.gen_range(0..Prim::ALL.len())];
                    self.trace.vars.unify(&TypeTag::Param(v), &TypeTag::Prim(p));
                }
                inputs[pos] = Some(Src::Literal(None));
                continue;
            }
            if mode == RefMode::ByMutRef || depth >= PRODUCER_DEPTH {
                return None;
            }
            let mut prods = self.producers(&t);
            prods.shuffle(self.rng);
            let mut bound = false;
            for (pf, out) in prods {
                let Some(pi) = self.add_call(&pf, None, depth + 1) else { continue };
                let ot = self.trace.output_term(pkg, pi, out);
                if self.trace.vars.try_unify(&ot, &term(&self.trace, pos)) {
                    let src = Src::Result { call: pi, output: out };
                    self.reserved.push(src.clone());
                    inputs[pos] = Some(src);
                    bound = true;
                    break;
                }
            }
            if !bound {
                return None;
            }
        }
        if self.trace.calls.len() >= self.syn.cfg.max_calls {
            return None;
        }
        self.trace.calls.push(TraceCall {
            function: f.clone(),
            type_args,
            inputs: inputs.into_iter().map(|s| s.expect("every input bound")).collect(),
        });
        Some(self.trace.calls.len() - 1)
    }

    /// A random existing value usable for an input of type `t`: an open
    /// output or a pool object.
    fn pick_source(&mut self, t: &TypeTag, mode: RefMode) -> Option<Src> {
        let pkg = self.pkg();
        let mut options: Vec<(Src, TypeTag)> = Vec::new();
        if mode != RefMode::ByMutRef {
            for (c, o, ot) in self.trace.open_outputs(pkg) {
                let src = Src::Result { call: c, output: o };
                if self.reserved.contains(&src) {
                    continue;
                }
                if self.trace.vars.unifiable(&ot, t) {
                    options.push((src, ot));
                }
            }
        }
        let (by_value, by_ref) = self.trace.pool_uses(pkg);
        for (id, obj) in &self.syn.pool.objects {
            if by_value.contains(id) || self.reserved.contains(&Src::Pool(*id)) {
                continue;
            }
            let ok = match (obj.owner, mode) {
                (Owner::Shared, RefMode::ByValue) => false,
                (Owner::Sender, RefMode::ByValue) => !by_ref.contains(id),
                _ => true,
            };
            if ok && self.trace.vars.unifiable(&obj.ty, t) {
                options.push((Src::Pool(*id), obj.ty.clone()));
            }
        }
        if options.is_empty() {
            return None;
        }
        let (src, ty) = options.swap_remove(self.rng.gen_range(0..options.len()));
        self.trace.vars.unify(&ty, t);
        Some(src)
    }

    /// Open hot-potato outputs.
    fn open_hot(&self) -> Vec<(usize, usize, TypeTag)> {
        let pkg = self.pkg();
        self.trace.open_outputs(pkg).into_iter().filter(|(_, _, t)| pkg.is_hot_potato_type(t)).collect()
    }

    /// Adds consumers until no hot potato is left open.
    pub fn close(&mut self) -> bool {
        let snapshot = self.trace.clone();
        loop {
            let hot = self.open_hot();
            let Some((c, o, t)) = hot.into_iter().next() else { return true };
            let mut cons = self.consumers(&t, true);
            cons.shuffle(self.rng);
            let mut done = false;
            for (f, pos) in cons {
                if self.add_call(&f, Some((pos, Src::Result { call: c, output: o })), 0).is_some() {
                    done = true;
                    break;
                }
            }
            if !done {
                self.trace = snapshot;
                return false;
            }
        }
    }

    /// Adds a consumer of a random open non-literal value or of a pool
    /// object the trace borrows, then closes.
    pub fn extend_once(&mut self) -> bool {
        let pkg = self.pkg();
        let mut open: Vec<(Src, TypeTag)> = self
            .trace
            .open_outputs(pkg)
            .into_iter()
            .filter(|(_, _, t)| !is_literal_shape(t) && !pkg.is_hot_potato_type(t))
            .map(|(c, o, t)| (Src::Result { call: c, output: o }, t))
            .collect();
        let (by_value, mut by_ref) = self.trace.pool_uses(pkg);
        by_ref.sort_unstable();
        by_ref.dedup();
        for id in by_ref {
            if let Some(obj) = self.syn.pool.objects.get(&id).filter(|_| !by_value.contains(&id)) {
                open.push((Src::Pool(id), obj.ty.clone()));
            }
        }
        open.shuffle(self.rng);
        for (src, t) in open {
            let shared = matches!(src, Src::Pool(id) if self.syn.pool.objects[&id].owner == Owner::Shared);
            let mut cons = self.consumers(&t, false);
            cons.shuffle(self.rng);
            for (f, pos) in cons {
                if shared && self.syn.decl(&f).inputs[pos].mode == RefMode::ByValue {
                    continue;
                }
                let snapshot = self.trace.clone();
                if self.add_call(&f, Some((pos, src.clone())), 0).is_some() && self.close() {
                    return true;
                }
                self.trace = snapshot;
            }
        }
        false
    }

    /// Random continuation: each further step is taken with probability 1/2.
    pub fn walk(&mut self) {
        while self.trace.calls.len() < self.syn.cfg.max_calls && self.rng.gen_bool(0.5) {
            if !self.extend_once() {
                break;
            }
        }
    }
}

/// Bare type variables, or vectors of them, can be instantiated at
/// primitives and bound to literals.
fn literal_capable(t: &TypeTag) -> bool {
    match t {
        TypeTag::Param(_) => true,
        TypeTag::Vector(e) => matches!(**e, TypeTag::Param(_) | TypeTag::Prim(_)),
        _ => false,
    }
}

/// Walks the type graph from `start` to a closed trace whose type
/// variables may still be free.
pub fn construct_trace(syn: &Synthesizer, start: &FunctionRef, rng: &mut impl Rng) -> Result<GraphTrace, SynthError> {
    let mut b = Builder::new(syn, GraphTrace::default(), rng);
    if b.add_call(start, None, 0).is_none() || !b.close() {
        return Err(SynthError::Exhausted);
    }
    b.walk();
    Ok(b.trace)
}
