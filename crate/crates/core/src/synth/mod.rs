//! Transaction synthesis guided by the type graph: graph traces, type
//! substitution, instantiation, and structure-preserving mutation.

mod build;
mod havoc;
mod instantiate;
mod mutate;
pub mod unify;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::model::*;
use crate::txn::ArgBinding;
use crate::typegraph::TypeGraph;
use crate::vm::state::WorldState;

pub use build::construct_trace;
pub use havoc::{havoc_generate, havoc_mutate};
pub use instantiate::{instantiate, linearize, sample_literal, substitute_trace_types};
pub use mutate::{extend_trace, insert_call, mutate_literal, mutate_values, remove_call};
pub use unify::Unifier;

/// Default bound on calls per trace.
pub const MAX_CALLS: usize = 16;
/// Type assignments tried per trace before giving up.
pub const MAX_ASSIGNMENTS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Src {
    /// A primitive or vector-of-primitives literal, drawn at instantiation.
    Literal(Option<ArgBinding>),
    Result { call: usize, output: usize },
    Pool(u64),
}

/// One function occurrence of a trace. Type arguments are terms over the
/// trace's unification variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceCall {
    pub function: FunctionRef,
    pub type_args: Vec<TypeTag>,
    pub inputs: Vec<Src>,
}

/// A closed walk over the type graph: function occurrences in insertion
/// order, wired by result references, pool objects, and literals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphTrace {
    pub calls: Vec<TraceCall>,
    pub vars: Unifier,
}

/// Originating trace of a transaction; `order[k]` is the trace index of
/// transaction call `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceMeta {
    pub trace: GraphTrace,
    pub order: Vec<usize>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("no closed trace within the call limit")]
    Exhausted,
    #[error("no type assignment satisfies the trace")]
    NoAssignment,
    #[error("pool object @{0} is missing")]
    PoolMiss(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub max_calls: usize,
    /// When false, generic functions are never called.
    pub type_params: bool,
    /// Calls to a key are emitted as calls to its value.
    pub rename: BTreeMap<FunctionRef, FunctionRef>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { max_calls: MAX_CALLS, type_params: true, rename: BTreeMap::new() }
    }
}

/// Shared, read-only generation context.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    pub graph: Arc<TypeGraph>,
    pub pool: Arc<WorldState>,
    pub candidates: Vec<TypeTag>,
    pub cfg: SynthConfig,
    /// Public package functions allowed by the configuration.
    pub functions: Vec<FunctionRef>,
    pub starts: Vec<FunctionRef>,
}

/// Candidate concrete types: primitives, droppable or storable datatypes
/// without parameters, and type arguments of pool objects.
pub fn candidate_types(pkg: &Package, pool: &WorldState) -> Vec<TypeTag> {
    let mut out: Vec<TypeTag> = Prim::ALL.iter().map(|p| TypeTag::Prim(*p)).collect();
    for m in pkg.all_modules() {
        for d in &m.datatypes {
            if d.arity() == 0 && !is_hot_potato(d) {
                out.push(TypeTag::Datatype(QualifiedName { module: m.name.clone(), name: d.name.clone() }, vec![]));
            }
        }
    }
    for o in pool.objects.values() {
        if let TypeTag::Datatype(_, args) = &o.ty {
            for a in args {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
        }
    }
    out
}

impl Synthesizer {
    pub fn new(graph: Arc<TypeGraph>, pool: Arc<WorldState>, cfg: SynthConfig) -> Self {
        let candidates = candidate_types(&graph.package, &pool);
        let functions: Vec<FunctionRef> = graph
            .function_nodes()
            .filter(|(_, f)| cfg.type_params || graph.function_decl(f).arity() == 0)
            .map(|(_, f)| f.clone())
            .collect();
        let starts = graph
            .start_functions(&pool.object_types())
            .into_iter()
            .filter_map(|n| match &graph.nodes[n] {
                crate::typegraph::NodeKind::Function(f) if functions.contains(f) => Some(f.clone()),
                _ => None,
            })
            .collect();
        Synthesizer { graph, pool, candidates, cfg, functions, starts }
    }

    pub fn package(&self) -> &Package {
        &self.graph.package
    }

    pub fn decl(&self, f: &FunctionRef) -> &FunctionDecl {
        self.graph.function_decl(f)
    }

    /// A fresh transaction from a closed trace starting at `start`.
    pub fn generate(&self, start: &FunctionRef, rng: &mut impl rand::Rng) -> Result<crate::txn::Transaction, SynthError> {
        let mut trace = construct_trace(self, start, rng)?;
        substitute_trace_types(&mut trace, &self.candidates, self.package(), rng)?;
        instantiate(self, trace, rng)
    }
}

impl GraphTrace {
    pub fn input_term(&self, pkg: &Package, call: usize, pos: usize) -> TypeTag {
        let c = &self.calls[call];
        let f = pkg.function(&c.function).expect("trace function exists");
        self.vars.resolve(&substitute(&f.inputs[pos].ty, &c.type_args).expect("arity matches"))
    }

    pub fn output_term(&self, pkg: &Package, call: usize, out: usize) -> TypeTag {
        let c = &self.calls[call];
        let f = pkg.function(&c.function).expect("trace function exists");
        self.vars.resolve(&substitute(&f.outputs[out], &c.type_args).expect("arity matches"))
    }

    /// Uses of each output: (user call, input position, mode).
    pub fn uses(&self, pkg: &Package) -> BTreeMap<(usize, usize), Vec<(usize, usize, RefMode)>> {
        let mut out: BTreeMap<(usize, usize), Vec<(usize, usize, RefMode)>> = BTreeMap::new();
        for (i, c) in self.calls.iter().enumerate() {
            let f = pkg.function(&c.function).expect("trace function exists");
            for (pos, s) in c.inputs.iter().enumerate() {
                if let Src::Result { call, output } = s {
                    out.entry((*call, *output)).or_default().push((i, pos, f.inputs[pos].mode));
                }
            }
        }
        out
    }

    /// Outputs not yet moved by a by-value use.
    pub fn open_outputs(&self, pkg: &Package) -> Vec<(usize, usize, TypeTag)> {
        let uses = self.uses(pkg);
        let mut out = Vec::new();
        for (i, c) in self.calls.iter().enumerate() {
            let f = pkg.function(&c.function).expect("trace function exists");
            for o in 0..f.outputs.len() {
                let t = self.output_term(pkg, i, o);
                let moved = !pkg.is_copyable(&t)
                    && uses.get(&(i, o)).is_some_and(|us| us.iter().any(|u| u.2 == RefMode::ByValue));
                if !moved {
                    out.push((i, o, t));
                }
            }
        }
        out
    }

    /// Pool objects used by value, and by reference.
    pub fn pool_uses(&self, pkg: &Package) -> (Vec<u64>, Vec<u64>) {
        let mut by_value = Vec::new();
        let mut by_ref = Vec::new();
        for c in &self.calls {
            let f = pkg.function(&c.function).expect("trace function exists");
            for (pos, s) in c.inputs.iter().enumerate() {
                if let Src::Pool(id) = s {
                    if f.inputs[pos].mode == RefMode::ByValue {
                        by_value.push(*id);
                    } else {
                        by_ref.push(*id);
                    }
                }
            }
        }
        (by_value, by_ref)
    }
}

impl TraceMeta {
    /// The trace with literal values taken from `txn`, which may have been
    /// changed by value mutation or concolic solving since generation.
    pub fn synced_trace(&self, txn: &crate::txn::Transaction) -> GraphTrace {
        let mut t = self.trace.clone();
        for (k, &ti) in self.order.iter().enumerate() {
            let Some(call) = txn.calls.get(k) else { break };
            for (pos, s) in t.calls[ti].inputs.iter_mut().enumerate() {
                if let Src::Literal(v) = s {
                    if let Some(a) = call.args.get(pos) {
                        *v = Some(a.clone());
                    }
                }
            }
        }
        t
    }
}

/// Literal-shaped types: primitives and vectors of primitives.
pub(crate) fn is_literal_shape(t: &TypeTag) -> bool {
    match t {
        TypeTag::Prim(_) => true,
        TypeTag::Vector(e) => matches!(**e, TypeTag::Prim(_)),
        _ => false,
    }
}
