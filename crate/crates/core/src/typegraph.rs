//! The type graph: type-pattern nodes and public-function nodes joined by
//! input and output edges that carry type-parameter substitutions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::model::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    DefaultType(TypeTag),
    HotPotatoType(TypeTag),
    Function(FunctionRef),
}

impl NodeKind {
    pub fn pattern(&self) -> Option<&TypeTag> {
        match self {
            NodeKind::DefaultType(p) | NodeKind::HotPotatoType(p) => Some(p),
            NodeKind::Function(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// type node -> function node
    Input,
    /// function node -> type node
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub direction: Direction,
    /// Placeholder `Param(k)` of the type pattern maps to `annotation[k]`,
    /// written in terms of the function's own type parameters.
    pub annotation: Option<Vec<TypeTag>>,
    /// Signature positions sharing this exact declared type.
    pub positions: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("type {0} matches no node of the type graph")]
    UnknownType(TypeTag),
}

/// Canonical pattern of a declared type plus the arguments its
/// placeholders stand for. Datatype arguments are erased to placeholders
/// and so is a bare type parameter.
pub fn pattern_of(t: &TypeTag) -> (TypeTag, Vec<TypeTag>) {
    fn go(t: &TypeTag, holes: &mut Vec<TypeTag>) -> TypeTag {
        let hole = |a: &TypeTag, holes: &mut Vec<TypeTag>| {
            holes.push(a.clone());
            TypeTag::Param(holes.len() as u16 - 1)
        };
        match t {
            TypeTag::Prim(_) => t.clone(),
            TypeTag::Vector(e) => TypeTag::vector(go(e, holes)),
            TypeTag::Datatype(r, args) => TypeTag::Datatype(r.clone(), args.iter().map(|a| hole(a, holes)).collect()),
            TypeTag::Param(_) => hole(t, holes),
        }
    }
    let mut holes = Vec::new();
    let p = go(t, &mut holes);
    (p, holes)
}

/// One-way match of a declared type (function parameters free) against a
/// concrete type, extending `map`.
pub fn match_declared(decl: &TypeTag, concrete: &TypeTag, map: &mut [Option<TypeTag>]) -> bool {
    match (decl, concrete) {
        (TypeTag::Param(i), c) => match &map[*i as usize] {
            Some(bound) => bound == c,
            None => {
                map[*i as usize] = Some(c.clone());
                true
            }
        },
        (TypeTag::Prim(a), TypeTag::Prim(b)) => a == b,
        (TypeTag::Vector(a), TypeTag::Vector(b)) => match_declared(a, b, map),
        (TypeTag::Datatype(r1, a1), TypeTag::Datatype(r2, a2)) => {
            r1 == r2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| match_declared(x, y, map))
        }
        _ => false,
    }
}

/// A function able to produce or consume a queried type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Usage {
    pub function: FunctionRef,
    pub node: usize,
    pub position: usize,
    /// Bindings of the function's type parameters implied by the match.
    pub mapping: Vec<Option<TypeTag>>,
}

#[derive(Clone, Debug)]
pub struct TypeGraph {
    pub package: Arc<Package>,
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<Edge>,
    type_index: HashMap<TypeTag, usize>,
    fn_index: HashMap<FunctionRef, usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl TypeGraph {
    fn type_node(&mut self, pattern: TypeTag) -> usize {
        if let Some(&i) = self.type_index.get(&pattern) {
            return i;
        }
        let hot = match &pattern {
            TypeTag::Datatype(r, _) => self.package.datatype(r).is_some_and(is_hot_potato),
            _ => false,
        };
        let kind = if hot { NodeKind::HotPotatoType(pattern.clone()) } else { NodeKind::DefaultType(pattern.clone()) };
        self.push_node(kind);
        let i = self.nodes.len() - 1;
        self.type_index.insert(pattern, i);
        i
    }

    fn push_node(&mut self, kind: NodeKind) {
        self.nodes.push(kind);
        self.incoming.push(Vec::new());
        self.outgoing.push(Vec::new());
    }

    fn add_edges(&mut self, f: usize, types: &[TypeTag], direction: Direction) {
        let mut grouped: Vec<(TypeTag, Vec<usize>)> = Vec::new();
        for (pos, t) in types.iter().enumerate() {
            match grouped.iter_mut().find(|(g, _)| g == t) {
                Some((_, ps)) => ps.push(pos),
                None => grouped.push((t.clone(), vec![pos])),
            }
        }
        for (t, positions) in grouped {
            let (pattern, args) = pattern_of(&t);
            let node = self.type_node(pattern);
            let annotation = if args.is_empty() { None } else { Some(args) };
            let (from, to) = match direction {
                Direction::Input => (node, f),
                Direction::Output => (f, node),
            };
            self.edges.push(Edge { from, to, direction, annotation, positions });
            let e = self.edges.len() - 1;
            self.outgoing[from].push(e);
            self.incoming[to].push(e);
        }
    }

    pub fn node_of_type_pattern(&self, pattern: &TypeTag) -> Option<usize> {
        self.type_index.get(pattern).copied()
    }

    pub fn node_of_function(&self, f: &FunctionRef) -> Option<usize> {
        self.fn_index.get(f).copied()
    }

    pub fn function_nodes(&self) -> impl Iterator<Item = (usize, &FunctionRef)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            NodeKind::Function(f) => Some((i, f)),
            _ => None,
        })
    }

    pub fn function_decl(&self, f: &FunctionRef) -> &FunctionDecl {
        self.package.function(f).expect("function node refers to a package function")
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.incoming[node].iter().map(|&e| &self.edges[e])
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.outgoing[node].iter().map(|&e| &self.edges[e])
    }

    /// Type nodes whose pattern matches the concrete type `t`.
    pub fn matching_nodes(&self, t: &TypeTag) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.pattern() {
                let holes = p.max_param().map_or(0, |m| m as usize + 1);
                if match_declared(p, t, &mut vec![None; holes]) {
                    out.push(i);
                }
            }
        }
        out
    }

    fn usages(&self, t: &TypeTag, producers: bool) -> Result<Vec<Usage>, GraphError> {
        let nodes = self.matching_nodes(t);
        if nodes.is_empty() {
            return Err(GraphError::UnknownType(t.clone()));
        }
        let mut out = Vec::new();
        for node in nodes {
            let edges: Vec<&Edge> = if producers { self.incoming(node).collect() } else { self.outgoing(node).collect() };
            for e in edges {
                let fnode = if producers { e.from } else { e.to };
                let NodeKind::Function(fr) = &self.nodes[fnode] else { continue };
                let f = self.function_decl(fr);
                for &pos in &e.positions {
                    let decl = if producers { &f.outputs[pos] } else { &f.inputs[pos].ty };
                    let mut mapping = vec![None; f.arity()];
                    if match_declared(decl, t, &mut mapping) {
                        out.push(Usage { function: fr.clone(), node: fnode, position: pos, mapping });
                    }
                }
            }
        }
        out.sort_by_key(|u| (u.node, u.position));
        Ok(out)
    }

    /// Functions with an output unifying with `t`.
    pub fn producers_of(&self, t: &TypeTag) -> Result<Vec<Usage>, GraphError> {
        self.usages(t, true)
    }

    /// Functions with an input unifying with `t`.
    pub fn consumers_of(&self, t: &TypeTag) -> Result<Vec<Usage>, GraphError> {
        self.usages(t, false)
    }

    /// Function nodes callable with literals and the given pool object types only.
    pub fn start_functions(&self, pool_types: &[TypeTag]) -> Vec<usize> {
        self.function_nodes()
            .filter(|(_, fr)| {
                let f = self.function_decl(fr);
                let mut mapping = vec![None; f.arity()];
                f.inputs.iter().all(|p| {
                    if is_literal_pattern(&p.ty) {
                        return true;
                    }
                    pool_types.iter().any(|pt| {
                        let mut trial = mapping.clone();
                        let ok = match_declared(&p.ty, pt, &mut trial);
                        if ok {
                            mapping = trial;
                        }
                        ok
                    })
                })
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn label(&self, node: usize) -> String {
        match &self.nodes[node] {
            NodeKind::Function(f) => f.to_string(),
            NodeKind::DefaultType(p) | NodeKind::HotPotatoType(p) => p.to_string(),
        }
    }

    /// Graphviz rendering; hot potatoes are double circles, functions boxes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph typegraph {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = match n {
                NodeKind::DefaultType(_) => "circle",
                NodeKind::HotPotatoType(_) => "doublecircle",
                NodeKind::Function(_) => "box",
            };
            let kind = match n {
                NodeKind::DefaultType(_) => "default",
                NodeKind::HotPotatoType(_) => "hot potato",
                NodeKind::Function(_) => "function",
            };
            writeln!(out, "  n{i} [label=\"{}\\n({kind})\" shape={shape}];", self.label(i)).unwrap();
        }
        for e in &self.edges {
            let mut attrs = Vec::new();
            if let Some(a) = &e.annotation {
                let subst: Vec<String> = a.iter().enumerate().map(|(k, t)| format!("T{k}->{t}")).collect();
                attrs.push(format!("label=\"{}\"", subst.join(", ")));
            }
            if e.direction == Direction::Input {
                attrs.push("style=solid".into());
            } else {
                attrs.push("style=bold".into());
            }
            writeln!(out, "  n{} -> n{} [{}];", e.from, e.to, attrs.join(" ")).unwrap();
        }
        out.push_str("}\n");
        out
    }
}

/// Primitive, vector of literals, or a bare type parameter (instantiable
/// at a primitive).
fn is_literal_pattern(t: &TypeTag) -> bool {
    match t {
        TypeTag::Prim(_) => true,
        TypeTag::Vector(e) => is_literal_pattern(e),
        TypeTag::Param(_) => true,
        TypeTag::Datatype(..) => false,
    }
}

/// Builds the graph over the public functions of the package's own modules.
/// Datatypes from dependencies become type nodes.
pub fn build_type_graph(pkg: Arc<Package>) -> TypeGraph {
    let mut g = TypeGraph {
        package: pkg.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        type_index: HashMap::new(),
        fn_index: HashMap::new(),
        incoming: Vec::new(),
        outgoing: Vec::new(),
    };
    for p in Prim::ALL {
        g.type_node(TypeTag::Prim(p));
    }
    for m in pkg.all_modules() {
        for d in &m.datatypes {
            let r = QualifiedName { module: m.name.clone(), name: d.name.clone() };
            let args = (0..d.arity() as u16).map(TypeTag::Param).collect();
            g.type_node(TypeTag::Datatype(r, args));
        }
    }
    for m in &pkg.modules {
        for f in m.functions.iter().filter(|f| f.is_public()) {
            let r = QualifiedName { module: m.name.clone(), name: f.name.clone() };
            g.push_node(NodeKind::Function(r.clone()));
            let node = g.nodes.len() - 1;
            g.fn_index.insert(r, node);
            let inputs: Vec<TypeTag> = f.inputs.iter().map(|p| p.ty.clone()).collect();
            g.add_edges(node, &inputs, Direction::Input);
            g.add_edges(node, &f.outputs, Direction::Output);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_package;

    const FIG1: &str = "module pool
datatype Receipt<T>
  field amount: u64
end
public fn loan<T>(amount: u64) -> (Coin<T>, Receipt<T>)
  ld_param amount
  call coin::mint<T>
  ld_param amount
  pack Receipt<T>
  ret
end
public fn repay<T>(coin: Coin<T>, receipt: Receipt<T>)
  ld_param coin
  call coin::coin_value<T>
  ld_param receipt
  unpack Receipt<T>
  eq
  br_true ok
  abort 1
ok:
  ld_param coin
  call coin::burn<T>
  ret
end
";

    fn coin(t: TypeTag) -> TypeTag {
        TypeTag::datatype("coin", "Coin", vec![t])
    }

    #[test]
    fn pattern_annotation_rebuilds_declared_type() {
        let decl = coin(TypeTag::Param(3));
        let (p, a) = pattern_of(&decl);
        assert_eq!(p, coin(TypeTag::Param(0)));
        assert_eq!(substitute(&p, &a).unwrap(), decl);
    }

    #[test]
    fn fig1_graph_shape() {
        let g = build_type_graph(Arc::new(parse_package(FIG1).unwrap()));
        let receipt = TypeTag::datatype("pool", "Receipt", vec![TypeTag::Param(0)]);
        let r = g.node_of_type_pattern(&receipt).unwrap();
        assert!(matches!(g.nodes[r], NodeKind::HotPotatoType(_)));
        let loan = g.node_of_function(&QualifiedName::new("pool", "loan")).unwrap();
        assert_eq!(g.outgoing(loan).count(), 2);
        assert_eq!(g.incoming(loan).count(), 1);
        let usdc = TypeTag::Prim(Prim::U8);
        let prods = g.producers_of(&TypeTag::datatype("pool", "Receipt", vec![usdc.clone()])).unwrap();
        assert_eq!(prods.len(), 1);
        assert_eq!(prods[0].mapping, vec![Some(usdc)]);
        assert!(g.producers_of(&TypeTag::Prim(Prim::Bool)).unwrap().is_empty());
        assert!(g.consumers_of(&TypeTag::vector(TypeTag::Prim(Prim::U8))).is_err());
        assert_eq!(g.start_functions(&[]), vec![loan]);
        assert!(g.to_dot().contains("doublecircle"));
    }
}
