//! The contract language: datatypes with abilities, generic function
//! signatures, a small stack bytecode, and the type algebra over them.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use primitive_types::U256;
use thiserror::Error;

pub type Ident = Arc<str>;

pub fn ident(s: &str) -> Ident {
    Arc::from(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ability {
    Copy,
    Drop,
    Store,
    Key,
}

impl Ability {
    pub const ALL: [Ability; 4] = [Ability::Copy, Ability::Drop, Ability::Store, Ability::Key];

    pub fn name(self) -> &'static str {
        match self {
            Ability::Copy => "copy",
            Ability::Drop => "drop",
            Ability::Store => "store",
            Ability::Key => "key",
        }
    }

    pub fn from_name(s: &str) -> Option<Ability> {
        Ability::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AbilitySet(u8);

impl AbilitySet {
    pub const EMPTY: AbilitySet = AbilitySet(0);
    pub const PRIMITIVE: AbilitySet = AbilitySet(0b0111);

    pub fn with(self, a: Ability) -> Self {
        AbilitySet(self.0 | (1 << a as u8))
    }

    pub fn has(self, a: Ability) -> bool {
        self.0 & (1 << a as u8) != 0
    }

    pub fn intersect(self, other: AbilitySet) -> Self {
        AbilitySet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Ability> {
        Ability::ALL.into_iter().filter(move |a| self.has(*a))
    }
}

impl FromIterator<Ability> for AbilitySet {
    fn from_iter<I: IntoIterator<Item = Ability>>(iter: I) -> Self {
        iter.into_iter().fold(AbilitySet::EMPTY, AbilitySet::with)
    }
}

/// Primitive types. Integers carry their bit width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Prim {
    Bool,
    U8,
    U16,
    U32,
    U64,
    U128,
    U256,
}

impl Prim {
    pub const ALL: [Prim; 7] = [Prim::Bool, Prim::U8, Prim::U16, Prim::U32, Prim::U64, Prim::U128, Prim::U256];
    pub const INTS: [Prim; 6] = [Prim::U8, Prim::U16, Prim::U32, Prim::U64, Prim::U128, Prim::U256];

    pub fn name(self) -> &'static str {
        match self {
            Prim::Bool => "bool",
            Prim::U8 => "u8",
            Prim::U16 => "u16",
            Prim::U32 => "u32",
            Prim::U64 => "u64",
            Prim::U128 => "u128",
            Prim::U256 => "u256",
        }
    }

    pub fn from_name(s: &str) -> Option<Prim> {
        Prim::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn is_int(self) -> bool {
        self != Prim::Bool
    }

    /// Bit width; bool counts as one bit.
    pub fn bits(self) -> u32 {
        match self {
            Prim::Bool => 1,
            Prim::U8 => 8,
            Prim::U16 => 16,
            Prim::U32 => 32,
            Prim::U64 => 64,
            Prim::U128 => 128,
            Prim::U256 => 256,
        }
    }

    pub fn max_value(self) -> U256 {
        match self {
            Prim::U256 => U256::MAX,
            p => (U256::one() << p.bits()) - U256::one(),
        }
    }
}

impl fmt::Display for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualifiedName {
    pub module: Ident,
    pub name: Ident,
}

impl QualifiedName {
    pub fn new(module: &str, name: &str) -> Self {
        QualifiedName { module: ident(module), name: ident(name) }
    }
}

impl fmt::Display for QualifiedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.module, self.name)
    }
}

pub type DatatypeRef = QualifiedName;
pub type FunctionRef = QualifiedName;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeTag {
    Prim(Prim),
    Vector(Box<TypeTag>),
    Datatype(DatatypeRef, Vec<TypeTag>),
    Param(u16),
}

impl TypeTag {
    pub fn u64() -> TypeTag {
        TypeTag::Prim(Prim::U64)
    }

    pub fn vector(elem: TypeTag) -> TypeTag {
        TypeTag::Vector(Box::new(elem))
    }

    pub fn datatype(module: &str, name: &str, args: Vec<TypeTag>) -> TypeTag {
        TypeTag::Datatype(QualifiedName::new(module, name), args)
    }

    pub fn as_prim(&self) -> Option<Prim> {
        match self {
            TypeTag::Prim(p) => Some(*p),
            _ => None,
        }
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self, TypeTag::Prim(_))
    }

    /// Primitive, or vector of primitives (nested).
    pub fn is_literal_type(&self) -> bool {
        match self {
            TypeTag::Prim(_) => true,
            TypeTag::Vector(e) => e.is_literal_type(),
            _ => false,
        }
    }

    pub fn is_concrete(&self) -> bool {
        match self {
            TypeTag::Prim(_) => true,
            TypeTag::Vector(e) => e.is_concrete(),
            TypeTag::Datatype(_, args) => args.iter().all(TypeTag::is_concrete),
            TypeTag::Param(_) => false,
        }
    }

    pub fn max_param(&self) -> Option<u16> {
        match self {
            TypeTag::Prim(_) => None,
            TypeTag::Vector(e) => e.max_param(),
            TypeTag::Datatype(_, args) => args.iter().filter_map(TypeTag::max_param).max(),
            TypeTag::Param(i) => Some(*i),
        }
    }

    pub fn params(&self, out: &mut BTreeSet<u16>) {
        match self {
            TypeTag::Prim(_) => {}
            TypeTag::Vector(e) => e.params(out),
            TypeTag::Datatype(_, args) => args.iter().for_each(|a| a.params(out)),
            TypeTag::Param(i) => {
                out.insert(*i);
            }
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Prim(p) => write!(f, "{p}"),
            TypeTag::Vector(e) => write!(f, "vector<{e}>"),
            TypeTag::Datatype(r, args) => {
                write!(f, "{r}")?;
                write_type_args(f, args)
            }
            TypeTag::Param(i) => write!(f, "T{i}"),
        }
    }
}

pub fn write_type_args(f: &mut impl fmt::Write, args: &[TypeTag]) -> fmt::Result {
    if args.is_empty() {
        return Ok(());
    }
    f.write_char('<')?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_char(',')?;
        }
        write!(f, "{a}")?;
    }
    f.write_char('>')
}

pub fn type_args_string(args: &[TypeTag]) -> String {
    let mut s = String::new();
    write_type_args(&mut s, args).unwrap();
    s
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("type parameter T{index} out of range for {len} type arguments")]
    ParamIndex { index: u16, len: usize },
    #[error("{function} expects {expected} type arguments, got {actual}")]
    Arity { function: String, expected: usize, actual: usize },
    #[error("type argument {0} is not concrete")]
    NotConcrete(TypeTag),
}

/// Replaces each `Param(i)` in `tag` by `args[i]`.
pub fn substitute(tag: &TypeTag, args: &[TypeTag]) -> Result<TypeTag, TypeError> {
    Ok(match tag {
        TypeTag::Prim(p) => TypeTag::Prim(*p),
        TypeTag::Vector(e) => TypeTag::Vector(Box::new(substitute(e, args)?)),
        TypeTag::Datatype(r, targs) => TypeTag::Datatype(
            r.clone(),
            targs.iter().map(|t| substitute(t, args)).collect::<Result<_, _>>()?,
        ),
        TypeTag::Param(i) => args
            .get(*i as usize)
            .cloned()
            .ok_or(TypeError::ParamIndex { index: *i, len: args.len() })?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatatypeDecl {
    pub name: Ident,
    pub type_params: Vec<Ident>,
    pub abilities: AbilitySet,
    pub fields: Vec<(Ident, TypeTag)>,
}

impl DatatypeDecl {
    pub fn arity(&self) -> usize {
        self.type_params.len()
    }
}

/// A datatype is a hot potato when it can neither be dropped nor stored.
pub fn is_hot_potato(decl: &DatatypeDecl) -> bool {
    !decl.abilities.has(Ability::Drop) && !decl.abilities.has(Ability::Store)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RefMode {
    ByValue,
    ByRef,
    ByMutRef,
}

impl RefMode {
    pub fn is_ref(self) -> bool {
        self != RefMode::ByValue
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: Ident,
    pub ty: TypeTag,
    pub mode: RefMode,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Literal {
    Bool(bool),
    Int(U256),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    LdConst(Prim, Literal),
    LdParam(u16),
    CopyLocal(u16),
    MoveLocal(u16),
    StoreLocal(u16),
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Shl,
    Shr,
    BitAnd,
    BitOr,
    BitXor,
    Not,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    Cast(Prim),
    Branch(u32),
    BrTrue(u32),
    BrFalse(u32),
    Abort(u64),
    Call(FunctionRef, Vec<TypeTag>),
    Pack(DatatypeRef, Vec<TypeTag>),
    Unpack(DatatypeRef, Vec<TypeTag>),
    VecNew(TypeTag),
    VecPush,
    VecPop,
    VecLen,
    VecBorrow,
    EmitEvent(u64),
    Ret,
}

impl Instruction {
    pub fn branch_target(&self) -> Option<u32> {
        match self {
            Instruction::Branch(t) | Instruction::BrTrue(t) | Instruction::BrFalse(t) => Some(*t),
            _ => None,
        }
    }

    pub fn is_conditional_branch(&self) -> bool {
        matches!(self, Instruction::BrTrue(_) | Instruction::BrFalse(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Bytecode(Vec<Instruction>),
    Native,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: Ident,
    pub visibility: Visibility,
    pub type_params: Vec<Ident>,
    pub inputs: Vec<Param>,
    pub outputs: Vec<TypeTag>,
    /// Declared locals, numbered after the parameters.
    pub locals: Vec<(Ident, TypeTag)>,
    pub body: Body,
}

impl FunctionDecl {
    pub fn arity(&self) -> usize {
        self.type_params.len()
    }

    pub fn is_public(&self) -> bool {
        self.visibility == Visibility::Public
    }

    pub fn instructions(&self) -> &[Instruction] {
        match &self.body {
            Body::Bytecode(b) => b,
            Body::Native => &[],
        }
    }

    /// Type of the local slot `i` (parameters first).
    pub fn slot_type(&self, i: usize) -> Option<&TypeTag> {
        if i < self.inputs.len() {
            Some(&self.inputs[i].ty)
        } else {
            self.locals.get(i - self.inputs.len()).map(|(_, t)| t)
        }
    }

    pub fn slot_count(&self) -> usize {
        self.inputs.len() + self.locals.len()
    }
}

/// Instantiated input and output types of `f`.
pub fn signature_of(f: &FunctionDecl, type_args: &[TypeTag]) -> Result<(Vec<TypeTag>, Vec<TypeTag>), TypeError> {
    if type_args.len() != f.arity() {
        return Err(TypeError::Arity {
            function: f.name.to_string(),
            expected: f.arity(),
            actual: type_args.len(),
        });
    }
    if let Some(t) = type_args.iter().find(|t| !t.is_concrete()) {
        return Err(TypeError::NotConcrete(t.clone()));
    }
    let inputs = f.inputs.iter().map(|p| substitute(&p.ty, type_args)).collect::<Result<_, _>>()?;
    let outputs = f.outputs.iter().map(|t| substitute(t, type_args)).collect::<Result<_, _>>()?;
    Ok((inputs, outputs))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Module {
    pub name: Ident,
    pub datatypes: Vec<DatatypeDecl>,
    pub functions: Vec<FunctionDecl>,
}

impl Module {
    pub fn datatype(&self, name: &str) -> Option<&DatatypeDecl> {
        self.datatypes.iter().find(|d| &*d.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| &*f.name == name)
    }

    /// The module initializer, a private function named `init`.
    pub fn init(&self) -> Option<&FunctionDecl> {
        self.function("init").filter(|f| !f.is_public())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Package {
    pub name: Ident,
    pub modules: Vec<Module>,
    pub deps: Vec<Arc<Package>>,
}

impl Package {
    /// All modules, dependencies first.
    pub fn all_modules(&self) -> Vec<&Module> {
        let mut out = Vec::new();
        for d in &self.deps {
            out.extend(d.all_modules());
        }
        out.extend(self.modules.iter());
        out
    }

    pub fn module(&self, name: &str) -> Option<&Module> {
        self.modules
            .iter()
            .find(|m| &*m.name == name)
            .or_else(|| self.deps.iter().find_map(|d| d.module(name)))
    }

    pub fn datatype(&self, r: &DatatypeRef) -> Option<&DatatypeDecl> {
        self.module(&r.module)?.datatype(&r.name)
    }

    pub fn function(&self, r: &FunctionRef) -> Option<&FunctionDecl> {
        self.module(&r.module)?.function(&r.name)
    }

    /// Abilities of a concrete or generic type. Datatype type parameters are
    /// treated as phantom, so an instantiation keeps its declared abilities.
    pub fn abilities_of(&self, t: &TypeTag) -> AbilitySet {
        match t {
            TypeTag::Prim(_) => AbilitySet::PRIMITIVE,
            TypeTag::Vector(e) => self.abilities_of(e).intersect(AbilitySet::PRIMITIVE),
            TypeTag::Datatype(r, _) => self.datatype(r).map(|d| d.abilities).unwrap_or(AbilitySet::EMPTY),
            TypeTag::Param(_) => AbilitySet::EMPTY,
        }
    }

    pub fn is_hot_potato_type(&self, t: &TypeTag) -> bool {
        let a = self.abilities_of(t);
        !matches!(t, TypeTag::Param(_)) && !a.has(Ability::Drop) && !a.has(Ability::Store)
    }

    pub fn is_copyable(&self, t: &TypeTag) -> bool {
        self.abilities_of(t).has(Ability::Copy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn receipt(abilities: AbilitySet) -> DatatypeDecl {
        DatatypeDecl {
            name: ident("Receipt"),
            type_params: vec![ident("T")],
            abilities,
            fields: vec![(ident("amount"), TypeTag::u64())],
        }
    }

    #[test]
    fn substitute_receipt_instantiation() {
        let tag = TypeTag::datatype("pool", "Receipt", vec![TypeTag::Param(0)]);
        let got = substitute(&tag, &[TypeTag::Prim(Prim::U32)]).unwrap();
        assert_eq!(got, TypeTag::datatype("pool", "Receipt", vec![TypeTag::Prim(Prim::U32)]));
    }

    #[test]
    fn substitute_without_params_is_identity() {
        assert_eq!(substitute(&TypeTag::u64(), &[TypeTag::Prim(Prim::Bool)]).unwrap(), TypeTag::u64());
    }

    #[test]
    fn substitute_recurses_through_vectors() {
        // vector<T0>[T0 := vector<u8>], expanded by hand
        let expected = TypeTag::Vector(Box::new(TypeTag::Vector(Box::new(TypeTag::Prim(Prim::U8)))));
        let got = substitute(&TypeTag::vector(TypeTag::Param(0)), &[TypeTag::vector(TypeTag::Prim(Prim::U8))]);
        assert_eq!(got.unwrap(), expected);
    }

    #[test]
    fn substitute_rejects_out_of_range() {
        assert_eq!(
            substitute(&TypeTag::Param(2), &[TypeTag::u64()]),
            Err(TypeError::ParamIndex { index: 2, len: 1 })
        );
    }

    #[test]
    fn hot_potato_classification() {
        assert!(is_hot_potato(&receipt(AbilitySet::EMPTY)));
        let able: AbilitySet = [Ability::Drop, Ability::Store].into_iter().collect();
        assert!(!is_hot_potato(&receipt(able)));
        assert!(!is_hot_potato(&receipt(AbilitySet::EMPTY.with(Ability::Store))));
        assert!(is_hot_potato(&receipt(AbilitySet::EMPTY.with(Ability::Key))));
    }

    fn loan() -> FunctionDecl {
        FunctionDecl {
            name: ident("loan"),
            visibility: Visibility::Public,
            type_params: vec![ident("T")],
            inputs: vec![Param { name: ident("amount"), ty: TypeTag::u64(), mode: RefMode::ByValue }],
            outputs: vec![
                TypeTag::datatype("coin", "Coin", vec![TypeTag::Param(0)]),
                TypeTag::datatype("pool", "Receipt", vec![TypeTag::Param(0)]),
            ],
            locals: vec![],
            body: Body::Native,
        }
    }

    #[test]
    fn signature_of_instantiates() {
        let usdc = TypeTag::datatype("pool", "USDC", vec![]);
        let (ins, outs) = signature_of(&loan(), &[usdc.clone()]).unwrap();
        assert_eq!(ins, vec![TypeTag::u64()]);
        assert_eq!(
            outs,
            vec![
                TypeTag::datatype("coin", "Coin", vec![usdc.clone()]),
                TypeTag::datatype("pool", "Receipt", vec![usdc]),
            ]
        );
    }

    #[test]
    fn signature_of_checks_arity() {
        let err = signature_of(&loan(), &[TypeTag::Prim(Prim::U8), TypeTag::Prim(Prim::U8)]).unwrap_err();
        assert!(matches!(err, TypeError::Arity { expected: 1, actual: 2, .. }));
        let mut f = loan();
        f.type_params.clear();
        f.outputs.clear();
        let (ins, outs) = signature_of(&f, &[]).unwrap();
        assert_eq!((ins.len(), outs.len()), (1, 0));
    }
}
