//! Bytecode verifier: well-formed declarations and a stack type check of
//! every function body by abstract interpretation.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::*;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{function} at pc {pc}: {msg}")]
pub struct VerifyError {
    pub function: String,
    pub pc: usize,
    pub msg: String,
}

struct Ctx<'a> {
    pkg: &'a Package,
    module: &'a Module,
    func: &'a FunctionDecl,
    pc: usize,
}

impl Ctx<'_> {
    fn err(&self, msg: impl Into<String>) -> VerifyError {
        VerifyError { function: format!("{}::{}", self.module.name, self.func.name), pc: self.pc, msg: msg.into() }
    }
}

/// Checks a type mentions only known datatypes with matching arity and
/// type parameters below `n_params`.
pub fn check_type(pkg: &Package, t: &TypeTag, n_params: usize) -> Result<(), String> {
    match t {
        TypeTag::Prim(_) => Ok(()),
        TypeTag::Vector(e) => check_type(pkg, e, n_params),
        TypeTag::Param(i) if (*i as usize) < n_params => Ok(()),
        TypeTag::Param(i) => Err(format!("type parameter T{i} out of range")),
        TypeTag::Datatype(r, args) => {
            let d = pkg.datatype(r).ok_or_else(|| format!("unknown datatype {r}"))?;
            if d.arity() != args.len() {
                return Err(format!("{r} expects {} type arguments, got {}", d.arity(), args.len()));
            }
            args.iter().try_for_each(|a| check_type(pkg, a, n_params))
        }
    }
}

fn pop(ctx: &Ctx, stack: &mut Vec<TypeTag>) -> Result<TypeTag, VerifyError> {
    stack.pop().ok_or_else(|| ctx.err("stack underflow"))
}

fn pop_int(ctx: &Ctx, stack: &mut Vec<TypeTag>) -> Result<Prim, VerifyError> {
    match pop(ctx, stack)? {
        TypeTag::Prim(p) if p.is_int() => Ok(p),
        t => Err(ctx.err(format!("expected integer, found {t}"))),
    }
}

fn expect(ctx: &Ctx, stack: &mut Vec<TypeTag>, want: &TypeTag) -> Result<(), VerifyError> {
    let got = pop(ctx, stack)?;
    if &got != want {
        return Err(ctx.err(format!("expected {want}, found {got}")));
    }
    Ok(())
}

/// Applies one instruction to the abstract stack. Returns the successor
/// program counters.
fn step(ctx: &Ctx, ins: &Instruction, stack: &mut Vec<TypeTag>) -> Result<Vec<usize>, VerifyError> {
    use Instruction::*;
    let f = ctx.func;
    let n_params = f.arity();
    let next = vec![ctx.pc + 1];
    match ins {
        LdConst(p, lit) => {
            match (p, lit) {
                (Prim::Bool, Literal::Bool(_)) => {}
                (p, Literal::Int(v)) if p.is_int() && *v <= p.max_value() => {}
                _ => return Err(ctx.err(format!("constant {lit} is not a valid {p}"))),
            }
            stack.push(TypeTag::Prim(*p));
        }
        LdParam(i) => {
            let p = f.inputs.get(*i as usize).ok_or_else(|| ctx.err("parameter index out of range"))?;
            stack.push(p.ty.clone());
        }
        CopyLocal(i) | MoveLocal(i) => {
            let t = f.slot_type(*i as usize).ok_or_else(|| ctx.err("local index out of range"))?;
            stack.push(t.clone());
        }
        StoreLocal(i) => {
            let t = f.slot_type(*i as usize).ok_or_else(|| ctx.err("local index out of range"))?.clone();
            expect(ctx, stack, &t)?;
        }
        Add | Sub | Mul | Div | Mod | BitAnd | BitOr | BitXor => {
            let b = pop_int(ctx, stack)?;
            let a = pop_int(ctx, stack)?;
            if a != b {
                return Err(ctx.err(format!("operand mismatch: {a} and {b}")));
            }
            stack.push(TypeTag::Prim(a));
        }
        Shl | Shr => {
            let b = pop_int(ctx, stack)?;
            if b != Prim::U8 {
                return Err(ctx.err(format!("shift amount must be u8, found {b}")));
            }
            let a = pop_int(ctx, stack)?;
            stack.push(TypeTag::Prim(a));
        }
        Not => {
            expect(ctx, stack, &TypeTag::Prim(Prim::Bool))?;
            stack.push(TypeTag::Prim(Prim::Bool));
        }
        Eq | Neq => {
            let b = pop(ctx, stack)?;
            let a = pop(ctx, stack)?;
            if a != b {
                return Err(ctx.err(format!("cannot compare {a} with {b}")));
            }
            stack.push(TypeTag::Prim(Prim::Bool));
        }
        Lt | Le | Gt | Ge => {
            let b = pop_int(ctx, stack)?;
            let a = pop_int(ctx, stack)?;
            if a != b {
                return Err(ctx.err(format!("operand mismatch: {a} and {b}")));
            }
            stack.push(TypeTag::Prim(Prim::Bool));
        }
        Cast(p) => {
            if !p.is_int() {
                return Err(ctx.err("cast target must be an integer type"));
            }
            pop_int(ctx, stack)?;
            stack.push(TypeTag::Prim(*p));
        }
        Branch(t) => return Ok(vec![*t as usize]),
        BrTrue(t) | BrFalse(t) => {
            expect(ctx, stack, &TypeTag::Prim(Prim::Bool))?;
            return Ok(vec![ctx.pc + 1, *t as usize]);
        }
        Abort(_) => return Ok(vec![]),
        Call(r, targs) => {
            let callee = ctx.pkg.function(r).ok_or_else(|| ctx.err(format!("unknown function {r}")))?;
            let same_module = *r.module == *ctx.module.name;
            let privileged = callee.body == Body::Native;
            if !callee.is_public() && !same_module && !privileged {
                return Err(ctx.err(format!("{r} is private to its module")));
            }
            if targs.len() != callee.arity() {
                return Err(ctx.err(format!("{r} expects {} type arguments, got {}", callee.arity(), targs.len())));
            }
            for t in targs {
                check_type(ctx.pkg, t, n_params).map_err(|m| ctx.err(m))?;
            }
            let ins: Vec<TypeTag> = callee.inputs.iter().map(|p| substitute(&p.ty, targs).unwrap()).collect();
            for t in ins.iter().rev() {
                expect(ctx, stack, t)?;
            }
            for t in &callee.outputs {
                stack.push(substitute(t, targs).unwrap());
            }
            for (p, t) in callee.inputs.iter().zip(ins) {
                if p.mode == RefMode::ByMutRef {
                    stack.push(t);
                }
            }
        }
        Pack(r, targs) | Unpack(r, targs) => {
            let d = ctx.pkg.datatype(r).ok_or_else(|| ctx.err(format!("unknown datatype {r}")))?;
            if *r.module != *ctx.module.name {
                return Err(ctx.err(format!("{r} can only be packed or unpacked in its own module")));
            }
            let whole = TypeTag::Datatype(r.clone(), targs.clone());
            check_type(ctx.pkg, &whole, n_params).map_err(|m| ctx.err(m))?;
            let fields: Vec<TypeTag> = d.fields.iter().map(|(_, t)| substitute(t, targs).unwrap()).collect();
            if matches!(ins, Pack(..)) {
                for t in fields.iter().rev() {
                    expect(ctx, stack, t)?;
                }
                stack.push(whole);
            } else {
                expect(ctx, stack, &whole)?;
                stack.extend(fields);
            }
        }
        VecNew(t) => {
            check_type(ctx.pkg, t, n_params).map_err(|m| ctx.err(m))?;
            stack.push(TypeTag::vector(t.clone()));
        }
        VecPush => {
            let e = pop(ctx, stack)?;
            let v = TypeTag::vector(e);
            expect(ctx, stack, &v)?;
            stack.push(v);
        }
        VecPop => match pop(ctx, stack)? {
            TypeTag::Vector(e) => {
                stack.push(TypeTag::Vector(e.clone()));
                stack.push(*e);
            }
            t => return Err(ctx.err(format!("expected vector, found {t}"))),
        },
        VecLen => match pop(ctx, stack)? {
            TypeTag::Vector(_) => stack.push(TypeTag::u64()),
            t => return Err(ctx.err(format!("expected vector, found {t}"))),
        },
        VecBorrow => {
            expect(ctx, stack, &TypeTag::u64())?;
            match pop(ctx, stack)? {
                TypeTag::Vector(e) => stack.push(*e),
                t => return Err(ctx.err(format!("expected vector, found {t}"))),
            }
        }
        EmitEvent(_) => {
            pop(ctx, stack)?;
        }
        Ret => {
            if stack.as_slice() != f.outputs.as_slice() {
                return Err(ctx.err(format!(
                    "return stack [{}] does not match declared outputs [{}]",
                    join(stack),
                    join(&f.outputs)
                )));
            }
            return Ok(vec![]);
        }
    }
    Ok(next)
}

fn join(ts: &[TypeTag]) -> String {
    ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ")
}

fn verify_function(pkg: &Package, module: &Module, func: &FunctionDecl) -> Result<(), VerifyError> {
    let mut ctx = Ctx { pkg, module, func, pc: 0 };
    let n = func.arity();
    for t in func.inputs.iter().map(|p| &p.ty).chain(&func.outputs).chain(func.locals.iter().map(|(_, t)| t)) {
        check_type(pkg, t, n).map_err(|m| ctx.err(m))?;
    }
    let code = match &func.body {
        Body::Native => return Ok(()),
        Body::Bytecode(c) => c,
    };
    if code.is_empty() {
        return Err(ctx.err("function body is empty"));
    }
    for (pc, ins) in code.iter().enumerate() {
        if let Some(t) = ins.branch_target() {
            if t as usize >= code.len() {
                ctx.pc = pc;
                return Err(ctx.err(format!("branch target {t} out of range")));
            }
        }
    }
    let mut entry: Vec<Option<Vec<TypeTag>>> = vec![None; code.len()];
    entry[0] = Some(Vec::new());
    let mut work: BTreeSet<usize> = BTreeSet::from([0]);
    while let Some(pc) = work.pop_first() {
        ctx.pc = pc;
        let mut stack = entry[pc].clone().unwrap();
        let succs = step(&ctx, &code[pc], &mut stack)?;
        for s in succs {
            if s >= code.len() {
                ctx.pc = code.len() - 1;
                return Err(ctx.err("control falls off the end of the function"));
            }
            match &entry[s] {
                None => {
                    entry[s] = Some(stack.clone());
                    work.insert(s);
                }
                Some(existing) if *existing == stack => {}
                Some(existing) => {
                    ctx.pc = s;
                    return Err(ctx.err(format!(
                        "inconsistent stack at join: [{}] vs [{}]",
                        join(existing),
                        join(&stack)
                    )));
                }
            }
        }
    }
    Ok(())
}

fn field_allows_store(pkg: &Package, t: &TypeTag) -> bool {
    match t {
        TypeTag::Prim(_) | TypeTag::Param(_) => true,
        TypeTag::Vector(e) => field_allows_store(pkg, e),
        TypeTag::Datatype(..) => pkg.abilities_of(t).has(Ability::Store),
    }
}

fn mentions(pkg: &Package, t: &TypeTag, target: &DatatypeRef, seen: &mut BTreeSet<DatatypeRef>) -> bool {
    match t {
        TypeTag::Prim(_) | TypeTag::Param(_) => false,
        TypeTag::Vector(e) => mentions(pkg, e, target, seen),
        TypeTag::Datatype(r, args) => {
            if r == target {
                return true;
            }
            if args.iter().any(|a| mentions(pkg, a, target, seen)) {
                return true;
            }
            if !seen.insert(r.clone()) {
                return false;
            }
            let Some(d) = pkg.datatype(r) else { return false };
            d.fields.iter().any(|(_, f)| mentions(pkg, f, target, seen))
        }
    }
}

fn verify_datatype(pkg: &Package, m: &Module, d: &DatatypeDecl) -> Result<(), String> {
    let me = QualifiedName { module: m.name.clone(), name: d.name.clone() };
    for (name, t) in &d.fields {
        check_type(pkg, t, d.arity())?;
        if d.abilities.has(Ability::Store) && !field_allows_store(pkg, t) {
            return Err(format!("field `{name}` of type {t} lacks store"));
        }
        if mentions(pkg, t, &me, &mut BTreeSet::new()) {
            return Err(format!("field `{name}` makes the datatype recursive"));
        }
    }
    Ok(())
}

/// Verifies the package's own modules; dependencies are trusted.
pub fn verify_package(pkg: &Package) -> Result<(), VerifyError> {
    for m in &pkg.modules {
        for d in &m.datatypes {
            verify_datatype(pkg, m, d).map_err(|msg| VerifyError {
                function: format!("{}::{}", m.name, d.name),
                pc: 0,
                msg,
            })?;
        }
        for f in &m.functions {
            verify_function(pkg, m, f)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::parse::{parse_package, PackageError};

    fn verify_err(text: &str) -> super::VerifyError {
        match parse_package(text) {
            Err(PackageError::Verify(e)) => e,
            other => panic!("expected verify error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_arithmetic() {
        let e = verify_err("module m\nfn f() -> u64\n  ld_const u64 1\n  ld_const u8 1\n  add\n  ret\nend\n");
        assert_eq!(e.pc, 2);
    }

    #[test]
    fn rejects_pack_outside_defining_module() {
        let e = verify_err("module m\nfn f() -> Coin<u8>\n  ld_const u64 1\n  pack Coin<u8>\n  ret\nend\n");
        assert!(e.msg.contains("own module"), "{}", e.msg);
    }

    #[test]
    fn rejects_private_cross_module_call() {
        let text = "module a\nfn g()\n  ret\nend\nmodule b\nfn f()\n  call a::g\n  ret\nend\n";
        let e = verify_err(text);
        assert_eq!(e.function, "b::f");
    }

    #[test]
    fn rejects_inconsistent_join() {
        let text = "module m\nfn f(c: bool)\n  ld_param c\n  br_true x\n  ld_const u8 1\nx:\n  ret\nend\n";
        let e = verify_err(text);
        assert!(e.msg.contains("join") || e.msg.contains("return"), "{}", e.msg);
    }

    #[test]
    fn store_requires_storable_fields() {
        let text = "module m\ndatatype R\n  field x: u64\nend\ndatatype S has store\n  field r: R\nend\n";
        assert_eq!(verify_err(text).function, "m::S");
    }

    #[test]
    fn recursive_datatypes_are_rejected() {
        let text = "module m\ndatatype S\n  field v: vector<S>\nend\n";
        assert!(verify_err(text).msg.contains("recursive"));
    }

    #[test]
    fn shift_amount_must_be_u8() {
        let e = verify_err("module m\nfn f() -> u64\n  ld_const u64 1\n  ld_const u64 1\n  shl\n  ret\nend\n");
        assert!(e.msg.contains("u8"));
    }

    #[test]
    fn mut_ref_inputs_are_returned_after_outputs() {
        let text = "module m\ndatatype S has drop store\n  field v: u64\nend\n\
            fn peek(s: &mut S) -> u64\n  ld_param s\n  unpack S\n  ret\nend\n\
            fn f(s: S) -> (u64, S)\n  ld_param s\n  call peek\n  ret\nend\n";
        assert!(parse_package(text).is_ok());
        let swapped = text.replace("-> (u64, S)", "-> (S, u64)");
        assert_eq!(verify_err(&swapped).function, "m::f");
    }
}
