//! Reader and writer for the package document format.
//!
//! The grammar is line oriented; see `docs/package-format.md` for the full
//! description. Every parsed package is verified before it is returned.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::lexer::{tokenize, Cursor, ParseError, Tok};
use crate::model::*;
use crate::verify::{verify_package, VerifyError};

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("verification failed: {0}")]
    Verify(#[from] VerifyError),
}

/// Module name -> (datatype name -> arity, function names).
#[derive(Clone, Debug, Default)]
pub struct NameTable {
    modules: BTreeMap<String, (BTreeMap<String, usize>, BTreeSet<String>)>,
}

impl NameTable {
    pub fn from_package(pkg: &Package) -> Self {
        let mut t = NameTable::default();
        for m in pkg.all_modules() {
            let entry = t.modules.entry(m.name.to_string()).or_default();
            for d in &m.datatypes {
                entry.0.insert(d.name.to_string(), d.arity());
            }
            for f in &m.functions {
                entry.1.insert(f.name.to_string());
            }
        }
        t
    }

    fn resolve_datatype(&self, module: Option<&str>, name: &str) -> Option<String> {
        if let Some(m) = module {
            if self.modules.get(m).is_some_and(|(d, _)| d.contains_key(name)) {
                return Some(m.to_string());
            }
        }
        let mut hits = self.modules.iter().filter(|(_, (d, _))| d.contains_key(name));
        match (hits.next(), hits.next()) {
            (Some((m, _)), None) => Some(m.clone()),
            _ => None,
        }
    }

    fn resolve_function(&self, module: Option<&str>, name: &str) -> Option<String> {
        if let Some(m) = module {
            if self.modules.get(m).is_some_and(|(_, f)| f.contains(name)) {
                return Some(m.to_string());
            }
        }
        let mut hits = self.modules.iter().filter(|(_, (_, f))| f.contains(name));
        match (hits.next(), hits.next()) {
            (Some((m, _)), None) => Some(m.clone()),
            _ => None,
        }
    }
}

/// Name resolution context for types appearing in a document.
pub struct TypeScope<'a> {
    pub names: &'a NameTable,
    pub module: Option<&'a str>,
    pub type_params: &'a [Ident],
}

impl TypeScope<'_> {
    pub fn qualified(&self, cur: &mut Cursor, datatype: bool) -> Result<QualifiedName, ParseError> {
        let first = cur.ident()?;
        if cur.eat_sym("::") {
            let second = cur.ident()?;
            return Ok(QualifiedName::new(first, second));
        }
        let module = if datatype {
            self.names.resolve_datatype(self.module, first)
        } else {
            self.names.resolve_function(self.module, first)
        };
        let module = module.ok_or_else(|| cur.err(format!("cannot resolve `{first}`")))?;
        Ok(QualifiedName::new(&module, first))
    }

    pub fn type_args(&self, cur: &mut Cursor) -> Result<Vec<TypeTag>, ParseError> {
        let mut args = Vec::new();
        if cur.eat_sym("<") {
            loop {
                args.push(self.parse_type(cur)?);
                if cur.eat_sym(">") {
                    break;
                }
                cur.expect_sym(",")?;
            }
        }
        Ok(args)
    }

    pub fn parse_type(&self, cur: &mut Cursor) -> Result<TypeTag, ParseError> {
        let name = match cur.peek() {
            Some(Tok::Ident(s)) => s.as_str(),
            _ => return Err(cur.err("expected type")),
        };
        if let Some(p) = Prim::from_name(name) {
            cur.next();
            return Ok(TypeTag::Prim(p));
        }
        if name == "vector" {
            cur.next();
            cur.expect_sym("<")?;
            let e = self.parse_type(cur)?;
            cur.expect_sym(">")?;
            return Ok(TypeTag::vector(e));
        }
        if !matches!(cur.peek_at(1), Some(Tok::Sym("::"))) {
            if let Some(i) = self.type_params.iter().position(|p| &**p == name) {
                cur.next();
                return Ok(TypeTag::Param(i as u16));
            }
        }
        let r = self.qualified(cur, true)?;
        let args = self.type_args(cur)?;
        Ok(TypeTag::Datatype(r, args))
    }
}

struct Line {
    no: usize,
    toks: Vec<(Tok, usize)>,
}

fn lines_of(text: &str) -> Result<Vec<Line>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let toks = tokenize(raw, i + 1)?;
        if !toks.is_empty() {
            out.push(Line { no: i + 1, toks });
        }
    }
    Ok(out)
}

fn first_ident(line: &Line) -> Option<&str> {
    match line.toks.first() {
        Some((Tok::Ident(s), _)) => Some(s),
        _ => None,
    }
}

/// Collects module, datatype and function names so bodies can refer forward.
fn prescan(lines: &[Line], deps: &[Arc<Package>]) -> Result<NameTable, ParseError> {
    let mut table = NameTable::default();
    for d in deps {
        for m in d.all_modules() {
            let e = table.modules.entry(m.name.to_string()).or_default();
            for dt in &m.datatypes {
                e.0.insert(dt.name.to_string(), dt.arity());
            }
            for f in &m.functions {
                e.1.insert(f.name.to_string());
            }
        }
    }
    let mut module: Option<String> = None;
    for line in lines {
        let mut cur = Cursor::new(&line.toks, line.no);
        match first_ident(line) {
            Some("module") => {
                cur.next();
                let name = cur.ident()?.to_string();
                if table.modules.contains_key(&name) {
                    return Err(cur.err(format!("duplicate module `{name}`")));
                }
                table.modules.insert(name.clone(), Default::default());
                module = Some(name);
            }
            Some("datatype") => {
                cur.next();
                let name = cur.ident()?.to_string();
                let m = module.as_ref().ok_or_else(|| cur.err("datatype outside of a module"))?;
                let entry = table.modules.get_mut(m).unwrap();
                if entry.0.insert(name.clone(), 0).is_some() {
                    return Err(cur.err(format!("duplicate datatype `{name}`")));
                }
            }
            Some("public") | Some("native") | Some("fn") => {
                while cur.eat_keyword("public") || cur.eat_keyword("native") {}
                if !cur.eat_keyword("fn") {
                    continue;
                }
                let name = cur.ident()?.to_string();
                let m = module.as_ref().ok_or_else(|| cur.err("function outside of a module"))?;
                let entry = table.modules.get_mut(m).unwrap();
                if !entry.1.insert(name.clone()) {
                    return Err(cur.err(format!("duplicate function `{name}`")));
                }
            }
            _ => {}
        }
    }
    Ok(table)
}

fn type_param_list(cur: &mut Cursor) -> Result<Vec<Ident>, ParseError> {
    let mut out: Vec<Ident> = Vec::new();
    if cur.eat_sym("<") {
        loop {
            let n = cur.ident()?;
            if out.iter().any(|p| &**p == n) {
                return Err(cur.err(format!("duplicate type parameter `{n}`")));
            }
            out.push(ident(n));
            if cur.eat_sym(">") {
                break;
            }
            cur.expect_sym(",")?;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    lines: &'a [Line],
    pos: std::cell::Cell<usize>,
    names: NameTable,
}

impl<'a> Parser<'a> {
    fn next_line(&self) -> Option<&'a Line> {
        let l = self.lines.get(self.pos.get());
        self.pos.set(self.pos.get() + 1);
        l
    }

    fn datatype(&mut self, line: &Line, module: &str) -> Result<DatatypeDecl, ParseError> {
        let mut cur = Cursor::new(&line.toks, line.no);
        cur.next();
        let name = ident(cur.ident()?);
        let type_params = type_param_list(&mut cur)?;
        let mut abilities = AbilitySet::EMPTY;
        if cur.eat_keyword("has") {
            while !cur.at_end() {
                let a = cur.ident()?;
                let ab = Ability::from_name(a).ok_or_else(|| cur.err(format!("unknown ability `{a}`")))?;
                abilities = abilities.with(ab);
                cur.eat_sym(",");
            }
        }
        cur.expect_end()?;
        let mut fields = Vec::new();
        loop {
            let l = self.next_line().ok_or_else(|| ParseError::new(line.no, 1, "unterminated datatype"))?;
            let mut c = Cursor::new(&l.toks, l.no);
            if c.eat_keyword("end") {
                c.expect_end()?;
                break;
            }
            if !c.eat_keyword("field") {
                return Err(c.err("expected `field` or `end`"));
            }
            let fname = ident(c.ident()?);
            c.expect_sym(":")?;
            let scope = TypeScope { names: &self.names, module: Some(module), type_params: &type_params };
            let ty = scope.parse_type(&mut c)?;
            c.expect_end()?;
            fields.push((fname, ty));
        }
        Ok(DatatypeDecl { name, type_params, abilities, fields })
    }

    fn function(&mut self, line: &Line, module: &str) -> Result<FunctionDecl, ParseError> {
        let mut cur = Cursor::new(&line.toks, line.no);
        let mut visibility = Visibility::Private;
        let mut native = false;
        loop {
            if cur.eat_keyword("public") {
                visibility = Visibility::Public;
            } else if cur.eat_keyword("native") {
                native = true;
            } else {
                break;
            }
        }
        if !cur.eat_keyword("fn") {
            return Err(cur.err("expected `fn`"));
        }
        let name = ident(cur.ident()?);
        let type_params = type_param_list(&mut cur)?;
        let scope = TypeScope { names: &self.names, module: Some(module), type_params: &type_params };
        cur.expect_sym("(")?;
        let mut inputs = Vec::new();
        if !cur.eat_sym(")") {
            loop {
                let pname = ident(cur.ident()?);
                cur.expect_sym(":")?;
                let mode = if cur.eat_sym("&") {
                    if cur.eat_keyword("mut") {
                        RefMode::ByMutRef
                    } else {
                        RefMode::ByRef
                    }
                } else {
                    RefMode::ByValue
                };
                let ty = scope.parse_type(&mut cur)?;
                inputs.push(Param { name: pname, ty, mode });
                if cur.eat_sym(")") {
                    break;
                }
                cur.expect_sym(",")?;
            }
        }
        let mut outputs = Vec::new();
        if cur.eat_sym("->") {
            if cur.eat_sym("(") {
                if !cur.eat_sym(")") {
                    loop {
                        outputs.push(scope.parse_type(&mut cur)?);
                        if cur.eat_sym(")") {
                            break;
                        }
                        cur.expect_sym(",")?;
                    }
                }
            } else {
                outputs.push(scope.parse_type(&mut cur)?);
            }
        }
        cur.expect_end()?;
        if native {
            return Ok(FunctionDecl {
                name,
                visibility,
                type_params,
                inputs,
                outputs,
                locals: vec![],
                body: Body::Native,
            });
        }

        let mut locals: Vec<(Ident, TypeTag)> = Vec::new();
        let mut labels: HashMap<String, u32> = HashMap::new();
        // (instruction index, label, line, column) still to patch
        let mut pending: Vec<(usize, String, usize, usize)> = Vec::new();
        let mut code: Vec<Instruction> = Vec::new();
        loop {
            let l = self.next_line().ok_or_else(|| ParseError::new(line.no, 1, "unterminated function"))?;
            let mut c = Cursor::new(&l.toks, l.no);
            if c.eat_keyword("end") {
                c.expect_end()?;
                break;
            }
            if c.eat_keyword("local") {
                if !code.is_empty() {
                    return Err(c.err("locals must be declared before the first instruction"));
                }
                let lname = ident(c.ident()?);
                c.expect_sym(":")?;
                let ty = scope.parse_type(&mut c)?;
                c.expect_end()?;
                locals.push((lname, ty));
                continue;
            }
            if let (Some(Tok::Ident(label)), Some(Tok::Sym(":")), None) = (c.peek(), c.peek_at(1), c.peek_at(2)) {
                if labels.insert(label.clone(), code.len() as u32).is_some() {
                    return Err(c.err(format!("duplicate label `{label}`")));
                }
                continue;
            }
            let slot = |c: &mut Cursor, limit_params: bool| -> Result<u16, ParseError> {
                let n_slots = if limit_params { inputs.len() } else { inputs.len() + locals.len() };
                match c.peek() {
                    Some(Tok::Num(_)) => {
                        let v = c.number()?;
                        if v >= n_slots.into() {
                            return Err(c.err("slot index out of range"));
                        }
                        Ok(v.as_u32() as u16)
                    }
                    Some(Tok::Ident(_)) => {
                        let n = c.ident()?;
                        let idx = inputs
                            .iter()
                            .map(|p| &p.name)
                            .chain(locals.iter().map(|(n, _)| n))
                            .take(n_slots)
                            .position(|x| &**x == n)
                            .ok_or_else(|| c.err(format!("unknown slot `{n}`")))?;
                        Ok(idx as u16)
                    }
                    _ => Err(c.err("expected slot name or index")),
                }
            };
            let op = c.ident()?;
            let instr = match op {
                "ld_const" => {
                    let p = c.ident()?;
                    let prim = Prim::from_name(p).ok_or_else(|| c.err(format!("unknown primitive `{p}`")))?;
                    let lit = if prim == Prim::Bool {
                        match c.ident()? {
                            "true" => Literal::Bool(true),
                            "false" => Literal::Bool(false),
                            other => return Err(c.err(format!("invalid bool `{other}`"))),
                        }
                    } else {
                        let v = c.number()?;
                        if v > prim.max_value() {
                            return Err(c.err(format!("constant does not fit in {prim}")));
                        }
                        Literal::Int(v)
                    };
                    Instruction::LdConst(prim, lit)
                }
                "ld_param" => Instruction::LdParam(slot(&mut c, true)?),
                "copy_loc" => Instruction::CopyLocal(slot(&mut c, false)?),
                "move_loc" => Instruction::MoveLocal(slot(&mut c, false)?),
                "st_loc" => Instruction::StoreLocal(slot(&mut c, false)?),
                "add" => Instruction::Add,
                "sub" => Instruction::Sub,
                "mul" => Instruction::Mul,
                "div" => Instruction::Div,
                "mod" => Instruction::Mod,
                "shl" => Instruction::Shl,
                "shr" => Instruction::Shr,
                "and" => Instruction::BitAnd,
                "or" => Instruction::BitOr,
                "xor" => Instruction::BitXor,
                "not" => Instruction::Not,
                "eq" => Instruction::Eq,
                "neq" => Instruction::Neq,
                "lt" => Instruction::Lt,
                "le" => Instruction::Le,
                "gt" => Instruction::Gt,
                "ge" => Instruction::Ge,
                "cast" => {
                    let p = c.ident()?;
                    Instruction::Cast(Prim::from_name(p).ok_or_else(|| c.err(format!("unknown primitive `{p}`")))?)
                }
                "branch" | "br_true" | "br_false" => {
                    let col = c.col();
                    let label = c.ident()?.to_string();
                    pending.push((code.len(), label, l.no, col));
                    match op {
                        "branch" => Instruction::Branch(0),
                        "br_true" => Instruction::BrTrue(0),
                        _ => Instruction::BrFalse(0),
                    }
                }
                "abort" => {
                    let v = c.number()?;
                    if v > u64::MAX.into() {
                        return Err(c.err("abort code does not fit in u64"));
                    }
                    Instruction::Abort(v.as_u64())
                }
                "call" => {
                    let r = scope.qualified(&mut c, false)?;
                    let args = scope.type_args(&mut c)?;
                    Instruction::Call(r, args)
                }
                "pack" | "unpack" => {
                    let r = scope.qualified(&mut c, true)?;
                    let args = scope.type_args(&mut c)?;
                    if op == "pack" {
                        Instruction::Pack(r, args)
                    } else {
                        Instruction::Unpack(r, args)
                    }
                }
                "vec_new" => Instruction::VecNew(scope.parse_type(&mut c)?),
                "vec_push" => Instruction::VecPush,
                "vec_pop" => Instruction::VecPop,
                "vec_len" => Instruction::VecLen,
                "vec_borrow" => Instruction::VecBorrow,
                "emit_event" => {
                    let v = c.number()?;
                    if v > u64::MAX.into() {
                        return Err(c.err("event tag does not fit in u64"));
                    }
                    Instruction::EmitEvent(v.as_u64())
                }
                "ret" => Instruction::Ret,
                other => return Err(ParseError::new(l.no, l.toks[0].1, format!("unknown opcode `{other}`"))),
            };
            c.expect_end()?;
            code.push(instr);
        }
        for (at, label, lno, col) in pending {
            let target = *labels.get(&label).ok_or_else(|| ParseError::new(lno, col, format!("unknown label `{label}`")))?;
            match &mut code[at] {
                Instruction::Branch(t) | Instruction::BrTrue(t) | Instruction::BrFalse(t) => *t = target,
                _ => unreachable!(),
            }
        }
        Ok(FunctionDecl { name, visibility, type_params, inputs, outputs, locals, body: Body::Bytecode(code) })
    }

    fn package(&mut self, deps: Vec<Arc<Package>>) -> Result<Package, ParseError> {
        let mut name = ident("main");
        let mut modules: Vec<Module> = Vec::new();
        while let Some(line) = self.next_line() {
            let mut cur = Cursor::new(&line.toks, line.no);
            match first_ident(line) {
                Some("package") if modules.is_empty() => {
                    cur.next();
                    name = ident(cur.ident()?);
                    cur.expect_end()?;
                }
                Some("module") => {
                    cur.next();
                    let m = ident(cur.ident()?);
                    cur.expect_end()?;
                    modules.push(Module { name: m, datatypes: vec![], functions: vec![] });
                }
                Some("datatype") => {
                    let m = modules.last().ok_or_else(|| cur.err("datatype outside of a module"))?.name.clone();
                    let d = self.datatype(line, &m)?;
                    modules.last_mut().unwrap().datatypes.push(d);
                }
                Some("public") | Some("native") | Some("fn") => {
                    let m = modules.last().ok_or_else(|| cur.err("function outside of a module"))?.name.clone();
                    let f = self.function(line, &m)?;
                    modules.last_mut().unwrap().functions.push(f);
                }
                _ => return Err(cur.err("expected `module`, `datatype` or `fn`")),
            }
        }
        Ok(Package { name, modules, deps })
    }
}

/// Parses without verification; dependencies provide resolvable names.
pub fn parse_unverified(text: &str, deps: Vec<Arc<Package>>) -> Result<Package, ParseError> {
    let lines = lines_of(text)?;
    let names = prescan(&lines, &deps)?;
    let mut p = Parser { lines: &lines, pos: Default::default(), names };
    p.package(deps)
}

/// Parses a package document against the built-in standard library and
/// runs the bytecode verifier over it.
pub fn parse_package(text: &str) -> Result<Package, PackageError> {
    let pkg = parse_unverified(text, vec![crate::stdlib::std_package()])?;
    verify_package(&pkg)?;
    Ok(pkg)
}

fn slot_name(f: &FunctionDecl, i: u16) -> String {
    let name = if (i as usize) < f.inputs.len() {
        &f.inputs[i as usize].name
    } else {
        &f.locals[i as usize - f.inputs.len()].0
    };
    let all = f.inputs.iter().map(|p| &p.name).chain(f.locals.iter().map(|(n, _)| n));
    let unique = all.filter(|n| *n == name).count() == 1;
    let clash = matches!(&**name, "end" | "local") || Prim::from_name(name).is_some();
    if unique && !clash && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
        name.to_string()
    } else {
        i.to_string()
    }
}

/// Prints a type using the given type parameter names.
fn type_str(t: &TypeTag, params: &[Ident]) -> String {
    match t {
        TypeTag::Prim(p) => p.name().to_string(),
        TypeTag::Vector(e) => format!("vector<{}>", type_str(e, params)),
        TypeTag::Datatype(r, args) => {
            let mut s = r.to_string();
            if !args.is_empty() {
                s.push('<');
                s.push_str(&args.iter().map(|a| type_str(a, params)).collect::<Vec<_>>().join(", "));
                s.push('>');
            }
            s
        }
        TypeTag::Param(i) => params.get(*i as usize).map(|p| p.to_string()).unwrap_or_else(|| format!("T{i}")),
    }
}

fn args_str(args: &[TypeTag], params: &[Ident]) -> String {
    if args.is_empty() {
        String::new()
    } else {
        format!("<{}>", args.iter().map(|a| type_str(a, params)).collect::<Vec<_>>().join(", "))
    }
}

/// Writes the package's own modules in canonical document form.
pub fn serialize_package(pkg: &Package) -> String {
    let mut out = String::new();
    writeln!(out, "package {}", pkg.name).unwrap();
    for m in &pkg.modules {
        writeln!(out, "\nmodule {}", m.name).unwrap();
        for d in &m.datatypes {
            write!(out, "\ndatatype {}", d.name).unwrap();
            if !d.type_params.is_empty() {
                write!(out, "<{}>", d.type_params.join(", ")).unwrap();
            }
            if d.abilities != AbilitySet::EMPTY {
                let names: Vec<&str> = d.abilities.iter().map(Ability::name).collect();
                write!(out, " has {}", names.join(" ")).unwrap();
            }
            out.push('\n');
            for (n, t) in &d.fields {
                writeln!(out, "  field {}: {}", n, type_str(t, &d.type_params)).unwrap();
            }
            out.push_str("end\n");
        }
        for f in &m.functions {
            out.push('\n');
            if f.is_public() {
                out.push_str("public ");
            }
            if f.body == Body::Native {
                out.push_str("native ");
            }
            write!(out, "fn {}", f.name).unwrap();
            if !f.type_params.is_empty() {
                write!(out, "<{}>", f.type_params.join(", ")).unwrap();
            }
            let ps: Vec<String> = f
                .inputs
                .iter()
                .map(|p| {
                    let m = match p.mode {
                        RefMode::ByValue => "",
                        RefMode::ByRef => "&",
                        RefMode::ByMutRef => "&mut ",
                    };
                    format!("{}: {}{}", p.name, m, type_str(&p.ty, &f.type_params))
                })
                .collect();
            write!(out, "({})", ps.join(", ")).unwrap();
            match f.outputs.len() {
                0 => {}
                1 => write!(out, " -> {}", type_str(&f.outputs[0], &f.type_params)).unwrap(),
                _ => {
                    let os: Vec<String> = f.outputs.iter().map(|t| type_str(t, &f.type_params)).collect();
                    write!(out, " -> ({})", os.join(", ")).unwrap();
                }
            }
            out.push('\n');
            let Body::Bytecode(code) = &f.body else { continue };
            for (n, t) in &f.locals {
                writeln!(out, "  local {}: {}", n, type_str(t, &f.type_params)).unwrap();
            }
            let targets: BTreeSet<u32> = code.iter().filter_map(Instruction::branch_target).collect();
            for (pc, ins) in code.iter().enumerate() {
                if targets.contains(&(pc as u32)) {
                    writeln!(out, "L{pc}:").unwrap();
                }
                writeln!(out, "  {}", instr_str(ins, f)).unwrap();
            }
            // labels may point one past the last instruction only in unverified code
            if targets.contains(&(code.len() as u32)) {
                writeln!(out, "L{}:", code.len()).unwrap();
            }
            out.push_str("end\n");
        }
    }
    out
}

fn instr_str(ins: &Instruction, f: &FunctionDecl) -> String {
    use Instruction::*;
    let tp = &f.type_params;
    match ins {
        LdConst(p, lit) => format!("ld_const {p} {lit}"),
        LdParam(i) => format!("ld_param {}", slot_name(f, *i)),
        CopyLocal(i) => format!("copy_loc {}", slot_name(f, *i)),
        MoveLocal(i) => format!("move_loc {}", slot_name(f, *i)),
        StoreLocal(i) => format!("st_loc {}", slot_name(f, *i)),
        Add => "add".into(),
        Sub => "sub".into(),
        Mul => "mul".into(),
        Div => "div".into(),
        Mod => "mod".into(),
        Shl => "shl".into(),
        Shr => "shr".into(),
        BitAnd => "and".into(),
        BitOr => "or".into(),
        BitXor => "xor".into(),
        Not => "not".into(),
        Eq => "eq".into(),
        Neq => "neq".into(),
        Lt => "lt".into(),
        Le => "le".into(),
        Gt => "gt".into(),
        Ge => "ge".into(),
        Cast(p) => format!("cast {p}"),
        Branch(t) => format!("branch L{t}"),
        BrTrue(t) => format!("br_true L{t}"),
        BrFalse(t) => format!("br_false L{t}"),
        Abort(c) => format!("abort {c}"),
        Call(r, a) => format!("call {r}{}", args_str(a, tp)),
        Pack(r, a) => format!("pack {r}{}", args_str(a, tp)),
        Unpack(r, a) => format!("unpack {r}{}", args_str(a, tp)),
        VecNew(t) => format!("vec_new {}", type_str(t, tp)),
        VecPush => "vec_push".into(),
        VecPop => "vec_pop".into(),
        VecLen => "vec_len".into(),
        VecBorrow => "vec_borrow".into(),
        EmitEvent(t) => format!("emit_event {t}"),
        Ret => "ret".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
module pool
datatype VeryAble has drop store
  field x: u64
end
datatype Receipt<T>
  field amount: u64
  field fee: u64
end

public fn loan<T>(amount: u64) -> (Coin<T>, Receipt<T>)
  ld_param amount
  call coin::mint<T>
  ld_param amount
  ld_param amount
  ld_const u64 1000
  div
  pack Receipt<T>
  ret
end

public fn repay<T>(coin: Coin<T>, receipt: Receipt<T>)
  local amount: u64
  local fee: u64
  ld_param receipt
  unpack Receipt<T>
  st_loc fee
  st_loc amount
  ld_param coin
  call coin::coin_value<T>
  copy_loc amount
  copy_loc fee
  add
  eq
  br_true ok
  abort 1
ok:
  ld_param coin
  call coin::burn<T>
  ret
end
"#;

    #[test]
    fn parses_flash_loan_module() {
        let pkg = parse_package(FIG1).unwrap();
        assert_eq!(pkg.modules.len(), 1);
        assert_eq!(pkg.modules[0].datatypes.len(), 2);
        assert_eq!(pkg.modules[0].functions.len(), 2);
        let loan = pkg.modules[0].function("loan").unwrap();
        assert_eq!(loan.outputs[0], TypeTag::datatype("coin", "Coin", vec![TypeTag::Param(0)]));
        assert_eq!(loan.outputs[1], TypeTag::datatype("pool", "Receipt", vec![TypeTag::Param(0)]));
    }

    #[test]
    fn empty_document_is_an_empty_package() {
        let pkg = parse_package("").unwrap();
        assert!(pkg.modules.is_empty());
    }

    #[test]
    fn missing_ret_is_rejected_at_last_instruction() {
        let text = "module m\npublic fn f() -> u64\n  ld_const u64 1\n  ld_const u64 2\n  add\nend\n";
        match parse_package(text) {
            Err(PackageError::Verify(e)) => {
                assert_eq!(e.function, "m::f");
                assert_eq!(e.pc, 2);
            }
            other => panic!("expected verify error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_opcode_is_a_parse_error() {
        let err = parse_package("module m\nfn f()\n  jump 3\nend\n").unwrap_err();
        match err {
            PackageError::Parse(e) => {
                assert_eq!(e.line, 3);
                assert!(e.msg.contains("unknown opcode"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialize_round_trips_fig1() {
        let pkg = parse_package(FIG1).unwrap();
        let text = serialize_package(&pkg);
        let again = parse_package(&text).unwrap();
        assert_eq!(pkg, again);
    }
}
