//! World state: the object pool with ownership tags and the event log, plus
//! the genesis document reader.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use primitive_types::U256;

use crate::lexer::{tokenize, Cursor, ParseError};
use crate::model::*;
use crate::parse::{NameTable, TypeScope};
use crate::stdlib::coin_ref;
use crate::vm::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    Sender,
    Shared,
}

impl Owner {
    pub fn name(self) -> &'static str {
        match self {
            Owner::Sender => "owned",
            Owner::Shared => "shared",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Object {
    pub ty: TypeTag,
    pub value: Value,
    pub owner: Owner,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WorldState {
    pub objects: BTreeMap<u64, Object>,
    pub events: Vec<(u64, Value)>,
    /// Net amount minted minus burned per coin type argument.
    pub supply: BTreeMap<TypeTag, i128>,
}

impl WorldState {
    pub fn next_id(&self) -> u64 {
        self.objects.keys().next_back().map_or(1, |k| k + 1)
    }

    pub fn insert_owned(&mut self, ty: TypeTag, value: Value) -> u64 {
        let id = self.next_id();
        self.objects.insert(id, Object { ty, value, owner: Owner::Sender });
        id
    }

    /// Sender balance per coin type argument, summed over owned coins.
    pub fn sender_balances(&self) -> BTreeMap<TypeTag, u128> {
        let mut out = BTreeMap::new();
        for o in self.objects.values().filter(|o| o.owner == Owner::Sender) {
            if let TypeTag::Datatype(r, args) = &o.ty {
                if *r == coin_ref() {
                    if let Value::Struct(_, fields) = &o.value {
                        *out.entry(args[0].clone()).or_insert(0u128) += fields[0].as_int().as_u128();
                    }
                }
            }
        }
        out
    }

    /// Distinct object types available to transactions.
    pub fn object_types(&self) -> Vec<TypeTag> {
        let mut out: Vec<TypeTag> = Vec::new();
        for o in self.objects.values() {
            if !out.contains(&o.ty) {
                out.push(o.ty.clone());
            }
        }
        out
    }

    /// Text dump of the pool, one object per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, o) in &self.objects {
            writeln!(out, "object {id} {} {} = {}", o.owner.name(), o.ty, o.value).unwrap();
        }
        out
    }
}

fn parse_value(pkg: &Package, cur: &mut Cursor, ty: &TypeTag) -> Result<Value, ParseError> {
    match ty {
        TypeTag::Prim(Prim::Bool) => match cur.ident()? {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            other => Err(cur.err(format!("invalid bool `{other}`"))),
        },
        TypeTag::Prim(p) => {
            let v = cur.number()?;
            if v > p.max_value() {
                return Err(cur.err(format!("value does not fit in {p}")));
            }
            Ok(Value::Int(*p, v))
        }
        TypeTag::Vector(e) => {
            cur.expect_sym("[")?;
            let mut items = Vec::new();
            if !cur.eat_sym("]") {
                loop {
                    items.push(parse_value(pkg, cur, e)?);
                    if cur.eat_sym("]") {
                        break;
                    }
                    cur.expect_sym(",")?;
                }
            }
            Ok(Value::Vec(items))
        }
        TypeTag::Datatype(r, args) => {
            let decl = pkg.datatype(r).ok_or_else(|| cur.err(format!("unknown datatype {r}")))?;
            cur.expect_sym("{")?;
            let mut given: BTreeMap<String, Value> = BTreeMap::new();
            if !cur.eat_sym("}") {
                loop {
                    let name = cur.ident()?.to_string();
                    cur.expect_sym(":")?;
                    let fty = decl
                        .fields
                        .iter()
                        .find(|(n, _)| **n == *name)
                        .map(|(_, t)| substitute(t, args).expect("arity checked"))
                        .ok_or_else(|| cur.err(format!("{r} has no field `{name}`")))?;
                    let v = parse_value(pkg, cur, &fty)?;
                    if given.insert(name.clone(), v).is_some() {
                        return Err(cur.err(format!("field `{name}` given twice")));
                    }
                    if cur.eat_sym("}") {
                        break;
                    }
                    cur.expect_sym(",")?;
                }
            }
            let mut fields = Vec::new();
            for (n, _) in &decl.fields {
                fields.push(given.remove(&**n).ok_or_else(|| cur.err(format!("missing field `{n}`")))?);
            }
            Ok(Value::Struct(Arc::new(ty.clone()), fields))
        }
        TypeTag::Param(_) => Err(cur.err("object types must be concrete")),
    }
}

fn concrete_type(pkg: &Package, scope: &TypeScope, cur: &mut Cursor) -> Result<TypeTag, ParseError> {
    let t = scope.parse_type(cur)?;
    crate::verify::check_type(pkg, &t, 0).map_err(|m| cur.err(m))?;
    Ok(t)
}

/// Reads a genesis document:
///
/// ```text
/// object <id> owned|shared <type> <value>
/// balance <coin type argument> <amount>
/// ```
///
/// `balance` adds a sender-owned `Coin<T>` with the next free id.
pub fn parse_genesis(pkg: &Package, text: &str) -> Result<WorldState, ParseError> {
    let names = NameTable::from_package(pkg);
    let scope = TypeScope { names: &names, module: None, type_params: &[] };
    let mut state = WorldState::default();
    for (i, raw) in text.lines().enumerate() {
        let toks = tokenize(raw, i + 1)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(&toks, i + 1);
        match cur.ident()? {
            "object" => {
                let id = cur.number()?;
                if id > U256::from(u64::MAX) {
                    return Err(cur.err("object id does not fit in u64"));
                }
                let id = id.as_u64();
                let owner = match cur.ident()? {
                    "owned" => Owner::Sender,
                    "shared" => Owner::Shared,
                    other => return Err(cur.err(format!("unknown ownership `{other}`"))),
                };
                let ty = concrete_type(pkg, &scope, &mut cur)?;
                if !matches!(ty, TypeTag::Datatype(..)) {
                    return Err(cur.err("pool objects must be datatype instances"));
                }
                let value = parse_value(pkg, &mut cur, &ty)?;
                cur.expect_end()?;
                if state.objects.insert(id, Object { ty, value, owner }).is_some() {
                    return Err(ParseError::new(i + 1, 1, format!("duplicate object id {id}")));
                }
            }
            "balance" => {
                let t = concrete_type(pkg, &scope, &mut cur)?;
                let amount = cur.number()?;
                if amount > U256::from(u64::MAX) {
                    return Err(cur.err("balance does not fit in u64"));
                }
                cur.expect_end()?;
                let ty = TypeTag::Datatype(coin_ref(), vec![t]);
                let value = Value::Struct(Arc::new(ty.clone()), vec![Value::Int(Prim::U64, amount)]);
                state.insert_owned(ty, value);
            }
            _ => return Err(ParseError::new(i + 1, toks[0].1, "expected `object` or `balance`")),
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_package;

    #[test]
    fn genesis_objects_and_balances() {
        let pkg = parse_package(
            "module m\ndatatype SUI has drop store\n  field x: bool\nend\n\
             datatype Oracle<A, B> has key store\n  field price: u64\nend\n",
        )
        .unwrap();
        let g = parse_genesis(&pkg, "object 1 shared Oracle<SUI, SUI> { price: 1000 }\nbalance SUI 10_000\n").unwrap();
        assert_eq!(g.objects.len(), 2);
        assert_eq!(g.objects[&1].owner, Owner::Shared);
        let sui = TypeTag::datatype("m", "SUI", vec![]);
        assert_eq!(g.sender_balances().get(&sui), Some(&10_000));
    }

    #[test]
    fn empty_genesis() {
        let pkg = parse_package("").unwrap();
        let g = parse_genesis(&pkg, "").unwrap();
        assert!(g.objects.is_empty());
        assert!(g.sender_balances().is_empty());
    }

    #[test]
    fn rejects_missing_fields() {
        let pkg = parse_package("module m\ndatatype P has key store\n  field a: u64\n  field b: u64\nend\n").unwrap();
        assert!(parse_genesis(&pkg, "object 3 owned P { a: 1 }").is_err());
    }
}
