use std::fmt;
use std::sync::Arc;

use primitive_types::U256;

use crate::model::{Prim, TypeTag};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Int(Prim, U256),
    Bool(bool),
    Vec(Vec<Value>),
    /// A datatype instance tagged with its concrete type.
    Struct(Arc<TypeTag>, Vec<Value>),
}

impl Value {
    pub fn u64(v: u64) -> Value {
        Value::Int(Prim::U64, v.into())
    }

    /// Builds a primitive value from its raw magnitude (bools are 0/1).
    pub fn prim(p: Prim, v: U256) -> Value {
        match p {
            Prim::Bool => Value::Bool(!v.is_zero()),
            p => Value::Int(p, v),
        }
    }

    /// Magnitude of a primitive value (bools are 0/1).
    pub fn raw(&self) -> Option<U256> {
        match self {
            Value::Int(_, v) => Some(*v),
            Value::Bool(b) => Some(U256::from(*b as u8)),
            _ => None,
        }
    }

    pub fn as_int(&self) -> U256 {
        match self {
            Value::Int(_, v) => *v,
            other => panic!("expected integer, found {other}"),
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            other => panic!("expected bool, found {other}"),
        }
    }

    pub fn struct_type(&self) -> Option<&TypeTag> {
        match self {
            Value::Struct(t, _) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(p, v) => write!(f, "{v}{p}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Vec(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Struct(t, fields) => {
                write!(f, "{t} {{")?;
                for (i, v) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, " {v}")?;
                }
                f.write_str(" }")
            }
        }
    }
}
