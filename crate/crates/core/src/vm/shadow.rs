//! Per-value shadow facts tracked alongside concrete execution.

use std::sync::Arc;

use primitive_types::U256;

use crate::concolic::sym::{Site, SymExpr};

/// Expressions deeper than this are concretized.
pub const MAX_SYM_DEPTH: u16 = 192;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Scalar {
    pub sym: Option<Arc<SymExpr>>,
    pub depth: u16,
    /// Division site whose truncated result flowed into this value.
    pub lossy: Option<Site>,
    /// Operands of the comparison that produced this boolean.
    pub cmp: Option<[U256; 2]>,
    /// A boolean loaded directly from a constant.
    pub const_bool: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Shadow {
    #[default]
    None,
    Scalar(Arc<Scalar>),
    Vec(Vec<Shadow>),
    Struct(Vec<Shadow>),
}

impl Shadow {
    pub fn scalar(s: Scalar) -> Shadow {
        if s == Scalar::default() {
            Shadow::None
        } else {
            Shadow::Scalar(Arc::new(s))
        }
    }

    pub fn sym(sym: Arc<SymExpr>, depth: u16) -> Shadow {
        Shadow::scalar(Scalar { sym: Some(sym), depth, ..Default::default() })
    }

    pub fn as_scalar(&self) -> Option<&Scalar> {
        match self {
            Shadow::Scalar(s) => Some(s),
            _ => None,
        }
    }

    pub fn sym_expr(&self) -> Option<&Arc<SymExpr>> {
        self.as_scalar().and_then(|s| s.sym.as_ref())
    }

    pub fn lossy(&self) -> Option<Site> {
        self.as_scalar().and_then(|s| s.lossy)
    }

    /// Splits a composite shadow into `n` parts, padding with `None`.
    pub fn parts(self, n: usize) -> Vec<Shadow> {
        let mut v = match self {
            Shadow::Vec(v) | Shadow::Struct(v) => v,
            _ => Vec::new(),
        };
        v.resize(n, Shadow::None);
        v
    }

    /// Composite shadow, collapsed to `None` when it carries no facts.
    pub fn composite(parts: Vec<Shadow>, is_vec: bool) -> Shadow {
        if parts.iter().all(|p| *p == Shadow::None) {
            Shadow::None
        } else if is_vec {
            Shadow::Vec(parts)
        } else {
            Shadow::Struct(parts)
        }
    }
}
