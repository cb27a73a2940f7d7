//! Width-aware unsigned arithmetic with Move abort semantics. Shared by the
//! interpreter and the symbolic evaluator.

use primitive_types::U256;

use crate::model::Prim;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AbortKind {
    ArithmeticOverflow,
    DivByZero,
    CastOutOfRange,
    VectorBounds,
    /// Read of a local whose value was moved out.
    UnavailableLocal,
    CallStackOverflow,
    Explicit(u64),
}

impl AbortKind {
    /// Numeric code reported for the abort.
    pub fn code(self) -> u64 {
        match self {
            AbortKind::ArithmeticOverflow => 4000,
            AbortKind::DivByZero => 4001,
            AbortKind::CastOutOfRange => 4002,
            AbortKind::VectorBounds => 4003,
            AbortKind::UnavailableLocal => 4004,
            AbortKind::CallStackOverflow => 4005,
            AbortKind::Explicit(c) => c,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AbortKind::ArithmeticOverflow => "ArithmeticOverflow",
            AbortKind::DivByZero => "DivByZero",
            AbortKind::CastOutOfRange => "CastOutOfRange",
            AbortKind::VectorBounds => "VectorBounds",
            AbortKind::UnavailableLocal => "UnavailableLocal",
            AbortKind::CallStackOverflow => "CallStackOverflow",
            AbortKind::Explicit(_) => "ExplicitAbort",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Shl,
    Shr,
    And,
    Or,
    Xor,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Neq => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Neq,
            CmpOp::Neq => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn eval(self, a: U256, b: U256) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Neq => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Applies `op` to operands of width `p`. Shift amounts are u8 values.
pub fn binop(op: BinOp, p: Prim, a: U256, b: U256) -> Result<U256, AbortKind> {
    let max = p.max_value();
    match op {
        BinOp::Add => {
            let (r, o) = a.overflowing_add(b);
            if o || r > max {
                Err(AbortKind::ArithmeticOverflow)
            } else {
                Ok(r)
            }
        }
        BinOp::Sub => a.checked_sub(b).ok_or(AbortKind::ArithmeticOverflow),
        BinOp::Mul => {
            let (r, o) = a.overflowing_mul(b);
            if o || r > max {
                Err(AbortKind::ArithmeticOverflow)
            } else {
                Ok(r)
            }
        }
        BinOp::Div => {
            if b.is_zero() {
                Err(AbortKind::DivByZero)
            } else {
                Ok(a / b)
            }
        }
        BinOp::Mod => {
            if b.is_zero() {
                Err(AbortKind::DivByZero)
            } else {
                Ok(a % b)
            }
        }
        BinOp::Shl => {
            let s = shift_amount(p, b)?;
            Ok((a << s) & max)
        }
        BinOp::Shr => {
            let s = shift_amount(p, b)?;
            Ok(a >> s)
        }
        BinOp::And => Ok(a & b),
        BinOp::Or => Ok(a | b),
        BinOp::Xor => Ok(a ^ b),
    }
}

fn shift_amount(p: Prim, b: U256) -> Result<usize, AbortKind> {
    if b >= U256::from(p.bits()) {
        Err(AbortKind::ArithmeticOverflow)
    } else {
        Ok(b.as_usize())
    }
}

/// True when a left shift drops at least one set bit.
pub fn shl_discards_bits(p: Prim, a: U256, b: U256) -> bool {
    match shift_amount(p, b) {
        Ok(s) => s > 0 && !(a >> (p.bits() as usize - s)).is_zero(),
        Err(_) => false,
    }
}

pub fn cast(to: Prim, v: U256) -> Result<U256, AbortKind> {
    if v > to.max_value() {
        Err(AbortKind::CastOutOfRange)
    } else {
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u8_add_overflow_aborts() {
        assert_eq!(binop(BinOp::Add, Prim::U8, 200.into(), 100.into()), Err(AbortKind::ArithmeticOverflow));
    }

    #[test]
    fn shl_discards_high_bits() {
        let one = U256::one();
        let r = binop(BinOp::Shl, Prim::U256, one << 192, 64.into()).unwrap();
        assert!(r.is_zero());
        assert!(shl_discards_bits(Prim::U256, one << 192, 64.into()));
        assert!(!shl_discards_bits(Prim::U16, 0x00FF.into(), 8.into()));
        assert_eq!(binop(BinOp::Shl, Prim::U8, one, 8.into()), Err(AbortKind::ArithmeticOverflow));
    }

    #[test]
    fn narrowing_cast_aborts() {
        let v = U256::one() << 64;
        assert_eq!(cast(Prim::U64, v), Err(AbortKind::CastOutOfRange));
        assert_eq!(cast(Prim::U128, v), Ok(v));
    }
}
