use std::fmt;

use serde::{Deserialize, Serialize};

/// A runtime value. Objects are integer indices into their type's universe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Obj(i64),
}

impl Value {
    pub fn as_bool(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Int(i) | Value::Obj(i) => i != 0,
            Value::Real(r) => r != 0.0,
        }
    }

    pub fn as_int(self) -> i64 {
        match self {
            Value::Bool(b) => b as i64,
            Value::Int(i) | Value::Obj(i) => i,
            Value::Real(r) => r as i64,
        }
    }

    pub fn as_real(self) -> f64 {
        match self {
            Value::Bool(b) => b as i64 as f64,
            Value::Int(i) | Value::Obj(i) => i as f64,
            Value::Real(r) => r,
        }
    }

    /// Integer key used by discrete histograms and categorical tables.
    pub fn key(self) -> i64 {
        match self {
            Value::Real(r) => r.to_bits() as i64,
            other => other.as_int(),
        }
    }

    pub fn to_json(self) -> serde_json::Value {
        match self {
            Value::Bool(b) => serde_json::Value::Bool(b),
            Value::Int(i) | Value::Obj(i) => serde_json::Value::from(i),
            Value::Real(r) => serde_json::Number::from_f64(r)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
        }
    }

    /// Bitwise identity, so that NaN-free reals hash and compare exactly.
    pub fn bits(self) -> u64 {
        match self {
            Value::Bool(b) => b as u64,
            Value::Int(i) | Value::Obj(i) => i as u64,
            Value::Real(r) => r.to_bits(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Obj(i) => write!(f, "#{i}"),
        }
    }
}

/// Identity of one random-variable instance: template id plus up to two
/// object-index arguments, packed into a single word.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(u64);

const ARG_BITS: u64 = 24;
const ARG_MASK: u64 = (1 << ARG_BITS) - 1;

impl VarId {
    #[inline]
    pub const fn new(tmpl: u16, a0: u32, a1: u32) -> Self {
        VarId(((tmpl as u64) << (2 * ARG_BITS)) | (((a0 as u64) & ARG_MASK) << ARG_BITS) | ((a1 as u64) & ARG_MASK))
    }

    #[inline]
    pub const fn tmpl(self) -> u16 {
        (self.0 >> (2 * ARG_BITS)) as u16
    }

    #[inline]
    pub const fn a0(self) -> u32 {
        ((self.0 >> ARG_BITS) & ARG_MASK) as u32
    }

    #[inline]
    pub const fn a1(self) -> u32 {
        (self.0 & ARG_MASK) as u32
    }

    pub const fn raw(self) -> u64 {
        self.0
    }
}

impl fmt::Debug for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}({},{})", self.tmpl(), self.a0(), self.a1())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn var_id_packs_losslessly(t in 0u16..u16::MAX, a in 0u32..(1 << 24), b in 0u32..(1 << 24)) {
            let id = VarId::new(t, a, b);
            prop_assert_eq!((id.tmpl(), id.a0(), id.a1()), (t, a, b));
        }
    }

    #[test]
    fn value_conversions() {
        assert_eq!(Value::Bool(true).as_int(), 1);
        assert_eq!(Value::Int(3).as_real(), 3.0);
        assert!(!Value::Obj(0).as_bool());
        assert_eq!(Value::Real(2.5).to_json(), serde_json::json!(2.5));
    }
}
