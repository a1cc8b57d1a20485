//! Exact costs: rationals extended with an absorbing infinity.
//!
//! All cost arithmetic in this crate is exact.  Values live in
//! ℚ ∪ {∞} with the usual absorption rules: `a + ∞ = ∞`,
//! `a · ∞ = ∞` for `a > 0`, and `0 · ∞ = 0`.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Add;

use num_rational::Ratio;
use num_traits::{Signed, Zero};

pub type Rational = Ratio<i64>;

/// A cost in ℚ ∪ {∞}.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Value {
    Fin(Rational),
    Inf,
}

impl Value {
    pub const ZERO: Value = Value::Fin(Ratio::new_raw(0, 1));

    pub fn from_int(n: i64) -> Value {
        Value::Fin(Ratio::from_integer(n))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Value::Fin(_))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Value::Fin(r) if r.is_zero())
    }

    /// Finite part, if any.
    pub fn finite(&self) -> Option<Rational> {
        match self {
            Value::Fin(r) => Some(*r),
            Value::Inf => None,
        }
    }

    /// Scale by a non-negative rational; `0 · ∞ = 0`.
    pub fn scale(&self, a: Rational) -> Value {
        assert!(!a.is_negative(), "scaling factor must be non-negative");
        match self {
            _ if a.is_zero() => Value::ZERO,
            Value::Fin(r) => Value::Fin(r * a),
            Value::Inf => Value::Inf,
        }
    }
}

impl Add for Value {
    type Output = Value;
    fn add(self, rhs: Value) -> Value {
        match (self, rhs) {
            (Value::Fin(a), Value::Fin(b)) => Value::Fin(a + b),
            _ => Value::Inf,
        }
    }
}

impl core::iter::Sum for Value {
    fn sum<I: Iterator<Item = Value>>(iter: I) -> Value {
        iter.fold(Value::ZERO, |a, b| a + b)
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Value) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Fin(a), Value::Fin(b)) => a.cmp(b),
            (Value::Fin(_), Value::Inf) => Ordering::Less,
            (Value::Inf, Value::Fin(_)) => Ordering::Greater,
            (Value::Inf, Value::Inf) => Ordering::Equal,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Fin(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Value::Fin(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Value::Inf => write!(f, "inf"),
        }
    }
}

/// Parse the textual form emitted by `Display` ("7", "-3/4", "inf").
pub fn parse_value(s: &str) -> Option<Value> {
    if s == "inf" {
        return Some(Value::Inf);
    }
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.parse().ok()?;
            let q: i64 = q.parse().ok()?;
            if q == 0 {
                return None;
            }
            Some(Value::Fin(Ratio::new(p, q)))
        }
        None => Some(Value::Fin(Ratio::from_integer(s.parse().ok()?))),
    }
}

pub fn rational_to_string(r: &Rational) -> String {
    use alloc::format;
    if r.is_integer() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorption() {
        let one = Value::from_int(1);
        assert_eq!(one + Value::Inf, Value::Inf);
        assert_eq!(Value::Inf + one, Value::Inf);
        assert_eq!(Value::Inf.scale(Rational::zero()), Value::ZERO);
        assert_eq!(Value::Inf.scale(Rational::from_integer(2)), Value::Inf);
    }

    #[test]
    fn ordering_and_display() {
        use alloc::string::ToString;
        assert!(Value::from_int(5) < Value::Inf);
        assert_eq!(Value::from_int(-2).to_string(), "-2");
        assert_eq!(Value::Fin(Rational::new(1, 2)).to_string(), "1/2");
        assert_eq!(parse_value("1/2"), Some(Value::Fin(Rational::new(1, 2))));
        assert_eq!(parse_value("inf"), Some(Value::Inf));
        assert_eq!(parse_value("3"), Some(Value::from_int(3)));
    }
}
