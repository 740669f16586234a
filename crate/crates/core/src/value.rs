//! Runtime value universe: reals, integers, booleans, enumeration
//! literals, maplet pairs, finite sets and finite sequences.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// A runtime value. Sets keep their members ordered and deduplicated
/// under [`cmp_values`]; integers and reals compare numerically, so a
/// set never holds both `1` and `1.0`.
#[derive(Debug, Clone)]
pub enum Value {
    Real(f64),
    Int(i64),
    Bool(bool),
    Enum { set: String, lit: String },
    /// Maplet pair `a ↦ b`; chains nest to the left.
    Pair(Box<Value>, Box<Value>),
    Set(Vec<Value>),
    Seq(Vec<Value>),
}

impl Value {
    pub fn enum_lit(set: &str, lit: &str) -> Value {
        Value::Enum {
            set: set.to_string(),
            lit: lit.to_string(),
        }
    }

    /// Build a left-nested pair chain from at least two components.
    pub fn tuple(items: Vec<Value>) -> Value {
        let mut it = items.into_iter();
        let first = it.next().expect("tuple needs at least one component");
        it.fold(first, |acc, v| Value::Pair(Box::new(acc), Box::new(v)))
    }

    /// Normalize a member list into set representation.
    pub fn set_from(mut items: Vec<Value>) -> Value {
        items.sort_by(cmp_values);
        items.dedup_by(|a, b| cmp_values(a, b) == Ordering::Equal);
        Value::Set(items)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(r) => Some(*r),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Flatten a left-nested pair chain: `((a ↦ b) ↦ c)` → `[a, b, c]`.
    pub fn flatten(&self) -> Vec<&Value> {
        match self {
            Value::Pair(a, b) => {
                let mut out = a.flatten();
                out.push(b);
                out
            }
            other => vec![other],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Real(_) => "real",
            Value::Int(_) => "integer",
            Value::Bool(_) => "boolean",
            Value::Enum { .. } => "enumeration literal",
            Value::Pair(..) => "tuple",
            Value::Set(_) => "set",
            Value::Seq(_) => "sequence",
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(r) => r.is_finite(),
            Value::Pair(a, b) => a.is_finite() && b.is_finite(),
            Value::Set(xs) | Value::Seq(xs) => xs.iter().all(Value::is_finite),
            _ => true,
        }
    }
}

fn kind_rank(v: &Value) -> u8 {
    match v {
        Value::Bool(_) => 0,
        Value::Int(_) | Value::Real(_) => 1,
        Value::Enum { .. } => 2,
        Value::Pair(..) => 3,
        Value::Set(_) => 4,
        Value::Seq(_) => 5,
    }
}

/// Total order used for set normalization and deterministic iteration.
/// Numeric values compare by magnitude regardless of representation.
pub fn cmp_values(a: &Value, b: &Value) -> Ordering {
    let (ra, rb) = (kind_rank(a), kind_rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a, b) {
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (x, y) if ra == 1 => {
            let (fx, fy) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            fx.partial_cmp(&fy).unwrap_or_else(|| fx.to_bits().cmp(&fy.to_bits()))
        }
        (Value::Enum { set: sa, lit: la }, Value::Enum { set: sb, lit: lb }) => {
            sa.cmp(sb).then_with(|| la.cmp(lb))
        }
        (Value::Pair(a1, a2), Value::Pair(b1, b2)) => {
            cmp_values(a1, b1).then_with(|| cmp_values(a2, b2))
        }
        (Value::Set(xs), Value::Set(ys)) | (Value::Seq(xs), Value::Seq(ys)) => {
            for (x, y) in xs.iter().zip(ys.iter()) {
                let c = cmp_values(x, y);
                if c != Ordering::Equal {
                    return c;
                }
            }
            xs.len().cmp(&ys.len())
        }
        _ => unreachable!("kind ranks matched"),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        cmp_values(self, other) == Ordering::Equal
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(r) => write!(f, "{r}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{}", if *b { "TRUE" } else { "FALSE" }),
            Value::Enum { lit, .. } => write!(f, "{lit}"),
            Value::Pair(..) => {
                let parts: Vec<String> = self.flatten().iter().map(|v| v.to_string()).collect();
                write!(f, "({})", parts.join(" ↦ "))
            }
            Value::Set(xs) => {
                if xs.is_empty() {
                    return write!(f, "∅");
                }
                let parts: Vec<String> = xs.iter().map(|v| v.to_string()).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Value::Seq(xs) => {
                let parts: Vec<String> = xs.iter().map(|v| v.to_string()).collect();
                write!(f, "⟨{}⟩", parts.join(", "))
            }
        }
    }
}

/// A snapshot of variable values at an instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Valuation {
    pub vars: BTreeMap<String, Value>,
    /// Real time of the snapshot, in seconds.
    pub t: f64,
}

impl Valuation {
    pub fn new(t: f64) -> Self {
        Valuation {
            vars: BTreeMap::new(),
            t,
        }
    }

    pub fn with(mut self, name: &str, v: Value) -> Self {
        self.vars.insert(name.to_string(), v);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_cross_representation_equality() {
        assert_eq!(Value::Int(12), Value::Real(12.0));
        assert_ne!(Value::Int(12), Value::Real(12.5));
    }

    #[test]
    fn sets_deduplicate_structurally() {
        let s = Value::set_from(vec![Value::Int(1), Value::Real(1.0), Value::Int(2)]);
        match &s {
            Value::Set(xs) => assert_eq!(xs.len(), 2),
            _ => unreachable!(),
        }
    }

    #[test]
    fn tuples_nest_left_and_flatten() {
        let t = Value::tuple(vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
        match &t {
            Value::Pair(a, _) => assert!(matches!(**a, Value::Pair(..))),
            _ => panic!("expected pair"),
        }
        assert_eq!(t.flatten().len(), 3);
        assert_eq!(t.to_string(), "(1 ↦ 2 ↦ 3)");
    }

    #[test]
    fn display_forms() {
        assert_eq!(Value::set_from(vec![]).to_string(), "∅");
        assert_eq!(
            Value::Seq(vec![Value::Int(12), Value::Int(30)]).to_string(),
            "⟨12, 30⟩"
        );
    }
}
