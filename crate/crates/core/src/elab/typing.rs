//! Semantic types derived from typing invariants.

use crate::ast::{BinOp, Expr};
use crate::value::Value;

/// Semantic type of a variable or constant.
#[derive(Debug, Clone, PartialEq)]
pub enum SemType {
    Real,
    Nat,
    Bool,
    /// Element of a named carrier set.
    Enum(String),
    /// Element of an explicit integer set such as `{1, 2}`.
    IntIn(Vec<i64>),
    Tuple(Vec<SemType>),
    SetOf(Box<SemType>),
    SeqOf(Box<SemType>),
}

/// Interpret an expression as a type, given the carrier sets in scope.
/// Returns None when the expression is not type-shaped, in which case
/// the enclosing invariant is monitored instead of consumed.
pub fn type_from_expr(e: &Expr, carrier_sets: &[String]) -> Option<SemType> {
    match e {
        Expr::Ident(n) => match n.as_str() {
            "ℝ" => Some(SemType::Real),
            "ℕ" => Some(SemType::Nat),
            "BOOL" => Some(SemType::Bool),
            other if carrier_sets.iter().any(|s| s == other) => {
                Some(SemType::Enum(other.to_string()))
            }
            _ => None,
        },
        Expr::Apply(f, args) if f == "ℙ" && args.len() == 1 => {
            Some(SemType::SetOf(Box::new(type_from_expr(&args[0], carrier_sets)?)))
        }
        Expr::Apply(f, args) if f == "seq" && args.len() == 1 => {
            Some(SemType::SeqOf(Box::new(type_from_expr(&args[0], carrier_sets)?)))
        }
        Expr::Binary(BinOp::Mul, ..) => {
            // left-nested × chain is a product type
            let mut parts = Vec::new();
            fn flatten<'a>(e: &'a Expr, parts: &mut Vec<&'a Expr>) {
                if let Expr::Binary(BinOp::Mul, a, b) = e {
                    flatten(a, parts);
                    parts.push(b);
                } else {
                    parts.push(e);
                }
            }
            let mut raw = Vec::new();
            flatten(e, &mut raw);
            for p in raw {
                parts.push(type_from_expr(p, carrier_sets)?);
            }
            Some(SemType::Tuple(parts))
        }
        Expr::SetLit(items) => {
            let mut ints = Vec::new();
            for i in items {
                match i {
                    Expr::Num(n) if n.is_integer() => ints.push(n.num as i64),
                    _ => return None,
                }
            }
            Some(SemType::IntIn(ints))
        }
        _ => None,
    }
}

/// Structural conformance of a value to a semantic type. Integers
/// conform to `Real`.
pub fn conforms(v: &Value, t: &SemType) -> bool {
    match (t, v) {
        (SemType::Real, x) => x.as_f64().is_some(),
        (SemType::Nat, Value::Int(i)) => *i >= 0,
        (SemType::Nat, Value::Real(r)) => r.fract() == 0.0 && *r >= 0.0,
        (SemType::Nat, _) => false,
        (SemType::Bool, Value::Bool(_)) => true,
        (SemType::Bool, _) => false,
        (SemType::Enum(s), Value::Enum { set, .. }) => set == s,
        (SemType::Enum(_), _) => false,
        (SemType::IntIn(list), x) => match x.as_f64() {
            Some(f) if f.fract() == 0.0 => list.contains(&(f as i64)),
            _ => false,
        },
        (SemType::Tuple(ts), pair @ Value::Pair(..)) => {
            let flat = pair.flatten();
            flat.len() == ts.len() && flat.iter().zip(ts).all(|(v, t)| conforms(v, t))
        }
        (SemType::Tuple(_), _) => false,
        (SemType::SetOf(t), Value::Set(xs)) => xs.iter().all(|x| conforms(x, t)),
        (SemType::SetOf(_), _) => false,
        (SemType::SeqOf(t), Value::Seq(xs)) => xs.iter().all(|x| conforms(x, t)),
        (SemType::SeqOf(_), _) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_unit, SourceUnit};

    fn ty(src: &str) -> Option<SemType> {
        let text = format!("CONTEXT C\n  THEOREMS\n    x ∈ {src}\nEND\n");
        let r = parse_unit(&SourceUnit::new("x.heb", text));
        let thm = r.constructs[0].theorems().next().unwrap().clone();
        let Expr::Binary(BinOp::In, _, rhs) = thm else {
            panic!()
        };
        type_from_expr(&rhs, &["HAZTYPE".to_string(), "CTRLSTATE".to_string()])
    }

    #[test]
    fn hazard_set_type() {
        let t = ty("ℙ(HAZTYPE × ℝ × ℝ × ℝ × ℝ)").unwrap();
        match &t {
            SemType::SetOf(inner) => match &**inner {
                SemType::Tuple(parts) => {
                    assert_eq!(parts.len(), 5);
                    assert_eq!(parts[0], SemType::Enum("HAZTYPE".into()));
                    assert_eq!(parts[4], SemType::Real);
                }
                _ => panic!("expected tuple"),
            },
            _ => panic!("expected set"),
        }
        let hz = Value::tuple(vec![
            Value::enum_lit("HAZTYPE", "CYL"),
            Value::Real(5.0),
            Value::Real(8.0),
            Value::Real(1.5),
            Value::Real(3.0),
        ]);
        assert!(conforms(&Value::set_from(vec![hz]), &t));
    }

    #[test]
    fn id_subset_type() {
        let t = ty("ℙ({1, 2})").unwrap();
        assert!(conforms(&Value::set_from(vec![Value::Int(1)]), &t));
        assert!(!conforms(&Value::set_from(vec![Value::Int(3)]), &t));
    }

    #[test]
    fn seq_type_and_non_types() {
        assert!(matches!(ty("seq(ℝ)"), Some(SemType::SeqOf(_))));
        assert!(ty("hazards ∪ x").is_none());
    }
}
