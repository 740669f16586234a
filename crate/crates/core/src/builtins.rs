//! Built-in function registry.
//!
//! The standard registry covers the sequence/set helpers of the
//! notation; domain-specific functions (trajectory planners) register
//! themselves on top.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::eval::{EvalError, EvalResult};
use crate::value::Value;

type BuiltinFn = Arc<dyn Fn(&[Value]) -> EvalResult + Send + Sync>;

#[derive(Clone)]
struct Builtin {
    /// Expected argument count; None allows any arity ≥ 1.
    arity: Option<usize>,
    f: BuiltinFn,
}

/// Named pure functions callable from expressions.
#[derive(Clone, Default)]
pub struct Builtins {
    map: BTreeMap<String, Builtin>,
}

impl Builtins {
    /// Registry with the standard sequence/set helpers. `head`/`first`
    /// and `tail`/`rest` are synonymous pairs.
    pub fn standard() -> Self {
        let mut b = Builtins::default();
        b.register("head", Some(1), seq_head);
        b.register("first", Some(1), seq_head);
        b.register("tail", Some(1), seq_tail);
        b.register("rest", Some(1), seq_tail);
        b.register("last", Some(1), |args| {
            as_seq(&args[0], "last")?
                .last()
                .cloned()
                .ok_or(EvalError::EmptySeq("last"))
        });
        b.register("front", Some(1), |args| {
            let xs = as_seq(&args[0], "front")?;
            if xs.is_empty() {
                return Err(EvalError::EmptySeq("front"));
            }
            Ok(Value::Seq(xs[..xs.len() - 1].to_vec()))
        });
        b.register("size", Some(1), |args| match &args[0] {
            Value::Seq(xs) => Ok(Value::Int(xs.len() as i64)),
            Value::Set(xs) => Ok(Value::Int(xs.len() as i64)),
            other => Err(EvalError::Type {
                context: "size".into(),
                expected: "sequence or set",
                got: other.kind_name().to_string(),
            }),
        });
        b.register("nonempty", Some(1), |args| {
            Ok(Value::Bool(!as_seq(&args[0], "nonempty")?.is_empty()))
        });
        b.register("increasing", Some(1), |args| {
            let xs = as_seq(&args[0], "increasing")?;
            let mut nums = Vec::with_capacity(xs.len());
            for x in xs {
                nums.push(x.as_f64().ok_or_else(|| EvalError::Type {
                    context: "increasing".into(),
                    expected: "number",
                    got: x.kind_name().to_string(),
                })?);
            }
            Ok(Value::Bool(nums.windows(2).all(|w| w[0] < w[1])))
        });
        b.register("dom", Some(1), |args| {
            let xs = as_seq(&args[0], "dom")?;
            Ok(Value::Set(
                (1..=xs.len() as i64).map(Value::Int).collect(),
            ))
        });
        b.register("partition", None, |args| {
            if args.len() < 2 {
                return Err(EvalError::Arity {
                    name: "partition".into(),
                    expected: 2,
                    got: args.len(),
                });
            }
            let whole = match &args[0] {
                Value::Set(xs) => xs.clone(),
                other => {
                    return Err(EvalError::Type {
                        context: "partition".into(),
                        expected: "set",
                        got: other.kind_name().to_string(),
                    })
                }
            };
            let mut union: Vec<Value> = Vec::new();
            let mut count = 0usize;
            for block in &args[1..] {
                match block {
                    Value::Set(xs) => {
                        count += xs.len();
                        union.extend(xs.iter().cloned());
                    }
                    other => {
                        return Err(EvalError::Type {
                            context: "partition".into(),
                            expected: "set",
                            got: other.kind_name().to_string(),
                        })
                    }
                }
            }
            let union = match Value::set_from(union) {
                Value::Set(xs) => xs,
                _ => unreachable!(),
            };
            let disjoint = union.len() == count;
            Ok(Value::Bool(disjoint && union == whole))
        });
        b
    }

    pub fn register(
        &mut self,
        name: &str,
        arity: Option<usize>,
        f: impl Fn(&[Value]) -> EvalResult + Send + Sync + 'static,
    ) {
        self.map.insert(
            name.to_string(),
            Builtin {
                arity,
                f: Arc::new(f),
            },
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    /// Dispatch a call. Arity is checked before the function runs.
    pub fn call(&self, name: &str, args: &[Value]) -> EvalResult {
        let b = self
            .map
            .get(name)
            .ok_or_else(|| EvalError::UnknownBuiltin(name.to_string()))?;
        if let Some(expected) = b.arity {
            if args.len() != expected {
                return Err(EvalError::Arity {
                    name: name.to_string(),
                    expected,
                    got: args.len(),
                });
            }
        }
        (b.f)(args)
    }
}

fn as_seq<'a>(v: &'a Value, context: &'static str) -> Result<&'a [Value], EvalError> {
    match v {
        Value::Seq(xs) => Ok(xs),
        other => Err(EvalError::Type {
            context: context.into(),
            expected: "sequence",
            got: other.kind_name().to_string(),
        }),
    }
}

fn seq_head(args: &[Value]) -> EvalResult {
    as_seq(&args[0], "head")?
        .first()
        .cloned()
        .ok_or(EvalError::EmptySeq("head"))
}

fn seq_tail(args: &[Value]) -> EvalResult {
    let xs = as_seq(&args[0], "tail")?;
    if xs.is_empty() {
        return Err(EvalError::EmptySeq("tail"));
    }
    Ok(Value::Seq(xs[1..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonempty_of_empty_is_false() {
        let b = Builtins::standard();
        assert_eq!(
            b.call("nonempty", &[Value::Seq(vec![])]).unwrap(),
            Value::Bool(false)
        );
    }

    #[test]
    fn rest_drops_the_first_element() {
        let b = Builtins::standard();
        let s = Value::Seq(vec![Value::enum_lit("X", "a"), Value::enum_lit("X", "b")]);
        assert_eq!(
            b.call("rest", &[s]).unwrap(),
            Value::Seq(vec![Value::enum_lit("X", "b")])
        );
    }

    #[test]
    fn tail_matches_index_shift_oracle() {
        let b = Builtins::standard();
        let xs: Vec<Value> = [12, 30, 55].iter().map(|&i| Value::Int(i)).collect();
        let tail = b.call("tail", &[Value::Seq(xs.clone())]).unwrap();
        let expected = Value::Seq((1..xs.len()).map(|i| xs[i].clone()).collect());
        assert_eq!(tail, expected);
    }

    #[test]
    fn unknown_builtin_and_arity_errors() {
        let b = Builtins::standard();
        assert!(matches!(
            b.call("definitelyNotABuiltin", &[]),
            Err(EvalError::UnknownBuiltin(_))
        ));
        assert!(matches!(
            b.call("head", &[]),
            Err(EvalError::Arity { .. })
        ));
    }

    #[test]
    fn partition_checks_cover_and_disjointness() {
        let b = Builtins::standard();
        let sq = Value::enum_lit("HAZTYPE", "SQ");
        let cyl = Value::enum_lit("HAZTYPE", "CYL");
        let whole = Value::set_from(vec![sq.clone(), cyl.clone()]);
        let ok = b
            .call(
                "partition",
                &[whole.clone(), Value::set_from(vec![sq.clone()]), Value::set_from(vec![cyl])],
            )
            .unwrap();
        assert_eq!(ok, Value::Bool(true));
        let bad = b
            .call(
                "partition",
                &[whole, Value::set_from(vec![sq.clone()]), Value::set_from(vec![sq])],
            )
            .unwrap();
        assert_eq!(bad, Value::Bool(false));
    }
}
