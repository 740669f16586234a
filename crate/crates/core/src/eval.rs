//! Expression and guard evaluation over runtime valuations.
//!
//! Evaluation is pure and total on type-correct input. Conjunction and
//! disjunction use Kleene semantics: a decided operand wins even when
//! the other side fails to evaluate, which makes guards like
//! `x = first(s)[1] ∧ s ≠ ⟨⟩` safe when `s` is empty.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ast::{BinOp, Expr, UnaryOp};
use crate::builtins::Builtins;
use crate::value::{cmp_values, Valuation, Value};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unknown identifier `{0}`")]
    UnknownIdent(String),
    #[error("type mismatch in {context}: expected {expected}, got {got}")]
    Type {
        context: String,
        expected: &'static str,
        got: String,
    },
    #[error("{0} of empty sequence")]
    EmptySeq(&'static str),
    #[error("division by zero")]
    DivByZero,
    #[error("unknown built-in `{0}`")]
    UnknownBuiltin(String),
    #[error("built-in `{name}` expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("integer overflow")]
    Overflow,
    #[error("{0}")]
    Unsupported(String),
}

pub type EvalResult = Result<Value, EvalError>;

/// Read-only variable environment used by the evaluator.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<&Value>;
}

impl Env for Valuation {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }
}

impl Env for BTreeMap<String, Value> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

/// Two environments layered, the first one winning.
pub struct Layered<'a, A: Env + ?Sized, B: Env + ?Sized>(pub &'a A, pub &'a B);

impl<'a, A: Env + ?Sized, B: Env + ?Sized> Env for Layered<'a, A, B> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.0.lookup(name).or_else(|| self.1.lookup(name))
    }
}

/// Evaluate an expression. All free identifiers must be bound by `env`.
pub fn eval(e: &Expr, env: &dyn Env, builtins: &Builtins) -> EvalResult {
    match e {
        Expr::Num(n) => Ok(num_value(n)),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::EmptySet => Ok(Value::Set(vec![])),
        Expr::Ident(name) => env
            .lookup(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownIdent(name.clone())),
        Expr::Unary(UnaryOp::Neg, inner) => match eval(inner, env, builtins)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
            Value::Real(r) => Ok(Value::Real(-r)),
            other => Err(type_err("unary −", "number", &other)),
        },
        Expr::Unary(UnaryOp::Not, inner) => match eval(inner, env, builtins)? {
            Value::Bool(b) => Ok(Value::Bool(!b)),
            other => Err(type_err("¬", "boolean", &other)),
        },
        Expr::Binary(op, a, b) => eval_binary(*op, a, b, env, builtins),
        Expr::SetLit(es) => {
            let items = es
                .iter()
                .map(|x| eval(x, env, builtins))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::set_from(items))
        }
        Expr::SeqLit(es) => {
            let items = es
                .iter()
                .map(|x| eval(x, env, builtins))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Seq(items))
        }
        Expr::Interval(..) => Err(EvalError::Unsupported(
            "interval is only meaningful under ∈ / ∉".into(),
        )),
        Expr::QuantUnion { .. } => Err(EvalError::Unsupported(
            "bounded union is only meaningful under ∈ / ∉".into(),
        )),
        Expr::Apply(name, args) => {
            // sequence application: s(i) indexes a sequence-valued variable
            if let Some(v) = env.lookup(name) {
                if let Value::Seq(items) = v {
                    let items = items.clone();
                    if args.len() != 1 {
                        return Err(EvalError::Arity {
                            name: name.clone(),
                            expected: 1,
                            got: args.len(),
                        });
                    }
                    let idx = eval(&args[0], env, builtins)?;
                    return index_seq(&items, &idx);
                }
            }
            let vals = args
                .iter()
                .map(|x| eval(x, env, builtins))
                .collect::<Result<Vec<_>, _>>()?;
            builtins.call(name, &vals)
        }
        Expr::Index(base, idx) => {
            let b = eval(base, env, builtins)?;
            let i = eval(idx, env, builtins)?;
            match b {
                Value::Seq(items) => index_seq(&items, &i),
                pair @ Value::Pair(..) => {
                    let flat = pair.flatten();
                    let k = int_index(&i)?;
                    if k < 1 || k as usize > flat.len() {
                        return Err(EvalError::IndexOutOfRange {
                            index: k,
                            len: flat.len(),
                        });
                    }
                    Ok(flat[k as usize - 1].clone())
                }
                other => Err(type_err("indexing", "sequence or tuple", &other)),
            }
        }
    }
}

/// Evaluate a predicate to a boolean.
pub fn eval_pred(e: &Expr, env: &dyn Env, builtins: &Builtins) -> Result<bool, EvalError> {
    match eval(e, env, builtins)? {
        Value::Bool(b) => Ok(b),
        other => Err(type_err("predicate", "boolean", &other)),
    }
}

/// Evaluate a guard with the TIME variable bound to `t`.
pub fn eval_guard(
    g: &Expr,
    v: &Valuation,
    time_var: Option<&str>,
    t: f64,
    builtins: &Builtins,
) -> Result<bool, EvalError> {
    match time_var {
        Some(tv) => {
            let mut time_env = BTreeMap::new();
            time_env.insert(tv.to_string(), Value::Real(t));
            eval_pred(g, &Layered(&time_env, v), builtins)
        }
        None => eval_pred(g, v, builtins),
    }
}

fn num_value(n: &crate::ast::Rational) -> Value {
    if n.is_integer() && n.num >= i64::MIN as i128 && n.num <= i64::MAX as i128 {
        Value::Int(n.num as i64)
    } else {
        Value::Real(n.to_f64())
    }
}

fn type_err(context: &str, expected: &'static str, got: &Value) -> EvalError {
    EvalError::Type {
        context: context.to_string(),
        expected,
        got: got.kind_name().to_string(),
    }
}

fn int_index(v: &Value) -> Result<i64, EvalError> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Real(r) if r.fract() == 0.0 => Ok(*r as i64),
        other => Err(type_err("index", "integer", other)),
    }
}

fn index_seq(items: &[Value], idx: &Value) -> EvalResult {
    let k = int_index(idx)?;
    if k < 1 || k as usize > items.len() {
        return Err(EvalError::IndexOutOfRange {
            index: k,
            len: items.len(),
        });
    }
    Ok(items[k as usize - 1].clone())
}

fn eval_binary(op: BinOp, a: &Expr, b: &Expr, env: &dyn Env, builtins: &Builtins) -> EvalResult {
    match op {
        BinOp::And => {
            let la = eval_bool(a, env, builtins);
            let lb = eval_bool(b, env, builtins);
            kleene_and(la, lb)
        }
        BinOp::Or => {
            let la = eval_bool(a, env, builtins);
            let lb = eval_bool(b, env, builtins);
            kleene_or(la, lb)
        }
        BinOp::Implies => {
            let la = eval_bool(a, env, builtins);
            let lb = eval_bool(b, env, builtins);
            kleene_or(la.map(|x| !x), lb)
        }
        BinOp::In => Ok(Value::Bool(eval_membership(a, b, env, builtins)?)),
        BinOp::NotIn => Ok(Value::Bool(!eval_membership(a, b, env, builtins)?)),
        _ => {
            let va = eval(a, env, builtins)?;
            let vb = eval(b, env, builtins)?;
            eval_binary_values(op, va, vb)
        }
    }
}

fn eval_bool(e: &Expr, env: &dyn Env, builtins: &Builtins) -> Result<bool, EvalError> {
    eval_pred(e, env, builtins)
}

fn kleene_and(a: Result<bool, EvalError>, b: Result<bool, EvalError>) -> EvalResult {
    match (&a, &b) {
        (Ok(false), _) | (_, Ok(false)) => Ok(Value::Bool(false)),
        _ => Ok(Value::Bool(a? && b?)),
    }
}

fn kleene_or(a: Result<bool, EvalError>, b: Result<bool, EvalError>) -> EvalResult {
    match (&a, &b) {
        (Ok(true), _) | (_, Ok(true)) => Ok(Value::Bool(true)),
        _ => Ok(Value::Bool(a? || b?)),
    }
}

/// Membership with lazy right-hand sides so closed intervals and bounded
/// unions need not be materialized.
fn eval_membership(
    item: &Expr,
    collection: &Expr,
    env: &dyn Env,
    builtins: &Builtins,
) -> Result<bool, EvalError> {
    match collection {
        Expr::Interval(lo, hi) => {
            let x = eval_f64(item, env, builtins)?;
            let lo = eval_f64(lo, env, builtins)?;
            let hi = eval_f64(hi, env, builtins)?;
            Ok(lo <= x && x <= hi)
        }
        Expr::QuantUnion { var, domain, body } => {
            let dom = eval(domain, env, builtins)?;
            let candidates = match dom {
                Value::Set(xs) => xs,
                Value::Seq(xs) => xs,
                other => return Err(type_err("⋃ domain", "finite set", &other)),
            };
            for c in candidates {
                let mut bind = BTreeMap::new();
                bind.insert(var.clone(), c);
                let inner = Layered(&bind, env);
                if eval_membership(item, body, &inner, builtins)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        _ => {
            let x = eval(item, env, builtins)?;
            match eval(collection, env, builtins)? {
                Value::Set(xs) => Ok(xs.iter().any(|y| *y == x)),
                // `x ∈ ℝ` style checks appear in theorems
                other => {
                    if let Expr::Ident(n) = collection {
                        if n == "ℝ" {
                            return Ok(x.as_f64().is_some());
                        }
                        if n == "ℕ" {
                            return Ok(matches!(x, Value::Int(i) if i >= 0)
                                || matches!(x, Value::Real(r) if r.fract() == 0.0 && r >= 0.0));
                        }
                    }
                    Err(type_err("∈", "set", &other))
                }
            }
        }
    }
}

fn eval_f64(e: &Expr, env: &dyn Env, builtins: &Builtins) -> Result<f64, EvalError> {
    let v = eval(e, env, builtins)?;
    v.as_f64().ok_or_else(|| type_err("numeric context", "number", &v))
}

fn eval_binary_values(op: BinOp, a: Value, b: Value) -> EvalResult {
    use std::cmp::Ordering;
    match op {
        BinOp::Eq => Ok(Value::Bool(a == b)),
        BinOp::Ne => Ok(Value::Bool(a != b)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let (x, y) = match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => (x, y),
                _ => {
                    return Err(EvalError::Type {
                        context: "comparison".into(),
                        expected: "numbers",
                        got: format!("{} and {}", a.kind_name(), b.kind_name()),
                    })
                }
            };
            let r = match op {
                BinOp::Lt => x < y,
                BinOp::Le => x <= y,
                BinOp::Gt => x > y,
                BinOp::Ge => x >= y,
                _ => unreachable!(),
            };
            Ok(Value::Bool(r))
        }
        BinOp::Maplet => Ok(Value::Pair(Box::new(a), Box::new(b))),
        BinOp::Union => match (a, b) {
            (Value::Set(mut xs), Value::Set(ys)) => {
                xs.extend(ys);
                Ok(Value::set_from(xs))
            }
            (a, b) => Err(EvalError::Type {
                context: "∪".into(),
                expected: "sets",
                got: format!("{} and {}", a.kind_name(), b.kind_name()),
            }),
        },
        BinOp::Concat => match (a, b) {
            (Value::Seq(mut xs), Value::Seq(ys)) => {
                xs.extend(ys);
                Ok(Value::Seq(xs))
            }
            (a, b) => Err(EvalError::Type {
                context: "^".into(),
                expected: "sequences",
                got: format!("{} and {}", a.kind_name(), b.kind_name()),
            }),
        },
        BinOp::Sub => match (&a, &b) {
            (Value::Set(xs), Value::Set(ys)) => {
                let out: Vec<Value> = xs
                    .iter()
                    .filter(|x| !ys.iter().any(|y| cmp_values(x, y) == Ordering::Equal))
                    .cloned()
                    .collect();
                Ok(Value::Set(out))
            }
            _ => numeric_arith(op, a, b),
        },
        BinOp::Add | BinOp::Mul | BinOp::Div => numeric_arith(op, a, b),
        BinOp::And | BinOp::Or | BinOp::Implies | BinOp::In | BinOp::NotIn => {
            unreachable!("handled before value evaluation")
        }
    }
}

fn numeric_arith(op: BinOp, a: Value, b: Value) -> EvalResult {
    if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
        // exact integer arithmetic except for division
        match op {
            BinOp::Add => return x.checked_add(*y).map(Value::Int).ok_or(EvalError::Overflow),
            BinOp::Sub => return x.checked_sub(*y).map(Value::Int).ok_or(EvalError::Overflow),
            BinOp::Mul => return x.checked_mul(*y).map(Value::Int).ok_or(EvalError::Overflow),
            BinOp::Div => {}
            _ => unreachable!(),
        }
    }
    let (x, y) = match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(EvalError::Type {
                context: "arithmetic".into(),
                expected: "numbers",
                got: format!("{} and {}", a.kind_name(), b.kind_name()),
            })
        }
    };
    match op {
        BinOp::Add => Ok(Value::Real(x + y)),
        BinOp::Sub => Ok(Value::Real(x - y)),
        BinOp::Mul => Ok(Value::Real(x * y)),
        BinOp::Div => {
            if y == 0.0 {
                Err(EvalError::DivByZero)
            } else {
                Ok(Value::Real(x / y))
            }
        }
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_unit, SourceUnit};

    fn parse_expr(src: &str) -> Expr {
        // wrap in a theorem so the expression parser does the work
        let text = format!("CONTEXT C\n  THEOREMS\n    {src}\nEND\n");
        let r = parse_unit(&SourceUnit::new("x.heb", text));
        assert!(!r.diagnostics.iter().any(|d| d.is_error()), "{:?}", r.diagnostics);
        let e = r.constructs[0].theorems().next().unwrap().clone();
        e
    }

    fn ev(src: &str, env: &Valuation) -> Value {
        eval(&parse_expr(src), env, &Builtins::standard()).unwrap()
    }

    #[test]
    fn head_of_initsched() {
        let env = Valuation::new(0.0).with(
            "INITSCHED",
            Value::Seq(vec![Value::Int(12), Value::Int(30), Value::Int(55)]),
        );
        assert_eq!(ev("head(INITSCHED)", &env), Value::Int(12));
        assert_eq!(
            ev("tail(INITSCHED)", &env),
            Value::Seq(vec![Value::Int(30), Value::Int(55)])
        );
        assert_eq!(ev("last(INITSCHED)", &env), Value::Int(55));
        assert_eq!(ev("INITSCHED(2)", &env), Value::Int(30));
    }

    #[test]
    fn empty_union_is_empty() {
        let env = Valuation::new(0.0);
        assert_eq!(ev("∅ ∪ ∅", &env), Value::Set(vec![]));
    }

    #[test]
    fn increasing_matches_pairwise_oracle() {
        let env = Valuation::new(0.0);
        assert_eq!(ev("increasing(⟨12, 30, 55⟩)", &env), Value::Bool(true));
        assert_eq!(ev("increasing(⟨30, 12⟩)", &env), Value::Bool(false));
        assert_eq!(ev("increasing(⟨⟩)", &env), Value::Bool(true));
    }

    #[test]
    fn dispatch_guard_example() {
        let env = Valuation::new(0.05)
            .with("mode", Value::enum_lit("CTRLSTATE", "DISPATCH"))
            .with("DISPATCH", Value::enum_lit("CTRLSTATE", "DISPATCH"))
            .with(
                "drones2comd",
                Value::set_from(vec![Value::Int(1), Value::Int(2)]),
            )
            .with("δ", Value::Real(0.1));
        let g = parse_expr("mode = DISPATCH ∧ 1 ∈ drones2comd ∧ t < δ");
        let r = eval_guard(&g, &env, Some("t"), 0.05, &Builtins::standard()).unwrap();
        assert!(r);
    }

    #[test]
    fn trivial_closed_guard() {
        let env = Valuation::new(0.0);
        let g = parse_expr("0 < 1");
        assert!(eval_guard(&g, &env, None, 0.0, &Builtins::standard()).unwrap());
    }

    #[test]
    fn kleene_conjunction_tolerates_failing_conjunct() {
        // x = first(s)[1] ∧ s ≠ ⟨⟩ with s empty: first(⟨⟩) fails but the
        // second conjunct decides
        let env = Valuation::new(0.0)
            .with("s", Value::Seq(vec![]))
            .with("x", Value::Real(1.0));
        let g = parse_expr("x = first(s)[1] ∧ s ≠ ⟨⟩");
        assert!(!eval_guard(&g, &env, None, 0.0, &Builtins::standard()).unwrap());
    }

    #[test]
    fn interval_and_bounded_union_membership() {
        let env = Valuation::new(0.0)
            .with(
                "SCHED",
                Value::Seq(vec![Value::Int(12), Value::Int(30), Value::Int(55)]),
            )
            .with("δ", Value::Real(0.1));
        let inside = parse_expr("12.05 ∈ ⋃(ii • ii ∈ dom(SCHED) | [SCHED(ii) .. SCHED(ii) + δ])");
        let outside = parse_expr("13 ∈ ⋃(ii • ii ∈ dom(SCHED) | [SCHED(ii) .. SCHED(ii) + δ])");
        let b = Builtins::standard();
        assert_eq!(eval(&inside, &env, &b).unwrap(), Value::Bool(true));
        assert_eq!(eval(&outside, &env, &b).unwrap(), Value::Bool(false));
    }

    #[test]
    fn set_difference_and_arith() {
        let env = Valuation::new(0.0)
            .with(
                "NSet",
                Value::set_from(vec![
                    Value::enum_lit("NSet", "aa"),
                    Value::enum_lit("NSet", "bb"),
                ]),
            )
            .with("aa", Value::enum_lit("NSet", "aa"));
        let r = ev("NSet − {aa}", &env);
        match r {
            Value::Set(xs) => {
                assert_eq!(xs.len(), 1);
                assert_eq!(xs[0], Value::enum_lit("NSet", "bb"));
            }
            _ => panic!(),
        }
        assert_eq!(ev("3 − 1", &env), Value::Int(2));
        assert_eq!(ev("1 / 2", &env), Value::Real(0.5));
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let env = Valuation::new(0.0);
        let e = parse_expr("1 / 0");
        assert_eq!(
            eval(&e, &env, &Builtins::standard()),
            Err(EvalError::DivByZero)
        );
    }
}
