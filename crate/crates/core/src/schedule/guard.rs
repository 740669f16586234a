//! Guard analysis: splitting a conjunction into the discrete part,
//! analytic time atoms and continuous residual atoms.
//!
//! Time comparisons compile into exact scheduled points and window
//! bounds, bypassing bisection; atoms over pliant variables and clocks
//! become residual watches for the integrator.

use crate::ast::{BinOp, Expr};
use crate::ode::Residual;

/// Classified conjuncts of one (compiled) guard.
#[derive(Debug, Clone, Default)]
pub struct GuardInfo {
    /// Atoms free of time/pliant dependencies; constant during episodes.
    pub discrete: Vec<Expr>,
    /// `t = c`: the anchor expressions `c` (mode-constant).
    pub time_eqs: Vec<Expr>,
    /// Lower bounds `t > c` (`true` = strict) from time atoms.
    pub time_los: Vec<(Expr, bool)>,
    /// Upper bounds `t < c`.
    pub time_his: Vec<(Expr, bool)>,
    /// Residual atoms over continuous quantities.
    pub continuous: Vec<Residual>,
    /// Anything non-conjunctive or unclassifiable; such guards are only
    /// re-evaluated at settle instants.
    pub opaque: Vec<Expr>,
}

impl GuardInfo {
    pub fn has_time_window(&self) -> bool {
        !(self.time_los.is_empty() && self.time_his.is_empty() && self.time_eqs.is_empty())
    }
}

fn mentions(e: &Expr, pred: &dyn Fn(&str) -> bool) -> bool {
    e.free_identifiers().iter().any(|n| pred(n))
}

/// Classify a guard. `is_continuous` answers whether an identifier is a
/// pliant variable or clock; `time_var` is the global time name.
pub fn classify(
    guard: Option<&Expr>,
    is_continuous: &dyn Fn(&str) -> bool,
    time_var: Option<&str>,
) -> GuardInfo {
    let mut info = GuardInfo::default();
    let Some(guard) = guard else {
        return info;
    };
    let is_time = |n: &str| Some(n) == time_var;
    for atom in guard.conjuncts() {
        let has_time = mentions(atom, &is_time);
        let has_cont = mentions(atom, is_continuous);
        if !has_time && !has_cont {
            info.discrete.push(atom.clone());
            continue;
        }
        let Expr::Binary(op, lhs, rhs) = atom else {
            info.opaque.push(atom.clone());
            continue;
        };
        if !op.is_comparison() {
            info.opaque.push(atom.clone());
            continue;
        }
        if has_time && !has_cont {
            if let Some((bound, op_on_t)) = normalize_time_atom(*op, lhs, rhs, &is_time) {
                match op_on_t {
                    BinOp::Eq => info.time_eqs.push(bound),
                    BinOp::Gt => info.time_los.push((bound, true)),
                    BinOp::Ge => info.time_los.push((bound, false)),
                    BinOp::Lt => info.time_his.push((bound, true)),
                    BinOp::Le => info.time_his.push((bound, false)),
                    _ => info.opaque.push(atom.clone()),
                }
                continue;
            }
            // time mentioned in a shape we cannot solve analytically:
            // watch it as a residual (time is linear in time)
        }
        if !matches!(op, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge) {
            info.opaque.push(atom.clone());
            continue;
        }
        // continuous residual: keep a snappable variable on the left
        let mirror = |op: BinOp| match op {
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            other => other,
        };
        let (l, r, o, snap_var) = if let Some(v) = snap_candidate(lhs, rhs, is_continuous) {
            ((**lhs).clone(), (**rhs).clone(), *op, Some(v))
        } else if let Some(v) = snap_candidate(rhs, lhs, is_continuous) {
            ((**rhs).clone(), (**lhs).clone(), mirror(*op), Some(v))
        } else {
            ((**lhs).clone(), (**rhs).clone(), *op, None)
        };
        info.continuous.push(Residual {
            lhs: l,
            rhs: r,
            op: o,
            snap_var,
        });
    }
    info
}

/// `v = E` with `v` continuous and `E` continuous-free: snap `v` to `E`
/// at the crossing.
fn snap_candidate(
    var_side: &Expr,
    expr_side: &Expr,
    is_continuous: &dyn Fn(&str) -> bool,
) -> Option<String> {
    match var_side {
        Expr::Ident(v) if is_continuous(v) && !mentions(expr_side, is_continuous) => {
            Some(v.clone())
        }
        _ => None,
    }
}

/// Solve a comparison for `t`. Handles `t ⋈ E`, `E ⋈ t`,
/// `(t − m) ⋈ E` and `E ⋈ (t − m)` with `m`, `E` time-free.
fn normalize_time_atom(
    op: BinOp,
    lhs: &Expr,
    rhs: &Expr,
    is_time: &dyn Fn(&str) -> bool,
) -> Option<(Expr, BinOp)> {
    let time_side = |e: &Expr| -> Option<Option<Expr>> {
        // Some(None): bare t; Some(Some(m)): t − m; None: not a time side
        match e {
            Expr::Ident(n) if is_time(n) => Some(None),
            Expr::Binary(BinOp::Sub, a, b) => match (&**a, &**b) {
                (Expr::Ident(n), m) if is_time(n) && !mentions(m, is_time) => {
                    Some(Some(m.clone()))
                }
                _ => None,
            },
            _ => None,
        }
    };
    let flip = |op: BinOp| match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    };
    // (t-side, other, op as if t-side ⋈ other)
    let (shift, other, op_on_t) = if let Some(shift) = time_side(lhs) {
        if mentions(rhs, is_time) {
            return None;
        }
        (shift, rhs.clone(), op)
    } else if let Some(shift) = time_side(rhs) {
        if mentions(lhs, is_time) {
            return None;
        }
        (shift, lhs.clone(), flip(op))
    } else {
        return None;
    };
    // t − m ⋈ E  ⟺  t ⋈ E + m
    let bound = match shift {
        None => other,
        Some(m) => Expr::bin(BinOp::Add, other, m),
    };
    Some((bound, op_on_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_unit, SourceUnit};

    fn guard(src: &str) -> Expr {
        let text =
            format!("MACHINE M\n  EVENTS\n    E\n      STATUS ordinary\n      WHEN {src}\n    END\n  END\n");
        let r = parse_unit(&SourceUnit::new("g.heb", text));
        assert!(!r.has_errors(), "{:?}", r.diagnostics);
        let g = r.constructs[0]
            .events()
            .next()
            .unwrap()
            .when_guard
            .clone()
            .unwrap();
        g
    }

    #[test]
    fn window_guard_classifies() {
        let g = guard("mode = UPDATEHAZ ∧ 0 < t − cyclestart < δ / 2 ∧ hazards = ctrhazards");
        let info = classify(Some(&g), &|_| false, Some("t"));
        assert_eq!(info.discrete.len(), 2);
        assert_eq!(info.time_los.len(), 1);
        assert_eq!(info.time_his.len(), 1);
        assert!(info.time_eqs.is_empty());
        assert!(info.continuous.is_empty());
        assert!(info.opaque.is_empty());
    }

    #[test]
    fn time_equality_is_a_scheduled_point() {
        let g = guard("nonempty(schedule) ∧ t = head(schedule)");
        let info = classify(Some(&g), &|_| false, Some("t"));
        assert_eq!(info.time_eqs.len(), 1);
        assert_eq!(info.discrete.len(), 1);
    }

    #[test]
    fn pliant_equalities_become_snappable_residuals() {
        let g = guard("mode ∈ {SEEK, RETURN} ∧ drx = first(trajectory)[1] ∧ trajectory ≠ ⟨⟩");
        let cont = |n: &str| n == "drx";
        let info = classify(Some(&g), &cont, Some("t"));
        assert_eq!(info.discrete.len(), 2);
        assert_eq!(info.continuous.len(), 1);
        assert_eq!(info.continuous[0].snap_var.as_deref(), Some("drx"));
    }

    #[test]
    fn plain_bounds_normalize() {
        let g = guard("0 < t < δ");
        let info = classify(Some(&g), &|_| false, Some("t"));
        assert_eq!(info.time_los.len(), 1);
        assert_eq!(info.time_his.len(), 1);
        assert!(matches!(info.time_his[0].0, Expr::Ident(ref n) if n == "δ"));
    }
}
