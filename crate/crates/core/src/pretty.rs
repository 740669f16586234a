//! Canonical pretty-printer. Output re-parses to a structurally equal
//! AST; comments and original spacing are not reproduced.

use crate::ast::*;
use std::fmt::Write;

/// Render a construct in canonical concrete syntax.
pub fn pretty_print(c: &ConstructAst) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", c.kind, c.name);
    for clause in &c.clauses {
        print_clause(&mut out, clause);
    }
    out.push_str("END\n");
    out
}

fn print_clause(out: &mut String, clause: &Clause) {
    match clause {
        Clause::Sees(n) => {
            let _ = writeln!(out, "  SEES {n}");
        }
        Clause::Connects(n) => {
            let _ = writeln!(out, "  CONNECTS {n}");
        }
        Clause::Reads(n) => {
            let _ = writeln!(out, "  READS {n}");
        }
        Clause::Refers(n) => {
            let _ = writeln!(out, "  REFERS {n}");
        }
        Clause::Time(n) => {
            let _ = writeln!(out, "  TIME {n}");
        }
        Clause::Clock(n) => {
            let _ = writeln!(out, "  CLOCK {n}");
        }
        Clause::Variables(vs) => print_names(out, "VARIABLES", vs),
        Clause::Pliant(vs) => print_names(out, "PLIANT", vs),
        Clause::Sets(vs) => print_names(out, "SETS", vs),
        Clause::Constants(vs) => print_names(out, "CONSTANTS", vs),
        Clause::Invariants(es) => print_preds(out, "INVARIANTS", es),
        Clause::Axioms(es) => print_preds(out, "AXIOMS", es),
        Clause::Theorems(es) => print_preds(out, "THEOREMS", es),
        Clause::Initialisation(assigns) => {
            out.push_str("  INITIALISATION\n");
            for (t, e) in assigns {
                let _ = writeln!(out, "    {t} := {}", expr_to_string(e));
            }
        }
        Clause::Events(evs) => {
            out.push_str("  EVENTS\n");
            for ev in evs {
                print_event(out, ev);
            }
        }
        Clause::Item(item) => match &item.renaming {
            None => {
                let _ = writeln!(out, "  {} {}", item.kind, item.name);
            }
            Some(r) => {
                let _ = writeln!(out, "  {} {} IS", item.kind, item.name);
                let _ = writeln!(out, "    {} WITH", r.source);
                for (i, (from, to)) in r.subst.iter().enumerate() {
                    let sep = if i + 1 < r.subst.len() { "," } else { "" };
                    let _ = writeln!(out, "      {from} → {to}{sep}");
                }
                out.push_str("  END\n");
            }
        },
        Clause::GlobInvsRef(n) => {
            let _ = writeln!(out, "  GLOBINVS {n}");
        }
        Clause::Synch(g) => {
            let _ = writeln!(out, "  SYNCH {}", g.name);
            for m in &g.members {
                let _ = writeln!(out, "    {}.{}", m.machine, m.event);
            }
            out.push_str("  END\n");
        }
    }
}

fn print_names(out: &mut String, kw: &str, names: &[String]) {
    let _ = writeln!(out, "  {kw}");
    for n in names {
        let _ = writeln!(out, "    {n}");
    }
}

fn print_preds(out: &mut String, kw: &str, preds: &[Expr]) {
    let _ = writeln!(out, "  {kw}");
    for p in preds {
        let _ = writeln!(out, "    {}", expr_to_string(p));
    }
}

fn print_event(out: &mut String, ev: &EventAst) {
    let _ = writeln!(out, "    {}", ev.name);
    let _ = writeln!(out, "      STATUS {}", ev.status);
    if !ev.params.is_empty() {
        let names: Vec<&str> = ev.params.iter().map(|(n, _)| n.as_str()).collect();
        match &ev.when_guard {
            Some(g) => {
                let _ = writeln!(out, "      ANY {} WHERE {}", names.join(", "), expr_to_string(g));
            }
            None => {
                let _ = writeln!(out, "      ANY {}", names.join(", "));
            }
        }
    } else if let Some(g) = &ev.when_guard {
        let _ = writeln!(out, "      WHEN {}", expr_to_string(g));
    }
    if let Some(g) = &ev.init_guard {
        let _ = writeln!(out, "      INIT {}", expr_to_string(g));
    }
    if let Some(c) = &ev.body.comply {
        match c {
            Comply::Invariants => out.push_str("      COMPLY INVARIANTS\n"),
            Comply::Pred(p) => {
                let _ = writeln!(out, "      COMPLY {}", expr_to_string(p));
            }
        }
    }
    match ev.status {
        EventStatus::Pliant => {
            if !ev.body.odes.is_empty() || !ev.body.assigns.is_empty() {
                out.push_str("      SOLVE\n");
                for (v, e) in &ev.body.odes {
                    let _ = writeln!(out, "        D {v} = {}", expr_to_string(e));
                }
                for (t, e) in &ev.body.assigns {
                    let _ = writeln!(out, "        {t} := {}", expr_to_string(e));
                }
            }
        }
        EventStatus::Ordinary | EventStatus::Asynch => {
            if !ev.body.assigns.is_empty() || ev.body.nondet.is_some() {
                // BEGIN for unguarded events, THEN after a guard
                if ev.when_guard.is_some() {
                    out.push_str("      THEN\n");
                } else {
                    out.push_str("      BEGIN\n");
                }
                for (t, e) in &ev.body.assigns {
                    let _ = writeln!(out, "        {t} := {}", expr_to_string(e));
                }
                if let Some((ts, p)) = &ev.body.nondet {
                    let _ = writeln!(out, "        {} :| {}", ts.join(", "), expr_to_string(p));
                }
            }
        }
    }
    out.push_str("    END\n");
}

/// Render an expression with minimal parentheses.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn op_str(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "−",
        BinOp::Mul => "×",
        BinOp::Div => "/",
        BinOp::Union => "∪",
        BinOp::Concat => "^",
        BinOp::Maplet => "↦",
        BinOp::Eq => "=",
        BinOp::Ne => "≠",
        BinOp::Lt => "<",
        BinOp::Le => "≤",
        BinOp::Gt => ">",
        BinOp::Ge => "≥",
        BinOp::In => "∈",
        BinOp::NotIn => "∉",
        BinOp::And => "∧",
        BinOp::Or => "∨",
        BinOp::Implies => "⇒",
    }
}

/// Binding powers mirroring the parser.
fn bp(op: BinOp) -> (u8, u8) {
    match op {
        BinOp::Implies => (10, 9),
        BinOp::Or => (20, 21),
        BinOp::And => (30, 31),
        BinOp::Eq
        | BinOp::Ne
        | BinOp::Lt
        | BinOp::Le
        | BinOp::Gt
        | BinOp::Ge
        | BinOp::In
        | BinOp::NotIn => (40, 41),
        BinOp::Maplet => (50, 51),
        BinOp::Add | BinOp::Sub | BinOp::Union | BinOp::Concat => (60, 61),
        BinOp::Mul | BinOp::Div => (70, 71),
    }
}

fn write_expr(out: &mut String, e: &Expr, min_bp: u8) {
    match e {
        Expr::Num(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        Expr::EmptySet => out.push('∅'),
        Expr::Ident(n) => out.push_str(n),
        Expr::Unary(op, inner) => {
            let (sym, inner_bp) = match op {
                UnaryOp::Neg => ("−", 75),
                UnaryOp::Not => ("¬", 35),
            };
            let need = min_bp > inner_bp;
            if need {
                out.push('(');
            }
            out.push_str(sym);
            if *op == UnaryOp::Not {
                out.push(' ');
            }
            write_expr(out, inner, inner_bp + 1);
            if need {
                out.push(')');
            }
        }
        Expr::Binary(op, a, b) => {
            let (lbp, rbp) = bp(*op);
            let need = min_bp > lbp;
            if need {
                out.push('(');
            }
            // comparisons are non-associative: parenthesize nested ones
            let (la, ra) = if op.is_comparison() {
                (lbp + 1, lbp + 1)
            } else {
                (lbp, rbp)
            };
            write_expr(out, a, la);
            let _ = write!(out, " {} ", op_str(*op));
            write_expr(out, b, ra);
            if need {
                out.push(')');
            }
        }
        Expr::SetLit(es) => {
            out.push('{');
            for (i, x) in es.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, x, 0);
            }
            out.push('}');
        }
        Expr::SeqLit(es) => {
            out.push('⟨');
            for (i, x) in es.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, x, 0);
            }
            out.push('⟩');
        }
        Expr::Interval(a, b) => {
            out.push('[');
            write_expr(out, a, 0);
            out.push_str(" .. ");
            write_expr(out, b, 0);
            out.push(']');
        }
        Expr::Apply(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, 0);
            }
            out.push(')');
        }
        Expr::Index(base, idx) => {
            // postfix binds tightest; parenthesize non-atomic bases
            let atomic = matches!(
                **base,
                Expr::Ident(_)
                    | Expr::Apply(..)
                    | Expr::Index(..)
                    | Expr::SeqLit(_)
                    | Expr::SetLit(_)
            );
            if !atomic {
                out.push('(');
            }
            write_expr(out, base, 90);
            if !atomic {
                out.push(')');
            }
            out.push('[');
            write_expr(out, idx, 0);
            out.push(']');
        }
        Expr::QuantUnion { var, domain, body } => {
            let _ = write!(out, "⋃({var} • {var} ∈ ");
            write_expr(out, domain, 42);
            out.push_str(" | ");
            write_expr(out, body, 0);
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_unit, SourceUnit};

    fn roundtrip(src: &str) -> ConstructAst {
        let unit = SourceUnit::new("test.heb", src);
        let r = parse_unit(&unit);
        assert!(
            !r.diagnostics.iter().any(|d| d.is_error()),
            "parse errors: {:?}",
            r.diagnostics
        );
        assert_eq!(r.constructs.len(), 1);
        let c = r.constructs.into_iter().next().unwrap();
        let printed = pretty_print(&c);
        let r2 = parse_unit(&SourceUnit::new("printed.heb", &printed));
        assert!(
            !r2.diagnostics.iter().any(|d| d.is_error()),
            "reparse errors in:\n{printed}\n{:?}",
            r2.diagnostics
        );
        assert_eq!(r2.constructs.len(), 1, "printed:\n{printed}");
        assert_eq!(r2.constructs[0], c, "printed:\n{printed}");
        c
    }

    #[test]
    fn nodes_machine_roundtrips_and_prints_guard() {
        let c = roundtrip(
            "MACHINE Nodes\n\
             \x20 SEES NCtx\n\
             \x20 VARIABLES\n\
             \x20   nod\n\
             \x20 INVARIANTS\n\
             \x20   nod ∈ ℙ(NSet)\n\
             \x20 EVENTS\n\
             \x20   INITIALISATION\n\
             \x20     STATUS ordinary\n\
             \x20     BEGIN\n\
             \x20       nod := ∅\n\
             \x20     END\n\
             \x20   AddNode\n\
             \x20     STATUS ordinary\n\
             \x20     ANY n\n\
             \x20     WHERE n ∈ NSet − nod\n\
             \x20     THEN\n\
             \x20       nod := nod ∪ {n}\n\
             \x20     END\n\
             \x20 END\n",
        );
        let printed = pretty_print(&c);
        assert!(printed.contains("ANY n WHERE n ∈ NSet − nod"), "printed:\n{printed}");
    }

    #[test]
    fn eventless_construct_prints_header_and_end_only() {
        let c = ConstructAst::new(ConstructKind::Machine, "Empty");
        assert_eq!(pretty_print(&c), "MACHINE Empty\nEND\n");
    }

    #[test]
    fn ascii_and_unicode_sources_parse_identically() {
        let uni = "CONTEXT C\n  CONSTANTS\n    k\n  AXIOMS\n    k ∈ ℝ\n    k = ⟨1, 2⟩[1] ↦ 0.5\nEND\n";
        let asc = "CONTEXT C\n  CONSTANTS\n    k\n  AXIOMS\n    k : REAL\n    k = [1, 2][1] |-> 0.5\nEND\n";
        let a = parse_unit(&SourceUnit::new("a.heb", uni));
        let b = parse_unit(&SourceUnit::new("b.heb", asc));
        assert_eq!(a.constructs, b.constructs);
    }

    #[test]
    fn chained_comparison_desugars_to_conjunction() {
        let src = "MACHINE M\n  EVENTS\n    E\n      STATUS ordinary\n      WHEN 0 < t − c < 5 ∧ x = y = 0\n    END\n  END\n";
        let c = roundtrip(src);
        let ev = c.events().next().unwrap();
        let g = ev.when_guard.as_ref().unwrap();
        // 0 < t−c ∧ t−c < 5 ∧ x = y ∧ y = 0
        assert_eq!(g.conjuncts().len(), 4);
    }

    #[test]
    fn multi_typing_desugars_pairwise() {
        let src = "MACHINE M\n  VARIABLES\n    a\n    b\n  INVARIANTS\n    a , b ∈ ℝ , ℕ\nEND\n";
        let c = roundtrip(src);
        let invs: Vec<_> = c.invariants().collect();
        assert_eq!(invs.len(), 2);
        assert_eq!(*invs[0], Expr::bin(BinOp::In, Expr::ident("a"), Expr::ident("ℝ")));
        assert_eq!(*invs[1], Expr::bin(BinOp::In, Expr::ident("b"), Expr::ident("ℕ")));
    }

    #[test]
    fn comma_separated_predicates_split() {
        let src = "CONTEXT C\n  CONSTANTS\n    δ\n  AXIOMS\n    δ ∈ ℝ , δ = 0.1\nEND\n";
        let c = roundtrip(src);
        assert_eq!(c.axioms().count(), 2);
    }

    #[test]
    fn missing_end_is_reported() {
        let r = parse_unit(&SourceUnit::new("m.heb", "MACHINE M\n  VARIABLES\n    x\n"));
        assert!(r
            .diagnostics
            .iter()
            .any(|d| d.code == crate::diag::codes::MISSING_END));
        assert!(r.constructs.is_empty());
    }

    #[test]
    fn empty_file_parses_to_nothing() {
        let r = parse_unit(&SourceUnit::new("e.heb", ""));
        assert!(r.constructs.is_empty());
        assert!(r.diagnostics.is_empty());
    }

    #[test]
    fn project_with_instantiation_and_synch_roundtrips() {
        roundtrip(
            "PROJECT P\n\
             \x20 GLOBINVS GI\n\
             \x20 CONTEXT A\n\
             \x20 CONTEXT B1 IS\n\
             \x20   B WITH\n\
             \x20     Vdr → Vdr1\n\
             \x20 END\n\
             \x20 MACHINE M\n\
             \x20 SYNCH S1\n\
             \x20   M.E1\n\
             \x20   N.E2\n\
             \x20 END\n\
             END\n",
        );
    }

    #[test]
    fn quant_union_roundtrips() {
        let src = "GLOBINVS GI\n  INVARIANTS\n    t ∉ ⋃(ii • ii ∈ dom(SCHED) | [SCHED(ii) .. SCHED(ii) + δ]) ⇒ a = b\nEND\n";
        roundtrip(src);
    }

    #[test]
    fn pliant_event_with_solve_roundtrips() {
        roundtrip(
            "MACHINE M\n\
             \x20 EVENTS\n\
             \x20   Navigate\n\
             \x20     STATUS pliant\n\
             \x20     WHEN mode ∈ {SEEK, RETURN} ∧ trajectory ≠ ⟨⟩\n\
             \x20     SOLVE\n\
             \x20       D drx = Vdr × (first(trajectory)[1] − thex)\n\
             \x20   END\n\
             \x20 END\n",
        );
    }

    #[test]
    fn nondet_update_parses_for_later_rejection() {
        let src = "MACHINE M\n\
                   \x20 EVENTS\n\
                   \x20   MoEv\n\
                   \x20     STATUS ordinary\n\
                   \x20     ANY i?, l, o!\n\
                   \x20     WHERE grd(x, i?, l)\n\
                   \x20     THEN\n\
                   \x20       x, o! :| BApred(x, i?, l, x', o!)\n\
                   \x20     END\n\
                   \x20 END\n";
        let c = roundtrip(src);
        let ev = c.events().next().unwrap();
        assert!(ev.body.nondet.is_some());
        assert_eq!(ev.params.len(), 3);
        assert_eq!(ev.params[0], ("i?".to_string(), ParamDir::Input));
        assert_eq!(ev.params[2], ("o!".to_string(), ParamDir::Output));
    }
}
