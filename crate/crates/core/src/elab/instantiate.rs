//! Generic-construct instantiation by identifier renaming.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::diag::{codes, Diagnostic, Location};

/// Apply a renaming to a generic construct, producing a construct named
/// `new_name`. Every occurrence of each source identifier — declaration
/// and use, including construct references — is replaced.
pub fn instantiate(
    generic: &ConstructAst,
    new_name: &str,
    renaming: &RenamingAst,
) -> Result<ConstructAst, Diagnostic> {
    let occurring = collect_identifiers(generic);
    let declared = collect_declared(generic);
    let mut map = BTreeMap::new();
    let mut targets = BTreeSet::new();
    for (from, to) in &renaming.subst {
        if !occurring.contains(from) {
            return Err(Diagnostic::error(
                Location::default(),
                codes::UNKNOWN_RENAME_SOURCE,
                format!("renaming source `{from}` does not occur in `{}`", generic.name),
            ));
        }
        if map.contains_key(from) {
            return Err(Diagnostic::error(
                Location::default(),
                codes::RENAMING_COLLISION,
                format!("source identifier `{from}` renamed twice"),
            ));
        }
        if !targets.insert(to.clone()) {
            return Err(Diagnostic::error(
                Location::default(),
                codes::RENAMING_COLLISION,
                format!("two source identifiers renamed to `{to}`"),
            ));
        }
        map.insert(from.clone(), to.clone());
    }
    // a target capturing a surviving declaration is an error
    for to in &targets {
        if declared.contains(to) && !map.contains_key(to) {
            return Err(Diagnostic::error(
                Location::default(),
                codes::RENAMING_COLLISION,
                format!(
                    "renaming target `{to}` collides with an identifier declared in `{}`",
                    generic.name
                ),
            ));
        }
    }
    let mut out = generic.clone();
    out.name = new_name.to_string();
    for clause in &mut out.clauses {
        rename_clause(clause, &map);
    }
    Ok(out)
}

fn rn(name: &mut String, map: &BTreeMap<String, String>) {
    if let Some(to) = map.get(name.as_str()) {
        *name = to.clone();
    }
}

fn rename_clause(clause: &mut Clause, map: &BTreeMap<String, String>) {
    match clause {
        Clause::Sees(n)
        | Clause::Connects(n)
        | Clause::Reads(n)
        | Clause::Refers(n)
        | Clause::Time(n)
        | Clause::Clock(n)
        | Clause::GlobInvsRef(n) => rn(n, map),
        Clause::Variables(ns) | Clause::Pliant(ns) | Clause::Sets(ns) | Clause::Constants(ns) => {
            for n in ns {
                rn(n, map);
            }
        }
        Clause::Invariants(es) | Clause::Axioms(es) | Clause::Theorems(es) => {
            for e in es {
                rename_in_expr(e, map);
            }
        }
        Clause::Initialisation(assigns) => {
            for (t, e) in assigns {
                rn(t, map);
                rename_in_expr(e, map);
            }
        }
        Clause::Events(evs) => {
            for ev in evs {
                rn(&mut ev.name, map);
                for (p, _) in &mut ev.params {
                    rn(p, map);
                }
                if let Some(g) = &mut ev.when_guard {
                    rename_in_expr(g, map);
                }
                if let Some(g) = &mut ev.init_guard {
                    rename_in_expr(g, map);
                }
                for (t, e) in ev.body.assigns.iter_mut().chain(ev.body.odes.iter_mut()) {
                    rn(t, map);
                    rename_in_expr(e, map);
                }
                if let Some(Comply::Pred(p)) = &mut ev.body.comply {
                    rename_in_expr(p, map);
                }
                if let Some((ts, p)) = &mut ev.body.nondet {
                    for t in ts {
                        rn(t, map);
                    }
                    rename_in_expr(p, map);
                }
            }
        }
        Clause::Item(item) => {
            rn(&mut item.name, map);
            if let Some(r) = &mut item.renaming {
                rn(&mut r.source, map);
            }
        }
        Clause::Synch(g) => {
            for m in &mut g.members {
                rn(&mut m.machine, map);
                rn(&mut m.event, map);
            }
        }
    }
}

/// Rename identifiers in place, including application callees and
/// quantifier-bound variables.
pub fn rename_in_expr(e: &mut Expr, map: &BTreeMap<String, String>) {
    match e {
        Expr::Num(_) | Expr::Bool(_) | Expr::EmptySet => {}
        Expr::Ident(n) => rn(n, map),
        Expr::Unary(_, inner) => rename_in_expr(inner, map),
        Expr::Binary(_, a, b) => {
            rename_in_expr(a, map);
            rename_in_expr(b, map);
        }
        Expr::SetLit(es) | Expr::SeqLit(es) => {
            for x in es {
                rename_in_expr(x, map);
            }
        }
        Expr::Interval(a, b) => {
            rename_in_expr(a, map);
            rename_in_expr(b, map);
        }
        Expr::Apply(f, args) => {
            rn(f, map);
            for a in args {
                rename_in_expr(a, map);
            }
        }
        Expr::Index(b, i) => {
            rename_in_expr(b, map);
            rename_in_expr(i, map);
        }
        Expr::QuantUnion { var, domain, body } => {
            rn(var, map);
            rename_in_expr(domain, map);
            rename_in_expr(body, map);
        }
    }
}

/// All identifiers occurring anywhere in a construct.
pub fn collect_identifiers(c: &ConstructAst) -> BTreeSet<String> {
    let mut out = collect_declared(c);
    let add_expr = |e: &Expr, out: &mut BTreeSet<String>| {
        collect_expr_idents(e, out);
    };
    for clause in &c.clauses {
        match clause {
            Clause::Sees(n) | Clause::Connects(n) | Clause::Reads(n) | Clause::Refers(n) => {
                out.insert(n.clone());
            }
            Clause::Invariants(es) | Clause::Axioms(es) | Clause::Theorems(es) => {
                for e in es {
                    add_expr(e, &mut out);
                }
            }
            Clause::Initialisation(assigns) => {
                for (_, e) in assigns {
                    add_expr(e, &mut out);
                }
            }
            Clause::Events(evs) => {
                for ev in evs {
                    if let Some(g) = &ev.when_guard {
                        add_expr(g, &mut out);
                    }
                    if let Some(g) = &ev.init_guard {
                        add_expr(g, &mut out);
                    }
                    for (_, e) in ev.body.assigns.iter().chain(ev.body.odes.iter()) {
                        add_expr(e, &mut out);
                    }
                    if let Some(Comply::Pred(p)) = &ev.body.comply {
                        add_expr(p, &mut out);
                    }
                    if let Some((_, p)) = &ev.body.nondet {
                        add_expr(p, &mut out);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Identifiers declared by a construct: variables, constants, sets,
/// clocks, time, event names and parameters, assignment targets.
pub fn collect_declared(c: &ConstructAst) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for clause in &c.clauses {
        match clause {
            Clause::Time(n) | Clause::Clock(n) => {
                out.insert(n.clone());
            }
            Clause::Variables(ns) | Clause::Pliant(ns) | Clause::Sets(ns) | Clause::Constants(ns) => {
                out.extend(ns.iter().cloned());
            }
            Clause::Initialisation(assigns) => {
                out.extend(assigns.iter().map(|(t, _)| t.clone()));
            }
            Clause::Events(evs) => {
                for ev in evs {
                    out.insert(ev.name.clone());
                    out.extend(ev.params.iter().map(|(p, _)| p.clone()));
                    out.extend(ev.body.assigns.iter().map(|(t, _)| t.clone()));
                    out.extend(ev.body.odes.iter().map(|(t, _)| t.clone()));
                }
            }
            _ => {}
        }
    }
    out
}

fn collect_expr_idents(e: &Expr, out: &mut BTreeSet<String>) {
    match e {
        Expr::Num(_) | Expr::Bool(_) | Expr::EmptySet => {}
        Expr::Ident(n) => {
            out.insert(n.clone());
        }
        Expr::Unary(_, inner) => collect_expr_idents(inner, out),
        Expr::Binary(_, a, b) => {
            collect_expr_idents(a, out);
            collect_expr_idents(b, out);
        }
        Expr::SetLit(es) | Expr::SeqLit(es) => {
            for x in es {
                collect_expr_idents(x, out);
            }
        }
        Expr::Interval(a, b) => {
            collect_expr_idents(a, out);
            collect_expr_idents(b, out);
        }
        Expr::Apply(f, args) => {
            out.insert(f.clone());
            for a in args {
                collect_expr_idents(a, out);
            }
        }
        Expr::Index(b, i) => {
            collect_expr_idents(b, out);
            collect_expr_idents(i, out);
        }
        Expr::QuantUnion { var, domain, body } => {
            out.insert(var.clone());
            collect_expr_idents(domain, out);
            collect_expr_idents(body, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_unit, SourceUnit};

    fn parse_one(src: &str) -> ConstructAst {
        let r = parse_unit(&SourceUnit::new("t.heb", src));
        assert!(!r.diagnostics.iter().any(|d| d.is_error()), "{:?}", r.diagnostics);
        r.constructs.into_iter().next().unwrap()
    }

    const DRONE_CTX: &str = "CONTEXT Drone_CTX\n\
        \x20 SETS\n    DRONESTATE\n\
        \x20 CONSTANTS\n    OFF\n    SEEK\n    RETURN\n    Vdr\n\
        \x20 AXIOMS\n    partition(DRONESTATE, {OFF}, {SEEK}, {RETURN})\n    Vdr ∈ ℝ\n\
        END\n";

    #[test]
    fn velocity_constant_renames_in_declaration_and_use() {
        let generic = parse_one(DRONE_CTX);
        let r = RenamingAst {
            source: "Drone_CTX".into(),
            subst: vec![("Vdr".into(), "Vdr1".into())],
        };
        let inst = instantiate(&generic, "Drone1_CTX", &r).unwrap();
        assert_eq!(inst.name, "Drone1_CTX");
        assert!(inst.constants().any(|c| c == "Vdr1"));
        assert!(!inst.constants().any(|c| c == "Vdr"));
        let uses = collect_identifiers(&inst);
        assert!(uses.contains("Vdr1"));
        assert!(!uses.contains("Vdr"));
    }

    #[test]
    fn empty_renaming_only_renames_the_construct() {
        let generic = parse_one(DRONE_CTX);
        let r = RenamingAst {
            source: "Drone_CTX".into(),
            subst: vec![],
        };
        let inst = instantiate(&generic, "Copy_CTX", &r).unwrap();
        assert_eq!(inst.name, "Copy_CTX");
        assert_eq!(inst.clauses, generic.clauses);
    }

    #[test]
    fn capture_is_rejected() {
        // renaming onto an identifier that survives is a collision,
        // verified against the declaration set
        let generic = parse_one(
            "MACHINE Drone_Mch\n\
             \x20 VARIABLES\n    thex\n    they\n\
             \x20 INVARIANTS\n    thex ∈ ℝ\n    they ∈ ℝ\n\
             END\n",
        );
        let declared = collect_declared(&generic);
        assert!(declared.contains("they"));
        let r = RenamingAst {
            source: "Drone_Mch".into(),
            subst: vec![("thex".into(), "they".into())],
        };
        let err = instantiate(&generic, "Drone1_Mch", &r).unwrap_err();
        assert_eq!(err.code, codes::RENAMING_COLLISION);
    }

    #[test]
    fn unknown_source_is_rejected() {
        let generic = parse_one(DRONE_CTX);
        let r = RenamingAst {
            source: "Drone_CTX".into(),
            subst: vec![("nosuch".into(), "x".into())],
        };
        let err = instantiate(&generic, "D", &r).unwrap_err();
        assert_eq!(err.code, codes::UNKNOWN_RENAME_SOURCE);
    }
}
