//! The elaboration pass itself: project assembly, context constant
//! resolution, visibility and write rules, invariant classification,
//! SYNCH checking and static theorems.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::builtins::Builtins;
use crate::diag::{codes, Diagnostic, Location};
use crate::eval::{eval, eval_pred};
use crate::value::Value;

use super::instantiate::instantiate;
use super::typing::{type_from_expr, SemType};
use super::*;

fn at(construct: &str) -> Location {
    Location {
        path: construct.to_string(),
        line: 0,
        col: 0,
    }
}

/// Elaborate parsed constructs into a runnable project.
///
/// When the input contains a PROJECT construct it defines membership,
/// instantiation and SYNCH groups; otherwise an implicit project over
/// all constructs is assembled. Errors are reported with distinct codes;
/// a project is returned only when no error was raised.
pub fn elaborate(
    constructs: &[ConstructAst],
    builtins: &Builtins,
) -> (Option<ElaboratedProject>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let by_name: BTreeMap<&str, &ConstructAst> =
        constructs.iter().map(|c| (c.name.as_str(), c)).collect();

    let projects: Vec<&ConstructAst> = constructs
        .iter()
        .filter(|c| c.kind == ConstructKind::Project)
        .collect();
    if projects.len() > 1 {
        diags.push(Diagnostic::error(
            at(&projects[1].name),
            codes::DUPLICATE_CLAUSE,
            "more than one PROJECT construct",
        ));
        return (None, diags);
    }

    // ---- membership and instantiation -------------------------------
    let mut name = "(implicit)".to_string();
    let mut ctx_asts: Vec<ConstructAst> = Vec::new();
    let mut if_asts: Vec<ConstructAst> = Vec::new();
    let mut mch_asts: Vec<ConstructAst> = Vec::new();
    let mut gi_asts: Vec<ConstructAst> = Vec::new();
    let mut synch_groups: Vec<SynchGroupAst> = Vec::new();

    if let Some(prj) = projects.first() {
        name = prj.name.clone();
        for clause in &prj.clauses {
            match clause {
                Clause::GlobInvsRef(n) => match by_name.get(n.as_str()) {
                    Some(c) if c.kind == ConstructKind::GlobInvs => gi_asts.push((*c).clone()),
                    Some(c) => diags.push(Diagnostic::error(
                        at(&prj.name),
                        codes::UNKNOWN_CONSTRUCT,
                        format!("`{n}` is a {} construct, not GLOBINVS", c.kind),
                    )),
                    None => diags.push(Diagnostic::error(
                        at(&prj.name),
                        codes::UNKNOWN_CONSTRUCT,
                        format!("GLOBINVS `{n}` is not declared"),
                    )),
                },
                Clause::Item(item) => {
                    let resolved: Option<ConstructAst> = match &item.renaming {
                        None => match by_name.get(item.name.as_str()) {
                            Some(c) if c.kind == item.kind => Some((*c).clone()),
                            Some(c) => {
                                diags.push(Diagnostic::error(
                                    at(&prj.name),
                                    codes::UNKNOWN_CONSTRUCT,
                                    format!(
                                        "`{}` listed as {} but declared as {}",
                                        item.name, item.kind, c.kind
                                    ),
                                ));
                                None
                            }
                            None => {
                                diags.push(Diagnostic::error(
                                    at(&prj.name),
                                    codes::UNKNOWN_CONSTRUCT,
                                    format!("{} `{}` is not declared", item.kind, item.name),
                                ));
                                None
                            }
                        },
                        Some(r) => match by_name.get(r.source.as_str()) {
                            Some(generic) if generic.kind == item.kind => {
                                match instantiate(generic, &item.name, r) {
                                    Ok(c) => Some(c),
                                    Err(e) => {
                                        diags.push(e);
                                        None
                                    }
                                }
                            }
                            Some(c) => {
                                diags.push(Diagnostic::error(
                                    at(&prj.name),
                                    codes::UNKNOWN_CONSTRUCT,
                                    format!(
                                        "generic `{}` is a {} construct, expected {}",
                                        r.source, c.kind, item.kind
                                    ),
                                ));
                                None
                            }
                            None => {
                                diags.push(Diagnostic::error(
                                    at(&prj.name),
                                    codes::UNKNOWN_CONSTRUCT,
                                    format!("generic construct `{}` is not declared", r.source),
                                ));
                                None
                            }
                        },
                    };
                    if let Some(c) = resolved {
                        match item.kind {
                            ConstructKind::Context => ctx_asts.push(c),
                            ConstructKind::Interface => if_asts.push(c),
                            ConstructKind::Machine => mch_asts.push(c),
                            _ => {}
                        }
                    }
                }
                Clause::Synch(g) => synch_groups.push(g.clone()),
                _ => {}
            }
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for c in ctx_asts.iter().chain(&if_asts).chain(&mch_asts) {
            if !seen.insert(c.name.as_str()) {
                diags.push(Diagnostic::error(
                    at(&c.name),
                    codes::DUPLICATE_NAME,
                    format!("`{}` included in the project more than once", c.name),
                ));
            }
        }
    } else {
        for c in constructs {
            match c.kind {
                ConstructKind::Context => ctx_asts.push(c.clone()),
                ConstructKind::Interface => if_asts.push(c.clone()),
                ConstructKind::Machine => mch_asts.push(c.clone()),
                ConstructKind::GlobInvs => gi_asts.push(c.clone()),
                ConstructKind::Project => {}
            }
        }
    }

    // ---- contexts ----------------------------------------------------
    let ctxs = resolve_contexts(&ctx_asts, builtins, &mut diags);

    // ---- interfaces ----------------------------------------------------
    let interfaces = resolve_interfaces(&if_asts, &ctxs, builtins, &mut diags);

    // ---- machines ----------------------------------------------------
    let machines = resolve_machines(&mch_asts, &ctxs, &interfaces, builtins, &mut diags);

    // ---- project-wide time variable ----------------------------------
    let mut time_names: BTreeSet<String> = BTreeSet::new();
    for c in if_asts.iter().chain(&mch_asts) {
        if let Some(t) = c.time_var() {
            time_names.insert(t.to_string());
        }
    }
    if time_names.len() > 1 {
        diags.push(Diagnostic::error(
            at(&name),
            codes::TIME_NAME_CONFLICT,
            format!(
                "TIME declared under different names: {}",
                time_names.iter().cloned().collect::<Vec<_>>().join(", ")
            ),
        ));
    }
    let time_var = time_names.iter().next().cloned();

    // ---- SYNCH groups -------------------------------------------------
    for g in &synch_groups {
        let mut machs: BTreeSet<&str> = BTreeSet::new();
        for m in &g.members {
            if !machs.insert(m.machine.as_str()) {
                diags.push(Diagnostic::error(
                    at(&g.name),
                    codes::SYNCH_SAME_MACHINE,
                    format!("SYNCH `{}` names machine `{}` twice", g.name, m.machine),
                ));
            }
            match machines.iter().find(|mm| mm.name == m.machine) {
                None => diags.push(Diagnostic::error(
                    at(&g.name),
                    codes::SYNCH_UNKNOWN_MEMBER,
                    format!("SYNCH `{}` references unknown machine `{}`", g.name, m.machine),
                )),
                Some(mm) => match mm.event(&m.event) {
                    None => diags.push(Diagnostic::error(
                        at(&g.name),
                        codes::SYNCH_UNKNOWN_MEMBER,
                        format!(
                            "SYNCH `{}` references unknown event `{}.{}`",
                            g.name, m.machine, m.event
                        ),
                    )),
                    Some(ev) if ev.status == EventStatus::Pliant || ev.is_initialisation() => {
                        diags.push(Diagnostic::error(
                            at(&g.name),
                            codes::SYNCH_NOT_MODE_EVENT,
                            format!(
                                "SYNCH member `{}.{}` must be an ordinary or asynch event",
                                m.machine, m.event
                            ),
                        ));
                    }
                    Some(_) => {}
                },
            }
        }
    }

    // ---- global scope for GLOBINVS -----------------------------------
    let mut global_constants: BTreeMap<String, Value> = BTreeMap::new();
    let mut ambiguous_consts: BTreeSet<String> = BTreeSet::new();
    for ctx in &ctxs {
        for (k, v) in &ctx.values {
            match global_constants.get(k) {
                None => {
                    global_constants.insert(k.clone(), v.clone());
                }
                Some(prev) if prev == v => {}
                Some(_) => {
                    ambiguous_consts.insert(k.clone());
                }
            }
        }
    }
    for k in &ambiguous_consts {
        global_constants.remove(k);
    }

    let mut global_vars: BTreeSet<String> = BTreeSet::new();
    let mut ambiguous_vars: BTreeSet<String> = BTreeSet::new();
    for i in &interfaces {
        for v in &i.vars {
            if !global_vars.insert(v.name.clone()) {
                ambiguous_vars.insert(v.name.clone());
            }
        }
    }
    for m in &machines {
        for v in &m.locals {
            if !global_vars.insert(v.name.clone()) {
                ambiguous_vars.insert(v.name.clone());
            }
        }
    }

    let mut global_invariants = Vec::new();
    for g in &gi_asts {
        for (idx, inv) in g.invariants().enumerate() {
            let source = format!("{}#{}", g.name, idx + 1);
            // identifier validation against the global scope
            check_expr_scope(
                inv,
                &|n| {
                    (global_vars.contains(n) && !ambiguous_vars.contains(n))
                        || global_constants.contains_key(n)
                        || Some(n) == time_var.as_deref()
                },
                &|n| {
                    if ambiguous_vars.contains(n) || ambiguous_consts.contains(n) {
                        Some(codes::AMBIGUOUS_IDENTIFIER)
                    } else {
                        None
                    }
                },
                builtins,
                &g.name,
                &mut diags,
            );
            let gp = match inv {
                Expr::Binary(BinOp::Implies, a, b) => GuardedPredicate {
                    guard: Some((**a).clone()),
                    body: (**b).clone(),
                    source,
                },
                other => GuardedPredicate {
                    guard: None,
                    body: other.clone(),
                    source,
                },
            };
            global_invariants.push(gp);
        }
    }

    let had_errors = diags.iter().any(|d| d.is_error());
    if had_errors {
        return (None, diags);
    }
    let project = ElaboratedProject {
        name,
        machines,
        interfaces,
        contexts: ctxs
            .into_iter()
            .map(|c| ElabContext {
                name: c.ast.name.clone(),
                sets: c.sets,
                constants: c.constants,
                theorems: c.ast.theorems().cloned().collect(),
                ast: c.ast,
            })
            .collect(),
        synch_groups,
        global_invariants,
        time_var,
        global_constants,
        globinvs_asts: gi_asts,
    };
    (Some(project), diags)
}

// ---------------------------------------------------------------------
// contexts

struct CtxInfo {
    ast: ConstructAst,
    sets: Vec<String>,
    constants: Vec<String>,
    sees: Vec<String>,
    /// Resolved values: enumeration literals, carrier sets and valued
    /// constants.
    values: BTreeMap<String, Value>,
}

fn resolve_contexts(
    ctx_asts: &[ConstructAst],
    builtins: &Builtins,
    diags: &mut Vec<Diagnostic>,
) -> Vec<CtxInfo> {
    let mut ctxs: Vec<CtxInfo> = ctx_asts
        .iter()
        .map(|c| CtxInfo {
            ast: c.clone(),
            sets: c.carrier_sets().map(str::to_string).collect(),
            constants: c.constants().map(str::to_string).collect(),
            sees: c.sees().map(str::to_string).collect(),
            values: BTreeMap::new(),
        })
        .collect();

    // enumeration definitions: partition(S, {a}, {b}, …) or S = {a, b, …}
    for i in 0..ctxs.len() {
        let axioms: Vec<Expr> = ctxs[i].ast.axioms().cloned().collect();
        for ax in &axioms {
            let (set_name, lits) = match ax {
                Expr::Apply(f, args) if f == "partition" && args.len() >= 2 => {
                    let Some(Expr::Ident(s)) = args.first() else {
                        continue;
                    };
                    let mut lits = Vec::new();
                    let mut ok = true;
                    for b in &args[1..] {
                        match b {
                            Expr::SetLit(items) if items.len() == 1 => match &items[0] {
                                Expr::Ident(l) => lits.push(l.clone()),
                                _ => ok = false,
                            },
                            _ => ok = false,
                        }
                    }
                    if !ok {
                        continue;
                    }
                    (s.clone(), lits)
                }
                Expr::Binary(BinOp::Eq, lhs, rhs) => match (&**lhs, &**rhs) {
                    (Expr::Ident(s), Expr::SetLit(items)) => {
                        let mut lits = Vec::new();
                        let mut ok = true;
                        for it in items {
                            match it {
                                Expr::Ident(l) => lits.push(l.clone()),
                                _ => ok = false,
                            }
                        }
                        if !ok {
                            continue;
                        }
                        (s.clone(), lits)
                    }
                    _ => continue,
                },
                _ => continue,
            };
            if !ctxs[i].sets.iter().any(|s| *s == set_name) {
                continue;
            }
            let mut members = Vec::new();
            for l in &lits {
                let v = Value::enum_lit(&set_name, l);
                ctxs[i].values.insert(l.clone(), v.clone());
                members.push(v);
            }
            ctxs[i].values.insert(set_name.clone(), Value::set_from(members));
        }
    }

    // iterative resolution of `c = expr` value axioms; contexts may
    // reference constants of SEEn contexts
    let index: BTreeMap<String, usize> = ctxs
        .iter()
        .enumerate()
        .map(|(i, c)| (c.ast.name.clone(), i))
        .collect();
    let visible_values = |ctxs: &Vec<CtxInfo>, i: usize| -> BTreeMap<String, Value> {
        let mut out = ctxs[i].values.clone();
        for s in &ctxs[i].sees {
            if let Some(&j) = index.get(s) {
                for (k, v) in &ctxs[j].values {
                    out.entry(k.clone()).or_insert_with(|| v.clone());
                }
            }
        }
        out
    };
    for _pass in 0..ctxs.len() + 2 {
        let mut progressed = false;
        for i in 0..ctxs.len() {
            let axioms: Vec<Expr> = ctxs[i].ast.axioms().cloned().collect();
            let env = visible_values(&ctxs, i);
            for ax in &axioms {
                if let Expr::Binary(BinOp::Eq, lhs, rhs) = ax {
                    if let Expr::Ident(cname) = &**lhs {
                        if env.contains_key(cname) {
                            continue; // already valued (or an enum set)
                        }
                        let declares_here = ctxs[i].constants.iter().any(|c| c == cname);
                        let visible_decl = declares_here
                            || ctxs[i].sees.iter().any(|s| {
                                index
                                    .get(s)
                                    .map(|&j| ctxs[j].constants.iter().any(|c| c == cname))
                                    .unwrap_or(false)
                            });
                        if !visible_decl {
                            continue;
                        }
                        if let Ok(v) = eval(rhs, &env, builtins) {
                            // store with the context that declares it
                            let owner = if declares_here {
                                i
                            } else {
                                ctxs[i]
                                    .sees
                                    .iter()
                                    .filter_map(|s| index.get(s).copied())
                                    .find(|&j| ctxs[j].constants.iter().any(|c| c == cname))
                                    .unwrap_or(i)
                            };
                            ctxs[owner].values.insert(cname.clone(), v);
                            progressed = true;
                        }
                    }
                }
            }
        }
        if !progressed {
            break;
        }
    }

    // axiom identifier scope + theorems
    for i in 0..ctxs.len() {
        let env = visible_values(&ctxs, i);
        let cname = ctxs[i].ast.name.clone();
        let declared: BTreeSet<String> = ctxs[i]
            .constants
            .iter()
            .chain(ctxs[i].sets.iter())
            .cloned()
            .chain(ctxs[i].sees.iter().filter_map(|s| index.get(s)).flat_map(|&j| {
                ctxs[j]
                    .constants
                    .iter()
                    .chain(ctxs[j].sets.iter())
                    .cloned()
                    .collect::<Vec<_>>()
            }))
            .collect();
        let axioms: Vec<Expr> = ctxs[i].ast.axioms().cloned().collect();
        for ax in &axioms {
            check_expr_scope(
                ax,
                &|n| declared.contains(n) || n == "ℝ" || n == "ℕ" || n == "BOOL",
                &|_| None,
                builtins,
                &cname,
                diags,
            );
        }
        let theorems: Vec<Expr> = ctxs[i].ast.theorems().cloned().collect();
        for (k, thm) in theorems.iter().enumerate() {
            match eval_pred(thm, &env, builtins) {
                Ok(true) => {}
                Ok(false) => diags.push(Diagnostic::error(
                    at(&cname),
                    codes::THEOREM_FAILED,
                    format!(
                        "theorem #{} of `{}` is false: {}",
                        k + 1,
                        cname,
                        crate::pretty::expr_to_string(thm)
                    ),
                )),
                Err(e) => diags.push(Diagnostic::error(
                    at(&cname),
                    codes::THEOREM_FAILED,
                    format!("theorem #{} of `{}` cannot be evaluated: {e}", k + 1, cname),
                )),
            }
        }
    }
    ctxs
}

// ---------------------------------------------------------------------
// shared helpers

/// Walk an expression checking identifier scope. `visible` answers
/// whether a plain identifier is in scope; `special` may veto a name
/// with a dedicated code (ambiguity). Apply callees may also be
/// built-ins.
fn check_expr_scope(
    e: &Expr,
    visible: &dyn Fn(&str) -> bool,
    special: &dyn Fn(&str) -> Option<&'static str>,
    builtins: &Builtins,
    construct: &str,
    diags: &mut Vec<Diagnostic>,
) {
    fn walk(
        e: &Expr,
        bound: &mut Vec<String>,
        visible: &dyn Fn(&str) -> bool,
        special: &dyn Fn(&str) -> Option<&'static str>,
        builtins: &Builtins,
        construct: &str,
        diags: &mut Vec<Diagnostic>,
    ) {
        match e {
            Expr::Num(_) | Expr::Bool(_) | Expr::EmptySet => {}
            Expr::Ident(n) => {
                if bound.iter().any(|b| b == n) {
                    return;
                }
                if let Some(code) = special(n) {
                    diags.push(Diagnostic::error(
                        at(construct),
                        code,
                        format!("identifier `{n}` is ambiguous in `{construct}`"),
                    ));
                } else if !visible(n) && !matches!(n.as_str(), "ℝ" | "ℕ" | "BOOL") {
                    diags.push(Diagnostic::error(
                        at(construct),
                        codes::UNKNOWN_IDENTIFIER,
                        format!("identifier `{n}` is not visible in `{construct}`"),
                    ));
                }
            }
            Expr::Unary(_, inner) => walk(inner, bound, visible, special, builtins, construct, diags),
            Expr::Binary(_, a, b) => {
                walk(a, bound, visible, special, builtins, construct, diags);
                walk(b, bound, visible, special, builtins, construct, diags);
            }
            Expr::SetLit(es) | Expr::SeqLit(es) => {
                for x in es {
                    walk(x, bound, visible, special, builtins, construct, diags);
                }
            }
            Expr::Interval(a, b) => {
                walk(a, bound, visible, special, builtins, construct, diags);
                walk(b, bound, visible, special, builtins, construct, diags);
            }
            Expr::Apply(f, args) => {
                let f_ok = visible(f)
                    || builtins.contains(f)
                    || bound.iter().any(|b| b == f)
                    || matches!(f.as_str(), "seq" | "ℙ");
                if !f_ok {
                    diags.push(Diagnostic::error(
                        at(construct),
                        codes::UNKNOWN_BUILTIN,
                        format!("`{f}` is neither a visible identifier nor a built-in"),
                    ));
                }
                for a in args {
                    walk(a, bound, visible, special, builtins, construct, diags);
                }
            }
            Expr::Index(b, i) => {
                walk(b, bound, visible, special, builtins, construct, diags);
                walk(i, bound, visible, special, builtins, construct, diags);
            }
            Expr::QuantUnion { var, domain, body } => {
                walk(domain, bound, visible, special, builtins, construct, diags);
                bound.push(var.clone());
                walk(body, bound, visible, special, builtins, construct, diags);
                bound.pop();
            }
        }
    }
    walk(e, &mut Vec::new(), visible, special, builtins, construct, diags);
}

/// Extract `(var, type)` from a typing invariant, or None.
fn typing_of(inv: &Expr, vars: &BTreeSet<String>, carrier_sets: &[String]) -> Option<(String, SemType)> {
    if let Expr::Binary(BinOp::In, lhs, rhs) = inv {
        if let Expr::Ident(v) = &**lhs {
            if vars.contains(v) {
                if let Some(t) = type_from_expr(rhs, carrier_sets) {
                    return Some((v.clone(), t));
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------
// interfaces

fn resolve_interfaces(
    if_asts: &[ConstructAst],
    ctxs: &[CtxInfo],
    builtins: &Builtins,
    diags: &mut Vec<Diagnostic>,
) -> Vec<ElabInterface> {
    let ctx_index: BTreeMap<&str, &CtxInfo> =
        ctxs.iter().map(|c| (c.ast.name.as_str(), c)).collect();
    // collect variable lists first so type-II invariants can resolve
    // remote interfaces
    let var_lists: BTreeMap<&str, BTreeSet<String>> = if_asts
        .iter()
        .map(|c| {
            let vars: BTreeSet<String> = c
                .mode_vars()
                .chain(c.pliant_vars())
                .map(str::to_string)
                .collect();
            (c.name.as_str(), vars)
        })
        .collect();

    let mut out = Vec::new();
    for ast in if_asts {
        let iname = ast.name.clone();
        let mut constants: BTreeMap<String, Value> = BTreeMap::new();
        let mut carrier_sets: Vec<String> = Vec::new();
        for s in ast.sees() {
            match ctx_index.get(s) {
                Some(ctx) => {
                    for (k, v) in &ctx.values {
                        constants.entry(k.clone()).or_insert_with(|| v.clone());
                    }
                    carrier_sets.extend(ctx.sets.iter().cloned());
                }
                None => diags.push(Diagnostic::error(
                    at(&iname),
                    codes::UNKNOWN_CONSTRUCT,
                    format!("SEES target `{s}` is not a context of this project"),
                )),
            }
        }
        let own_vars: BTreeSet<String> = var_lists[iname.as_str()].clone();
        let time = ast.time_var().map(str::to_string);

        // typing
        let invs: Vec<Expr> = ast.invariants().cloned().collect();
        let mut types: BTreeMap<String, SemType> = BTreeMap::new();
        let mut non_typing: Vec<Expr> = Vec::new();
        for inv in &invs {
            match typing_of(inv, &own_vars, &carrier_sets) {
                Some((v, t)) => {
                    if types.insert(v.clone(), t).is_some() {
                        diags.push(Diagnostic::error(
                            at(&iname),
                            codes::DUPLICATE_TYPE,
                            format!("variable `{v}` has more than one typing invariant"),
                        ));
                    }
                }
                None => non_typing.push(inv.clone()),
            }
        }
        let mut vars = Vec::new();
        for clause in &ast.clauses {
            let (names, kind) = match clause {
                Clause::Variables(ns) => (ns, VarKind::Mode),
                Clause::Pliant(ns) => (ns, VarKind::Pliant),
                _ => continue,
            };
            for n in names {
                match types.get(n) {
                    Some(t) => vars.push(VarDecl {
                        name: n.clone(),
                        kind,
                        ty: t.clone(),
                        owner: iname.clone(),
                    }),
                    None => diags.push(Diagnostic::error(
                        at(&iname),
                        codes::MISSING_TYPE,
                        format!("variable `{n}` has no typing invariant"),
                    )),
                }
            }
        }

        // invariant classification
        let reads: Vec<String> = ast.reads().map(str::to_string).collect();
        let refers: Vec<String> = ast.clauses.iter().filter_map(|c| match c {
            Clause::Refers(n) => Some(n.clone()),
            _ => None,
        }).collect();
        let mut monitored = Vec::new();
        let mut type_ii = Vec::new();
        for (idx, inv) in non_typing.iter().enumerate() {
            let frees = inv.free_identifiers();
            let is_local = |n: &String| {
                own_vars.contains(n)
                    || constants.contains_key(n)
                    || Some(n.as_str()) == time.as_deref()
                    || builtins.contains(n)
                    || matches!(n.as_str(), "ℝ" | "ℕ" | "BOOL")
            };
            if frees.iter().all(is_local) {
                monitored.push(inv.clone());
                continue;
            }
            // foreign variables: must be U(u) ⇒ V(v)
            match inv {
                Expr::Binary(BinOp::Implies, a, b) => {
                    let a_ok = a.free_identifiers().iter().all(is_local);
                    let mut remote: Option<String> = None;
                    let mut shape_ok = a_ok;
                    for fv in b.free_identifiers() {
                        if is_local(&fv) {
                            continue;
                        }
                        let owners: Vec<&str> = var_lists
                            .iter()
                            .filter(|(o, vars)| **o != iname.as_str() && vars.contains(&fv))
                            .map(|(o, _)| *o)
                            .collect();
                        match owners.as_slice() {
                            [one] => match &remote {
                                None => remote = Some(one.to_string()),
                                Some(r) if r == one => {}
                                Some(_) => shape_ok = false,
                            },
                            _ => shape_ok = false,
                        }
                    }
                    match (shape_ok, remote) {
                        (true, Some(r)) => {
                            let paired = reads.iter().any(|x| *x == r)
                                && if_asts
                                    .iter()
                                    .find(|c| c.name == r)
                                    .map(|c| {
                                        c.clauses.iter().any(
                                            |cl| matches!(cl, Clause::Refers(n) if *n == iname),
                                        )
                                    })
                                    .unwrap_or(false);
                            if !paired {
                                diags.push(Diagnostic::error(
                                    at(&iname),
                                    codes::TIII_UNPAIRED,
                                    format!(
                                        "type II invariant #{idx} needs `READS {r}` here and `REFERS {iname}` in `{r}`"
                                    ),
                                ));
                            }
                            type_ii.push(TypeII {
                                antecedent: (**a).clone(),
                                consequent: (**b).clone(),
                                remote: r,
                                source: format!("{iname}#{}", idx + 1),
                            });
                        }
                        _ => diags.push(Diagnostic::error(
                            at(&iname),
                            codes::TIII_SHAPE,
                            format!(
                                "invariant #{} of `{iname}` mentions foreign variables but is not of the shape U(u) ⇒ V(v) over one remote interface",
                                idx + 1
                            ),
                        )),
                    }
                }
                _ => diags.push(Diagnostic::error(
                    at(&iname),
                    codes::TIII_SHAPE,
                    format!(
                        "invariant #{} of `{iname}` mentions variables of another construct",
                        idx + 1
                    ),
                )),
            }
        }

        // initialisation
        let mut init: Vec<(String, Expr)> = Vec::new();
        for clause in &ast.clauses {
            if let Clause::Initialisation(assigns) = clause {
                for (t, e) in assigns {
                    if Some(t.as_str()) == time.as_deref() {
                        if !matches!(e, Expr::Num(n) if n.num == 0) {
                            diags.push(Diagnostic::error(
                                at(&iname),
                                codes::TIME_WRITE,
                                "the time variable may only be initialised to 0",
                            ));
                        }
                        continue;
                    }
                    if !own_vars.contains(t) {
                        diags.push(Diagnostic::error(
                            at(&iname),
                            codes::UNKNOWN_IDENTIFIER,
                            format!("INITIALISATION assigns unknown variable `{t}`"),
                        ));
                        continue;
                    }
                    check_expr_scope(
                        e,
                        &|n| own_vars.contains(n) || constants.contains_key(n),
                        &|_| None,
                        builtins,
                        &iname,
                        diags,
                    );
                    init.push((t.clone(), e.clone()));
                }
            }
        }
        for v in &own_vars {
            if !init.iter().any(|(t, _)| t == v) {
                diags.push(Diagnostic::error(
                    at(&iname),
                    codes::MISSING_INIT,
                    format!("interface variable `{v}` is never initialised"),
                ));
            }
        }

        out.push(ElabInterface {
            name: iname,
            vars,
            sees: ast.sees().map(str::to_string).collect(),
            reads,
            refers,
            constants,
            initialisation: init,
            monitored_invariants: monitored,
            type_ii,
            ast: ast.clone(),
        });
    }
    out
}

// ---------------------------------------------------------------------
// machines

fn resolve_machines(
    mch_asts: &[ConstructAst],
    ctxs: &[CtxInfo],
    interfaces: &[ElabInterface],
    builtins: &Builtins,
    diags: &mut Vec<Diagnostic>,
) -> Vec<ElabMachine> {
    let ctx_index: BTreeMap<&str, &CtxInfo> =
        ctxs.iter().map(|c| (c.ast.name.as_str(), c)).collect();
    let if_index: BTreeMap<&str, &ElabInterface> =
        interfaces.iter().map(|i| (i.name.as_str(), i)).collect();

    let mut out = Vec::new();
    for ast in mch_asts {
        let mname = ast.name.clone();
        let mut constants: BTreeMap<String, Value> = BTreeMap::new();
        let mut ambiguous: BTreeSet<String> = BTreeSet::new();
        let mut carrier_sets: Vec<String> = Vec::new();
        for s in ast.sees() {
            match ctx_index.get(s) {
                Some(ctx) => {
                    for (k, v) in &ctx.values {
                        match constants.get(k) {
                            None => {
                                constants.insert(k.clone(), v.clone());
                            }
                            Some(prev) if prev == v => {}
                            Some(_) => {
                                ambiguous.insert(k.clone());
                            }
                        }
                    }
                    carrier_sets.extend(ctx.sets.iter().cloned());
                }
                None => diags.push(Diagnostic::error(
                    at(&mname),
                    codes::UNKNOWN_CONSTRUCT,
                    format!("SEES target `{s}` is not a context of this project"),
                )),
            }
        }
        for a in &ambiguous {
            constants.remove(a);
        }

        for clause in &ast.clauses {
            if let Clause::Refers(_) = clause {
                diags.push(Diagnostic::error(
                    at(&mname),
                    codes::TIII_UNPAIRED,
                    "REFERS is only meaningful in interfaces",
                ));
            }
        }

        // interface views
        let connects: Vec<String> = ast.connects().map(str::to_string).collect();
        let reads: Vec<String> = ast.reads().map(str::to_string).collect();
        let mut iface_vars: BTreeMap<String, IfaceView> = BTreeMap::new();
        let mut time_candidates: BTreeSet<String> = BTreeSet::new();
        if let Some(t) = ast.time_var() {
            time_candidates.insert(t.to_string());
        }
        for (names, access) in [(&connects, Access::ReadWrite), (&reads, Access::ReadOnly)] {
            for n in names {
                match if_index.get(n.as_str()) {
                    Some(i) => {
                        if let Some(t) = i.ast.time_var() {
                            time_candidates.insert(t.to_string());
                        }
                        for v in &i.vars {
                            if iface_vars.contains_key(&v.name) {
                                diags.push(Diagnostic::error(
                                    at(&mname),
                                    codes::AMBIGUOUS_IDENTIFIER,
                                    format!(
                                        "variable `{}` is visible through more than one interface of `{mname}`",
                                        v.name
                                    ),
                                ));
                            }
                            iface_vars.insert(
                                v.name.clone(),
                                IfaceView {
                                    interface: n.clone(),
                                    decl: v.clone(),
                                    access,
                                },
                            );
                        }
                    }
                    None => diags.push(Diagnostic::error(
                        at(&mname),
                        codes::UNKNOWN_CONSTRUCT,
                        format!(
                            "{} target `{n}` is not an interface of this project",
                            if access == Access::ReadWrite { "CONNECTS" } else { "READS" }
                        ),
                    )),
                }
            }
        }
        let time = time_candidates.iter().next().cloned();

        // local variables and typing
        let local_names: BTreeSet<String> = ast
            .mode_vars()
            .chain(ast.pliant_vars())
            .map(str::to_string)
            .collect();
        let invs: Vec<Expr> = ast.invariants().cloned().collect();
        let mut types: BTreeMap<String, SemType> = BTreeMap::new();
        let mut non_typing: Vec<Expr> = Vec::new();
        for inv in &invs {
            match typing_of(inv, &local_names, &carrier_sets) {
                Some((v, t)) => {
                    if types.insert(v.clone(), t).is_some() {
                        diags.push(Diagnostic::error(
                            at(&mname),
                            codes::DUPLICATE_TYPE,
                            format!("variable `{v}` has more than one typing invariant"),
                        ));
                    }
                }
                None => non_typing.push(inv.clone()),
            }
        }
        let mut locals: Vec<VarDecl> = Vec::new();
        for clause in &ast.clauses {
            let (names, kind) = match clause {
                Clause::Variables(ns) => (ns, VarKind::Mode),
                Clause::Pliant(ns) => (ns, VarKind::Pliant),
                _ => continue,
            };
            for n in names {
                if iface_vars.contains_key(n) || constants.contains_key(n) {
                    diags.push(Diagnostic::error(
                        at(&mname),
                        codes::AMBIGUOUS_IDENTIFIER,
                        format!("local variable `{n}` shadows a visible name in `{mname}`"),
                    ));
                }
                match types.get(n) {
                    Some(t) => locals.push(VarDecl {
                        name: n.clone(),
                        kind,
                        ty: t.clone(),
                        owner: mname.clone(),
                    }),
                    None => diags.push(Diagnostic::error(
                        at(&mname),
                        codes::MISSING_TYPE,
                        format!("variable `{n}` has no typing invariant"),
                    )),
                }
            }
        }
        let clocks: Vec<String> = ast.clocks().map(str::to_string).collect();
        for ck in &clocks {
            locals.push(VarDecl {
                name: ck.clone(),
                kind: VarKind::Clock,
                ty: SemType::Real,
                owner: mname.clone(),
            });
        }

        // machine invariants: locality
        let visible_local = |n: &str| {
            local_names.contains(n)
                || clocks.iter().any(|c| c == n)
                || constants.contains_key(n)
                || Some(n) == time.as_deref()
        };
        let mut monitored = Vec::new();
        for (idx, inv) in non_typing.iter().enumerate() {
            let frees = inv.free_identifiers();
            let foreign: Vec<&String> = frees
                .iter()
                .filter(|n| !visible_local(n) && !builtins.contains(n) && !matches!(n.as_str(), "ℝ" | "ℕ" | "BOOL"))
                .collect();
            if foreign.is_empty() {
                monitored.push(inv.clone());
            } else if matches!(inv, Expr::Binary(BinOp::Implies, ..))
                && foreign.iter().all(|n| iface_vars.contains_key(*n) || if_index.values().any(|i| i.vars.iter().any(|v| v.name == **n)))
            {
                diags.push(Diagnostic::error(
                    at(&mname),
                    codes::TIII_OUTSIDE_INTERFACE,
                    format!(
                        "invariant #{} of `{mname}` has type II shape; such invariants are exclusive to interfaces",
                        idx + 1
                    ),
                ));
            } else {
                diags.push(Diagnostic::error(
                    at(&mname),
                    codes::INVARIANT_LOCALITY,
                    format!(
                        "invariant #{} of `{mname}` mentions variables not declared here: {}",
                        idx + 1,
                        foreign.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                    ),
                ));
            }
        }

        // events
        let events = resolve_events(
            ast,
            &mname,
            &local_names,
            &locals,
            &clocks,
            &iface_vars,
            &constants,
            &ambiguous,
            time.as_deref(),
            builtins,
            diags,
        );

        // every local mode/pliant variable needs an INITIALISATION assignment
        if let Some(init_ev) = events.iter().find(|e| e.is_initialisation()) {
            for v in &local_names {
                if !init_ev.assigns.iter().any(|(t, _)| t == v) {
                    diags.push(Diagnostic::error(
                        at(&mname),
                        codes::MISSING_INIT,
                        format!("variable `{v}` is not assigned by INITIALISATION of `{mname}`"),
                    ));
                }
            }
        } else if !local_names.is_empty() {
            diags.push(Diagnostic::error(
                at(&mname),
                codes::MISSING_INIT,
                format!("machine `{mname}` declares variables but has no INITIALISATION event"),
            ));
        }

        // pliant co-scheduling restriction
        check_pliant_exclusivity(&mname, &events, &constants, builtins, diags);

        out.push(ElabMachine {
            name: mname,
            locals,
            clocks,
            sees: ast.sees().map(str::to_string).collect(),
            connects,
            reads,
            iface_vars,
            constants,
            events,
            monitored_invariants: monitored,
            ast: ast.clone(),
        });
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn resolve_events(
    ast: &ConstructAst,
    mname: &str,
    local_names: &BTreeSet<String>,
    locals: &[VarDecl],
    clocks: &[String],
    iface_vars: &BTreeMap<String, IfaceView>,
    constants: &BTreeMap<String, Value>,
    ambiguous: &BTreeSet<String>,
    time: Option<&str>,
    builtins: &Builtins,
    diags: &mut Vec<Diagnostic>,
) -> Vec<ElabEvent> {
    let mut out = Vec::new();
    let local_kind = |n: &str| locals.iter().find(|v| v.name == n).map(|v| v.kind);
    for ev in ast.events() {
        // parameter shadowing
        for (p, _) in &ev.params {
            if local_names.contains(p)
                || iface_vars.contains_key(p)
                || constants.contains_key(p)
                || Some(p.as_str()) == time
            {
                diags.push(Diagnostic::error(
                    at(mname),
                    codes::PARAM_SHADOWS,
                    format!("parameter `{p}` of `{}` shadows a visible name", ev.name),
                ));
            }
        }
        let params: BTreeSet<&str> = ev.params.iter().map(|(p, _)| p.as_str()).collect();
        let visible = |n: &str| {
            local_names.contains(n)
                || clocks.iter().any(|c| c == n)
                || iface_vars.contains_key(n)
                || constants.contains_key(n)
                || Some(n) == time
                || params.contains(n)
        };
        let special = |n: &str| {
            if ambiguous.contains(n) {
                Some(codes::AMBIGUOUS_IDENTIFIER)
            } else {
                None
            }
        };
        let mut check = |e: &Expr| {
            check_expr_scope(e, &visible, &special, builtins, mname, diags);
        };
        if let Some(g) = &ev.when_guard {
            check(g);
        }
        if let Some(g) = &ev.init_guard {
            check(g);
        }
        for (_, e) in ev.body.assigns.iter().chain(ev.body.odes.iter()) {
            check(e);
        }
        if let Some(Comply::Pred(p)) = &ev.body.comply {
            check(p);
        }

        if ev.body.nondet.is_some() {
            diags.push(Diagnostic::error(
                at(mname),
                codes::NONDET_UPDATE,
                format!(
                    "event `{}` uses the nondeterministic update `:|`, which this toolchain does not execute; rewrite it as deterministic assignments with ANY parameters",
                    ev.name
                ),
            ));
        }

        // pliant WHEN guards range over mode variables, time and clocks only
        if ev.status == EventStatus::Pliant {
            if let Some(g) = &ev.when_guard {
                for n in g.free_identifiers() {
                    let pliant_local = local_kind(&n) == Some(VarKind::Pliant);
                    let pliant_iface = iface_vars
                        .get(&n)
                        .map(|v| v.decl.kind == VarKind::Pliant)
                        .unwrap_or(false);
                    if pliant_local || pliant_iface {
                        diags.push(Diagnostic::error(
                            at(mname),
                            codes::GUARD_KIND,
                            format!(
                                "WHEN guard of pliant event `{}` mentions pliant variable `{n}`; use INIT for pliant-state conditions",
                                ev.name
                            ),
                        ));
                    }
                }
            }
        }

        // write rules
        for (t, e) in &ev.body.assigns {
            if Some(t.as_str()) == time {
                let is_init_zero =
                    ev.name == "INITIALISATION" && matches!(e, Expr::Num(n) if n.num == 0);
                if !is_init_zero {
                    diags.push(Diagnostic::error(
                        at(mname),
                        codes::TIME_WRITE,
                        format!("event `{}` assigns the time variable", ev.name),
                    ));
                }
                continue;
            }
            if local_names.contains(t) || clocks.iter().any(|c| c == t) {
                continue;
            }
            match iface_vars.get(t) {
                Some(IfaceView {
                    access: Access::ReadWrite,
                    ..
                }) => {}
                Some(IfaceView {
                    access: Access::ReadOnly,
                    interface,
                    ..
                }) => diags.push(Diagnostic::error(
                    at(mname),
                    codes::WRITE_VIA_READS,
                    format!(
                        "event `{}` writes `{t}`, but `{mname}` only READS `{interface}`",
                        ev.name
                    ),
                )),
                None => diags.push(Diagnostic::error(
                    at(mname),
                    codes::WRITE_UNCONNECTED,
                    format!("event `{}` writes `{t}`, which `{mname}` cannot write", ev.name),
                )),
            }
        }
        for (t, _) in &ev.body.odes {
            let kind = local_kind(t).or_else(|| iface_vars.get(t).map(|v| v.decl.kind));
            match kind {
                Some(VarKind::Pliant) => {
                    if let Some(IfaceView {
                        access: Access::ReadOnly,
                        interface,
                        ..
                    }) = iface_vars.get(t)
                    {
                        diags.push(Diagnostic::error(
                            at(mname),
                            codes::WRITE_VIA_READS,
                            format!(
                                "event `{}` drives `{t}`, but `{mname}` only READS `{interface}`",
                                ev.name
                            ),
                        ));
                    }
                }
                _ => diags.push(Diagnostic::error(
                    at(mname),
                    codes::ODE_TARGET,
                    format!("ODE target `{t}` in `{}` is not a pliant variable", ev.name),
                )),
            }
        }

        out.push(ElabEvent {
            name: ev.name.clone(),
            status: ev.status,
            params: ev.params.clone(),
            when_guard: ev.when_guard.clone(),
            init_guard: ev.init_guard.clone(),
            assigns: ev.body.assigns.clone(),
            odes: ev.body.odes.clone(),
            comply: ev.body.comply.clone(),
        });
    }
    out
}

// ---------------------------------------------------------------------
// pliant exclusivity

#[derive(Debug, Clone, PartialEq)]
enum Constraint {
    Allowed(Vec<Value>),
    Forbidden(Vec<Value>),
}

fn guard_constraints(
    guard: &Expr,
    constants: &BTreeMap<String, Value>,
    builtins: &Builtins,
) -> (BTreeMap<String, Vec<Constraint>>, Vec<(String, bool)>) {
    let mut per_var: BTreeMap<String, Vec<Constraint>> = BTreeMap::new();
    let mut polarity: Vec<(String, bool)> = Vec::new();
    for atom in guard.conjuncts() {
        let (op, lhs, rhs) = match atom {
            Expr::Binary(op, a, b) if op.is_comparison() => (*op, &**a, &**b),
            _ => continue,
        };
        // canonical polarity key for expression-level matching
        match op {
            BinOp::Eq | BinOp::Ne => {
                let key = format!(
                    "{}={}",
                    crate::pretty::expr_to_string(lhs),
                    crate::pretty::expr_to_string(rhs)
                );
                polarity.push((key, op == BinOp::Eq));
            }
            _ => {}
        }
        // variable-level constraints
        let (var, const_side, positive) = match (op, lhs, rhs) {
            (BinOp::Eq, Expr::Ident(v), c) => (v, c, true),
            (BinOp::Eq, c, Expr::Ident(v)) => (v, c, true),
            (BinOp::Ne, Expr::Ident(v), c) => (v, c, false),
            (BinOp::Ne, c, Expr::Ident(v)) => (v, c, false),
            (BinOp::In, Expr::Ident(v), c) => (v, c, true),
            (BinOp::NotIn, Expr::Ident(v), c) => (v, c, false),
            _ => continue,
        };
        if constants.contains_key(var) {
            continue;
        }
        let Ok(value) = eval(const_side, constants, builtins) else {
            continue;
        };
        let vals = match (op, value) {
            (BinOp::In | BinOp::NotIn, Value::Set(xs)) => xs,
            (_, v) => vec![v],
        };
        let c = if positive {
            Constraint::Allowed(vals)
        } else {
            Constraint::Forbidden(vals)
        };
        per_var.entry(var.clone()).or_default().push(c);
    }
    (per_var, polarity)
}

/// No two pliant events of one machine may be simultaneously enabled;
/// this is checked syntactically via mutually exclusive WHEN guards.
fn check_pliant_exclusivity(
    mname: &str,
    events: &[ElabEvent],
    constants: &BTreeMap<String, Value>,
    builtins: &Builtins,
    diags: &mut Vec<Diagnostic>,
) {
    let pliants: Vec<&ElabEvent> = events
        .iter()
        .filter(|e| e.status == EventStatus::Pliant)
        .collect();
    for i in 0..pliants.len() {
        for j in i + 1..pliants.len() {
            let (a, b) = (pliants[i], pliants[j]);
            let exclusive = match (&a.when_guard, &b.when_guard) {
                (Some(ga), Some(gb)) => {
                    let (ca, pa) = guard_constraints(ga, constants, builtins);
                    let (cb, pb) = guard_constraints(gb, constants, builtins);
                    let by_var = ca.iter().any(|(v, cons_a)| {
                        cb.get(v).map_or(false, |cons_b| {
                            cons_a.iter().any(|x| {
                                cons_b.iter().any(|y| match (x, y) {
                                    (Constraint::Allowed(xs), Constraint::Allowed(ys)) => {
                                        xs.iter().all(|x| !ys.contains(x))
                                    }
                                    (Constraint::Allowed(xs), Constraint::Forbidden(ys))
                                    | (Constraint::Forbidden(ys), Constraint::Allowed(xs)) => {
                                        xs.iter().all(|x| ys.contains(x))
                                    }
                                    _ => false,
                                })
                            })
                        })
                    });
                    let by_polarity = pa
                        .iter()
                        .any(|(k, s)| pb.iter().any(|(k2, s2)| k == k2 && s != s2));
                    by_var || by_polarity
                }
                _ => false,
            };
            if !exclusive {
                diags.push(Diagnostic::error(
                    at(mname),
                    codes::PLIANT_OVERLAP,
                    format!(
                        "pliant events `{}` and `{}` of `{mname}` may be enabled simultaneously; their WHEN guards must be mutually exclusive",
                        a.name, b.name
                    ),
                ));
            }
        }
    }
}

// ---------------------------------------------------------------------
// feasibility

/// Static feasibility scan: warnings only.
///
/// Mode events must give every declared output parameter an after-value;
/// pliant events must specify some behaviour (COMPLY or SOLVE) — frame
/// constancy covers variables they leave undriven.
pub fn feasibility_scan(project: &ElaboratedProject) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for m in &project.machines {
        for ev in &m.events {
            match ev.status {
                EventStatus::Ordinary | EventStatus::Asynch => {
                    for (p, dir) in &ev.params {
                        if *dir == ParamDir::Output && !ev.assigns.iter().any(|(t, _)| t == p) {
                            out.push(Diagnostic::warning(
                                at(&m.name),
                                codes::UNASSIGNED_OUTPUT,
                                format!(
                                    "output `{p}` of `{}.{}` has no defining assignment",
                                    m.name, ev.name
                                ),
                            ));
                        }
                    }
                }
                EventStatus::Pliant => {
                    if ev.comply.is_none() && ev.odes.is_empty() && ev.assigns.is_empty() {
                        out.push(Diagnostic::warning(
                            at(&m.name),
                            codes::PLIANT_EMPTY,
                            format!(
                                "pliant event `{}.{}` has neither COMPLY nor SOLVE",
                                m.name, ev.name
                            ),
                        ));
                    }
                }
            }
        }
    }
    out
}
