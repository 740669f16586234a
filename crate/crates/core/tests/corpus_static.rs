//! Parse and elaborate the shipped projects.

use heb_core::ast::ConstructKind;
use heb_core::corpus;
use heb_core::elab::elaborate;
use heb_core::parser::parse_project_dir;

#[test]
fn incident_response_parses_cleanly() {
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    assert!(files.len() >= 10, "expected at least 10 corpus files, got {}", files.len());
    let r = parse_project_dir(&files);
    let errors: Vec<_> = r.diagnostics.iter().filter(|d| d.is_error()).collect();
    assert!(errors.is_empty(), "parse errors: {errors:#?}");
    assert!(r.constructs.len() >= 10);
}

#[test]
fn incident_response_elaborates_to_seven_machines() {
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let r = parse_project_dir(&files);
    assert!(!r.has_errors(), "{:?}", r.diagnostics);
    let (project, diags) = elaborate(&r.constructs, &corpus::project_builtins());
    let errors: Vec<_> = diags.iter().filter(|d| d.is_error()).collect();
    assert!(errors.is_empty(), "elaboration errors: {errors:#?}");
    let project = project.unwrap();
    let names: Vec<&str> = project.machines.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "Controller_Mch",
            "EnvironmentScenario_Mch",
            "Drone1_Mch",
            "Drone2_Mch",
            "Responder1_Mch",
            "Responder2_Mch",
            "Responder3_Mch"
        ]
    );
    assert_eq!(project.synch_groups.len(), 15);
    assert_eq!(project.global_invariants.len(), 1);
    assert_eq!(project.time_var.as_deref(), Some("t"));
    // instantiated drone velocities are distinct
    let d1 = project.machine("Drone1_Mch").unwrap();
    let d2 = project.machine("Drone2_Mch").unwrap();
    assert_eq!(d1.constants["Vdr1"], heb_core::Value::Int(40));
    assert_eq!(d2.constants["Vdr2"], heb_core::Value::Int(50));
    assert!(d1.iface_vars.contains_key("dr1x"));
    assert!(d1.iface_vars.contains_key("dr2x"));
}

#[test]
fn parse_is_order_independent_and_deterministic() {
    let mut files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let r1 = parse_project_dir(&files);
    let r2 = parse_project_dir(&files);
    assert_eq!(r1.constructs, r2.constructs);
    assert_eq!(r1.diagnostics, r2.diagnostics);
    files.reverse();
    let r3 = parse_project_dir(&files);
    let mut names1: Vec<_> = r1.constructs.iter().map(|c| c.name.clone()).collect();
    let mut names3: Vec<_> = r3.constructs.iter().map(|c| c.name.clone()).collect();
    names1.sort();
    names3.sort();
    assert_eq!(names1, names3);
}

#[test]
fn duplicate_file_listing_is_a_duplicate_name_error() {
    let files = corpus::heb_files(&corpus::nodes_dir()).unwrap();
    let mut twice = files.clone();
    twice.extend(files.clone());
    let r = parse_project_dir(&twice);
    assert!(r
        .diagnostics
        .iter()
        .any(|d| d.code == heb_core::codes::DUPLICATE_NAME));
}

#[test]
fn nodes_parses_and_elaborates() {
    let files = corpus::heb_files(&corpus::nodes_dir()).unwrap();
    let r = parse_project_dir(&files);
    assert!(!r.has_errors(), "{:?}", r.diagnostics);
    let (project, diags) = elaborate(&r.constructs, &corpus::project_builtins());
    assert!(!diags.iter().any(|d| d.is_error()), "{diags:#?}");
    let project = project.unwrap();
    assert_eq!(project.machines.len(), 1);
    assert_eq!(project.machines[0].name, "Nodes");
}

#[test]
fn the_appendix_theorem_guards_duration() {
    // editing DURATION below the last scheduled time must fail the theorem
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let mut r = parse_project_dir(&files);
    assert!(!r.has_errors());
    for c in &mut r.constructs {
        if c.name == "IncidentResponse_CTX" {
            for clause in &mut c.clauses {
                if let heb_core::ast::Clause::Axioms(axs) = clause {
                    for ax in axs.iter_mut() {
                        if let heb_core::ast::Expr::Binary(heb_core::ast::BinOp::Eq, lhs, rhs) = ax {
                            if **lhs == heb_core::ast::Expr::ident("DURATION") {
                                **rhs = heb_core::ast::Expr::Num(heb_core::ast::Rational::from_int(50));
                            }
                        }
                    }
                }
            }
        }
    }
    let (project, diags) = elaborate(&r.constructs, &corpus::project_builtins());
    assert!(project.is_none());
    assert!(diags.iter().any(|d| d.code == heb_core::codes::THEOREM_FAILED));
}

#[test]
fn corpus_roundtrips_through_pretty_printer() {
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let r = parse_project_dir(&files);
    for c in &r.constructs {
        let printed = heb_core::pretty_print(c);
        let back = heb_core::parse_unit(&heb_core::SourceUnit::new("printed.heb", printed.clone()));
        assert!(!back.has_errors(), "reparse of {}:\n{printed}\n{:#?}", c.name, back.diagnostics);
        assert_eq!(back.constructs.len(), 1, "{}", c.name);
        assert_eq!(&back.constructs[0], c, "round-trip mismatch for {}", c.name);
    }
}

#[test]
fn elaboration_is_idempotent_on_regenerated_constructs() {
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let r = parse_project_dir(&files);
    let (project, _) = elaborate(&r.constructs, &corpus::project_builtins());
    let project = project.unwrap();
    // pretty-print the instantiated constructs, reparse, re-elaborate
    let regenerated = project.to_constructs();
    let mut text = String::new();
    for c in &regenerated {
        text.push_str(&heb_core::pretty_print(c));
        text.push('\n');
    }
    let back = heb_core::parse_unit(&heb_core::SourceUnit::new("regen.heb", text));
    assert!(!back.has_errors(), "{:#?}", back.diagnostics);
    let (again, diags) = elaborate(&back.constructs, &corpus::project_builtins());
    assert!(!diags.iter().any(|d| d.is_error()), "{diags:#?}");
    let again = again.unwrap();
    let names: Vec<_> = again.machines.iter().map(|m| m.name.clone()).collect();
    let orig: Vec<_> = project.machines.iter().map(|m| m.name.clone()).collect();
    assert_eq!(names, orig);
    for (a, b) in project.machines.iter().zip(again.machines.iter()) {
        assert_eq!(a.ast, b.ast, "machine {} changed across re-elaboration", a.name);
        assert_eq!(a.constants, b.constants);
    }
    assert_eq!(project.synch_groups, again.synch_groups);
    assert_eq!(project.global_invariants, again.global_invariants);
}

#[test]
fn construct_kinds_are_as_listed() {
    let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
    let r = parse_project_dir(&files);
    let count = |k: ConstructKind| r.constructs.iter().filter(|c| c.kind == k).count();
    assert_eq!(count(ConstructKind::Project), 1);
    assert_eq!(count(ConstructKind::GlobInvs), 1);
    assert_eq!(count(ConstructKind::Context), 5);
    assert_eq!(count(ConstructKind::Interface), 3);
    assert_eq!(count(ConstructKind::Machine), 4);
}
