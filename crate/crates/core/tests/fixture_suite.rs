//! The fixture suite is the executable table of contents of the
//! project's behaviour: every golden value and every diagnostic code
//! has a file under fixtures/.

use std::path::PathBuf;

use heb_core::corpus::project_builtins;
use heb_core::fixtures::{run_fixture, run_suite};

fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("fixtures")
}

#[test]
fn negative_fixtures_produce_their_codes() {
    let b = project_builtins();
    let results = run_suite(&fixtures_root().join("negative"), &b);
    assert!(results.len() >= 12, "expected at least 12 negative fixtures");
    for r in &results {
        println!("{}", r.line());
    }
    assert!(results.iter().all(|r| r.pass), "some fixtures failed");
    // the battery covers the full diagnostic code list
    let expected_codes = [
        "write-via-reads",
        "tIIi-outside-interface",
        "synch-write-conflict",
        "missing-end",
        "duplicate-name",
        "no-pliant-successor",
        "unbound-any",
        "theorem-failed",
        "renaming-collision",
        "no-successor",
        "duplicate-clause",
        "unknown-builtin",
    ];
    for code in expected_codes {
        assert!(
            results.iter().any(|r| r.expected.ends_with(code)),
            "no fixture covers `{code}`"
        );
    }
}

#[test]
fn golden_fixtures_pass() {
    let b = project_builtins();
    let results = run_suite(&fixtures_root().join("golden"), &b);
    assert!(!results.is_empty());
    for r in &results {
        println!("{}", r.line());
        assert!(r.pass, "{}", r.line());
    }
}

#[test]
fn empty_suite_reports_nothing() {
    let b = project_builtins();
    let dir = tempfile::tempdir().unwrap();
    assert!(run_suite(dir.path(), &b).is_empty());
}

#[test]
fn runner_detects_a_mutated_expectation() {
    // the runner itself must fail when the expected value is wrong
    let b = project_builtins();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mutated.heb");
    std::fs::write(
        &path,
        "-- expect: check theorem-failed\nCONTEXT Fine_CTX\n  CONSTANTS\n    k\n  AXIOMS\n    k ∈ ℝ , k = 1\n  THEOREMS\n    k = 1\nEND\n",
    )
    .unwrap();
    let r = run_fixture(&path, &b);
    assert!(!r.pass, "mutated fixture must fail: {}", r.line());
    assert!(r.got.contains("check ok"));
}
