//! Golden-fixture runner.
//!
//! A fixture is a `.heb` file whose first line carries an expectation
//! marker:
//!
//! ```text
//! -- expect: parse ok            the file parses without errors
//! -- expect: check ok            it also elaborates (theorems included)
//! -- expect: parse <code>        parsing raises exactly this code first
//! -- expect: check <code>        elaboration raises this code
//! -- expect: run <code>          executing aborts with this code
//! ```
//!
//! `run` fixtures execute without a scenario at horizon 2 with the
//! default numeric configuration.

use std::path::Path;

use crate::builtins::Builtins;
use crate::diag::Diagnostic;
use crate::elab::elaborate;
use crate::parser::{parse_unit, SourceUnit};
use crate::scenario::ScenarioBindings;
use crate::schedule::{run_project, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Check,
    Run,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Ok(Stage),
    Code(Stage, String),
}

#[derive(Debug, Clone)]
pub struct FixtureResult {
    pub name: String,
    pub expected: String,
    pub got: String,
    pub pass: bool,
}

impl FixtureResult {
    pub fn line(&self) -> String {
        format!(
            "{} {} — expected {}, got {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            self.got
        )
    }
}

fn parse_marker(content: &str) -> Result<Expectation, String> {
    let first = content.lines().next().unwrap_or_default();
    let rest = first
        .trim()
        .strip_prefix("-- expect:")
        .ok_or("first line must be `-- expect: <stage> <code|ok>`")?;
    let mut it = rest.split_whitespace();
    let stage = match it.next() {
        Some("parse") => Stage::Parse,
        Some("check") => Stage::Check,
        Some("run") => Stage::Run,
        other => return Err(format!("unknown stage {other:?}")),
    };
    match it.next() {
        Some("ok") => Ok(Expectation::Ok(stage)),
        Some(code) => Ok(Expectation::Code(stage, code.to_string())),
        None => Err("missing code".into()),
    }
}

fn first_error(diags: &[Diagnostic]) -> Option<&Diagnostic> {
    diags.iter().find(|d| d.is_error())
}

/// Execute one fixture through the public pipeline.
pub fn run_fixture(path: &Path, builtins: &Builtins) -> FixtureResult {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let content = match std::fs::read_to_string(path) {
        Ok(c) => c,
        Err(e) => {
            return FixtureResult {
                name,
                expected: "readable file".into(),
                got: e.to_string(),
                pass: false,
            }
        }
    };
    let expectation = match parse_marker(&content) {
        Ok(e) => e,
        Err(msg) => {
            return FixtureResult {
                name,
                expected: "a marker line".into(),
                got: msg,
                pass: false,
            }
        }
    };
    let stage_str = |s: &Stage| match s {
        Stage::Parse => "parse",
        Stage::Check => "check",
        Stage::Run => "run",
    };
    let expected_str = match &expectation {
        Expectation::Ok(s) => format!("{} ok", stage_str(s)),
        Expectation::Code(s, c) => format!("{} {c}", stage_str(s)),
    };

    let mut parsed = parse_unit(&SourceUnit::new(name.clone(), content));
    let dups = crate::parser::check_unique_names(&parsed.constructs);
    let parse_err = first_error(&parsed.diagnostics).cloned();
    parsed.diagnostics.extend(dups.clone());
    let stage = match &expectation {
        Expectation::Ok(s) | Expectation::Code(s, _) => *s,
    };
    let got: String = 'outcome: {
        if let Some(e) = &parse_err {
            break 'outcome format!("parse {}", e.code);
        }
        if stage == Stage::Parse {
            break 'outcome "parse ok".into();
        }
        if let Some(e) = first_error(&dups) {
            break 'outcome format!("check {}", e.code);
        }
        let (project, diags) = elaborate(&parsed.constructs, builtins);
        if let Some(e) = first_error(&diags) {
            break 'outcome format!("check {}", e.code);
        }
        let Some(project) = project else {
            break 'outcome "check failed".into();
        };
        if stage == Stage::Check {
            break 'outcome "check ok".into();
        }
        let cfg = RunConfig {
            seed: 0,
            horizon: 2.0,
            ..RunConfig::default()
        };
        match run_project(&project, builtins, cfg, ScenarioBindings::empty(), String::new()) {
            Err(msg) => format!("run config-error ({msg})"),
            Ok(out) => match out.abort {
                Some(a) => format!("run {}", a.code),
                None => "run ok".into(),
            },
        }
    };
    let pass = got == expected_str;
    FixtureResult {
        name,
        expected: expected_str,
        got,
        pass,
    }
}

/// Run every fixture of a directory (sorted by name) and report.
pub fn run_suite(dir: &Path, builtins: &Builtins) -> Vec<FixtureResult> {
    let mut files: Vec<_> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|x| x == "heb").unwrap_or(false))
            .collect(),
        Err(_) => return Vec::new(),
    };
    files.sort();
    files.iter().map(|f| run_fixture(f, builtins)).collect()
}
