//! Diagnostics shared by the parser, elaborator and runtime.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// Location of a diagnostic: path plus 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Location {
    pub path: String,
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.path, self.line, self.col)
    }
}

/// A located diagnostic with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: Location,
    pub code: &'static str,
    pub message: String,
}

impl Diagnostic {
    pub fn error(location: Location, code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            location,
            code,
            message: message.into(),
        }
    }

    pub fn warning(location: Location, code: &'static str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            location,
            code,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}: {}: {}",
            self.location,
            match self.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            },
            self.code,
            self.message
        )
    }
}

/// Stable diagnostic codes. Tests and golden fixtures match on these.
pub mod codes {
    // parser
    pub const LEX_ERROR: &str = "lex-error";
    pub const BAD_SYNTAX: &str = "bad-syntax";
    pub const MISSING_END: &str = "missing-end";
    pub const DUPLICATE_CLAUSE: &str = "duplicate-clause";
    pub const DUPLICATE_NAME: &str = "duplicate-name";
    pub const NO_CONSTRUCTS: &str = "no-constructs";
    pub const UNREADABLE_FILE: &str = "unreadable-file";
    // elaborator
    pub const UNKNOWN_CONSTRUCT: &str = "unknown-construct";
    pub const UNKNOWN_IDENTIFIER: &str = "unknown-identifier";
    pub const AMBIGUOUS_IDENTIFIER: &str = "ambiguous-identifier";
    pub const WRITE_VIA_READS: &str = "write-via-reads";
    pub const WRITE_UNCONNECTED: &str = "write-unconnected";
    pub const TIII_OUTSIDE_INTERFACE: &str = "tIIi-outside-interface";
    pub const TIII_SHAPE: &str = "tIIi-shape";
    pub const TIII_UNPAIRED: &str = "tIIi-unpaired";
    pub const INVARIANT_LOCALITY: &str = "invariant-locality";
    pub const TIME_NAME_CONFLICT: &str = "time-name-conflict";
    pub const MISSING_TYPE: &str = "missing-type";
    pub const DUPLICATE_TYPE: &str = "duplicate-type";
    pub const SYNCH_UNKNOWN_MEMBER: &str = "synch-unknown-member";
    pub const SYNCH_NOT_MODE_EVENT: &str = "synch-not-mode-event";
    pub const SYNCH_SAME_MACHINE: &str = "synch-same-machine";
    pub const RENAMING_COLLISION: &str = "renaming-collision";
    pub const UNKNOWN_RENAME_SOURCE: &str = "unknown-rename-source";
    pub const NONDET_UPDATE: &str = "nondet-update";
    pub const UNKNOWN_BUILTIN: &str = "unknown-builtin";
    pub const PARAM_SHADOWS: &str = "param-shadows";
    pub const UNVALUED_CONSTANT: &str = "unvalued-constant";
    pub const THEOREM_FAILED: &str = "theorem-failed";
    pub const PLIANT_OVERLAP: &str = "pliant-overlap";
    pub const GUARD_KIND: &str = "guard-kind";
    pub const DUPLICATE_TARGET: &str = "duplicate-target";
    pub const MISSING_INIT: &str = "missing-init";
    pub const ODE_TARGET: &str = "ode-target";
    pub const TIME_WRITE: &str = "time-write";
    // feasibility warnings
    pub const UNASSIGNED_OUTPUT: &str = "unassigned-output";
    pub const PLIANT_EMPTY: &str = "pliant-empty";
    // runtime aborts
    pub const NO_PLIANT_SUCCESSOR: &str = "no-pliant-successor";
    pub const NO_SUCCESSOR: &str = "no-successor";
    pub const UNBOUND_ANY: &str = "unbound-any";
    pub const SYNCH_WRITE_CONFLICT: &str = "synch-write-conflict";
    pub const INIT_FAILED: &str = "init-failed";
    pub const EVAL_FAILED: &str = "eval-failed";
    pub const INFEASIBLE: &str = "infeasible";
    pub const LIVELOCK: &str = "livelock";
}
