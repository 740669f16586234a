//! Core library: parsing, elaboration and deterministic execution of
//! multi-machine HEB (Hybrid Event-B) projects with runtime invariant
//! monitoring.

pub mod ast;
pub mod builtins;
pub mod corpus;
pub mod diag;
pub mod elab;
pub mod fixtures;
pub mod geometry;
pub mod monitor;
pub mod ode;
pub mod scenario;
pub mod schedule;
pub mod trace;
pub mod eval;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod value;

pub use ast::{ConstructAst, ConstructKind, EventAst, EventStatus, Expr};
pub use diag::{codes, Diagnostic, Location, Severity};
pub use elab::{elaborate, feasibility_scan, instantiate, ElabMachine, ElaboratedProject};
pub use parser::{parse_project_dir, parse_unit, ParseOutcome, SourceUnit};
pub use builtins::Builtins;
pub use eval::{eval, eval_guard, eval_pred, Env, EvalError};
pub use monitor::{check_global_invariant_window, check_point, Monitor, Phase, Violation};
pub use scenario::ScenarioBindings;
pub use schedule::{run_project, Abort, AsynchPolicy, EventOccurrence, Run, RunConfig, RunOutcome};
pub use pretty::{expr_to_string, pretty_print};
pub use value::{Valuation, Value};
