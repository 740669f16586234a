//! Elaboration: name resolution, instantiation, kind/type inference and
//! the structural rules for multi-machine projects.

mod build;
mod instantiate;
mod typing;

pub use build::{elaborate, feasibility_scan};
pub use instantiate::{instantiate, rename_in_expr};
pub use typing::{conforms, type_from_expr, SemType};

use std::collections::BTreeMap;

use crate::ast::{Comply, ConstructAst, EventStatus, Expr, ParamDir, SynchGroupAst};
use crate::value::Value;

/// Kind of a state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Mode,
    Pliant,
    Clock,
    Time,
}

/// A resolved variable declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub ty: SemType,
    /// Construct that declares the variable.
    pub owner: String,
}

/// A resolved event, ready for scheduling.
#[derive(Debug, Clone, PartialEq)]
pub struct ElabEvent {
    pub name: String,
    pub status: EventStatus,
    pub params: Vec<(String, ParamDir)>,
    pub when_guard: Option<Expr>,
    pub init_guard: Option<Expr>,
    pub assigns: Vec<(String, Expr)>,
    pub odes: Vec<(String, Expr)>,
    pub comply: Option<Comply>,
}

impl ElabEvent {
    pub fn is_initialisation(&self) -> bool {
        self.name == "INITIALISATION"
    }
}

/// How a machine may touch an interface variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    ReadWrite,
    ReadOnly,
}

/// A variable visible to a machine through an interface.
#[derive(Debug, Clone, PartialEq)]
pub struct IfaceView {
    pub interface: String,
    pub decl: VarDecl,
    pub access: Access,
}

/// A fully resolved machine.
#[derive(Debug, Clone)]
pub struct ElabMachine {
    pub name: String,
    pub locals: Vec<VarDecl>,
    pub clocks: Vec<String>,
    pub sees: Vec<String>,
    pub connects: Vec<String>,
    pub reads: Vec<String>,
    /// Interface variables visible to this machine, by name.
    pub iface_vars: BTreeMap<String, IfaceView>,
    /// Constants visible to this machine (including enumeration literals
    /// and carrier sets) with their values.
    pub constants: BTreeMap<String, Value>,
    pub events: Vec<ElabEvent>,
    /// Non-typing local invariants, monitored at runtime.
    pub monitored_invariants: Vec<Expr>,
    /// Instantiated source AST.
    pub ast: ConstructAst,
}

impl ElabMachine {
    pub fn local(&self, name: &str) -> Option<&VarDecl> {
        self.locals.iter().find(|v| v.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&ElabEvent> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn pliant_events(&self) -> impl Iterator<Item = &ElabEvent> {
        self.events.iter().filter(|e| e.status == EventStatus::Pliant)
    }

    /// May this machine write `var`? Locals are always writable; interface
    /// variables require CONNECTS.
    pub fn writable(&self, var: &str) -> bool {
        if self.local(var).is_some() {
            return true;
        }
        matches!(
            self.iface_vars.get(var),
            Some(IfaceView {
                access: Access::ReadWrite,
                ..
            })
        )
    }
}

/// A type II invariant: local antecedent implies a predicate over one
/// remote interface's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeII {
    pub antecedent: Expr,
    pub consequent: Expr,
    pub remote: String,
    pub source: String,
}

/// A fully resolved interface.
#[derive(Debug, Clone)]
pub struct ElabInterface {
    pub name: String,
    pub vars: Vec<VarDecl>,
    pub sees: Vec<String>,
    pub reads: Vec<String>,
    pub refers: Vec<String>,
    pub constants: BTreeMap<String, Value>,
    pub initialisation: Vec<(String, Expr)>,
    pub monitored_invariants: Vec<Expr>,
    pub type_ii: Vec<TypeII>,
    pub ast: ConstructAst,
}

/// A resolved context: carrier sets and valued constants.
#[derive(Debug, Clone)]
pub struct ElabContext {
    pub name: String,
    pub sets: Vec<String>,
    pub constants: Vec<String>,
    pub theorems: Vec<Expr>,
    pub ast: ConstructAst,
}

/// A guarded predicate checked by the runtime monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardedPredicate {
    /// When present, the body is only required where the guard holds.
    pub guard: Option<Expr>,
    pub body: Expr,
    /// `construct#index` provenance for violation reports.
    pub source: String,
}

/// A fully resolved, instantiated project.
#[derive(Debug, Clone)]
pub struct ElaboratedProject {
    pub name: String,
    pub machines: Vec<ElabMachine>,
    pub interfaces: Vec<ElabInterface>,
    pub contexts: Vec<ElabContext>,
    pub synch_groups: Vec<SynchGroupAst>,
    pub global_invariants: Vec<GuardedPredicate>,
    /// The single project-wide time variable, when any construct names one.
    pub time_var: Option<String>,
    /// Project-wide constants that are unambiguous by name.
    pub global_constants: BTreeMap<String, Value>,
    /// Source AST of GLOBINVS constructs, kept for round-tripping.
    pub globinvs_asts: Vec<ConstructAst>,
}

impl ElaboratedProject {
    pub fn machine(&self, name: &str) -> Option<&ElabMachine> {
        self.machines.iter().find(|m| m.name == name)
    }

    pub fn interface(&self, name: &str) -> Option<&ElabInterface> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    /// Regenerate plain (already-instantiated) constructs: contexts,
    /// interfaces, machines, GLOBINVS blocks, plus a project construct
    /// without instantiation clauses.
    pub fn to_constructs(&self) -> Vec<ConstructAst> {
        use crate::ast::{Clause, ConstructKind, ProjectItem};
        let mut out = Vec::new();
        for c in &self.contexts {
            out.push(c.ast.clone());
        }
        for i in &self.interfaces {
            out.push(i.ast.clone());
        }
        for m in &self.machines {
            out.push(m.ast.clone());
        }
        for g in &self.globinvs_asts {
            out.push(g.clone());
        }
        let mut prj = ConstructAst::new(ConstructKind::Project, &self.name);
        for g in &self.globinvs_asts {
            prj.clauses.push(Clause::GlobInvsRef(g.name.clone()));
        }
        for c in &self.contexts {
            prj.clauses.push(Clause::Item(ProjectItem {
                kind: ConstructKind::Context,
                name: c.name.clone(),
                renaming: None,
            }));
        }
        for i in &self.interfaces {
            prj.clauses.push(Clause::Item(ProjectItem {
                kind: ConstructKind::Interface,
                name: i.name.clone(),
                renaming: None,
            }));
        }
        for m in &self.machines {
            prj.clauses.push(Clause::Item(ProjectItem {
                kind: ConstructKind::Machine,
                name: m.name.clone(),
                renaming: None,
            }));
        }
        for s in &self.synch_groups {
            prj.clauses.push(Clause::Synch(s.clone()));
        }
        out.push(prj);
        out
    }
}
