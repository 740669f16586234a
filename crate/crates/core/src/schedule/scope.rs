//! Name-space flattening for execution and monitoring.
//!
//! Machine-local variables live in one global store under qualified
//! names (`Machine.var`); interface variables keep their plain names
//! (they are the single authoritative copy). Constants stay plain when
//! project-unique, and are qualified per machine otherwise. Every
//! expression that the runtime evaluates is compiled once against this
//! scheme, so evaluation needs exactly one environment.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::{Comply, Expr};
use crate::elab::{ElabEvent, ElaboratedProject, VarKind};
use crate::value::Value;

pub fn qualified(owner: &str, var: &str) -> String {
    format!("{owner}.{var}")
}

#[derive(Debug, Clone)]
pub struct ProjectScope {
    /// Per machine: rename map applied to its expressions (locals,
    /// clocks, ambiguous constants).
    machine_maps: Vec<BTreeMap<String, String>>,
    /// Per interface (by name): rename map for ambiguous constants.
    interface_maps: BTreeMap<String, BTreeMap<String, String>>,
    /// Rename map for GLOBINVS expressions: project-unique locals.
    global_map: BTreeMap<String, String>,
    /// Flattened constant table: plain unambiguous names plus
    /// machine-qualified ambiguous ones.
    pub consts: BTreeMap<String, Value>,
    /// Qualified names of continuous quantities: pliant variables
    /// (local and interface) and clocks.
    pub continuous: BTreeSet<String>,
    pub time_var: Option<String>,
}

impl ProjectScope {
    pub fn new(project: &ElaboratedProject) -> Self {
        let mut consts: BTreeMap<String, Value> = project.global_constants.clone();
        let mut continuous: BTreeSet<String> = BTreeSet::new();

        for i in &project.interfaces {
            for v in &i.vars {
                if v.kind == VarKind::Pliant {
                    continuous.insert(v.name.clone());
                }
            }
        }

        // which local names are project-unique
        let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
        for m in &project.machines {
            for v in &m.locals {
                *seen.entry(v.name.as_str()).or_default() += 1;
            }
        }

        let mut machine_maps = Vec::new();
        let mut global_map = BTreeMap::new();
        for m in &project.machines {
            let mut map = BTreeMap::new();
            for v in &m.locals {
                let q = qualified(&m.name, &v.name);
                if matches!(v.kind, VarKind::Pliant | VarKind::Clock) {
                    continuous.insert(q.clone());
                }
                if seen[v.name.as_str()] == 1 {
                    global_map.insert(v.name.clone(), q.clone());
                }
                map.insert(v.name.clone(), q);
            }
            // constants that are not project-unique get qualified names
            for (k, v) in &m.constants {
                if !project.global_constants.contains_key(k) {
                    let q = qualified(&m.name, k);
                    consts.insert(q.clone(), v.clone());
                    map.insert(k.clone(), q);
                }
            }
            machine_maps.push(map);
        }

        let mut interface_maps = BTreeMap::new();
        for i in &project.interfaces {
            let mut map = BTreeMap::new();
            for (k, v) in &i.constants {
                if !project.global_constants.contains_key(k) {
                    let q = qualified(&i.name, k);
                    consts.insert(q.clone(), v.clone());
                    map.insert(k.clone(), q);
                }
            }
            interface_maps.insert(i.name.clone(), map);
        }

        ProjectScope {
            machine_maps,
            interface_maps,
            global_map,
            consts,
            continuous,
            time_var: project.time_var.clone(),
        }
    }

    pub fn machine_map(&self, midx: usize) -> &BTreeMap<String, String> {
        &self.machine_maps[midx]
    }

    pub fn compile_machine_expr(&self, midx: usize, e: &Expr) -> Expr {
        let mut e = e.clone();
        crate::elab::rename_in_expr(&mut e, &self.machine_maps[midx]);
        e
    }

    pub fn compile_interface_expr(&self, iface: &str, e: &Expr) -> Expr {
        let mut e = e.clone();
        if let Some(map) = self.interface_maps.get(iface) {
            crate::elab::rename_in_expr(&mut e, map);
        }
        e
    }

    pub fn compile_global_expr(&self, e: &Expr) -> Expr {
        let mut e = e.clone();
        crate::elab::rename_in_expr(&mut e, &self.global_map);
        e
    }

    pub fn compile_target(&self, midx: usize, target: &str) -> String {
        self.machine_maps[midx]
            .get(target)
            .cloned()
            .unwrap_or_else(|| target.to_string())
    }

    /// Compile a whole event: guards, assignment targets and sources.
    pub fn compile_event(&self, midx: usize, ev: &ElabEvent) -> ElabEvent {
        let mut out = ev.clone();
        if let Some(g) = &ev.when_guard {
            out.when_guard = Some(self.compile_machine_expr(midx, g));
        }
        if let Some(g) = &ev.init_guard {
            out.init_guard = Some(self.compile_machine_expr(midx, g));
        }
        out.assigns = ev
            .assigns
            .iter()
            .map(|(t, e)| (self.compile_target(midx, t), self.compile_machine_expr(midx, e)))
            .collect();
        out.odes = ev
            .odes
            .iter()
            .map(|(t, e)| (self.compile_target(midx, t), self.compile_machine_expr(midx, e)))
            .collect();
        if let Some(Comply::Pred(p)) = &ev.comply {
            out.comply = Some(Comply::Pred(self.compile_machine_expr(midx, p)));
        }
        out
    }
}
