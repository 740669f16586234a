//! Runtime verification: machine/interface invariants, type II
//! implications, global invariants and handover conditions, checked
//! against the evolving run.
//!
//! Monitoring is non-invasive: violations are side reports and a run
//! behaves identically with monitoring on or off.

use std::fmt::Write as _;

use crate::builtins::Builtins;
use crate::elab::{ElaboratedProject, GuardedPredicate};
use crate::eval::{eval_pred, Layered};
use crate::schedule::scope::ProjectScope;
use crate::trace::{real, value_json};
use crate::value::Valuation;

/// When a check point ran, relative to the run structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    AfterModeEvent,
    DuringEpisodeSample,
    EpisodeEnd,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::AfterModeEvent => "afterModeEvent",
            Phase::DuringEpisodeSample => "duringEpisodeSample",
            Phase::EpisodeEnd => "episodeEnd",
        }
    }
}

/// A detected violation with enough state to re-evaluate the predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub time: f64,
    /// `construct#index` or a rule name such as `no-pliant-successor`.
    pub source: String,
    pub phase: Phase,
    pub message: String,
    pub snapshot: Valuation,
}

impl Violation {
    /// One JSON object per violation, schema-stable for the side file.
    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"t\":{},\"source\":{:?},\"phase\":{:?},\"message\":{:?},\"state\":{{",
            real(self.time),
            self.source,
            self.phase.as_str(),
            self.message,
        );
        for (i, (k, v)) in self.snapshot.vars.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:?}:{}", k, value_json(v));
        }
        out.push_str("}}");
        out
    }
}

/// Precompiled monitored predicates for a project.
pub struct Monitor<'p> {
    builtins: &'p Builtins,
    scope: ProjectScope,
    /// (source, guard?, body), all expressions compiled to the flat
    /// namespace.
    checks: Vec<(String, Option<crate::ast::Expr>, crate::ast::Expr)>,
}

impl<'p> Monitor<'p> {
    pub fn new(project: &'p ElaboratedProject, builtins: &'p Builtins) -> Self {
        let scope = ProjectScope::new(project);
        let mut checks = Vec::new();
        for (midx, m) in project.machines.iter().enumerate() {
            for (k, inv) in m.monitored_invariants.iter().enumerate() {
                checks.push((
                    format!("{}#{}", m.name, k + 1),
                    None,
                    scope.compile_machine_expr(midx, inv),
                ));
            }
        }
        for i in &project.interfaces {
            for (k, inv) in i.monitored_invariants.iter().enumerate() {
                checks.push((
                    format!("{}#{}", i.name, k + 1),
                    None,
                    scope.compile_interface_expr(&i.name, inv),
                ));
            }
            for tii in &i.type_ii {
                checks.push((
                    tii.source.clone(),
                    Some(scope.compile_interface_expr(&i.name, &tii.antecedent)),
                    scope.compile_interface_expr(&i.name, &tii.consequent),
                ));
            }
        }
        for gi in &project.global_invariants {
            checks.push((
                gi.source.clone(),
                gi.guard.as_ref().map(|g| scope.compile_global_expr(g)),
                scope.compile_global_expr(&gi.body),
            ));
        }
        Monitor {
            builtins,
            scope,
            checks,
        }
    }

    /// Evaluate every monitored predicate against a flat snapshot.
    /// Evaluation failures count as violations with the cause attached.
    pub fn check_point(&self, v: &Valuation, t: f64, phase: Phase) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut overlay = std::collections::BTreeMap::new();
        if let Some(tv) = &self.scope.time_var {
            overlay.insert(tv.clone(), crate::value::Value::Real(t));
        }
        let env = Layered(&overlay, &Layered(v, &self.scope.consts));
        for (source, guard, body) in &self.checks {
            if let Some(g) = guard {
                match eval_pred(g, &env, self.builtins) {
                    Ok(false) => continue, // body not required here
                    Ok(true) => {}
                    Err(e) => {
                        out.push(Violation {
                            time: t,
                            source: source.clone(),
                            phase,
                            message: format!("guard evaluation failed: {e}"),
                            snapshot: v.clone(),
                        });
                        continue;
                    }
                }
            }
            match eval_pred(body, &env, self.builtins) {
                Ok(true) => {}
                Ok(false) => out.push(Violation {
                    time: t,
                    source: source.clone(),
                    phase,
                    message: format!(
                        "invariant violated: {}",
                        crate::pretty::expr_to_string(body)
                    ),
                    snapshot: v.clone(),
                }),
                Err(e) => out.push(Violation {
                    time: t,
                    source: source.clone(),
                    phase,
                    message: format!("evaluation failed: {e}"),
                    snapshot: v.clone(),
                }),
            }
        }
        out
    }
}

/// Convenience form of [`Monitor::check_point`] building the compiled
/// monitor on the fly.
pub fn check_point(
    project: &ElaboratedProject,
    v: &Valuation,
    t: f64,
    builtins: &Builtins,
) -> Vec<Violation> {
    Monitor::new(project, builtins).check_point(v, t, Phase::AfterModeEvent)
}

/// Is `t` outside every update window `[sched_i, sched_i + delta]`?
/// The guarded body of a window-shaped global invariant is enforced
/// exactly where this returns true.
pub fn check_global_invariant_window(
    _gi: &GuardedPredicate,
    sched: &[f64],
    delta: f64,
    t: f64,
) -> bool {
    sched.iter().all(|&s| !(s <= t && t <= s + delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::parser::parse_project_dir;
    use crate::value::Value;

    fn project() -> (ElaboratedProject, Builtins) {
        let files = corpus::heb_files(&corpus::incident_response_dir()).unwrap();
        let r = parse_project_dir(&files);
        let b = corpus::project_builtins();
        let (p, d) = crate::elab::elaborate(&r.constructs, &b);
        assert!(!d.iter().any(|x| x.is_error()), "{d:#?}");
        (p.unwrap(), b)
    }

    fn base_snapshot() -> Valuation {
        let empty = Value::set_from(vec![]);
        let mut v = Valuation::new(0.0);
        for name in [
            "hazards",
            "drhazards",
            "resp1hazards",
            "resp2hazards",
            "resp3hazards",
        ] {
            v.vars.insert(name.into(), empty.clone());
        }
        v.vars
            .insert("Controller_Mch.ctrhazards".into(), empty.clone());
        v.vars.insert(
            "EnvironmentScenario_Mch.schedule".into(),
            Value::Seq(vec![Value::Int(12), Value::Int(30), Value::Int(55)]),
        );
        v
    }

    #[test]
    fn all_copies_empty_is_clean() {
        let (p, b) = project();
        let m = Monitor::new(&p, &b);
        let vs = m.check_point(&base_snapshot(), 5.0, Phase::DuringEpisodeSample);
        assert!(vs.is_empty(), "{vs:#?}");
    }

    #[test]
    fn inside_update_window_desync_is_tolerated() {
        let (p, b) = project();
        let m = Monitor::new(&p, &b);
        let mut v = base_snapshot();
        // controller already saw the hazard, copies not yet refreshed
        v.vars.insert(
            "Controller_Mch.ctrhazards".into(),
            Value::set_from(vec![Value::tuple(vec![
                Value::enum_lit("HAZTYPE", "CYL"),
                Value::Real(5.0),
                Value::Real(8.0),
                Value::Real(1.5),
                Value::Real(3.0),
            ])]),
        );
        let vs = m.check_point(&v, 12.05, Phase::DuringEpisodeSample);
        assert!(vs.is_empty(), "no violation inside [12, 12.1]: {vs:#?}");
    }

    #[test]
    fn outside_window_desync_is_detected() {
        let (p, b) = project();
        let m = Monitor::new(&p, &b);
        let mut v = base_snapshot();
        v.vars.insert(
            "drhazards".into(),
            Value::set_from(vec![Value::tuple(vec![
                Value::enum_lit("HAZTYPE", "SQ"),
                Value::Real(0.0),
                Value::Real(0.0),
                Value::Real(1.0),
                Value::Real(1.0),
            ])]),
        );
        let vs = m.check_point(&v, 13.0, Phase::DuringEpisodeSample);
        assert_eq!(vs.len(), 1, "{vs:#?}");
        assert!(vs[0].source.starts_with("IncidentResponse_GI"));
    }

    #[test]
    fn window_membership_matches_brute_force()
 {
        let gi = GuardedPredicate {
            guard: None,
            body: crate::ast::Expr::Bool(true),
            source: "test".into(),
        };
        let sched = [12.0, 30.0, 55.0];
        let delta = 0.1;
        assert!(!check_global_invariant_window(&gi, &sched, delta, 12.05));
        assert!(check_global_invariant_window(&gi, &sched, delta, 0.0));
        // brute-force oracle over 10_000 points of [0, 80]
        for k in 0..10_000 {
            let t = 80.0 * (k as f64) / 9_999.0;
            let inside_oracle = sched
                .iter()
                .any(|&s| t >= s && t <= s + delta);
            assert_eq!(
                check_global_invariant_window(&gi, &sched, delta, t),
                !inside_oracle,
                "t = {t}"
            );
        }
    }

    #[test]
    fn violations_serialize_to_json() {
        let v = Violation {
            time: 13.0,
            source: "IncidentResponse_GI#1".into(),
            phase: Phase::DuringEpisodeSample,
            message: "invariant violated".into(),
            snapshot: Valuation::new(13.0).with("x", Value::Real(1.0)),
        };
        let j = v.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(parsed["phase"], "duringEpisodeSample");
    }
}
