//! The multi-machine operational semantics: per-machine mode/pliant
//! alternation, synchronized mode events, asynch-window firing,
//! preemption and the global interval partition of time.
//!
//! One run is strictly sequential and deterministic: a seed fixes every
//! choice (simultaneity tie-breaks, parameter picks, window sampling).

pub mod guard;
pub mod scope;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Comply, EventStatus, Expr};
use crate::builtins::Builtins;
use crate::diag::codes;
use crate::elab::{ElabEvent, ElaboratedProject, SemType};
use crate::eval::{eval, eval_pred, Env, Layered};
use crate::monitor::{Monitor, Phase, Violation};
use crate::ode::{
    integrate_episode, EpisodeEnv, NumericConfig, OdeSystem, TerminationCause, WatchGuard,
};
use crate::scenario::{ScenarioBindings, ScenarioLit};
use crate::trace::{RecordKind, Trace, TraceHeader, TraceRecord, VarDelta};
use crate::value::{Valuation, Value};

use guard::{classify, GuardInfo};
use scope::ProjectScope;

/// When an asynch event fires inside its enabling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsynchPolicy {
    /// Fire at window start plus the configured margin. Deterministic
    /// regardless of seed.
    EarliestPlusMargin,
    /// Fire at a seeded uniform instant strictly inside the window
    /// (capped at 100 margins past the window start).
    UniformRandomInWindow,
}

impl AsynchPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AsynchPolicy::EarliestPlusMargin => "earliest-plus-margin",
            AsynchPolicy::UniformRandomInWindow => "uniform-random-in-window",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "earliest-plus-margin" => Some(AsynchPolicy::EarliestPlusMargin),
            "uniform-random-in-window" => Some(AsynchPolicy::UniformRandomInWindow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// End of simulated time, seconds; must be positive.
    pub horizon: f64,
    pub numeric: NumericConfig,
    pub asynch_policy: AsynchPolicy,
    /// Firing margin after a window opens; must be positive.
    pub margin: f64,
    /// Give machines without pliant events an implicit always-enabled
    /// one.
    pub auto_plitrue: bool,
    /// Run the invariant monitors.
    pub check_invariants: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            horizon: 1.0,
            numeric: NumericConfig::default(),
            asynch_policy: AsynchPolicy::EarliestPlusMargin,
            margin: 1e-3,
            auto_plitrue: false,
            check_invariants: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccKind {
    Initialisation,
    Ordinary,
    Asynch,
    SynchGroup,
}

/// One mode-event occurrence: either a single event or a whole SYNCH
/// group firing atomically.
#[derive(Debug, Clone, PartialEq)]
pub struct EventOccurrence {
    pub time: f64,
    pub kind: OccKind,
    pub group: Option<String>,
    /// `(machine-or-interface, event)` members.
    pub members: Vec<(String, String)>,
    pub bindings: BTreeMap<String, Value>,
    /// Global snapshot at the left limit (before the update).
    pub before: Valuation,
    /// Global snapshot at the occurrence instant itself.
    pub after: Valuation,
    pub micro_step: u32,
}

/// A run abort: the machine-readable code plus context.
#[derive(Debug, Clone, PartialEq)]
pub struct Abort {
    pub code: &'static str,
    pub time: f64,
    pub message: String,
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub occurrences: Vec<EventOccurrence>,
    pub violations: Vec<Violation>,
    pub abort: Option<Abort>,
    pub final_valuation: Valuation,
}

impl RunOutcome {
    pub fn is_clean(&self) -> bool {
        self.abort.is_none() && self.violations.is_empty()
    }
}

// ----------------------------------------------------------------------
// static preparation

#[derive(Debug, Clone)]
struct EvStatic {
    compiled: ElabEvent,
    info: GuardInfo,
    group: Option<usize>,
    /// Compiled WHEN conjuncts free of this event's parameters.
    param_free: Vec<Expr>,
    /// Discrete, parameter-free conjuncts used to gate scheduling.
    sched_gate: Vec<Expr>,
    /// `p ∈ E` domains covering every parameter, for seeded enumeration.
    param_domains: Option<Vec<(String, Expr)>>,
}

#[derive(Debug, Clone)]
struct GroupStatic {
    name: String,
    members: Vec<(usize, usize)>,
    has_asynch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArmKey {
    Solo(usize, usize),
    Group(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ArmState {
    Idle,
    Armed { chosen: f64, window: (u64, u64) },
    Fired { window: (u64, u64) },
}

#[derive(Debug, Clone)]
struct AsynchRt {
    key: ArmKey,
    state: ArmState,
}

enum DueOutcome {
    NotDue,
    /// Candidate parameter bindings (one empty map when no parameters).
    Due(Vec<BTreeMap<String, Value>>),
    Unbound,
}

#[derive(Debug, Clone)]
enum DueItem {
    Single(usize, usize, BTreeMap<String, Value>),
    /// Several enumeration candidates; one is picked by seed at firing.
    SingleChoice(usize, usize, Vec<BTreeMap<String, Value>>),
    Group(usize),
}

impl DueItem {
    fn primary(&self, groups: &[GroupStatic]) -> usize {
        match self {
            DueItem::Single(m, ..) | DueItem::SingleChoice(m, ..) => *m,
            DueItem::Group(g) => groups[*g].members.iter().map(|(m, _)| *m).min().unwrap_or(0),
        }
    }
}

struct RtEnv<'a> {
    overlay: BTreeMap<String, Value>,
    store: &'a BTreeMap<String, Value>,
    consts: &'a BTreeMap<String, Value>,
}

impl<'a> Env for RtEnv<'a> {
    fn lookup(&self, name: &str) -> Option<&Value> {
        self.overlay
            .get(name)
            .or_else(|| self.store.get(name))
            .or_else(|| self.consts.get(name))
    }
}

/// A deterministic executable run over an elaborated project.
pub struct Run<'p> {
    pub project: &'p ElaboratedProject,
    builtins: &'p Builtins,
    pub cfg: RunConfig,
    scenario: ScenarioBindings,
    scope: ProjectScope,
    monitor: Monitor<'p>,
    rng: ChaCha8Rng,

    pub t: f64,
    store: BTreeMap<String, Value>,
    clock_offsets: BTreeMap<String, f64>,
    active_pliant: Vec<Option<usize>>,
    events: Vec<Vec<EvStatic>>,
    ordinary_singles: Vec<(usize, usize)>,
    groups: Vec<GroupStatic>,
    asynch: Vec<AsynchRt>,
    var_types: BTreeMap<String, SemType>,
    iface_inits: Vec<(String, Vec<(String, Expr)>)>,
    occ_count: Vec<Vec<u32>>,
    counted_at: Vec<Vec<f64>>,
    micro: u32,

    pub trace: Trace,
    pub occurrences: Vec<EventOccurrence>,
    pub violations: Vec<Violation>,
}

impl<'p> Run<'p> {
    /// Validate the configuration and prepare all static tables.
    pub fn new(
        project: &'p ElaboratedProject,
        builtins: &'p Builtins,
        cfg: RunConfig,
        scenario: ScenarioBindings,
        corpus_hash: String,
    ) -> Result<Self, String> {
        if !(cfg.horizon > 0.0) {
            return Err(format!("horizon must be positive, got {}", cfg.horizon));
        }
        if !(cfg.margin > 0.0) {
            return Err(format!("margin must be positive, got {}", cfg.margin));
        }
        if !(cfg.numeric.dt_max > 0.0) {
            return Err(format!("dtMax must be positive, got {}", cfg.numeric.dt_max));
        }
        let scope = ProjectScope::new(project);
        let monitor = Monitor::new(project, builtins);
        let time_var = scope.time_var.clone();

        // group membership by (machine idx, event idx)
        let midx: BTreeMap<&str, usize> = project
            .machines
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.as_str(), i))
            .collect();
        let mut groups = Vec::new();
        let mut member_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for g in &project.synch_groups {
            let mut members = Vec::new();
            let mut has_asynch = false;
            for mem in &g.members {
                let m = *midx
                    .get(mem.machine.as_str())
                    .ok_or_else(|| format!("unknown machine in SYNCH: {}", mem.machine))?;
                let e = project.machines[m]
                    .events
                    .iter()
                    .position(|ev| ev.name == mem.event)
                    .ok_or_else(|| format!("unknown event in SYNCH: {}", mem.event))?;
                if project.machines[m].events[e].status == EventStatus::Asynch {
                    has_asynch = true;
                }
                members.push((m, e));
            }
            for &(m, e) in &members {
                member_of.insert((m, e), groups.len());
            }
            groups.push(GroupStatic {
                name: g.name.clone(),
                members,
                has_asynch,
            });
        }

        let continuous = scope.continuous.clone();
        let is_cont = move |n: &str| continuous.contains(n);

        let mut events: Vec<Vec<EvStatic>> = Vec::new();
        let mut var_types = BTreeMap::new();
        for i in &project.interfaces {
            for v in &i.vars {
                var_types.insert(v.name.clone(), v.ty.clone());
            }
        }
        for (m, mch) in project.machines.iter().enumerate() {
            for v in &mch.locals {
                var_types.insert(scope::qualified(&mch.name, &v.name), v.ty.clone());
            }
            let mut evs = Vec::new();
            for (e, ev) in mch.events.iter().enumerate() {
                let compiled = scope.compile_event(m, ev);
                let info = classify(compiled.when_guard.as_ref(), &is_cont, time_var.as_deref());
                let params: BTreeSet<&str> =
                    compiled.params.iter().map(|(p, _)| p.as_str()).collect();
                let no_params = |x: &Expr| {
                    x.free_identifiers()
                        .iter()
                        .all(|n| !params.contains(n.as_str()))
                };
                let param_free: Vec<Expr> = compiled
                    .when_guard
                    .as_ref()
                    .map(|g| g.conjuncts().into_iter().filter(|c| no_params(c)).cloned().collect())
                    .unwrap_or_default();
                let sched_gate: Vec<Expr> =
                    info.discrete.iter().filter(|c| no_params(c)).cloned().collect();
                let param_domains = if compiled.params.is_empty() {
                    None
                } else {
                    let mut domains = Vec::new();
                    let mut ok = true;
                    for (p, _) in &compiled.params {
                        let dom = compiled.when_guard.as_ref().and_then(|g| {
                            g.conjuncts().into_iter().find_map(|c| match c {
                                Expr::Binary(crate::ast::BinOp::In, lhs, rhs)
                                    if **lhs == Expr::Ident(p.clone()) && no_params(rhs) =>
                                {
                                    Some((*rhs.clone(), ()))
                                }
                                _ => None,
                            })
                        });
                        match dom {
                            Some((d, ())) => domains.push((p.clone(), d)),
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    ok.then_some(domains)
                };
                evs.push(EvStatic {
                    compiled,
                    info,
                    group: member_of.get(&(m, e)).copied(),
                    param_free,
                    sched_gate,
                    param_domains,
                });
            }
            // implicit always-enabled pliant event for mode-only machines
            if cfg.auto_plitrue && !evs.iter().any(|x| x.compiled.status == EventStatus::Pliant) {
                let name = if mch.events.iter().any(|x| x.name == "PliTrue") {
                    "AutoPliTrue"
                } else {
                    "PliTrue"
                };
                let ev = ElabEvent {
                    name: name.to_string(),
                    status: EventStatus::Pliant,
                    params: vec![],
                    when_guard: None,
                    init_guard: None,
                    assigns: vec![],
                    odes: vec![],
                    comply: Some(Comply::Invariants),
                };
                evs.push(EvStatic {
                    compiled: ev,
                    info: GuardInfo::default(),
                    group: None,
                    param_free: vec![],
                    sched_gate: vec![],
                    param_domains: None,
                });
            }
            events.push(evs);
        }

        let ordinary_singles: Vec<(usize, usize)> = events
            .iter()
            .enumerate()
            .flat_map(|(m, evs)| {
                evs.iter().enumerate().filter_map(move |(e, st)| {
                    (st.compiled.status == EventStatus::Ordinary
                        && st.group.is_none()
                        && !st.compiled.is_initialisation())
                    .then_some((m, e))
                })
            })
            .collect();

        let mut asynch = Vec::new();
        for (g, gs) in groups.iter().enumerate() {
            if gs.has_asynch {
                asynch.push(AsynchRt {
                    key: ArmKey::Group(g),
                    state: ArmState::Idle,
                });
            }
        }
        for (m, evs) in events.iter().enumerate() {
            for (e, st) in evs.iter().enumerate() {
                if st.compiled.status == EventStatus::Asynch && st.group.is_none() {
                    asynch.push(AsynchRt {
                        key: ArmKey::Solo(m, e),
                        state: ArmState::Idle,
                    });
                }
            }
        }

        let iface_inits: Vec<(String, Vec<(String, Expr)>)> = project
            .interfaces
            .iter()
            .map(|i| {
                let assigns = i
                    .initialisation
                    .iter()
                    .map(|(t, e)| (t.clone(), scope.compile_interface_expr(&i.name, e)))
                    .collect();
                (i.name.clone(), assigns)
            })
            .collect();

        let header = TraceHeader {
            project: project.name.clone(),
            seed: cfg.seed,
            horizon: cfg.horizon,
            dt_max: cfg.numeric.dt_max,
            eps_t: cfg.numeric.eps_t,
            eps_guard: cfg.numeric.eps_guard,
            sample_step: cfg.numeric.sample_step,
            asynch_policy: cfg.asynch_policy.as_str().to_string(),
            margin: cfg.margin,
            auto_plitrue: cfg.auto_plitrue,
            corpus_hash,
        };
        let occ_count = events.iter().map(|evs| vec![0u32; evs.len()]).collect();
        let counted_at = events.iter().map(|evs| vec![f64::NAN; evs.len()]).collect();
        Ok(Run {
            project,
            builtins,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            scenario,
            scope,
            monitor,
            t: 0.0,
            store: BTreeMap::new(),
            clock_offsets: BTreeMap::new(),
            active_pliant: vec![None; events.len()],
            ordinary_singles,
            events,
            groups,
            asynch,
            var_types,
            iface_inits,
            occ_count,
            counted_at,
            micro: 0,
            trace: Trace::new(header),
            occurrences: Vec::new(),
            violations: Vec::new(),
        })
    }

    // ------------------------------------------------------------------
    // environments & snapshots

    fn env(&self, params: Option<&BTreeMap<String, Value>>) -> RtEnv<'_> {
        let mut overlay = BTreeMap::new();
        if let Some(tv) = &self.scope.time_var {
            overlay.insert(tv.clone(), Value::Real(self.t));
        }
        for (clk, off) in &self.clock_offsets {
            overlay.insert(clk.clone(), Value::Real(self.t - off));
        }
        if let Some(p) = params {
            for (k, v) in p {
                overlay.insert(k.clone(), v.clone());
            }
        }
        RtEnv {
            overlay,
            store: &self.store,
            consts: &self.scope.consts,
        }
    }

    /// Full flat snapshot: interface variables under plain names,
    /// machine locals qualified, clocks materialized.
    pub fn global_snapshot(&self) -> Valuation {
        let mut v = Valuation::new(self.t);
        v.vars = self.store.clone();
        for (clk, off) in &self.clock_offsets {
            v.vars.insert(clk.clone(), Value::Real(self.t - off));
        }
        v
    }

    /// Testing/experimentation hook: overwrite one variable in place.
    /// Locals use their qualified `Machine.var` names.
    pub fn inject(&mut self, var: &str, value: Value) {
        self.store.insert(var.to_string(), value);
    }

    fn eval_conjuncts(&self, conjs: &[Expr], params: Option<&BTreeMap<String, Value>>) -> bool {
        let env = self.env(params);
        conjs
            .iter()
            .all(|c| eval_pred(c, &env, self.builtins).unwrap_or(false))
    }

    fn guard_true(&self, m: usize, e: usize, params: Option<&BTreeMap<String, Value>>) -> bool {
        let st = &self.events[m][e];
        match (&st.compiled.when_guard, &st.compiled.init_guard) {
            (None, None) => true,
            (g, i) => {
                let env = self.env(params);
                let g_ok = g
                    .as_ref()
                    .map(|g| eval_pred(g, &env, self.builtins).unwrap_or(false))
                    .unwrap_or(true);
                let i_ok = i
                    .as_ref()
                    .map(|i| eval_pred(i, &env, self.builtins).unwrap_or(false))
                    .unwrap_or(true);
                g_ok && i_ok
            }
        }
    }

    // ------------------------------------------------------------------
    // initialisation

    /// Execute all INITIALISATION events (interfaces then machines, in
    /// declaration order), fire any mode events already due at t = 0,
    /// and select the initial pliant event of every machine.
    pub fn init(&mut self) -> Result<(), Abort> {
        self.t = 0.0;
        self.micro = 0;
        for (iname, assigns) in self.iface_inits.clone() {
            let before = self.global_snapshot();
            for (target, e) in &assigns {
                let value = eval(e, &self.env(None), self.builtins).map_err(|err| Abort {
                    code: codes::INIT_FAILED,
                    time: 0.0,
                    message: format!("initialisation of `{iname}.{target}` failed: {err}"),
                })?;
                self.write(target, value, &iname)?;
            }
            self.record_occurrence(
                OccKind::Initialisation,
                None,
                vec![(iname.clone(), "INITIALISATION".into())],
                BTreeMap::new(),
                before,
            )?;
        }
        for m in 0..self.events.len() {
            let Some(e) = self
                .events[m]
                .iter()
                .position(|st| st.compiled.is_initialisation())
            else {
                continue;
            };
            if !self.guard_true(m, e, None) {
                return Err(Abort {
                    code: codes::INIT_FAILED,
                    time: 0.0,
                    message: format!(
                        "INITIALISATION guard of `{}` is false at t = 0",
                        self.project.machines[m].name
                    ),
                });
            }
            self.fire_members(
                OccKind::Initialisation,
                None,
                &[(m, e)],
                BTreeMap::new(),
            )?;
        }
        let mut touched: BTreeSet<usize> = (0..self.events.len()).collect();
        touched.extend(self.settle()?);
        self.monitor_point(Phase::AfterModeEvent);
        self.reselect_pliant(&touched, true)?;
        let handover = self.check_handover_of(&touched);
        if self.cfg.check_invariants {
            self.violations.extend(handover);
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // writes & occurrences

    fn write(&mut self, target: &str, value: Value, context: &str) -> Result<(), Abort> {
        if self.clock_offsets.contains_key(target) || self.is_clock(target) {
            let v = value.as_f64().ok_or_else(|| Abort {
                code: codes::EVAL_FAILED,
                time: self.t,
                message: format!("clock `{target}` reset to a non-number in {context}"),
            })?;
            self.clock_offsets.insert(target.to_string(), self.t - v);
            return Ok(());
        }
        if !value.is_finite() {
            return Err(Abort {
                code: codes::INFEASIBLE,
                time: self.t,
                message: format!("`{target}` became non-finite in {context}"),
            });
        }
        if let Some(ty) = self.var_types.get(target) {
            if !crate::elab::conforms(&value, ty) {
                return Err(Abort {
                    code: codes::EVAL_FAILED,
                    time: self.t,
                    message: format!(
                        "value {value} does not conform to the declared type of `{target}` (in {context})"
                    ),
                });
            }
        }
        self.store.insert(target.to_string(), value);
        Ok(())
    }

    fn is_clock(&self, name: &str) -> bool {
        // clocks are registered lazily on first reset; recognize them by
        // their qualified declaration
        self.project.machines.iter().any(|m| {
            m.clocks
                .iter()
                .any(|c| scope::qualified(&m.name, c) == name)
        })
    }

    fn record_occurrence(
        &mut self,
        kind: OccKind,
        group: Option<String>,
        members: Vec<(String, String)>,
        bindings: BTreeMap<String, Value>,
        before: Valuation,
    ) -> Result<(), Abort> {
        let after = self.global_snapshot();
        let mut deltas = Vec::new();
        for (k, v) in &after.vars {
            match before.vars.get(k) {
                Some(prev) if prev == v => {}
                prev => deltas.push(VarDelta {
                    var: k.clone(),
                    before: prev.cloned(),
                    after: v.clone(),
                }),
            }
        }
        let machines: Vec<String> = members.iter().map(|(m, _)| m.clone()).collect();
        let event = match (&group, members.len()) {
            (Some(g), _) => g.clone(),
            (None, _) => members
                .first()
                .map(|(_, e)| e.clone())
                .unwrap_or_default(),
        };
        let record = TraceRecord {
            t: self.t,
            kind: RecordKind::ModeEvent,
            machines,
            event,
            deltas,
            micro_step: self.micro,
        };
        self.trace.append(record).map_err(|e| Abort {
            code: codes::EVAL_FAILED,
            time: self.t,
            message: e.to_string(),
        })?;
        self.occurrences.push(EventOccurrence {
            time: self.t,
            kind,
            group,
            members,
            bindings,
            before,
            after,
            micro_step: self.micro,
        });
        self.micro += 1;
        Ok(())
    }

    /// Execute the bodies of one or more member events as a single
    /// atomic update. All right-hand sides read the before-state;
    /// writes to the same variable from different members conflict.
    fn fire_members(
        &mut self,
        kind: OccKind,
        group: Option<usize>,
        members: &[(usize, usize)],
        bindings: BTreeMap<String, Value>,
    ) -> Result<(), Abort> {
        let before = self.global_snapshot();
        let mut writes: Vec<(String, Value, usize)> = Vec::new();
        for (k, &(m, e)) in members.iter().enumerate() {
            let assigns = self.events[m][e].compiled.assigns.clone();
            for (target, rhs) in &assigns {
                let value =
                    eval(rhs, &self.env(Some(&bindings)), self.builtins).map_err(|err| Abort {
                        code: codes::EVAL_FAILED,
                        time: self.t,
                        message: format!(
                            "assignment to `{target}` in `{}.{}` failed: {err}",
                            self.project.machines[m].name, self.events[m][e].compiled.name
                        ),
                    })?;
                if let Some((_, _, other)) = writes.iter().find(|(t, _, _)| t == target) {
                    if *other != k {
                        let gname = group.map(|g| self.groups[g].name.clone()).unwrap_or_default();
                        return Err(Abort {
                            code: codes::SYNCH_WRITE_CONFLICT,
                            time: self.t,
                            message: format!(
                                "SYNCH `{gname}`: two members write `{target}` in one occurrence"
                            ),
                        });
                    }
                }
                writes.push((target.clone(), value, k));
            }
        }
        for (target, value, k) in writes {
            let (m, e) = members[k];
            let ctx = format!(
                "{}.{}",
                self.project.machines[m].name, self.events[m][e].compiled.name
            );
            self.write(&target, value, &ctx)?;
        }
        let named: Vec<(String, String)> = members
            .iter()
            .map(|&(m, e)| {
                (
                    self.project.machines[m].name.clone(),
                    self.events[m][e].compiled.name.clone(),
                )
            })
            .collect();
        let gname = group.map(|g| self.groups[g].name.clone());
        self.record_occurrence(kind, gname, named, bindings, before)
    }

    /// Fire a SYNCH group by name; the guard conjunction must hold.
    /// Exposed for tests and direct experimentation.
    pub fn fire_synch(&mut self, group_name: &str) -> Result<&EventOccurrence, Abort> {
        let g = self
            .groups
            .iter()
            .position(|gs| gs.name == group_name)
            .ok_or_else(|| Abort {
                code: codes::SYNCH_UNKNOWN_MEMBER,
                time: self.t,
                message: format!("no SYNCH group named `{group_name}`"),
            })?;
        let members = self.groups[g].members.clone();
        for &(m, e) in &members {
            if !self.guard_true(m, e, None) {
                return Err(Abort {
                    code: codes::EVAL_FAILED,
                    time: self.t,
                    message: format!(
                        "guard of member `{}.{}` is false",
                        self.project.machines[m].name, self.events[m][e].compiled.name
                    ),
                });
            }
        }
        self.fire_members(OccKind::SynchGroup, Some(g), &members, BTreeMap::new())?;
        Ok(self.occurrences.last().unwrap())
    }

    // ------------------------------------------------------------------
    // parameter binding

    fn materialize_binding(
        &self,
        m: usize,
        raw: &BTreeMap<String, ScenarioLit>,
    ) -> Result<BTreeMap<String, Value>, String> {
        let mut out = BTreeMap::new();
        for (k, lit) in raw {
            let v = match lit {
                ScenarioLit::Int(i) => Value::Int(*i),
                ScenarioLit::Real(r) => Value::Real(*r),
                ScenarioLit::Bool(b) => Value::Bool(*b),
                ScenarioLit::Name(n) => self.project.machines[m]
                    .constants
                    .get(n)
                    .cloned()
                    .ok_or_else(|| format!("scenario name `{n}` is not a visible constant"))?,
            };
            out.insert(k.clone(), v);
        }
        Ok(out)
    }

    /// Is this event due at the current instant, and with which
    /// parameter bindings? The occurrence counters must already be
    /// bumped for this instant.
    fn resolve_due(&mut self, m: usize, e: usize) -> Result<DueOutcome, Abort> {
        let st = &self.events[m][e];
        if !self.eval_conjuncts(&st.param_free.clone(), None) {
            return Ok(DueOutcome::NotDue);
        }
        let st = &self.events[m][e];
        if st.compiled.params.is_empty() {
            return Ok(if self.guard_true(m, e, None) {
                DueOutcome::Due(vec![BTreeMap::new()])
            } else {
                DueOutcome::NotDue
            });
        }
        let ev_name = st.compiled.name.clone();
        let occ = self.occ_count[m][e];
        if let Some(raw) = self.scenario.get(&ev_name, occ) {
            let binding = self.materialize_binding(m, &raw.clone()).map_err(|msg| Abort {
                code: codes::UNBOUND_ANY,
                time: self.t,
                message: format!("scenario binding for `{ev_name}` #{occ}: {msg}"),
            })?;
            return Ok(if self.guard_true(m, e, Some(&binding)) {
                DueOutcome::Due(vec![binding])
            } else {
                DueOutcome::NotDue
            });
        }
        let st = &self.events[m][e];
        if let Some(domains) = st.param_domains.clone() {
            let mut candidates: Vec<BTreeMap<String, Value>> = vec![BTreeMap::new()];
            for (p, dom) in &domains {
                let mut next = Vec::new();
                for base in &candidates {
                    let env = self.env(Some(base));
                    match eval(dom, &env, self.builtins) {
                        Ok(Value::Set(items)) => {
                            for item in items {
                                let mut b = base.clone();
                                b.insert(p.clone(), item);
                                next.push(b);
                                if next.len() > 10_000 {
                                    return Ok(DueOutcome::Unbound);
                                }
                            }
                        }
                        _ => return Ok(DueOutcome::NotDue),
                    }
                }
                candidates = next;
            }
            let satisfying: Vec<BTreeMap<String, Value>> = candidates
                .into_iter()
                .filter(|b| self.guard_true(m, e, Some(b)))
                .collect();
            return Ok(if satisfying.is_empty() {
                DueOutcome::NotDue
            } else {
                DueOutcome::Due(satisfying)
            });
        }
        Ok(DueOutcome::Unbound)
    }

    fn bump_occurrence_counters(&mut self) {
        for m in 0..self.events.len() {
            for e in 0..self.events[m].len() {
                if self.events[m][e].compiled.params.is_empty() {
                    continue;
                }
                if self.counted_at[m][e] == self.t {
                    continue;
                }
                if self.eval_conjuncts(&self.events[m][e].param_free.clone(), None) {
                    self.occ_count[m][e] += 1;
                    self.counted_at[m][e] = self.t;
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // asynch windows

    /// Evaluate the analytic window of an asynch item and whether its
    /// discrete part holds now. Returns (mode_part, lo, hi, eq).
    fn asynch_window(&self, key: ArmKey) -> (bool, f64, f64, Option<f64>) {
        let parts: Vec<(usize, usize)> = match key {
            ArmKey::Solo(m, e) => vec![(m, e)],
            ArmKey::Group(g) => self.groups[g].members.clone(),
        };
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut eq: Option<f64> = None;
        let mut mode_ok = true;
        for (m, e) in parts {
            let st = &self.events[m][e];
            let env = self.env(None);
            for c in st.info.discrete.iter().chain(&st.info.opaque) {
                if !eval_pred(c, &env, self.builtins).unwrap_or(false) {
                    mode_ok = false;
                }
            }
            let num = |x: &Expr| -> Option<f64> {
                eval(x, &env, self.builtins).ok().and_then(|v| v.as_f64())
            };
            for (b, _strict) in &st.info.time_los {
                match num(b) {
                    Some(v) => lo = lo.max(v),
                    None => mode_ok = false,
                }
            }
            for (b, _strict) in &st.info.time_his {
                match num(b) {
                    Some(v) => hi = hi.min(v),
                    None => mode_ok = false,
                }
            }
            for b in &st.info.time_eqs {
                match (num(b), eq) {
                    (Some(v), None) => eq = Some(v),
                    (Some(v), Some(prev)) if v == prev => {}
                    _ => mode_ok = false,
                }
            }
            if !st.info.continuous.is_empty() {
                // continuous atoms in asynch guards are sampled at settle
                // instants only; fold them into the discrete part
                for r in &st.info.continuous {
                    let holds = (|| -> Option<bool> {
                        let l = num(&r.lhs)?;
                        let rr = num(&r.rhs)?;
                        let d = l - rr;
                        Some(match r.op {
                            crate::ast::BinOp::Eq => d == 0.0,
                            crate::ast::BinOp::Ne => d != 0.0,
                            crate::ast::BinOp::Lt => d < 0.0,
                            crate::ast::BinOp::Le => d <= 0.0,
                            crate::ast::BinOp::Gt => d > 0.0,
                            crate::ast::BinOp::Ge => d >= 0.0,
                            _ => false,
                        })
                    })();
                    if holds != Some(true) {
                        mode_ok = false;
                    }
                }
            }
        }
        (mode_ok, lo, hi, eq)
    }

    fn refresh_asynch(&mut self) {
        let margin = self.cfg.margin;
        let policy = self.cfg.asynch_policy;
        for idx in 0..self.asynch.len() {
            let key = self.asynch[idx].key;
            let (mode_ok, lo, hi, eq) = self.asynch_window(key);
            let state = self.asynch[idx].state;
            let new_state = if !mode_ok {
                ArmState::Idle
            } else if let Some(p) = eq {
                let wid = (p.to_bits(), p.to_bits());
                match state {
                    ArmState::Fired { window } if window == wid => state,
                    ArmState::Armed { window, .. } if window == wid && p >= self.t => state,
                    _ if p >= self.t && p > lo.min(p) - 1.0 && p <= hi.max(p) => ArmState::Armed {
                        chosen: p,
                        window: wid,
                    },
                    _ => ArmState::Idle,
                }
            } else if hi <= self.t || lo >= hi {
                ArmState::Idle
            } else {
                let wid = (lo.to_bits(), hi.to_bits());
                match state {
                    ArmState::Fired { window } if window == wid => state,
                    ArmState::Armed { window, chosen } if window == wid && chosen >= self.t => {
                        state
                    }
                    _ => {
                        // arm (or re-arm after a fizzled instant)
                        let w0 = lo.max(self.t);
                        let mut chosen = match policy {
                            AsynchPolicy::EarliestPlusMargin => w0 + margin,
                            AsynchPolicy::UniformRandomInWindow => {
                                let hi_eff = hi.min(w0 + 100.0 * margin);
                                let frac = 0.001 + 0.998 * self.rng.gen::<f64>();
                                w0 + frac * (hi_eff - w0)
                            }
                        };
                        if chosen >= hi {
                            chosen = 0.5 * (w0 + hi);
                        }
                        if chosen <= self.t {
                            chosen = 0.5 * (self.t + hi);
                        }
                        ArmState::Armed {
                            chosen,
                            window: wid,
                        }
                    }
                }
            };
            self.asynch[idx].state = new_state;
        }
    }

    // ------------------------------------------------------------------
    // the settle loop: micro-steps at one instant

    fn settle(&mut self) -> Result<BTreeSet<usize>, Abort> {
        let mut touched = BTreeSet::new();
        self.micro = 0;
        for iteration in 0.. {
            if iteration > 10_000 {
                return Err(Abort {
                    code: codes::LIVELOCK,
                    time: self.t,
                    message: "micro-step livelock: more than 10000 events at one instant".into(),
                });
            }
            self.refresh_asynch();
            self.bump_occurrence_counters();
            let mut due: Vec<DueItem> = Vec::new();
            for &(m, e) in &self.ordinary_singles.clone() {
                match self.resolve_due(m, e)? {
                    DueOutcome::NotDue => {}
                    DueOutcome::Due(mut bs) => {
                        if bs.len() == 1 {
                            due.push(DueItem::Single(m, e, bs.pop().unwrap()));
                        } else {
                            due.push(DueItem::SingleChoice(m, e, bs));
                        }
                    }
                    DueOutcome::Unbound => {
                        let name = self.events[m][e].compiled.name.clone();
                        return Err(Abort {
                            code: codes::UNBOUND_ANY,
                            time: self.t,
                            message: format!(
                                "event `{}.{name}` (occurrence {}) is due but its parameters have no scenario binding and no enumerable domain",
                                self.project.machines[m].name, self.occ_count[m][e]
                            ),
                        });
                    }
                }
            }
            // asynch items whose chosen instant is now
            for idx in 0..self.asynch.len() {
                let ArmState::Armed { chosen, .. } = self.asynch[idx].state else {
                    continue;
                };
                if chosen != self.t {
                    continue;
                }
                match self.asynch[idx].key {
                    ArmKey::Solo(m, e) => {
                        if self.guard_true(m, e, None) {
                            due.push(DueItem::Single(m, e, BTreeMap::new()));
                        }
                    }
                    ArmKey::Group(g) => {
                        let ok = self.groups[g]
                            .members
                            .clone()
                            .iter()
                            .all(|&(m, e)| self.guard_true(m, e, None));
                        if ok {
                            due.push(DueItem::Group(g));
                        }
                    }
                }
            }
            // ordinary-only SYNCH groups fire whenever the conjunction holds
            for g in 0..self.groups.len() {
                if self.groups[g].has_asynch {
                    continue;
                }
                let ok = self.groups[g]
                    .members
                    .clone()
                    .iter()
                    .all(|&(m, e)| self.guard_true(m, e, None));
                if ok {
                    due.push(DueItem::Group(g));
                }
            }
            if due.is_empty() {
                break;
            }
            // machine-by-machine in declaration order, seeded within one
            let min_primary = due.iter().map(|d| d.primary(&self.groups)).min().unwrap();
            let mut candidates: Vec<DueItem> = due
                .into_iter()
                .filter(|d| d.primary(&self.groups) == min_primary)
                .collect();
            let pick = if candidates.len() == 1 {
                0
            } else {
                self.rng.gen_range(0..candidates.len())
            };
            let item = candidates.swap_remove(pick);
            match item {
                DueItem::Single(m, e, binding) => {
                    let kind = match self.events[m][e].compiled.status {
                        EventStatus::Asynch => OccKind::Asynch,
                        _ => OccKind::Ordinary,
                    };
                    self.fire_members(kind, None, &[(m, e)], binding)?;
                    self.mark_fired(ArmKey::Solo(m, e));
                    touched.insert(m);
                }
                DueItem::SingleChoice(m, e, bindings) => {
                    let k = if bindings.len() == 1 {
                        0
                    } else {
                        self.rng.gen_range(0..bindings.len())
                    };
                    self.fire_members(OccKind::Ordinary, None, &[(m, e)], bindings[k].clone())?;
                    touched.insert(m);
                }
                DueItem::Group(g) => {
                    let members = self.groups[g].members.clone();
                    let kind = if self.groups[g].has_asynch {
                        OccKind::Asynch
                    } else {
                        OccKind::SynchGroup
                    };
                    let kind = if members.len() > 1 { OccKind::SynchGroup } else { kind };
                    self.fire_members(kind, Some(g), &members, BTreeMap::new())?;
                    self.mark_fired(ArmKey::Group(g));
                    touched.extend(members.iter().map(|(m, _)| *m));
                }
            }
        }
        Ok(touched)
    }

    fn mark_fired(&mut self, key: ArmKey) {
        for item in &mut self.asynch {
            if item.key == key {
                if let ArmState::Armed { window, .. } = item.state {
                    item.state = ArmState::Fired { window };
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // pliant selection & handover

    fn pliant_enabled(&self, m: usize) -> Vec<usize> {
        self.events[m]
            .iter()
            .enumerate()
            .filter(|(_, st)| st.compiled.status == EventStatus::Pliant)
            .filter(|(e, _)| self.guard_true(m, *e, None))
            .map(|(e, _)| e)
            .collect()
    }

    fn reselect_pliant(&mut self, touched: &BTreeSet<usize>, at_init: bool) -> Result<(), Abort> {
        for m in 0..self.events.len() {
            let need = touched.contains(&m)
                || match self.active_pliant[m] {
                    None => true,
                    Some(e) => !self.guard_true(m, e, None),
                };
            if !need {
                continue;
            }
            let enabled = self.pliant_enabled(m);
            match enabled.as_slice() {
                [] => {
                    let code = if at_init {
                        codes::NO_PLIANT_SUCCESSOR
                    } else {
                        codes::NO_SUCCESSOR
                    };
                    return Err(Abort {
                        code,
                        time: self.t,
                        message: format!(
                            "machine `{}` has no enabled pliant event at t = {}",
                            self.project.machines[m].name, self.t
                        ),
                    });
                }
                [one] => self.active_pliant[m] = Some(*one),
                several => {
                    let k = self.rng.gen_range(0..several.len());
                    self.active_pliant[m] = Some(several[k]);
                }
            }
        }
        Ok(())
    }

    /// Handover conditions of the machines touched by the last
    /// occurrence set: a pliant successor must be enabled and no
    /// ordinary (non-synchronized, non-asynch) mode event may remain
    /// enabled.
    pub fn check_handover_of(&self, touched: &BTreeSet<usize>) -> Vec<Violation> {
        let mut out = Vec::new();
        for &m in touched {
            if self.pliant_enabled(m).is_empty() {
                out.push(Violation {
                    time: self.t,
                    source: codes::NO_PLIANT_SUCCESSOR.into(),
                    phase: Phase::AfterModeEvent,
                    message: format!(
                        "machine `{}` has no enabled pliant event after the occurrence",
                        self.project.machines[m].name
                    ),
                    snapshot: self.global_snapshot(),
                });
            }
            for &(mm, e) in &self.ordinary_singles {
                if mm != m {
                    continue;
                }
                if self.events[mm][e].compiled.params.is_empty() && self.guard_true(mm, e, None) {
                    out.push(Violation {
                        time: self.t,
                        source: "ordinary-still-enabled".into(),
                        phase: Phase::AfterModeEvent,
                        message: format!(
                            "ordinary event `{}.{}` is still enabled after the settle loop",
                            self.project.machines[mm].name, self.events[mm][e].compiled.name
                        ),
                        snapshot: self.global_snapshot(),
                    });
                }
            }
        }
        out
    }

    fn monitor_point(&mut self, phase: Phase) {
        if !self.cfg.check_invariants {
            return;
        }
        let snap = self.global_snapshot();
        let vs = self.monitor.check_point(&snap, self.t, phase);
        self.violations.extend(vs);
    }

    // ------------------------------------------------------------------
    // the main step

    /// Advance to the next mode-occurrence instant (or the horizon):
    /// integrate all active pliant episodes jointly, preempt at the
    /// earliest crossing or scheduled instant, fire the due micro-steps
    /// and reselect pliant events.
    pub fn advance(&mut self) -> Result<bool, Abort> {
        if self.t >= self.cfg.horizon {
            return Ok(false);
        }
        self.refresh_asynch();

        // earliest scheduled instant: armed asynch + ordinary time points
        let mut t_next = self.cfg.horizon;
        for item in &self.asynch {
            if let ArmState::Armed { chosen, .. } = item.state {
                if chosen > self.t {
                    t_next = t_next.min(chosen);
                }
            }
        }
        let mut schedule_points = |run: &Run, m: usize, e: usize, t_next: &mut f64| {
            let st = &run.events[m][e];
            if st.info.time_eqs.is_empty() {
                return;
            }
            if !run.eval_conjuncts(&st.sched_gate, None) {
                return;
            }
            let env = run.env(None);
            for b in &st.info.time_eqs {
                if let Ok(v) = eval(b, &env, run.builtins) {
                    if let Some(p) = v.as_f64() {
                        if p > run.t && p <= run.cfg.horizon {
                            *t_next = t_next.min(p);
                        }
                    }
                }
            }
        };
        for &(m, e) in &self.ordinary_singles {
            schedule_points(self, m, e, &mut t_next);
        }
        // ordinary-only SYNCH groups wake at their members' time points
        for g in &self.groups {
            if g.has_asynch {
                continue;
            }
            for &(m, e) in &g.members {
                schedule_points(self, m, e, &mut t_next);
            }
        }

        // joint continuous system over all machines
        let mut sys = OdeSystem::default();
        for m in 0..self.events.len() {
            if let Some(e) = self.active_pliant[m] {
                let ev = &self.events[m][e].compiled;
                for (target, rhs) in &ev.odes {
                    sys.state_vars.push(target.clone());
                    sys.rhs.push(rhs.clone());
                }
                for (target, rhs) in &ev.assigns {
                    sys.direct_assigns.push((target.clone(), rhs.clone()));
                }
            }
        }
        // watched ordinary events with continuous guard atoms
        let mut watch: Vec<WatchGuard> = Vec::new();
        let mut watch_ids: Vec<(usize, usize)> = Vec::new();
        for &(m, e) in &self.ordinary_singles.clone() {
            let st = &self.events[m][e];
            if st.info.continuous.is_empty() || !st.compiled.params.is_empty() {
                continue;
            }
            if !self.eval_conjuncts(&st.sched_gate.clone(), None) {
                continue;
            }
            let st = &self.events[m][e];
            watch.push(WatchGuard {
                id: watch_ids.len(),
                residuals: st.info.continuous.clone(),
            });
            watch_ids.push((m, e));
        }

        let frame = self.global_snapshot();
        let episode = {
            let env = EpisodeEnv {
                frame: &frame,
                consts: &self.scope.consts,
                clock_offsets: &self.clock_offsets,
                time_var: self.scope.time_var.as_deref(),
                builtins: self.builtins,
            };
            integrate_episode(&sys, &env, self.t, &watch, t_next, &self.cfg.numeric)
        }
        .map_err(|e| Abort {
            code: codes::EVAL_FAILED,
            time: self.t,
            message: format!("episode integration failed: {e}"),
        })?;

        // samples → trace + monitors (skip the duplicate first sample)
        for (i, (ts, sv)) in episode.samples.iter().enumerate() {
            if i > 0 {
                let mut deltas = Vec::new();
                for name in sys
                    .state_vars
                    .iter()
                    .chain(sys.direct_assigns.iter().map(|(n, _)| n))
                {
                    if let Some(v) = sv.get(name) {
                        deltas.push(VarDelta {
                            var: name.clone(),
                            before: None,
                            after: v.clone(),
                        });
                    }
                }
                self.trace
                    .append(TraceRecord {
                        t: *ts,
                        kind: RecordKind::Sample,
                        machines: vec![],
                        event: String::new(),
                        deltas,
                        micro_step: 0,
                    })
                    .map_err(|e| Abort {
                        code: codes::EVAL_FAILED,
                        time: *ts,
                        message: e.to_string(),
                    })?;
            }
            if self.cfg.check_invariants {
                let vs = self.monitor.check_point(sv, *ts, Phase::DuringEpisodeSample);
                self.violations.extend(vs);
                self.check_comply(sv, *ts);
            }
        }

        if episode.cause == TerminationCause::Infeasible {
            return Err(Abort {
                code: codes::INFEASIBLE,
                time: episode.end_time,
                message: "continuous state left the finite range".into(),
            });
        }

        // commit the episode end state (left limit, snapped at crossings)
        self.t = episode.end_time;
        for name in sys
            .state_vars
            .iter()
            .chain(sys.direct_assigns.iter().map(|(n, _)| n))
        {
            if let Some(v) = episode.end_valuation.get(name) {
                self.store.insert(name.clone(), v.clone());
            }
        }
        if self.cfg.check_invariants {
            let vs = self
                .monitor
                .check_point(&episode.end_valuation, self.t, Phase::EpisodeEnd);
            self.violations.extend(vs);
        }

        let touched = self.settle()?;
        if !touched.is_empty() {
            self.monitor_point(Phase::AfterModeEvent);
        }
        self.reselect_pliant(&touched, false)?;
        if self.cfg.check_invariants && !touched.is_empty() {
            let handover = self.check_handover_of(&touched);
            self.violations.extend(handover);
        }
        Ok(self.t < self.cfg.horizon)
    }

    fn check_comply(&mut self, sv: &Valuation, ts: f64) {
        for m in 0..self.events.len() {
            if let Some(e) = self.active_pliant[m] {
                if let Some(Comply::Pred(p)) = &self.events[m][e].compiled.comply {
                    let mut overlay = BTreeMap::new();
                    if let Some(tv) = &self.scope.time_var {
                        overlay.insert(tv.clone(), Value::Real(ts));
                    }
                    let env = Layered(&overlay, &Layered(sv, &self.scope.consts));
                    if !eval_pred(p, &env, self.builtins).unwrap_or(false) {
                        self.violations.push(Violation {
                            time: ts,
                            source: format!(
                                "{}.{}#COMPLY",
                                self.project.machines[m].name, self.events[m][e].compiled.name
                            ),
                            phase: Phase::DuringEpisodeSample,
                            message: "COMPLY predicate violated during episode".into(),
                            snapshot: sv.clone(),
                        });
                    }
                }
            }
        }
    }

    /// Run to the horizon (or an abort), returning the full outcome with
    /// the partial trace attached on aborts.
    pub fn run_to_horizon(mut self) -> RunOutcome {
        let mut abort = None;
        if let Err(a) = self.init() {
            abort = Some(a);
        } else {
            loop {
                match self.advance() {
                    Ok(true) => {}
                    Ok(false) => break,
                    Err(a) => {
                        abort = Some(a);
                        break;
                    }
                }
            }
        }
        let end_t = self.t.min(self.cfg.horizon);
        let _ = self.trace.append(TraceRecord {
            t: end_t,
            kind: RecordKind::RunEnd,
            machines: vec![],
            event: match &abort {
                Some(a) => a.code.to_string(),
                None => String::new(),
            },
            deltas: vec![],
            micro_step: 0,
        });
        RunOutcome {
            final_valuation: self.global_snapshot(),
            trace: self.trace,
            occurrences: self.occurrences,
            violations: self.violations,
            abort,
        }
    }
}

/// Convenience wrapper: build, initialize and run a project to the
/// horizon.
pub fn run_project(
    project: &ElaboratedProject,
    builtins: &Builtins,
    cfg: RunConfig,
    scenario: ScenarioBindings,
    corpus_hash: String,
) -> Result<RunOutcome, String> {
    let run = Run::new(project, builtins, cfg, scenario, corpus_hash)?;
    Ok(run.run_to_horizon())
}
