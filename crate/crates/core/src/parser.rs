//! Recursive-descent parser turning `.heb` text into construct ASTs.
//!
//! The grammar is keyword-anchored and line-oriented: clauses begin with
//! an all-caps keyword at the start of a line, and expressions continue
//! across lines whenever they are syntactically incomplete.

use std::path::Path;

use crate::ast::*;
use crate::diag::{codes, Diagnostic, Location};
use crate::lexer::{lex, Keyword, Tok, Token};

/// One source file plus the construct spans discovered while parsing it.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub path: String,
    pub content: String,
}

impl SourceUnit {
    pub fn new(path: impl Into<String>, content: impl Into<String>) -> Self {
        SourceUnit {
            path: path.into(),
            content: content.into(),
        }
    }
}

/// Result of parsing one unit or a whole project directory.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub constructs: Vec<ConstructAst>,
    pub diagnostics: Vec<Diagnostic>,
    /// Non-overlapping, ordered (first line, last line, construct name)
    /// spans per unit.
    pub spans: Vec<(u32, u32, String)>,
}

impl ParseOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.is_error())
    }
}

/// Parse a single source unit. On errors, recovered constructs parsed
/// before/after the faulty one are still returned.
pub fn parse_unit(src: &SourceUnit) -> ParseOutcome {
    let (tokens, mut diags) = lex(&src.path, &src.content);
    let mut out = ParseOutcome::default();
    let mut p = Parser {
        toks: &tokens,
        pos: 0,
        path: &src.path,
        diags: &mut diags,
    };
    while !p.at_end() {
        let start_line = p.peek_line();
        match p.parse_construct() {
            Some(c) => {
                let end_line = p.prev_line();
                out.spans.push((start_line, end_line, c.name.clone()));
                out.constructs.push(c);
            }
            None => {
                // skip to the next construct keyword at line start
                p.synchronize();
            }
        }
    }
    out.diagnostics = diags;
    out
}

/// Parse every file of a project. Construct names must be unique
/// project-wide.
pub fn parse_project_dir<P: AsRef<Path>>(paths: &[P]) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for p in paths {
        let path = p.as_ref();
        let display = path.display().to_string();
        match std::fs::read_to_string(path) {
            Ok(content) => {
                let unit = SourceUnit::new(display, content);
                let mut r = parse_unit(&unit);
                out.constructs.append(&mut r.constructs);
                out.diagnostics.append(&mut r.diagnostics);
                out.spans.append(&mut r.spans);
            }
            Err(e) => {
                out.diagnostics.push(Diagnostic::error(
                    Location {
                        path: display,
                        line: 0,
                        col: 0,
                    },
                    codes::UNREADABLE_FILE,
                    format!("cannot read file: {e}"),
                ));
            }
        }
    }
    out.diagnostics.extend(check_unique_names(&out.constructs));
    if out.constructs.is_empty() && !out.has_errors() {
        out.diagnostics.push(Diagnostic::warning(
            Location::default(),
            codes::NO_CONSTRUCTS,
            "no constructs found",
        ));
    }
    out
}


/// Construct names must be unique project-wide.
pub fn check_unique_names(constructs: &[ConstructAst]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen: std::collections::BTreeMap<&str, usize> = Default::default();
    for (i, c) in constructs.iter().enumerate() {
        if let Some(&first) = seen.get(c.name.as_str()) {
            out.push(Diagnostic::error(
                Location::default(),
                codes::DUPLICATE_NAME,
                format!(
                    "construct `{}` declared more than once (constructs #{} and #{})",
                    c.name,
                    first + 1,
                    i + 1
                ),
            ));
        } else {
            seen.insert(c.name.as_str(), i);
        }
    }
    out
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    path: &'a str,
    diags: &'a mut Vec<Diagnostic>,
}

/// Keywords that begin a clause/section when they start a line.
fn is_section_kw(kw: Keyword) -> bool {
    use Keyword::*;
    matches!(
        kw,
        Sees | Connects
            | Reads
            | Refers
            | Time
            | Clock
            | Pliant
            | Variables
            | Invariants
            | Events
            | Sets
            | Constants
            | Axioms
            | Theorems
            | Initialisation
            | Status
            | Any
            | Where
            | When
            | Init
            | Comply
            | Solve
            | Begin
            | Then
            | End
            | Synch
            | Machine
            | Context
            | Interface
            | Project
            | GlobInvs
            | Is
            | With
    )
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn peek_line(&self) -> u32 {
        self.toks.get(self.pos).map(|t| t.line).unwrap_or(0)
    }

    fn prev_line(&self) -> u32 {
        if self.pos == 0 {
            0
        } else {
            self.toks[self.pos - 1].line
        }
    }

    fn loc(&self) -> Location {
        let (line, col) = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|t| (t.line, t.col))
            .unwrap_or((0, 0));
        Location {
            path: self.path.to_string(),
            line,
            col,
        }
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error(&mut self, code: &'static str, msg: impl Into<String>) {
        let loc = self.loc();
        self.diags.push(Diagnostic::error(loc, code, msg));
    }

    /// True when the current token starts a line and is a section keyword.
    fn at_section_boundary(&self) -> bool {
        match self.toks.get(self.pos) {
            Some(t) => t.starts_line && matches!(&t.tok, Tok::Kw(k) if is_section_kw(*k)),
            None => true,
        }
    }

    fn eat_kw(&mut self, kw: Keyword) -> bool {
        if self.peek() == Some(&Tok::Kw(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: Keyword) -> bool {
        if self.eat_kw(kw) {
            true
        } else {
            let found = self.peek().map(|t| t.describe()).unwrap_or("end of file".into());
            self.error(
                codes::BAD_SYNTAX,
                format!("expected {}, found {}", kw.as_str(), found),
            );
            false
        }
    }

    fn expect_ident(&mut self) -> Option<String> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let Some(Tok::Ident(name)) = self.bump().map(|t| &t.tok) else {
                    unreachable!()
                };
                Some(name.clone())
            }
            _ => {
                let found = self.peek().map(|t| t.describe()).unwrap_or("end of file".into());
                self.error(codes::BAD_SYNTAX, format!("expected identifier, found {found}"));
                None
            }
        }
    }

    fn synchronize(&mut self) {
        loop {
            match self.toks.get(self.pos) {
                None => return,
                Some(t)
                    if t.starts_line
                        && matches!(
                            &t.tok,
                            Tok::Kw(Keyword::Machine)
                                | Tok::Kw(Keyword::Context)
                                | Tok::Kw(Keyword::Interface)
                                | Tok::Kw(Keyword::Project)
                                | Tok::Kw(Keyword::GlobInvs)
                        ) =>
                {
                    return
                }
                _ => self.pos += 1,
            }
        }
    }

    // ------------------------------------------------------------------
    // constructs

    fn parse_construct(&mut self) -> Option<ConstructAst> {
        let kind = match self.peek() {
            Some(Tok::Kw(Keyword::Machine)) => ConstructKind::Machine,
            Some(Tok::Kw(Keyword::Context)) => ConstructKind::Context,
            Some(Tok::Kw(Keyword::Interface)) => ConstructKind::Interface,
            Some(Tok::Kw(Keyword::Project)) => ConstructKind::Project,
            Some(Tok::Kw(Keyword::GlobInvs)) => ConstructKind::GlobInvs,
            _ => {
                let found = self.peek().map(|t| t.describe()).unwrap_or("end of file".into());
                self.error(
                    codes::BAD_SYNTAX,
                    format!("expected a construct keyword, found {found}"),
                );
                self.pos += 1;
                return None;
            }
        };
        self.pos += 1;
        let name = self.expect_ident()?;
        let mut c = ConstructAst::new(kind, &name);
        let ok = if kind == ConstructKind::Project {
            self.parse_project_body(&mut c)
        } else {
            self.parse_construct_body(&mut c)
        };
        if ok {
            self.validate_construct(&c).then_some(c)
        } else {
            None
        }
    }

    fn parse_construct_body(&mut self, c: &mut ConstructAst) -> bool {
        loop {
            let Some(tok) = self.peek().cloned() else {
                self.error(
                    codes::MISSING_END,
                    format!("construct `{}` is not closed by END", c.name),
                );
                return false;
            };
            match tok {
                Tok::Kw(Keyword::End) => {
                    self.pos += 1;
                    return true;
                }
                Tok::Kw(Keyword::Sees) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        c.clauses.push(Clause::Sees(n));
                    }
                }
                Tok::Kw(Keyword::Connects) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        c.clauses.push(Clause::Connects(n));
                    }
                }
                Tok::Kw(Keyword::Reads) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        c.clauses.push(Clause::Reads(n));
                    }
                }
                Tok::Kw(Keyword::Refers) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        c.clauses.push(Clause::Refers(n));
                    }
                }
                Tok::Kw(Keyword::Time) => {
                    self.pos += 1;
                    if c.time_var().is_some() {
                        self.error(codes::DUPLICATE_CLAUSE, "more than one TIME clause");
                    }
                    if let Some(n) = self.expect_ident() {
                        c.clauses.push(Clause::Time(n));
                    }
                }
                Tok::Kw(Keyword::Clock) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        if c.clocks().any(|k| k == n) {
                            self.error(
                                codes::DUPLICATE_CLAUSE,
                                format!("clock `{n}` declared more than once"),
                            );
                        }
                        c.clauses.push(Clause::Clock(n));
                    }
                }
                Tok::Kw(Keyword::Variables) => {
                    self.pos += 1;
                    let vs = self.parse_name_list_section();
                    c.clauses.push(Clause::Variables(vs));
                }
                Tok::Kw(Keyword::Pliant) => {
                    self.pos += 1;
                    let vs = self.parse_name_list_section();
                    c.clauses.push(Clause::Pliant(vs));
                }
                Tok::Kw(Keyword::Sets) => {
                    self.pos += 1;
                    let vs = self.parse_name_list_section();
                    c.clauses.push(Clause::Sets(vs));
                }
                Tok::Kw(Keyword::Constants) => {
                    self.pos += 1;
                    let vs = self.parse_name_list_section();
                    c.clauses.push(Clause::Constants(vs));
                }
                Tok::Kw(Keyword::Invariants) => {
                    self.pos += 1;
                    let es = self.parse_pred_section();
                    c.clauses.push(Clause::Invariants(es));
                }
                Tok::Kw(Keyword::Axioms) => {
                    self.pos += 1;
                    let es = self.parse_pred_section();
                    c.clauses.push(Clause::Axioms(es));
                }
                Tok::Kw(Keyword::Theorems) => {
                    self.pos += 1;
                    let es = self.parse_pred_section();
                    c.clauses.push(Clause::Theorems(es));
                }
                Tok::Kw(Keyword::Initialisation) if c.kind != ConstructKind::Machine => {
                    self.pos += 1;
                    let stmts = self.parse_statements();
                    let mut assigns = Vec::new();
                    for s in stmts {
                        match s {
                            Stmt::Assign(t, e) => assigns.push((t, e)),
                            Stmt::Ode(..) | Stmt::Nondet(..) => {
                                self.error(
                                    codes::BAD_SYNTAX,
                                    "interface INITIALISATION allows only `x := E` assignments",
                                );
                            }
                        }
                    }
                    c.clauses.push(Clause::Initialisation(assigns));
                }
                Tok::Kw(Keyword::Events) => {
                    self.pos += 1;
                    if c.clauses.iter().any(|cl| matches!(cl, Clause::Events(_))) {
                        self.error(codes::DUPLICATE_CLAUSE, "more than one EVENTS section");
                    }
                    // parse_events consumes the construct-closing END
                    match self.parse_events(&c.name) {
                        Some(evs) => {
                            c.clauses.push(Clause::Events(evs));
                            return true;
                        }
                        None => return false,
                    }
                }
                other => {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!("unexpected {} in {} `{}`", other.describe(), c.kind, c.name),
                    );
                    self.pos += 1;
                }
            }
        }
    }

    /// Events run to a dangling END that also closes the construct.
    /// Returns None when the file ended before that END.
    fn parse_events(&mut self, construct: &str) -> Option<Vec<EventAst>> {
        let mut events = Vec::new();
        loop {
            match self.peek() {
                None => {
                    self.error(
                        codes::MISSING_END,
                        format!("construct `{construct}` is not closed by END"),
                    );
                    return None;
                }
                Some(Tok::Kw(Keyword::End)) => {
                    self.pos += 1;
                    return Some(events);
                }
                Some(Tok::Ident(_)) | Some(Tok::Kw(Keyword::Initialisation)) => {
                    if let Some(ev) = self.parse_event(construct) {
                        events.push(ev);
                    }
                }
                Some(other) => {
                    let msg = format!("expected an event name or END, found {}", other.describe());
                    self.error(codes::BAD_SYNTAX, msg);
                    self.pos += 1;
                }
            }
        }
    }

    fn parse_event(&mut self, construct: &str) -> Option<EventAst> {
        let name = match self.peek() {
            Some(Tok::Kw(Keyword::Initialisation)) => {
                self.pos += 1;
                "INITIALISATION".to_string()
            }
            _ => self.expect_ident()?,
        };
        let mut ev = EventAst::new(&name, EventStatus::Ordinary);
        let mut had_block = false;
        let mut had_solve = false;
        loop {
            let Some(tok) = self.peek().cloned() else {
                self.error(
                    codes::MISSING_END,
                    format!("event `{name}` in `{construct}` is not closed by END"),
                );
                return None;
            };
            match tok {
                Tok::Kw(Keyword::End) => {
                    self.pos += 1;
                    break;
                }
                Tok::Kw(Keyword::Status) => {
                    self.pos += 1;
                    match self.peek() {
                        Some(Tok::Ident(s)) if s == "ordinary" => {
                            ev.status = EventStatus::Ordinary;
                            self.pos += 1;
                        }
                        Some(Tok::Ident(s)) if s == "pliant" => {
                            ev.status = EventStatus::Pliant;
                            self.pos += 1;
                        }
                        Some(Tok::Ident(s)) if s == "asynch" => {
                            ev.status = EventStatus::Asynch;
                            self.pos += 1;
                        }
                        _ => {
                            self.error(
                                codes::BAD_SYNTAX,
                                "STATUS must be ordinary, pliant or asynch",
                            );
                        }
                    }
                }
                Tok::Kw(Keyword::Any) => {
                    self.pos += 1;
                    for n in self.parse_name_list_line() {
                        let dir = if n.ends_with('?') {
                            ParamDir::Input
                        } else if n.ends_with('!') {
                            ParamDir::Output
                        } else {
                            ParamDir::Local
                        };
                        ev.params.push((n, dir));
                    }
                }
                Tok::Kw(Keyword::Where) | Tok::Kw(Keyword::When) => {
                    self.pos += 1;
                    if let Some(e) = self.parse_expr_checked() {
                        ev.when_guard = Some(match ev.when_guard.take() {
                            Some(prev) => Expr::bin(BinOp::And, prev, e),
                            None => e,
                        });
                    }
                }
                Tok::Kw(Keyword::Init) => {
                    self.pos += 1;
                    if let Some(e) = self.parse_expr_checked() {
                        ev.init_guard = Some(e);
                    }
                }
                Tok::Kw(Keyword::Comply) => {
                    self.pos += 1;
                    if self.eat_kw(Keyword::Invariants) {
                        ev.body.comply = Some(Comply::Invariants);
                    } else if let Some(e) = self.parse_expr_checked() {
                        ev.body.comply = Some(Comply::Pred(e));
                    }
                }
                Tok::Kw(Keyword::Solve) => {
                    self.pos += 1;
                    had_solve = true;
                    for s in self.parse_statements() {
                        match s {
                            Stmt::Assign(t, e) => ev.body.assigns.push((t, e)),
                            Stmt::Ode(t, e) => ev.body.odes.push((t, e)),
                            Stmt::Nondet(..) => {
                                self.error(codes::BAD_SYNTAX, "`:|` is not allowed inside SOLVE");
                            }
                        }
                    }
                }
                Tok::Kw(Keyword::Begin) | Tok::Kw(Keyword::Then) => {
                    self.pos += 1;
                    had_block = true;
                    for s in self.parse_statements() {
                        match s {
                            Stmt::Assign(t, e) => ev.body.assigns.push((t, e)),
                            Stmt::Nondet(ts, p) => ev.body.nondet = Some((ts, p)),
                            Stmt::Ode(..) => {
                                self.error(
                                    codes::BAD_SYNTAX,
                                    "ODE forms are only allowed inside SOLVE",
                                );
                            }
                        }
                    }
                }
                other => {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!("unexpected {} in event `{name}`", other.describe()),
                    );
                    self.pos += 1;
                }
            }
        }
        // structural invariants
        let mut ok = true;
        match ev.status {
            EventStatus::Ordinary | EventStatus::Asynch => {
                if had_solve || ev.body.comply.is_some() {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!("mode event `{name}` must not carry SOLVE or COMPLY"),
                    );
                    ok = false;
                }
            }
            EventStatus::Pliant => {
                if had_block {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!("pliant event `{name}` must not carry a BEGIN/THEN block"),
                    );
                    ok = false;
                }
            }
        }
        let mut targets: Vec<&str> = Vec::new();
        for (t, _) in ev.body.assigns.iter().chain(ev.body.odes.iter()) {
            if targets.contains(&t.as_str()) {
                self.error(
                    codes::DUPLICATE_TARGET,
                    format!("variable `{t}` is updated twice in event `{name}`"),
                );
                ok = false;
            }
            targets.push(t);
        }
        ok.then_some(ev)
    }

    fn validate_construct(&mut self, c: &ConstructAst) -> bool {
        // interfaces and contexts are event-free
        if matches!(c.kind, ConstructKind::Interface | ConstructKind::Context | ConstructKind::GlobInvs)
            && c.events().next().is_some()
        {
            self.error(
                codes::BAD_SYNTAX,
                format!("{} `{}` must not declare events", c.kind, c.name),
            );
            return false;
        }
        true
    }

    // ------------------------------------------------------------------
    // projects

    fn parse_project_body(&mut self, c: &mut ConstructAst) -> bool {
        loop {
            let Some(tok) = self.peek().cloned() else {
                self.error(
                    codes::MISSING_END,
                    format!("construct `{}` is not closed by END", c.name),
                );
                return false;
            };
            match tok {
                Tok::Kw(Keyword::End) => {
                    self.pos += 1;
                    return true;
                }
                Tok::Kw(Keyword::GlobInvs) => {
                    self.pos += 1;
                    if let Some(n) = self.expect_ident() {
                        c.clauses.push(Clause::GlobInvsRef(n));
                    }
                }
                Tok::Kw(Keyword::Context) | Tok::Kw(Keyword::Interface) | Tok::Kw(Keyword::Machine) => {
                    let kind = match tok {
                        Tok::Kw(Keyword::Context) => ConstructKind::Context,
                        Tok::Kw(Keyword::Interface) => ConstructKind::Interface,
                        _ => ConstructKind::Machine,
                    };
                    self.pos += 1;
                    let Some(name) = self.expect_ident() else {
                        continue;
                    };
                    let renaming = if self.eat_kw(Keyword::Is) {
                        self.parse_instantiation()
                    } else {
                        None
                    };
                    c.clauses.push(Clause::Item(ProjectItem { kind, name, renaming }));
                }
                Tok::Kw(Keyword::Synch) => {
                    self.pos += 1;
                    if let Some(g) = self.parse_synch_group() {
                        c.clauses.push(Clause::Synch(g));
                    }
                }
                other => {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!("unexpected {} in PROJECT `{}`", other.describe(), c.name),
                    );
                    self.pos += 1;
                }
            }
        }
    }

    fn parse_instantiation(&mut self) -> Option<RenamingAst> {
        let source = self.expect_ident()?;
        let mut subst = Vec::new();
        if self.eat_kw(Keyword::With) {
            loop {
                match self.peek() {
                    Some(Tok::Kw(Keyword::End)) | None => break,
                    Some(Tok::Comma) => {
                        self.pos += 1;
                    }
                    _ => {
                        let from = self.expect_ident()?;
                        if self.peek() == Some(&Tok::Arrow) {
                            self.pos += 1;
                        } else {
                            self.error(codes::BAD_SYNTAX, "expected `→` in renaming pair");
                            return None;
                        }
                        let to = self.expect_ident()?;
                        if subst.iter().any(|(f, _)| *f == from) {
                            self.error(
                                codes::RENAMING_COLLISION,
                                format!("source identifier `{from}` renamed twice"),
                            );
                        }
                        if subst.iter().any(|(_, t)| *t == to) {
                            self.error(
                                codes::RENAMING_COLLISION,
                                format!("two source identifiers renamed to `{to}`"),
                            );
                        }
                        subst.push((from, to));
                    }
                }
            }
        }
        if !self.expect_kw(Keyword::End) {
            return None;
        }
        Some(RenamingAst { source, subst })
    }

    fn parse_synch_group(&mut self) -> Option<SynchGroupAst> {
        let name = self.expect_ident()?;
        let mut members = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Kw(Keyword::End)) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Ident(_)) => {
                    let machine = self.expect_ident()?;
                    if self.peek() == Some(&Tok::Dot) {
                        self.pos += 1;
                    } else {
                        self.error(codes::BAD_SYNTAX, "expected `.` in SYNCH member");
                        return None;
                    }
                    let event = self.expect_ident()?;
                    members.push(SynchMember { machine, event });
                }
                _ => {
                    self.error(codes::MISSING_END, format!("SYNCH `{name}` is not closed by END"));
                    return None;
                }
            }
        }
        if members.len() < 2 {
            self.error(
                codes::BAD_SYNTAX,
                format!("SYNCH `{name}` needs at least two members"),
            );
            return None;
        }
        Some(SynchGroupAst { name, members })
    }

    // ------------------------------------------------------------------
    // name lists, predicates, statements

    /// Names on the current line: `a, b, c` (stops at end of line).
    fn parse_name_list_line(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        let line = self.prev_or_cur_line();
        loop {
            match self.peek() {
                Some(Tok::Ident(_)) if self.peek_line() == line || names.is_empty() => {
                    if let Some(n) = self.expect_ident() {
                        names.push(n);
                    }
                }
                _ => break,
            }
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        if names.is_empty() {
            self.error(codes::BAD_SYNTAX, "expected at least one name");
        }
        names
    }

    fn prev_or_cur_line(&self) -> u32 {
        if self.pos == 0 {
            self.peek_line()
        } else {
            self.toks[self.pos - 1].line
        }
    }

    /// Names spread over following lines until the next section keyword.
    fn parse_name_list_section(&mut self) -> Vec<String> {
        let mut names = Vec::new();
        loop {
            if self.at_section_boundary() || self.at_end() {
                break;
            }
            match self.peek() {
                Some(Tok::Ident(_)) => {
                    if let Some(n) = self.expect_ident() {
                        names.push(n);
                    }
                }
                Some(Tok::Comma) => {
                    self.pos += 1;
                }
                Some(other) => {
                    let msg = format!("expected a name, found {}", other.describe());
                    self.error(codes::BAD_SYNTAX, msg);
                    self.pos += 1;
                }
                None => break,
            }
        }
        names
    }

    /// Predicates until the next section keyword. A line such as
    /// `a, b : T1, T2` desugars into one membership per variable, and
    /// `P , Q` on one line yields two predicates.
    fn parse_pred_section(&mut self) -> Vec<Expr> {
        let mut preds = Vec::new();
        while !(self.at_section_boundary() || self.at_end()) {
            let mut items = Vec::new();
            loop {
                match self.parse_expr_checked() {
                    Some(e) => items.push(e),
                    None => return preds,
                }
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            preds.extend(self.split_pred_items(items));
        }
        preds
    }

    fn split_pred_items(&mut self, items: Vec<Expr>) -> Vec<Expr> {
        fn is_relational(e: &Expr) -> bool {
            match e {
                Expr::Binary(op, ..) => {
                    op.is_comparison() || matches!(op, BinOp::And | BinOp::Or | BinOp::Implies)
                }
                Expr::Unary(UnaryOp::Not, _) => true,
                Expr::Apply(..) | Expr::Bool(_) => true,
                _ => false,
            }
        }
        if items.len() <= 1 {
            return items;
        }
        if items.iter().all(is_relational) {
            return items;
        }
        // multi-typing: id, …, id ∈/: T, T, …
        let k = items
            .iter()
            .position(|e| matches!(e, Expr::Binary(BinOp::In, lhs, _) if matches!(**lhs, Expr::Ident(_))));
        if let Some(k) = k {
            let head_ids_ok = items[..k].iter().all(|e| matches!(e, Expr::Ident(_)));
            if head_ids_ok {
                let mut ids: Vec<String> = items[..k]
                    .iter()
                    .map(|e| match e {
                        Expr::Ident(n) => n.clone(),
                        _ => unreachable!(),
                    })
                    .collect();
                let (mid_id, mid_ty) = match &items[k] {
                    Expr::Binary(BinOp::In, lhs, rhs) => match &**lhs {
                        Expr::Ident(n) => (n.clone(), (**rhs).clone()),
                        _ => unreachable!(),
                    },
                    _ => unreachable!(),
                };
                ids.push(mid_id);
                let mut types = vec![mid_ty];
                types.extend(items[k + 1..].iter().cloned());
                if types.len() == ids.len() || types.len() == 1 {
                    return ids
                        .into_iter()
                        .enumerate()
                        .map(|(i, id)| {
                            let ty = if types.len() == 1 { types[0].clone() } else { types[i].clone() };
                            Expr::bin(BinOp::In, Expr::Ident(id), ty)
                        })
                        .collect();
                }
            }
        }
        self.error(
            codes::BAD_SYNTAX,
            "cannot interpret comma-separated predicate list",
        );
        Vec::new()
    }

    fn parse_statements(&mut self) -> Vec<Stmt> {
        let mut stmts = Vec::new();
        while !(self.at_section_boundary() || self.at_end()) {
            match self.parse_statement() {
                Some(mut s) => stmts.append(&mut s),
                None => break,
            }
        }
        stmts
    }

    /// One statement, possibly a simultaneous multi-assignment.
    fn parse_statement(&mut self) -> Option<Vec<Stmt>> {
        // `D x = φ` — ODE form
        if let (Some(Tok::Ident(d)), Some(Tok::Ident(_)), Some(Tok::Eq)) =
            (self.peek(), self.peek_at(1), self.peek_at(2))
        {
            if d == "D" {
                self.pos += 1;
                let var = self.expect_ident()?;
                self.pos += 1; // `=`
                let rhs = self.parse_expr_checked()?;
                return Some(vec![Stmt::Ode(var, rhs)]);
            }
        }
        let mut targets = vec![self.expect_ident()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            targets.push(self.expect_ident()?);
        }
        match self.peek() {
            Some(Tok::Assign) => {
                self.pos += 1;
                let mut rhs = vec![self.parse_expr_checked()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    rhs.push(self.parse_expr_checked()?);
                }
                if rhs.len() == targets.len() {
                    Some(
                        targets
                            .into_iter()
                            .zip(rhs)
                            .map(|(t, e)| Stmt::Assign(t, e))
                            .collect(),
                    )
                } else if rhs.len() == 1 && targets.len() > 1 {
                    // destructure a tuple-valued right-hand side
                    let base = rhs.pop().unwrap();
                    Some(
                        targets
                            .into_iter()
                            .enumerate()
                            .map(|(i, t)| {
                                Stmt::Assign(
                                    t,
                                    Expr::Index(
                                        Box::new(base.clone()),
                                        Box::new(Expr::Num(Rational::from_int(i as i128 + 1))),
                                    ),
                                )
                            })
                            .collect(),
                    )
                } else {
                    self.error(
                        codes::BAD_SYNTAX,
                        format!(
                            "assignment arity mismatch: {} targets, {} expressions",
                            targets.len(),
                            rhs.len()
                        ),
                    );
                    None
                }
            }
            Some(Tok::NondetAssign) => {
                self.pos += 1;
                let pred = self.parse_expr_checked()?;
                Some(vec![Stmt::Nondet(targets, pred)])
            }
            _ => {
                let found = self.peek().map(|t| t.describe()).unwrap_or("end of file".into());
                self.error(
                    codes::BAD_SYNTAX,
                    format!("expected `:=` or `:|`, found {found}"),
                );
                None
            }
        }
    }

    // ------------------------------------------------------------------
    // expressions (Pratt)

    fn parse_expr_checked(&mut self) -> Option<Expr> {
        if self.at_section_boundary() || self.at_end() {
            self.error(codes::BAD_SYNTAX, "expected an expression");
            return None;
        }
        self.parse_expr_bp(0)
    }

    fn parse_expr_bp(&mut self, min_bp: u8) -> Option<Expr> {
        let mut lhs = self.parse_prefix()?;
        loop {
            let Some(op) = self.peek().and_then(tok_binop) else {
                break;
            };
            let (lbp, rbp) = binding_power(op);
            if lbp < min_bp {
                break;
            }
            self.pos += 1;
            if op.is_comparison() {
                // chained comparisons: a < b < c  ⇒  a < b ∧ b < c
                let mut operands = vec![lhs];
                let mut ops = vec![op];
                loop {
                    let rhs = self.parse_expr_bp(rbp)?;
                    operands.push(rhs);
                    match self.peek().and_then(tok_binop) {
                        Some(next) if next.is_comparison() && binding_power(next).0 >= min_bp => {
                            ops.push(next);
                            self.pos += 1;
                        }
                        _ => break,
                    }
                }
                let mut conj: Option<Expr> = None;
                for (i, op) in ops.iter().enumerate() {
                    let pair = Expr::bin(*op, operands[i].clone(), operands[i + 1].clone());
                    conj = Some(match conj {
                        None => pair,
                        Some(prev) => Expr::bin(BinOp::And, prev, pair),
                    });
                }
                lhs = conj.unwrap();
            } else {
                let rhs = self.parse_expr_bp(rbp)?;
                lhs = Expr::bin(op, lhs, rhs);
            }
        }
        Some(lhs)
    }

    fn parse_prefix(&mut self) -> Option<Expr> {
        let tok = self.peek().cloned();
        let mut e = match tok {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Expr::Num(n)
            }
            Some(Tok::True) => {
                self.pos += 1;
                Expr::Bool(true)
            }
            Some(Tok::False) => {
                self.pos += 1;
                Expr::Bool(false)
            }
            Some(Tok::EmptySet) => {
                self.pos += 1;
                Expr::EmptySet
            }
            Some(Tok::Not) => {
                self.pos += 1;
                let inner = self.parse_expr_bp(35)?;
                Expr::Unary(UnaryOp::Not, Box::new(inner))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                let inner = self.parse_expr_bp(75)?;
                Expr::Unary(UnaryOp::Neg, Box::new(inner))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.parse_expr_bp(0)?);
                            if self.peek() == Some(&Tok::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    if !self.expect_rparen() {
                        return None;
                    }
                    Expr::Apply(name, args)
                } else {
                    Expr::Ident(name)
                }
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.parse_expr_bp(0)?;
                if !self.expect_rparen() {
                    return None;
                }
                inner
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::RBrace) {
                    self.pos += 1;
                    Expr::EmptySet
                } else {
                    let mut elems = Vec::new();
                    loop {
                        elems.push(self.parse_expr_bp(0)?);
                        if self.peek() == Some(&Tok::Comma) {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                    if self.peek() == Some(&Tok::RBrace) {
                        self.pos += 1;
                    } else {
                        self.error(codes::BAD_SYNTAX, "expected `}`");
                        return None;
                    }
                    Expr::SetLit(elems)
                }
            }
            Some(Tok::LSeq) => {
                self.pos += 1;
                self.parse_seq_tail(Tok::RSeq)?
            }
            Some(Tok::LBracket) => {
                self.pos += 1;
                // `[a .. b]` is a closed interval, otherwise a sequence
                let save = self.pos;
                if self.peek() == Some(&Tok::RBracket) {
                    self.pos += 1;
                    Expr::SeqLit(vec![])
                } else {
                    let first = self.parse_expr_bp(0)?;
                    if self.peek() == Some(&Tok::DotDot) {
                        self.pos += 1;
                        let hi = self.parse_expr_bp(0)?;
                        if self.peek() == Some(&Tok::RBracket) {
                            self.pos += 1;
                        } else {
                            self.error(codes::BAD_SYNTAX, "expected `]` after interval");
                            return None;
                        }
                        Expr::Interval(Box::new(first), Box::new(hi))
                    } else {
                        self.pos = save;
                        self.parse_seq_tail(Tok::RBracket)?
                    }
                }
            }
            Some(Tok::BigUnion) => {
                self.pos += 1;
                if self.peek() != Some(&Tok::LParen) {
                    self.error(codes::BAD_SYNTAX, "expected `(` after ⋃");
                    return None;
                }
                self.pos += 1;
                let var = self.expect_ident()?;
                match self.peek() {
                    Some(Tok::Bullet) | Some(Tok::Dot) => {
                        self.pos += 1;
                    }
                    _ => {
                        self.error(codes::BAD_SYNTAX, "expected `•` after the bound variable");
                        return None;
                    }
                }
                let constraint = self.parse_expr_bp(0)?;
                let domain = match constraint {
                    Expr::Binary(BinOp::In, lhs, rhs) if *lhs == Expr::Ident(var.clone()) => *rhs,
                    _ => {
                        self.error(
                            codes::BAD_SYNTAX,
                            "the ⋃ constraint must have the shape `v ∈ domain`",
                        );
                        return None;
                    }
                };
                if self.peek() == Some(&Tok::Bar) {
                    self.pos += 1;
                } else {
                    self.error(codes::BAD_SYNTAX, "expected `|` in ⋃");
                    return None;
                }
                let body = self.parse_expr_bp(0)?;
                if !self.expect_rparen() {
                    return None;
                }
                Expr::QuantUnion {
                    var,
                    domain: Box::new(domain),
                    body: Box::new(body),
                }
            }
            other => {
                let found = other.map(|t| t.describe()).unwrap_or("end of file".into());
                self.error(codes::BAD_SYNTAX, format!("expected an expression, found {found}"));
                return None;
            }
        };
        // postfix indexing
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            let idx = self.parse_expr_bp(0)?;
            if self.peek() == Some(&Tok::RBracket) {
                self.pos += 1;
            } else {
                self.error(codes::BAD_SYNTAX, "expected `]`");
                return None;
            }
            e = Expr::Index(Box::new(e), Box::new(idx));
        }
        Some(e)
    }

    fn parse_seq_tail(&mut self, close: Tok) -> Option<Expr> {
        let mut elems = Vec::new();
        if self.peek() == Some(&close) {
            self.pos += 1;
            return Some(Expr::SeqLit(elems));
        }
        loop {
            elems.push(self.parse_expr_bp(0)?);
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.peek() == Some(&close) {
            self.pos += 1;
            Some(Expr::SeqLit(elems))
        } else {
            self.error(codes::BAD_SYNTAX, "expected sequence close bracket");
            None
        }
    }

    fn expect_rparen(&mut self) -> bool {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            true
        } else {
            self.error(codes::BAD_SYNTAX, "expected `)`");
            false
        }
    }
}

#[derive(Debug)]
enum Stmt {
    Assign(String, Expr),
    Ode(String, Expr),
    Nondet(Vec<String>, Expr),
}

fn tok_binop(t: &Tok) -> Option<BinOp> {
    Some(match t {
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Slash => BinOp::Div,
        Tok::Union => BinOp::Union,
        Tok::Caret => BinOp::Concat,
        Tok::Maplet => BinOp::Maplet,
        Tok::Eq => BinOp::Eq,
        Tok::Ne => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::In => BinOp::In,
        Tok::NotIn => BinOp::NotIn,
        Tok::And => BinOp::And,
        Tok::Or => BinOp::Or,
        Tok::Implies => BinOp::Implies,
        _ => return None,
    })
}

/// (left, right) binding powers; right > left gives left associativity.
fn binding_power(op: BinOp) -> (u8, u8) {
    match op {
        BinOp::Implies => (10, 9),
        BinOp::Or => (20, 21),
        BinOp::And => (30, 31),
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::In | BinOp::NotIn => {
            (40, 41)
        }
        BinOp::Maplet => (50, 51),
        BinOp::Add | BinOp::Sub | BinOp::Union | BinOp::Concat => (60, 61),
        BinOp::Mul | BinOp::Div => (70, 71),
    }
}
