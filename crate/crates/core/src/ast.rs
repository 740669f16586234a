//! Abstract syntax for HEB constructs and the expression language.
//!
//! Everything downstream (elaboration, evaluation, scheduling) consumes
//! these types. ASTs are immutable value types with structural equality;
//! concrete-syntax trivia (comments, spacing) is not retained.

use std::collections::BTreeSet;
use std::fmt;

/// Exact decimal rational, as written in source.
///
/// Numeric literals are kept exact through parsing and pretty-printing;
/// conversion to binary64 happens at elaboration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    pub num: i128,
    pub den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den > 0, "denominator must be positive");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        Rational {
            num: num / g,
            den: den / g,
        }
    }

    pub fn from_int(n: i128) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            return write!(f, "{}", self.num);
        }
        // den is a product of 2s and 5s for decimal literals; re-render as
        // a decimal string. Fall back to a fraction otherwise.
        let mut den = self.den;
        let mut digits = 0u32;
        while den % 10 == 0 {
            den /= 10;
            digits += 1;
        }
        while den % 2 == 0 {
            den /= 2;
            digits += 1;
        }
        while den % 5 == 0 {
            den /= 5;
            digits += 1;
        }
        if den != 1 {
            return write!(f, "{}/{}", self.num, self.den);
        }
        // scale numerator so that num/self.den == scaled / 10^digits
        let mut scaled = self.num;
        let mut pow10: i128 = 1;
        for _ in 0..digits {
            pow10 *= 10;
        }
        scaled = scaled * (pow10 / self.den);
        let neg = scaled < 0;
        let mag = scaled.unsigned_abs().to_string();
        let mag = if (mag.len() as u32) <= digits {
            format!("{}{}", "0".repeat((digits + 1 - mag.len() as u32) as usize), mag)
        } else {
            mag
        };
        let split = mag.len() - digits as usize;
        write!(
            f,
            "{}{}.{}",
            if neg { "-" } else { "" },
            &mag[..split],
            &mag[split..]
        )
    }
}

/// Binary operators of the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Union,
    /// Sequence concatenation `^`.
    Concat,
    Maplet,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::In | BinOp::NotIn
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

/// Expression over variables, constants and built-in functions.
///
/// Trees are finite; every leaf is a literal or an identifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(Rational),
    Bool(bool),
    EmptySet,
    /// Variable, constant or enumeration-literal reference. Input/output
    /// parameter markers (`?`, `!`) and primes are part of the name.
    Ident(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// `{a, b, …}`
    SetLit(Vec<Expr>),
    /// `⟨a, b, …⟩`; the empty sequence is `SeqLit(vec![])`
    SeqLit(Vec<Expr>),
    /// `[lo .. hi]` — closed real interval, meaningful under `∈`/`∉`
    Interval(Box<Expr>, Box<Expr>),
    /// `f(a, b, …)` — built-in call or sequence application
    Apply(String, Vec<Expr>),
    /// `e[i]` — 1-based indexing into sequences and flattened tuples
    Index(Box<Expr>, Box<Expr>),
    /// `⋃(v • v ∈ dom | body)` — bounded union, meaningful under `∈`/`∉`
    QuantUnion {
        var: String,
        domain: Box<Expr>,
        body: Box<Expr>,
    },
}

impl Expr {
    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.to_string())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Identifiers that occur free in this expression.
    ///
    /// Only `QuantUnion` binds a variable; ANY parameters are bound by the
    /// enclosing event, so callers subtract those themselves when needed.
    pub fn free_identifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) | Expr::Bool(_) | Expr::EmptySet => {}
            Expr::Ident(name) => {
                if !bound.iter().any(|b| b == name) {
                    out.insert(name.clone());
                }
            }
            Expr::Unary(_, e) => e.collect_free(bound, out),
            Expr::Binary(_, a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Expr::SetLit(es) | Expr::SeqLit(es) => {
                for e in es {
                    e.collect_free(bound, out);
                }
            }
            Expr::Interval(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            Expr::Apply(_, args) => {
                for a in args {
                    a.collect_free(bound, out);
                }
            }
            Expr::Index(e, i) => {
                e.collect_free(bound, out);
                i.collect_free(bound, out);
            }
            Expr::QuantUnion { var, domain, body } => {
                domain.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    /// All conjuncts of a right-nested or left-nested conjunction.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            if let Expr::Binary(BinOp::And, a, b) = e {
                walk(a, out);
                walk(b, out);
            } else {
                out.push(e);
            }
        }
        walk(self, &mut out);
        out
    }
}

/// Direction marker of an ANY parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDir {
    Input,
    Output,
    Local,
}

/// Execution class of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventStatus {
    Ordinary,
    Pliant,
    Asynch,
}

impl fmt::Display for EventStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventStatus::Ordinary => write!(f, "ordinary"),
            EventStatus::Pliant => write!(f, "pliant"),
            EventStatus::Asynch => write!(f, "asynch"),
        }
    }
}

/// Body of an event: discrete assignments for mode events, ODEs and
/// direct assignments for pliant SOLVE clauses, plus an optional COMPLY.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventBody {
    /// `x := E` assignments (mode events and SOLVE direct assignments).
    pub assigns: Vec<(String, Expr)>,
    /// `D x = φ` ordinary differential equations (SOLVE only).
    pub odes: Vec<(String, Expr)>,
    /// COMPLY clause: the INVARIANTS token or an explicit predicate.
    pub comply: Option<Comply>,
    /// `targets :| pred` nondeterministic update, parsed but rejected
    /// at elaboration.
    pub nondet: Option<(Vec<String>, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comply {
    Invariants,
    Pred(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventAst {
    pub name: String,
    pub status: EventStatus,
    pub params: Vec<(String, ParamDir)>,
    /// WHERE/WHEN guard over mode variables, time and clocks.
    pub when_guard: Option<Expr>,
    /// INIT guard of pliant events, may mention pliant variables.
    pub init_guard: Option<Expr>,
    pub body: EventBody,
}

impl EventAst {
    pub fn new(name: &str, status: EventStatus) -> Self {
        EventAst {
            name: name.to_string(),
            status,
            params: Vec::new(),
            when_guard: None,
            init_guard: None,
            body: EventBody::default(),
        }
    }
}

/// One member of a SYNCH group: `machine.event`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SynchMember {
    pub machine: String,
    pub event: String,
}

/// Project-level declaration forcing mode events in distinct machines to
/// fire as one atomic occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SynchGroupAst {
    pub name: String,
    pub members: Vec<SynchMember>,
}

/// `IS source WITH a → b, …` instantiation of a generic construct.
#[derive(Debug, Clone, PartialEq)]
pub struct RenamingAst {
    pub source: String,
    /// Ordered substitution pairs (source identifier, target identifier).
    pub subst: Vec<(String, String)>,
}

/// Kind tag of a top-level construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructKind {
    Project,
    Machine,
    Context,
    Interface,
    GlobInvs,
}

impl fmt::Display for ConstructKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstructKind::Project => write!(f, "PROJECT"),
            ConstructKind::Machine => write!(f, "MACHINE"),
            ConstructKind::Context => write!(f, "CONTEXT"),
            ConstructKind::Interface => write!(f, "INTERFACE"),
            ConstructKind::GlobInvs => write!(f, "GLOBINVS"),
        }
    }
}

/// A construct reference inside a PROJECT listing, optionally instantiated.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectItem {
    pub kind: ConstructKind,
    pub name: String,
    pub renaming: Option<RenamingAst>,
}

/// One clause of a construct, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    Sees(String),
    Connects(String),
    Reads(String),
    Refers(String),
    Time(String),
    Clock(String),
    Variables(Vec<String>),
    Pliant(Vec<String>),
    Invariants(Vec<Expr>),
    Sets(Vec<String>),
    Constants(Vec<String>),
    Axioms(Vec<Expr>),
    Theorems(Vec<Expr>),
    /// Interface initialisation block: straight assignments.
    Initialisation(Vec<(String, Expr)>),
    Events(Vec<EventAst>),
    /// PROJECT listing entry.
    Item(ProjectItem),
    /// PROJECT GLOBINVS reference.
    GlobInvsRef(String),
    Synch(SynchGroupAst),
}

/// A top-level construct: machine, context, interface, project or
/// global-invariant block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructAst {
    pub kind: ConstructKind,
    pub name: String,
    pub clauses: Vec<Clause>,
}

impl ConstructAst {
    pub fn new(kind: ConstructKind, name: &str) -> Self {
        ConstructAst {
            kind,
            name: name.to_string(),
            clauses: Vec::new(),
        }
    }

    pub fn events(&self) -> impl Iterator<Item = &EventAst> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Events(evs) => Some(evs.iter()),
                _ => None,
            })
            .flatten()
    }

    pub fn sees(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().filter_map(|c| match c {
            Clause::Sees(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn connects(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().filter_map(|c| match c {
            Clause::Connects(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn reads(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().filter_map(|c| match c {
            Clause::Reads(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn time_var(&self) -> Option<&str> {
        self.clauses.iter().find_map(|c| match c {
            Clause::Time(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn clocks(&self) -> impl Iterator<Item = &str> {
        self.clauses.iter().filter_map(|c| match c {
            Clause::Clock(n) => Some(n.as_str()),
            _ => None,
        })
    }

    pub fn mode_vars(&self) -> impl Iterator<Item = &str> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Variables(vs) => Some(vs.iter().map(|s| s.as_str())),
                _ => None,
            })
            .flatten()
    }

    pub fn pliant_vars(&self) -> impl Iterator<Item = &str> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Pliant(vs) => Some(vs.iter().map(|s| s.as_str())),
                _ => None,
            })
            .flatten()
    }

    pub fn invariants(&self) -> impl Iterator<Item = &Expr> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Invariants(es) => Some(es.iter()),
                _ => None,
            })
            .flatten()
    }

    pub fn axioms(&self) -> impl Iterator<Item = &Expr> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Axioms(es) => Some(es.iter()),
                _ => None,
            })
            .flatten()
    }

    pub fn theorems(&self) -> impl Iterator<Item = &Expr> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Theorems(es) => Some(es.iter()),
                _ => None,
            })
            .flatten()
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Constants(vs) => Some(vs.iter().map(|s| s.as_str())),
                _ => None,
            })
            .flatten()
    }

    pub fn carrier_sets(&self) -> impl Iterator<Item = &str> {
        self.clauses
            .iter()
            .filter_map(|c| match c {
                Clause::Sets(vs) => Some(vs.iter().map(|s| s.as_str())),
                _ => None,
            })
            .flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_decimal_display() {
        assert_eq!(Rational::new(797, 10).to_string(), "79.7");
        assert_eq!(Rational::new(-112, 10).to_string(), "-11.2");
        assert_eq!(Rational::new(12, 1).to_string(), "12");
        assert_eq!(Rational::new(1, 100).to_string(), "0.01");
        assert_eq!(Rational::new(15, 10).to_string(), "1.5");
    }

    #[test]
    fn rational_reduces() {
        assert_eq!(Rational::new(20, 10), Rational::new(2, 1));
        assert!((Rational::new(797, 10).to_f64() - 79.7).abs() < 1e-15);
    }

    #[test]
    fn free_identifiers_basic() {
        // hazards ∪ {tg ↦ xx} with tg, xx treated as bound by the caller
        let e = Expr::bin(
            BinOp::Union,
            Expr::ident("hazards"),
            Expr::SetLit(vec![Expr::bin(
                BinOp::Maplet,
                Expr::ident("tg"),
                Expr::ident("xx"),
            )]),
        );
        let mut free = e.free_identifiers();
        free.remove("tg");
        free.remove("xx");
        assert_eq!(free.into_iter().collect::<Vec<_>>(), vec!["hazards"]);
    }

    #[test]
    fn free_identifiers_literal() {
        assert!(Expr::Num(Rational::from_int(0)).free_identifiers().is_empty());
    }

    #[test]
    fn quant_union_binds_its_variable() {
        let e = Expr::QuantUnion {
            var: "ii".into(),
            domain: Box::new(Expr::Apply("dom".into(), vec![Expr::ident("INITSCHED")])),
            body: Box::new(Expr::Interval(
                Box::new(Expr::Apply("INITSCHED".into(), vec![Expr::ident("ii")])),
                Box::new(Expr::bin(
                    BinOp::Add,
                    Expr::Apply("INITSCHED".into(), vec![Expr::ident("ii")]),
                    Expr::ident("δ"),
                )),
            )),
        };
        let free = e.free_identifiers();
        assert!(free.contains("INITSCHED"));
        assert!(free.contains("δ"));
        assert!(!free.contains("ii"));
    }
}
