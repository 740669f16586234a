//! Line-aware lexer for `.heb` sources.
//!
//! Unicode math operators each have an ASCII alias so sources stay
//! typeable; both spellings produce the same token. `--` starts a line
//! comment.

use crate::ast::Rational;
use crate::diag::{codes, Diagnostic, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Machine,
    Context,
    Interface,
    Project,
    GlobInvs,
    Sees,
    Connects,
    Reads,
    Refers,
    Time,
    Clock,
    Pliant,
    Variables,
    Invariants,
    Events,
    Status,
    Any,
    Where,
    When,
    Init,
    Comply,
    Solve,
    Begin,
    Then,
    End,
    Sets,
    Constants,
    Axioms,
    Theorems,
    Initialisation,
    Is,
    With,
    Synch,
}

impl Keyword {
    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Machine => "MACHINE",
            Keyword::Context => "CONTEXT",
            Keyword::Interface => "INTERFACE",
            Keyword::Project => "PROJECT",
            Keyword::GlobInvs => "GLOBINVS",
            Keyword::Sees => "SEES",
            Keyword::Connects => "CONNECTS",
            Keyword::Reads => "READS",
            Keyword::Refers => "REFERS",
            Keyword::Time => "TIME",
            Keyword::Clock => "CLOCK",
            Keyword::Pliant => "PLIANT",
            Keyword::Variables => "VARIABLES",
            Keyword::Invariants => "INVARIANTS",
            Keyword::Events => "EVENTS",
            Keyword::Status => "STATUS",
            Keyword::Any => "ANY",
            Keyword::Where => "WHERE",
            Keyword::When => "WHEN",
            Keyword::Init => "INIT",
            Keyword::Comply => "COMPLY",
            Keyword::Solve => "SOLVE",
            Keyword::Begin => "BEGIN",
            Keyword::Then => "THEN",
            Keyword::End => "END",
            Keyword::Sets => "SETS",
            Keyword::Constants => "CONSTANTS",
            Keyword::Axioms => "AXIOMS",
            Keyword::Theorems => "THEOREMS",
            Keyword::Initialisation => "INITIALISATION",
            Keyword::Is => "IS",
            Keyword::With => "WITH",
            Keyword::Synch => "SYNCH",
        }
    }

    fn from_word(w: &str) -> Option<Keyword> {
        Some(match w {
            "MACHINE" => Keyword::Machine,
            "CONTEXT" => Keyword::Context,
            "INTERFACE" => Keyword::Interface,
            "PROJECT" => Keyword::Project,
            "GLOBINVS" => Keyword::GlobInvs,
            "SEES" => Keyword::Sees,
            "CONNECTS" => Keyword::Connects,
            "READS" => Keyword::Reads,
            "REFERS" => Keyword::Refers,
            "TIME" => Keyword::Time,
            "CLOCK" => Keyword::Clock,
            "PLIANT" => Keyword::Pliant,
            "VARIABLES" => Keyword::Variables,
            "INVARIANTS" => Keyword::Invariants,
            "EVENTS" => Keyword::Events,
            "STATUS" => Keyword::Status,
            "ANY" => Keyword::Any,
            "WHERE" => Keyword::Where,
            "WHEN" => Keyword::When,
            "INIT" => Keyword::Init,
            "COMPLY" => Keyword::Comply,
            "SOLVE" => Keyword::Solve,
            "BEGIN" => Keyword::Begin,
            "THEN" => Keyword::Then,
            "END" => Keyword::End,
            "SETS" => Keyword::Sets,
            "CONSTANTS" => Keyword::Constants,
            "AXIOMS" => Keyword::Axioms,
            "THEOREMS" => Keyword::Theorems,
            "INITIALISATION" => Keyword::Initialisation,
            "IS" => Keyword::Is,
            "WITH" => Keyword::With,
            "SYNCH" => Keyword::Synch,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Kw(Keyword),
    Ident(String),
    Num(Rational),
    True,
    False,
    // operators
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Union,
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
    Not,
    Implies,
    Assign,
    NondetAssign,
    Arrow,
    EmptySet,
    BigUnion,
    Bullet,
    Bar,
    DotDot,
    Dot,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LSeq,
    RSeq,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Kw(k) => k.as_str().to_string(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Num(n) => format!("number `{n}`"),
            other => format!("{other:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    /// True when this is the first token on its source line. Section
    /// parsing uses it to anchor clause keywords.
    pub starts_line: bool,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || (c.is_alphabetic() && !is_reserved_symbol(c))
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c.is_alphanumeric() && !is_reserved_symbol(c)
}

/// Alphabetic codepoints that act as operators, never identifier parts.
fn is_reserved_symbol(c: char) -> bool {
    matches!(c, 'ℝ' | 'ℕ' | 'ℙ' | '𝒟')
}

/// Lex a whole source unit. Unknown characters produce diagnostics and
/// are skipped so later lines still lex.
pub fn lex(path: &str, content: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    let mut tokens = Vec::new();
    let mut diags = Vec::new();
    for (line_idx, raw_line) in content.lines().enumerate() {
        let line_no = line_idx as u32 + 1;
        // strip comments
        let line = match raw_line.find("--") {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut i = 0usize;
        let mut first_on_line = true;
        while i < chars.len() {
            let (byte, c) = chars[i];
            let col = i as u32 + 1;
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let loc = Location {
                path: path.to_string(),
                line: line_no,
                col,
            };
            let mut push = |tok: Tok, consumed: usize, i: &mut usize| {
                tokens.push(Token {
                    tok,
                    line: line_no,
                    col,
                    starts_line: first_on_line,
                });
                first_on_line = false;
                *i += consumed;
            };
            let peek = |k: usize| chars.get(i + k).map(|&(_, c)| c);
            match c {
                '0'..='9' => {
                    let mut j = i;
                    while j < chars.len() && chars[j].1.is_ascii_digit() {
                        j += 1;
                    }
                    let mut den: i128 = 1;
                    let mut end = j;
                    // fraction only when a digit follows the dot ("1.." stays integer + DotDot)
                    if j < chars.len()
                        && chars[j].1 == '.'
                        && chars.get(j + 1).map(|&(_, c)| c.is_ascii_digit()) == Some(true)
                    {
                        end = j + 1;
                        while end < chars.len() && chars[end].1.is_ascii_digit() {
                            den *= 10;
                            end += 1;
                        }
                    }
                    let text: String = chars[i..end].iter().map(|&(_, c)| c).collect();
                    let digits: String = text.chars().filter(|c| *c != '.').collect();
                    match digits.parse::<i128>() {
                        Ok(num) => {
                            let consumed = end - i;
                            push(Tok::Num(Rational::new(num, den)), consumed, &mut i);
                        }
                        Err(_) => {
                            diags.push(Diagnostic::error(loc, codes::LEX_ERROR, "numeric literal too large"));
                            i = end;
                        }
                    }
                }
                c if is_ident_start(c) => {
                    let mut j = i + 1;
                    while j < chars.len() && is_ident_continue(chars[j].1) {
                        j += 1;
                    }
                    // parameter direction / prime markers belong to the name
                    if j < chars.len() && matches!(chars[j].1, '?' | '!' | '\'') {
                        // `!=` would be a lex error anyway; `!` binds to the identifier
                        j += 1;
                    }
                    let word: String = chars[i..j].iter().map(|&(_, c)| c).collect();
                    let consumed = j - i;
                    let tok = if let Some(kw) = Keyword::from_word(&word) {
                        Tok::Kw(kw)
                    } else {
                        match word.as_str() {
                            "TRUE" => Tok::True,
                            "FALSE" => Tok::False,
                            "in" => Tok::In,
                            "notin" => Tok::NotIn,
                            "or" => Tok::Or,
                            "not" => Tok::Not,
                            "UNION" => Tok::BigUnion,
                            "REAL" => Tok::Ident("ℝ".to_string()),
                            "NAT" => Tok::Ident("ℕ".to_string()),
                            "pow" => Tok::Ident("ℙ".to_string()),
                            _ => Tok::Ident(word),
                        }
                    };
                    push(tok, consumed, &mut i);
                }
                'ℝ' | 'ℕ' | 'ℙ' => push(Tok::Ident(c.to_string()), 1, &mut i),
                '𝒟' => push(Tok::Ident("D".to_string()), 1, &mut i),
                '∈' => push(Tok::In, 1, &mut i),
                '∉' => push(Tok::NotIn, 1, &mut i),
                '∪' => push(Tok::Union, 1, &mut i),
                '∧' => push(Tok::And, 1, &mut i),
                '∨' => push(Tok::Or, 1, &mut i),
                '¬' => push(Tok::Not, 1, &mut i),
                '⇒' => push(Tok::Implies, 1, &mut i),
                '≠' => push(Tok::Ne, 1, &mut i),
                '≤' => push(Tok::Le, 1, &mut i),
                '≥' => push(Tok::Ge, 1, &mut i),
                '↦' => push(Tok::Maplet, 1, &mut i),
                '×' => push(Tok::Star, 1, &mut i),
                '−' => push(Tok::Minus, 1, &mut i),
                '∅' => push(Tok::EmptySet, 1, &mut i),
                '⋃' => push(Tok::BigUnion, 1, &mut i),
                '•' | '·' => push(Tok::Bullet, 1, &mut i),
                '⟨' => push(Tok::LSeq, 1, &mut i),
                '⟩' => push(Tok::RSeq, 1, &mut i),
                '→' => push(Tok::Arrow, 1, &mut i),
                '+' => push(Tok::Plus, 1, &mut i),
                '^' => push(Tok::Caret, 1, &mut i),
                '*' => push(Tok::Star, 1, &mut i),
                '(' => push(Tok::LParen, 1, &mut i),
                ')' => push(Tok::RParen, 1, &mut i),
                '{' => push(Tok::LBrace, 1, &mut i),
                '}' => push(Tok::RBrace, 1, &mut i),
                '[' => push(Tok::LBracket, 1, &mut i),
                ']' => push(Tok::RBracket, 1, &mut i),
                ',' => push(Tok::Comma, 1, &mut i),
                '|' => {
                    if peek(1) == Some('-') && peek(2) == Some('>') {
                        push(Tok::Maplet, 3, &mut i);
                    } else {
                        push(Tok::Bar, 1, &mut i);
                    }
                }
                ':' => match peek(1) {
                    Some('=') => push(Tok::Assign, 2, &mut i),
                    Some('|') => push(Tok::NondetAssign, 2, &mut i),
                    _ => push(Tok::In, 1, &mut i),
                },
                '=' => {
                    if peek(1) == Some('>') {
                        push(Tok::Implies, 2, &mut i);
                    } else {
                        push(Tok::Eq, 1, &mut i);
                    }
                }
                '<' => {
                    if peek(1) == Some('=') {
                        push(Tok::Le, 2, &mut i);
                    } else {
                        push(Tok::Lt, 1, &mut i);
                    }
                }
                '>' => {
                    if peek(1) == Some('=') {
                        push(Tok::Ge, 2, &mut i);
                    } else {
                        push(Tok::Gt, 1, &mut i);
                    }
                }
                '-' => {
                    if peek(1) == Some('>') {
                        push(Tok::Arrow, 2, &mut i);
                    } else {
                        push(Tok::Minus, 1, &mut i);
                    }
                }
                '/' => match peek(1) {
                    Some('=') => push(Tok::Ne, 2, &mut i),
                    Some(':') => push(Tok::NotIn, 2, &mut i),
                    _ => push(Tok::Slash, 1, &mut i),
                },
                '\\' => {
                    if peek(1) == Some('/') {
                        push(Tok::Union, 2, &mut i);
                    } else {
                        diags.push(Diagnostic::error(loc, codes::LEX_ERROR, "unexpected `\\`"));
                        i += 1;
                    }
                }
                '.' => {
                    if peek(1) == Some('.') {
                        push(Tok::DotDot, 2, &mut i);
                    } else {
                        push(Tok::Dot, 1, &mut i);
                    }
                }
                '&' => push(Tok::And, 1, &mut i),
                other => {
                    diags.push(Diagnostic::error(
                        loc,
                        codes::LEX_ERROR,
                        format!("unknown character `{other}` (U+{:04X})", other as u32),
                    ));
                    i += 1;
                    let _ = byte;
                }
            }
        }
    }
    (tokens, diags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        let (ts, ds) = lex("test.heb", src);
        assert!(ds.is_empty(), "unexpected diagnostics: {ds:?}");
        ts.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn unicode_and_ascii_aliases_match() {
        assert_eq!(toks("n ∈ NSet − nod"), toks("n : NSet - nod"));
        assert_eq!(toks("a ∪ b"), toks("a \\/ b"));
        assert_eq!(toks("a ↦ b"), toks("a |-> b"));
        assert_eq!(toks("a ⇒ b"), toks("a => b"));
        assert_eq!(toks("¬ a ∧ b ∨ c"), toks("not a & b or c"));
        assert_eq!(toks("x ∈ ℝ"), toks("x : REAL"));
    }

    #[test]
    fn assign_and_nondet_tokens() {
        assert_eq!(
            toks("x := 1"),
            vec![Tok::Ident("x".into()), Tok::Assign, Tok::Num(Rational::from_int(1))]
        );
        assert!(toks("x :| P").contains(&Tok::NondetAssign));
    }

    #[test]
    fn numbers_and_intervals() {
        assert_eq!(
            toks("12.3"),
            vec![Tok::Num(Rational::new(123, 10))]
        );
        // `12..15` is an interval, not two fractions
        assert_eq!(
            toks("12 .. 15"),
            vec![
                Tok::Num(Rational::from_int(12)),
                Tok::DotDot,
                Tok::Num(Rational::from_int(15))
            ]
        );
        assert_eq!(toks("12..15").len(), 3);
    }

    #[test]
    fn param_markers_attach_to_identifier() {
        assert_eq!(
            toks("i? o! l x'"),
            vec![
                Tok::Ident("i?".into()),
                Tok::Ident("o!".into()),
                Tok::Ident("l".into()),
                Tok::Ident("x'".into())
            ]
        );
    }

    #[test]
    fn comments_are_stripped() {
        assert_eq!(toks("a -- trailing note"), vec![Tok::Ident("a".into())]);
    }

    #[test]
    fn line_starts_marked() {
        let (ts, _) = lex("t.heb", "MACHINE M\n  VARIABLES\n    x");
        assert!(ts[0].starts_line);
        assert!(!ts[1].starts_line);
        assert!(ts[2].starts_line);
        assert!(ts[3].starts_line);
    }
}
