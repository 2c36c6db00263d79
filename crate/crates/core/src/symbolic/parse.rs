//! Text form of policies: one rule per line, `a1, -a2 implies head`.
//! The first line has the lowest priority.

use std::fmt;

use thiserror::Error;

use super::{induce, Literal, Policy, PolicyError, Rule, Sign};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    DuplicateAtom(String),
    UnknownAtom(String),
    HeadNotHeadAtom(String),
    Universe(usize),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::DuplicateAtom(a) => write!(f, "atom `{a}` appears twice in the body"),
            ParseErrorKind::UnknownAtom(a) => write!(f, "unknown atom `{a}`"),
            ParseErrorKind::HeadNotHeadAtom(a) => {
                write!(f, "rule head must be `head` or `-head`, found `{a}`")
            }
            ParseErrorKind::Universe(n) => write!(f, "unsupported universe of {n} atoms"),
        }
    }
}

/// Error with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Ident(&'a str),
    Minus,
    Comma,
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<(usize, Tok<'_>)>, ParseError> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let col = line[..i].chars().count() + 1;
        match c {
            b' ' | b'\t' | b'\r' => i += 1,
            b'-' => {
                out.push((col, Tok::Minus));
                i += 1;
            }
            b',' => {
                out.push((col, Tok::Comma));
                i += 1;
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((col, Tok::Ident(&line[start..i])));
            }
            _ => {
                let ch = line[i..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    line: line_no,
                    column: col,
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
                });
            }
        }
    }
    Ok(out)
}

fn atom_index(name: &str, n_atoms: usize) -> Option<usize> {
    let digits = name.strip_prefix('a')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    (1..=n_atoms).contains(&k).then(|| k - 1)
}

fn parse_rule(line: &str, line_no: usize, n_atoms: usize) -> Result<Rule, ParseError> {
    let toks = tokenize(line, line_no)?;
    let end_col = line.chars().count() + 1;
    let err = |column: usize, kind: ParseErrorKind| ParseError { line: line_no, column, kind };
    let syntax = |column: usize, msg: &str| err(column, ParseErrorKind::Syntax(msg.to_string()));

    let mut pos = 0;
    let mut body: Vec<Literal> = Vec::new();
    loop {
        let (sign, lit_col) = match toks.get(pos) {
            Some((c, Tok::Minus)) => {
                pos += 1;
                (Sign::Negative, *c)
            }
            Some((c, _)) => (Sign::Positive, *c),
            None => return Err(syntax(end_col, "expected a literal")),
        };
        let (col, name) = match toks.get(pos) {
            Some((c, Tok::Ident(name))) if *name != "implies" => (*c, *name),
            Some((c, _)) => return Err(syntax(*c, "expected an atom name")),
            None => return Err(syntax(end_col, "expected an atom name")),
        };
        pos += 1;
        let idx = atom_index(name, n_atoms)
            .ok_or_else(|| err(col, ParseErrorKind::UnknownAtom(name.to_string())))?;
        if body.iter().any(|l| l.atom.index() == idx) {
            return Err(err(lit_col, ParseErrorKind::DuplicateAtom(name.to_string())));
        }
        body.push(Literal::new(idx, sign));
        match toks.get(pos) {
            Some((_, Tok::Comma)) => pos += 1,
            Some((_, Tok::Ident("implies"))) => {
                pos += 1;
                break;
            }
            Some((c, _)) => return Err(syntax(*c, "expected `,` or `implies`")),
            None => return Err(syntax(end_col, "expected `,` or `implies`")),
        }
    }
    let head = match toks.get(pos) {
        Some((_, Tok::Minus)) => {
            pos += 1;
            Sign::Negative
        }
        _ => Sign::Positive,
    };
    match toks.get(pos) {
        Some((_, Tok::Ident("head"))) => pos += 1,
        Some((c, Tok::Ident(other))) => {
            return Err(err(*c, ParseErrorKind::HeadNotHeadAtom(other.to_string())))
        }
        Some((c, _)) => return Err(syntax(*c, "expected `head`")),
        None => return Err(syntax(end_col, "expected `head`")),
    }
    if let Some((c, _)) = toks.get(pos) {
        return Err(syntax(*c, "trailing input after rule head"));
    }
    Rule::new(body, head).map_err(|e| syntax(1, &e.to_string()))
}

/// Parses a policy over atoms `a1..a<n_atoms>`. Blank lines are skipped.
pub fn parse_policy(text: &str, n_atoms: usize) -> Result<Policy, ParseError> {
    let mut policy = Policy::empty(n_atoms).map_err(|_| ParseError {
        line: 1,
        column: 1,
        kind: ParseErrorKind::Universe(n_atoms),
    })?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rule = parse_rule(line, i + 1, n_atoms)?;
        policy = induce(&policy, rule).map_err(|e: PolicyError| ParseError {
            line: i + 1,
            column: 1,
            kind: ParseErrorKind::Syntax(e.to_string()),
        })?;
    }
    Ok(policy)
}

/// Canonical text: each rule on its own line, newline-terminated.
pub fn render_policy(policy: &Policy) -> String {
    policy.rules().iter().map(|r| format!("{r}\n")).collect()
}
