//! Prioritized defeasible rule policies over signed propositional atoms.
//!
//! A [`Policy`] is an ordered list of [`Rule`]s whose heads are all over the
//! reserved `head` atom. Later rules have higher priority; the decision on a
//! [`Context`] is the head of the highest-priority rule whose body holds, or
//! [`Decision::Abstain`] when no body holds.

mod formula;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formula::{abduce, abstain_formula, Formula};
pub use parse::{parse_policy, render_policy, ParseError, ParseErrorKind};

/// Upper bound on atoms so a [`Context`] fits in one machine word.
pub const MAX_ATOMS: usize = 64;

/// Atom index in `[0, n_atoms)`; rendered as `a1..a<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Atom(pub u16);

impl Atom {
    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn name(self) -> String {
        format!("a{}", self.0 + 1)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Sign::Positive
    }

    pub fn from_bool(positive: bool) -> Sign {
        if positive {
            Sign::Positive
        } else {
            Sign::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub atom: Atom,
    pub sign: Sign,
}

impl Literal {
    pub fn new(atom: usize, sign: Sign) -> Literal {
        Literal { atom: Atom(atom as u16), sign }
    }

    pub fn pos(atom: usize) -> Literal {
        Literal::new(atom, Sign::Positive)
    }

    pub fn neg(atom: usize) -> Literal {
        Literal::new(atom, Sign::Negative)
    }

    pub fn negated(self) -> Literal {
        Literal { atom: self.atom, sign: self.sign.flip() }
    }

    pub fn holds(self, ctx: &Context) -> bool {
        ctx.sign(self.atom.index()) == self.sign
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            Sign::Positive => write!(f, "{}", self.atom),
            Sign::Negative => write!(f, "-{}", self.atom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("rule body is empty")]
    EmptyBody,
    #[error("atom {0} appears more than once in a rule body")]
    DuplicateAtom(Atom),
    #[error("atom {atom} is outside the {n_atoms}-atom universe")]
    AtomOutOfRange { atom: Atom, n_atoms: usize },
    #[error("universe of {0} atoms is not supported (1..={MAX_ATOMS})")]
    BadUniverse(usize),
    #[error("context has {got} atoms, policy expects {want}")]
    ContextSize { got: usize, want: usize },
}

/// `body implies head`, with the head over the reserved `head` atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    body: Vec<Literal>,
    head: Sign,
}

impl Rule {
    pub fn new(body: Vec<Literal>, head: Sign) -> Result<Rule, PolicyError> {
        if body.is_empty() {
            return Err(PolicyError::EmptyBody);
        }
        for (i, lit) in body.iter().enumerate() {
            if body[..i].iter().any(|l| l.atom == lit.atom) {
                return Err(PolicyError::DuplicateAtom(lit.atom));
            }
        }
        Ok(Rule { body, head })
    }

    /// Rule whose body is the full context `ctx`.
    pub fn from_context(ctx: &Context, head: Sign) -> Rule {
        let body = (0..ctx.n_atoms())
            .map(|i| Literal::new(i, ctx.sign(i)))
            .collect();
        Rule { body, head }
    }

    pub fn body(&self) -> &[Literal] {
        &self.body
    }

    pub fn head(&self) -> Sign {
        self.head
    }

    pub fn fires(&self, ctx: &Context) -> bool {
        self.body.iter().all(|l| l.holds(ctx))
    }

    /// The same rule with the `j`-th body literal removed; `None` when that
    /// would leave the body empty or `j` is out of range.
    pub fn without_literal(&self, j: usize) -> Option<Rule> {
        if self.body.len() < 2 || j >= self.body.len() {
            return None;
        }
        let mut body = self.body.clone();
        body.remove(j);
        Some(Rule { body, head: self.head })
    }

    fn max_atom(&self) -> Atom {
        self.body.iter().map(|l| l.atom).max().expect("nonempty body")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, lit) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{lit}")?;
        }
        match self.head {
            Sign::Positive => f.write_str(" implies head"),
            Sign::Negative => f.write_str(" implies -head"),
        }
    }
}

/// True iff every body literal carries the same sign.
pub fn is_homogeneous(rule: &Rule) -> bool {
    let first = rule.body[0].sign;
    rule.body.iter().all(|l| l.sign == first)
}

/// Ordered rules over a fixed universe of `n_atoms` atoms. Index is
/// priority: the last rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    n_atoms: usize,
    rules: Vec<Rule>,
}

impl Policy {
    pub fn empty(n_atoms: usize) -> Result<Policy, PolicyError> {
        if n_atoms == 0 || n_atoms > MAX_ATOMS {
            return Err(PolicyError::BadUniverse(n_atoms));
        }
        Ok(Policy { n_atoms, rules: Vec::new() })
    }

    pub fn from_rules(n_atoms: usize, rules: Vec<Rule>) -> Result<Policy, PolicyError> {
        rules
            .into_iter()
            .try_fold(Policy::empty(n_atoms)?, |p, r| induce(&p, r))
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Highest-priority rule.
    pub fn latest(&self) -> Option<&Rule> {
        self.rules.last()
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_policy(self))
    }
}

/// Appends `rule` at the highest priority, returning a new policy.
pub fn induce(policy: &Policy, rule: Rule) -> Result<Policy, PolicyError> {
    let top = rule.max_atom();
    if top.index() >= policy.n_atoms {
        return Err(PolicyError::AtomOutOfRange { atom: top, n_atoms: policy.n_atoms });
    }
    let mut rules = Vec::with_capacity(policy.rules.len() + 1);
    rules.extend_from_slice(&policy.rules);
    rules.push(rule);
    Ok(Policy { n_atoms: policy.n_atoms, rules })
}

/// Total assignment of signs to atoms; bit `i` set means atom `i` positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Context {
    n_atoms: u8,
    bits: u64,
}

impl Context {
    pub fn from_bits(n_atoms: usize, bits: u64) -> Context {
        assert!(n_atoms > 0 && n_atoms <= MAX_ATOMS, "unsupported universe size {n_atoms}");
        let mask = if n_atoms == 64 { u64::MAX } else { (1u64 << n_atoms) - 1 };
        Context { n_atoms: n_atoms as u8, bits: bits & mask }
    }

    pub fn from_signs(signs: &[Sign]) -> Context {
        let bits = signs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_positive())
            .fold(0u64, |acc, (i, _)| acc | (1 << i));
        Context::from_bits(signs.len(), bits)
    }

    pub fn n_atoms(&self) -> usize {
        usize::from(self.n_atoms)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn sign(&self, atom: usize) -> Sign {
        Sign::from_bool(self.bits >> atom & 1 == 1)
    }

    pub fn signs(&self) -> Vec<Sign> {
        (0..self.n_atoms()).map(|i| self.sign(i)).collect()
    }

    /// Every total context over `n_atoms` atoms, in binary counting order.
    pub fn all(n_atoms: usize) -> impl Iterator<Item = Context> {
        assert!(n_atoms < 32, "exhaustive enumeration over {n_atoms} atoms");
        (0..1u64 << n_atoms).map(move |b| Context::from_bits(n_atoms, b))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lits: Vec<String> = (0..self.n_atoms())
            .map(|i| Literal::new(i, self.sign(i)).to_string())
            .collect();
        write!(f, "{{{}}}", lits.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    HeadPositive,
    HeadNegative,
    Abstain,
}

impl Decision {
    pub fn from_sign(sign: Sign) -> Decision {
        match sign {
            Sign::Positive => Decision::HeadPositive,
            Sign::Negative => Decision::HeadNegative,
        }
    }

    pub fn sign(self) -> Option<Sign> {
        match self {
            Decision::HeadPositive => Some(Sign::Positive),
            Decision::HeadNegative => Some(Sign::Negative),
            Decision::Abstain => None,
        }
    }
}

/// Head of the highest-priority rule triggered by `ctx`.
pub fn deduce(policy: &Policy, ctx: &Context) -> Decision {
    debug_assert_eq!(ctx.n_atoms(), policy.n_atoms);
    policy
        .rules
        .iter()
        .rev()
        .find(|r| r.fires(ctx))
        .map_or(Decision::Abstain, |r| Decision::from_sign(r.head))
}
