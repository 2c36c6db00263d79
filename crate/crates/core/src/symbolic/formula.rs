//! Negation-normal-form formulas and abduction of label conditions.

use std::fmt;

use super::{Context, Literal, Policy, Rule, Sign};

/// Propositional formula in negation normal form: negation only appears on
/// literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Lit(Literal),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    /// Conjunction that flattens nested `And`s and folds constants.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in parts {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().expect("one element"),
            _ => Formula::And(out),
        }
    }

    /// Disjunction that flattens nested `Or`s and folds constants.
    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in parts {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().expect("one element"),
            _ => Formula::Or(out),
        }
    }

    /// Negation pushed down to the literals.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Lit(l) => Formula::Lit(l.negated()),
            Formula::And(fs) => Formula::or(fs.iter().map(Formula::negate)),
            Formula::Or(fs) => Formula::and(fs.iter().map(Formula::negate)),
        }
    }

    pub fn eval(&self, ctx: &Context) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Lit(l) => l.holds(ctx),
            Formula::And(fs) => fs.iter().all(|f| f.eval(ctx)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(ctx)),
        }
    }

    fn body(rule: &Rule) -> Formula {
        Formula::and(rule.body().iter().map(|&l| Formula::Lit(l)))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, parts: &[Formula], op: &str) -> fmt::Result {
            f.write_str("(")?;
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    f.write_str(op)?;
                }
                write!(f, "{p}")?;
            }
            f.write_str(")")
        }
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Lit(l) => write!(f, "{l}"),
            Formula::And(parts) => join(f, parts, " & "),
            Formula::Or(parts) => join(f, parts, " | "),
        }
    }
}

/// Condition on total contexts under which `policy` concludes `label`.
///
/// A rule `r` with head `label` decides the outcome exactly when its body
/// holds and no higher-priority rule with the opposite head fires, so the
/// result is the disjunction of those conditions over all such `r`.
pub fn abduce(policy: &Policy, label: Sign) -> Formula {
    let rules = policy.rules();
    Formula::or(rules.iter().enumerate().filter(|(_, r)| r.head() == label).map(|(i, r)| {
        let blockers = rules[i + 1..]
            .iter()
            .filter(|h| h.head() != label)
            .map(|h| Formula::body(h).negate());
        Formula::and(std::iter::once(Formula::body(r)).chain(blockers))
    }))
}

/// Contexts on which no rule fires.
pub fn abstain_formula(policy: &Policy) -> Formula {
    Formula::and(policy.rules().iter().map(|r| Formula::body(r).negate()))
}
