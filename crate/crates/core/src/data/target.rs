//! Random target policies.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::rng::Rng;
use crate::symbolic::{deduce, Context, Decision, Literal, Policy, Rule, Sign, MAX_ATOMS};

/// Largest atom count whose contexts are enumerated exhaustively.
const ENUMERATION_LIMIT: usize = 20;
const SAMPLED_CONTEXTS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPolicySpec {
    pub n_atoms: usize,
    pub min_rules: usize,
    pub max_rules: usize,
    pub min_body: usize,
    pub max_body: usize,
    /// Each head label must be reached on at least this fraction of contexts.
    pub min_label_fraction: f64,
    /// Abstentions must stay strictly below this fraction.
    pub max_abstain_fraction: f64,
    pub max_attempts: usize,
}

impl TargetPolicySpec {
    pub fn new(n_atoms: usize) -> TargetPolicySpec {
        TargetPolicySpec {
            n_atoms,
            min_rules: 3,
            max_rules: 8,
            min_body: 1,
            max_body: 4.min(n_atoms),
            min_label_fraction: 0.10,
            max_abstain_fraction: 0.90,
            max_attempts: 10_000,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Spec(m.to_string()));
        if self.n_atoms == 0 || self.n_atoms > MAX_ATOMS {
            return bad("n_atoms must lie in 1..=64");
        }
        if self.min_rules == 0 || self.min_rules > self.max_rules {
            return bad("rule range must be non-empty and start at 1 or more");
        }
        if self.min_body == 0 || self.min_body > self.max_body || self.max_body > self.n_atoms {
            return bad("body range must lie within 1..=n_atoms");
        }
        if !(0.0..=0.5).contains(&self.min_label_fraction) || !(0.0..=1.0).contains(&self.max_abstain_fraction) {
            return bad("fractions out of range");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

/// Fractions of contexts deduced to each decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStatistics {
    pub positive: f64,
    pub negative: f64,
    pub abstain: f64,
}

/// Exact for up to 20 atoms, otherwise estimated from a fixed sample.
pub fn label_statistics(policy: &Policy) -> LabelStatistics {
    let n = policy.n_atoms();
    let mut counts = [0usize; 3];
    let mut tally = |ctx: &Context| {
        let k = match deduce(policy, ctx) {
            Decision::HeadPositive => 0,
            Decision::HeadNegative => 1,
            Decision::Abstain => 2,
        };
        counts[k] += 1;
    };
    let total = if n <= ENUMERATION_LIMIT {
        Context::all(n).for_each(|c| tally(&c));
        1usize << n
    } else {
        let mut rng = Rng::seed_from_u64(0);
        for _ in 0..SAMPLED_CONTEXTS {
            tally(&Context::from_bits(n, rng.gen()));
        }
        SAMPLED_CONTEXTS
    };
    let f = |c: usize| c as f64 / total as f64;
    LabelStatistics { positive: f(counts[0]), negative: f(counts[1]), abstain: f(counts[2]) }
}

fn random_rule(spec: &TargetPolicySpec, atoms: &mut [usize], rng: &mut Rng) -> Rule {
    let len = rng.gen_range(spec.min_body..=spec.max_body);
    atoms.shuffle(rng);
    let mut chosen = atoms[..len].to_vec();
    chosen.sort_unstable();
    let body = chosen.into_iter().map(|a| Literal::new(a, Sign::from_bool(rng.gen()))).collect();
    Rule::new(body, Sign::from_bool(rng.gen())).expect("distinct atoms in range")
}

/// Rejection-samples a policy meeting the label-balance thresholds of `spec`.
pub fn generate_target_policy(spec: &TargetPolicySpec, rng: &mut Rng) -> Result<Policy, DataError> {
    spec.validate()?;
    let mut atoms: Vec<usize> = (0..spec.n_atoms).collect();
    for _ in 0..spec.max_attempts {
        let n_rules = rng.gen_range(spec.min_rules..=spec.max_rules);
        let rules = (0..n_rules).map(|_| random_rule(spec, &mut atoms, rng)).collect();
        let policy = Policy::from_rules(spec.n_atoms, rules).expect("valid rules");
        let s = label_statistics(&policy);
        if s.positive >= spec.min_label_fraction
            && s.negative >= spec.min_label_fraction
            && s.abstain < spec.max_abstain_fraction
        {
            return Ok(policy);
        }
    }
    Err(DataError::GenerationBudget(spec.max_attempts))
}
