//! Relative fitness and threshold-group selection.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::symbolic::{Decision, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Correct,
    Abstain,
    Wrong,
}

impl Status {
    pub fn of(decision: Decision, label: Sign) -> Status {
        match decision.sign() {
            None => Status::Abstain,
            Some(s) if s == label => Status::Correct,
            Some(_) => Status::Wrong,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// `SCORE[parent][offspring]`, rows and columns ordered Correct, Abstain, Wrong.
pub const SCORE: [[i64; 3]; 3] = [[0, -1, -1], [1, 0, -1], [1, 1, 0]];

pub fn score(parent: Status, offspring: Status) -> i64 {
    SCORE[parent.index()][offspring.index()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Beneficial,
    Neutral,
    Detrimental,
}

impl Group {
    /// `t` is a fraction of the validation set size.
    pub fn classify(raw: i64, t: f64, n_val: usize) -> Group {
        let bound = t * n_val as f64;
        let r = raw as f64;
        if r > bound {
            Group::Beneficial
        } else if r.abs() <= bound {
            Group::Neutral
        } else {
            Group::Detrimental
        }
    }

    pub fn letter(self) -> char {
        match self {
            Group::Beneficial => 'b',
            Group::Neutral => 'n',
            Group::Detrimental => 'd',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub raw: i64,
    pub normalized: f64,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parent has {parent} decisions, offspring {offspring}, labels {labels}")]
pub struct LengthMismatch {
    pub parent: usize,
    pub offspring: usize,
    pub labels: usize,
}

/// Score-matrix sum over the validation instances.
pub fn relative_fitness(parent: &[Decision], offspring: &[Decision], labels: &[Sign], t: f64) -> Result<FitnessReport, LengthMismatch> {
    if parent.len() != offspring.len() || parent.len() != labels.len() {
        return Err(LengthMismatch { parent: parent.len(), offspring: offspring.len(), labels: labels.len() });
    }
    let raw = parent
        .iter()
        .zip(offspring)
        .zip(labels)
        .map(|((&p, &o), &l)| score(Status::of(p, l), Status::of(o, l)))
        .sum();
    let n = labels.len();
    let normalized = if n == 0 { 0.0 } else { raw as f64 / n as f64 };
    Ok(FitnessReport { raw, normalized, group: Group::classify(raw, t, n) })
}

/// Probability of each report being selected.
///
/// Beneficial members are weighted by `raw^k`; failing that neutrals are
/// uniform; failing that the best detrimental members share the mass.
pub fn selection_probabilities(reports: &[FitnessReport], k: f64) -> Vec<f64> {
    let mut probs = vec![0.0; reports.len()];
    let members = |g: Group| reports.iter().enumerate().filter(move |(_, r)| r.group == g).map(|(i, _)| i);
    let beneficial: Vec<usize> = members(Group::Beneficial).collect();
    if !beneficial.is_empty() {
        let weights: Vec<f64> = beneficial.iter().map(|&i| (reports[i].raw as f64).powf(k)).collect();
        let total: f64 = weights.iter().sum();
        for (&i, w) in beneficial.iter().zip(weights) {
            probs[i] = w / total;
        }
        return probs;
    }
    let neutral: Vec<usize> = members(Group::Neutral).collect();
    let chosen: Vec<usize> = if !neutral.is_empty() {
        neutral
    } else {
        let best = reports.iter().map(|r| r.raw).max().unwrap_or(0);
        members(Group::Detrimental).filter(|&i| reports[i].raw == best).collect()
    };
    for &i in &chosen {
        probs[i] = 1.0 / chosen.len() as f64;
    }
    probs
}

/// Samples the fittest offspring. `reports` must be non-empty.
pub fn select_fittest(reports: &[FitnessReport], k: f64, rng: &mut Rng) -> usize {
    assert!(!reports.is_empty(), "selection needs at least one offspring");
    let probs = selection_probabilities(reports, k);
    let support: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    if reports.iter().any(|r| r.group == Group::Beneficial) {
        let dist = WeightedIndex::new(support.iter().map(|&i| probs[i])).expect("positive weights");
        support[dist.sample(rng)]
    } else {
        *support.choose(rng).expect("non-empty support")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rep(raw: i64) -> FitnessReport {
        FitnessReport { raw, normalized: raw as f64, group: Group::classify(raw, 0.0, 10) }
    }

    #[test]
    fn matrix_entries() {
        use Status::*;
        let want = [
            (Correct, Correct, 0),
            (Correct, Abstain, -1),
            (Correct, Wrong, -1),
            (Abstain, Correct, 1),
            (Abstain, Abstain, 0),
            (Abstain, Wrong, -1),
            (Wrong, Correct, 1),
            (Wrong, Abstain, 1),
            (Wrong, Wrong, 0),
        ];
        for (p, o, s) in want {
            assert_eq!(score(p, o), s, "{p:?}->{o:?}");
        }
    }

    #[test]
    fn example_sum() {
        let l = [Sign::Positive; 3];
        let parent = [Decision::HeadPositive, Decision::Abstain, Decision::HeadNegative];
        let off = [Decision::HeadPositive; 3];
        assert_eq!(relative_fitness(&parent, &off, &l, 0.0).unwrap().raw, 2);
        assert!(relative_fitness(&parent, &off[..2], &l, 0.0).is_err());
    }

    #[test]
    fn proportional_weights() {
        assert_eq!(selection_probabilities(&[rep(1), rep(2)], 2.0), vec![0.2, 0.8]);
        assert_eq!(selection_probabilities(&[rep(-3), rep(-1), rep(-5)], 2.0), vec![0.0, 1.0, 0.0]);
        assert_eq!(selection_probabilities(&[rep(-3), rep(0), rep(2)], 2.0), vec![0.0, 0.0, 1.0]);
        let mut rng = Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(select_fittest(&[rep(-3), rep(-1), rep(-5)], 2.0, &mut rng), 1);
        }
    }

    #[test]
    fn threshold_groups() {
        assert_eq!(Group::classify(5, 0.1, 100), Group::Neutral);
        assert_eq!(Group::classify(11, 0.1, 100), Group::Beneficial);
        assert_eq!(Group::classify(-11, 0.1, 100), Group::Detrimental);
        assert_eq!(Group::classify(-10, 0.1, 100), Group::Neutral);
    }
}
