#![allow(dead_code)]

use evonesy::symbolic::{Literal, Policy, Rule, Sign};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random policy: up to `max_rules` rules with distinct-atom bodies.
pub fn random_policy(n: usize, max_rules: usize, rng: &mut impl Rng) -> Policy {
    let rules = rng.gen_range(0..=max_rules);
    let mut atoms: Vec<usize> = (0..n).collect();
    let body_rules = (0..rules)
        .map(|_| {
            atoms.shuffle(rng);
            let len = rng.gen_range(1..=n.min(4));
            let body = atoms[..len].iter().map(|&a| Literal::new(a, Sign::from_bool(rng.gen()))).collect();
            Rule::new(body, Sign::from_bool(rng.gen())).unwrap()
        })
        .collect();
    Policy::from_rules(n, body_rules).unwrap()
}

pub fn random_probs(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.02..0.98)).collect()
}

/// Sum over all contexts satisfying `pred` of the product of atom weights.
pub fn brute_force_wmc(n: usize, probs: &[f64], pred: impl Fn(&evonesy::symbolic::Context) -> bool) -> f64 {
    evonesy::symbolic::Context::all(n)
        .filter(|c| pred(c))
        .map(|c| (0..n).map(|i| if c.sign(i).is_positive() { probs[i] } else { 1.0 - probs[i] }).product::<f64>())
        .sum()
}

use evonesy::data::{build_exemplar_set, synth_glyphs, ExemplarSplits, SetSizes};
use evonesy::rng::rng_from;
use std::sync::Arc;

/// Exemplar splits for `target` over small synthetic pools.
pub fn splits(target: &Policy, sizes: SetSizes, seed: u64) -> ExemplarSplits {
    let train = Arc::new(synth_glyphs(8, 0.2, &mut rng_from(seed, &[1])));
    let test = Arc::new(synth_glyphs(8, 0.2, &mut rng_from(seed, &[2])));
    build_exemplar_set(target, sizes, train, test, &mut rng_from(seed, &[3])).unwrap().0
}

pub fn policy(text: &str, n: usize) -> Policy {
    evonesy::symbolic::parse_policy(text, n).unwrap()
}

/// Upper-tail p-value of Pearson's chi-square statistic.
pub fn chi_square_p(observed: &[f64], expected: &[f64]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}
