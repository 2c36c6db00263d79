mod common;

use common::{chi_square_p, policy, rng, splits};
use evonesy::data::SetSizes;
use evonesy::evolution::{
    evolve, relative_fitness, select_fittest, selection_probabilities, spawn_population, symbolic_offspring,
    EvolutionConfig, FitnessReport, Group, PerceptionKind,
};
use evonesy::organism::{NeuralMutation, Organism, SymbolicMutation};
use evonesy::symbolic::{Decision, Policy, Sign};

fn report(raw: i64) -> FitnessReport {
    FitnessReport { raw, normalized: raw as f64 / 100.0, group: Group::classify(raw, 0.0, 100) }
}

fn small_config(seed: u64) -> EvolutionConfig {
    let mut c = EvolutionConfig::full(seed);
    c.maxgen = 3;
    c.workers = 0;
    c.train.batch_size = 500;
    c.train.epochs = 1;
    c
}

#[test]
fn offspring_counts() {
    let empty = Policy::empty(8).unwrap();
    assert_eq!(2 * symbolic_offspring(&empty, 5, &mut rng(1)).len(), 22);
    let long = policy("a1, -a2, a3, -a4, a5, -a6, a7, a8 implies head", 8);
    let off = symbolic_offspring(&long, 5, &mut rng(1));
    assert_eq!(2 * off.len(), 38);
    let downs: Vec<_> = off.iter().filter(|(m, _)| *m == SymbolicMutation::SDown).collect();
    assert_eq!(downs.len(), 8);
    for (_, p) in downs {
        assert_eq!(p.len(), 2);
        assert_eq!(p.latest().unwrap().body().len(), 7);
        assert_eq!(p.latest().unwrap().head(), Sign::Positive);
    }
    // a one-literal latest rule has nothing to drop
    let short = policy("a1 implies head", 8);
    assert!(symbolic_offspring(&short, 5, &mut rng(1)).iter().all(|(m, _)| *m != SymbolicMutation::SDown));
}

#[test]
fn splus_rules_have_total_bodies_and_both_heads() {
    let off = symbolic_offspring(&Policy::empty(6).unwrap(), 5, &mut rng(2));
    let plus: Vec<_> = off.iter().filter(|(m, _)| *m == SymbolicMutation::SPlus).collect();
    assert_eq!(plus.len(), 10);
    for pair in plus.chunks(2) {
        let (a, b) = (pair[0].1.latest().unwrap(), pair[1].1.latest().unwrap());
        assert_eq!(a.body(), b.body());
        assert_eq!(a.body().len(), 6);
        assert_ne!(a.head(), b.head());
    }
}

#[test]
fn neural_inheritance() {
    let config = EvolutionConfig::full(4);
    let parent: Organism<f32> = evonesy::evolution::seed_organism(4, &config);
    let mut next = 1;
    let pop = spawn_population(&parent, &config, 1, &mut next);
    assert_eq!(pop.len(), 22);
    assert_eq!(next, 23);
    for o in &pop {
        assert_eq!(o.parent_id, Some(0));
        match o.tag.neural {
            NeuralMutation::Npw => assert_eq!(o.perception, parent.perception),
            NeuralMutation::Nrw => assert_ne!(o.perception, parent.perception),
        }
    }
}

#[test]
fn relative_fitness_examples() {
    let labels = [Sign::Positive; 3];
    let parent = [Decision::HeadPositive, Decision::Abstain, Decision::HeadNegative];
    let offspring = [Decision::HeadPositive; 3];
    assert_eq!(relative_fitness(&parent, &offspring, &labels, 0.0).unwrap().raw, 2);
    assert_eq!(relative_fitness(&parent, &parent, &labels, 0.0).unwrap().raw, 0);
    let all_wrong = [Decision::HeadNegative; 3];
    assert_eq!(relative_fitness(&offspring, &all_wrong, &labels, 0.0).unwrap().raw, -3);
    assert!(relative_fitness(&parent, &offspring[..2], &labels, 0.0).is_err());
}

#[test]
fn selection_rules() {
    let p = selection_probabilities(&[report(1), report(2)], 2.0);
    assert_eq!(p, vec![0.2, 0.8]);
    let detrimental = [report(-3), report(-1), report(-5)];
    let mut r = rng(5);
    assert!((0..100).all(|_| select_fittest(&detrimental, 2.0, &mut r) == 1));
    // beneficial members beat neutrals outright
    let mixed = [report(0), report(3), report(-1)];
    assert!((0..100).all(|_| select_fittest(&mixed, 2.0, &mut r) == 1));
}

#[test]
fn neutral_selection_is_uniform() {
    let neutral = [report(0), report(0), report(0)];
    let mut r = rng(6);
    let mut counts = [0.0; 3];
    for _ in 0..10_000 {
        counts[select_fittest(&neutral, 2.0, &mut r)] += 1.0;
    }
    assert!(chi_square_p(&counts, &[10_000.0 / 3.0; 3]) > 0.01, "{counts:?}");
}

#[test]
fn beneficial_selection_follows_k() {
    let reps = [report(1), report(2), report(0)];
    let mut r = rng(7);
    let mut counts = [0.0; 3];
    for _ in 0..10_000 {
        counts[select_fittest(&reps, 2.0, &mut r)] += 1.0;
    }
    assert_eq!(counts[2], 0.0);
    assert!(chi_square_p(&counts[..2], &[2_000.0, 8_000.0]) > 0.01, "{counts:?}");
}

#[test]
fn maxgen_zero_keeps_only_the_seed() {
    let target = policy("a1 implies head\na2 implies -head", 4);
    let data = splits(&target, SetSizes { train: 200, val: 50, test: 50 }, 8);
    let mut config = small_config(8);
    config.maxgen = 0;
    let lineage = evolve::<f32>(&config, &data).unwrap();
    assert_eq!(lineage.entries.len(), 1);
    assert!(lineage.entries[0].fitness.is_none());
    assert_eq!(lineage.entries[0].val.abstain, 1.0);
}

#[test]
fn lineage_parent_chain_is_consistent() {
    let target = policy("a1 implies head\na2 implies -head", 4);
    let data = splits(&target, SetSizes { train: 200, val: 50, test: 50 }, 9);
    let lineage = evolve::<f32>(&small_config(9), &data).unwrap();
    for w in lineage.entries.windows(2) {
        assert_eq!(w[1].snapshot.parent_id, Some(w[0].snapshot.id));
        assert_eq!(w[1].generation, w[0].generation + 1);
    }
}

#[test]
fn evolution_is_deterministic_across_worker_counts() {
    let target = policy("a1 implies head\na2, -a3 implies -head", 4);
    let data = splits(&target, SetSizes { train: 200, val: 50, test: 50 }, 10);
    let mut c = small_config(10);
    let a = evolve::<f32>(&c, &data).unwrap();
    c.workers = 2;
    let b = evolve::<f32>(&c, &data).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_perception_recovers_a_single_rule_target() {
    let target = policy("a1, -a3 implies head", 4);
    let mut successes = 0;
    for seed in 0..20u64 {
        let data = splits(&target, SetSizes { train: 500, val: 200, test: 200 }, 200 + seed);
        let mut c = small_config(seed);
        c.perception = PerceptionKind::Oracle;
        c.maxgen = 25;
        let lineage = evolve::<f32>(&c, &data).unwrap();
        if lineage.fittest().val.correct >= 0.99 {
            successes += 1;
        }
    }
    assert!(successes >= 19, "{successes}/20 runs reached 0.99");
}
