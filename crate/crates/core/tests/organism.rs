mod common;

use common::{policy, random_policy, rng, splits};
use evonesy::data::SetSizes;
use evonesy::evolution::{seed_organism, EvolutionConfig};
use evonesy::nn::{AdamConfig, EncoderShape};
use evonesy::organism::{
    harden, MutationTag, NeuralMutation, NeuralPerception, Organism, Perception, PerceptionStub, PerformanceTriple,
    SymbolicMutation, TrainConfig, TrainStatus,
};
use evonesy::rng::rng_from;
use evonesy::symbolic::{deduce, Context, Decision, Policy};
use rand::Rng;

const SMALL: SetSizes = SetSizes { train: 400, val: 100, test: 100 };

fn tag() -> MutationTag {
    MutationTag::new(SymbolicMutation::S0, NeuralMutation::Nrw)
}

fn neural(policy: Policy, seed: u64) -> Organism<f32> {
    let p = NeuralPerception::xavier(EncoderShape::default(), AdamConfig::default(), false, &mut rng_from(seed, &[9]));
    Organism::new(1, None, tag(), policy, Perception::neural(p), true)
}

fn stub(policy: Policy, s: PerceptionStub) -> Organism<f32> {
    Organism::new(1, None, tag(), policy, Perception::Stub(s), true)
}

fn four_atom_target() -> Policy {
    policy("a1 implies head\na2, -a3 implies -head\n-a1, a4 implies -head\n-a1, -a4 implies head", 4)
}

#[test]
fn empty_policy_is_not_trained() {
    let data = splits(&four_atom_target(), SMALL, 1);
    let mut o = neural(Policy::empty(4).unwrap(), 2);
    let before = o.perception.clone();
    let report = o.train(&data.train, &TrainConfig { batch_size: 100, ..TrainConfig::default() }, &mut rng(3));
    assert_eq!(report.steps, 0);
    assert_eq!(report.status, TrainStatus::Ok);
    assert_eq!(o.perception, before);
    let (triple, _) = o.evaluate(&data.val).unwrap();
    assert_eq!(triple, PerformanceTriple { correct: 0.0, abstain: 1.0, wrong: 0.0 });
}

#[test]
fn tautological_policy_has_zero_loss_and_no_steps() {
    // every context is labelled positive by the target and by the organism
    let target = policy("a1 implies head\n-a1 implies head", 3);
    let data = splits(&target, SMALL, 4);
    let mut o = neural(target, 5);
    let before = o.perception.clone();
    let report = o.train(&data.train, &TrainConfig::default(), &mut rng(6));
    assert_eq!(report.steps, 0);
    assert!(report.epochs.iter().all(|e| e.semantic == 0.0));
    assert_eq!(o.perception, before);
}

#[test]
fn semantic_loss_decreases_on_a_toy_policy() {
    let target = four_atom_target();
    let mut decreased = 0;
    for seed in 0..20u64 {
        let data = splits(&target, SetSizes { train: 2000, val: 10, test: 10 }, 100 + seed);
        let mut o = neural(target.clone(), seed);
        let report = o.train(&data.train, &TrainConfig { epochs: 5, batch_size: 2000, ..TrainConfig::default() }, &mut rng(seed));
        if report.epochs[4].semantic < report.epochs[0].semantic {
            decreased += 1;
        }
    }
    assert!(decreased >= 18, "loss decreased in {decreased}/20 runs");
}

#[test]
fn training_is_reproducible() {
    let data = splits(&four_atom_target(), SMALL, 7);
    let config = TrainConfig { epochs: 2, batch_size: 128, ..TrainConfig::default() };
    let run = || {
        let mut o = neural(four_atom_target(), 8);
        let r = o.train(&data.train, &config, &mut rng(9));
        let t = o.evaluate(&data.test).unwrap().0;
        (o.perception, r, t)
    };
    assert_eq!(run(), run());
}

#[test]
fn oracle_organism_is_perfect() {
    let target = four_atom_target();
    let data = splits(&target, SMALL, 10);
    let o = stub(target, PerceptionStub::Oracle);
    for set in [&data.train, &data.val, &data.test] {
        let (t, _) = o.evaluate(set).unwrap();
        assert_eq!(t, PerformanceTriple { correct: 1.0, abstain: 0.0, wrong: 0.0 });
    }
}

#[test]
fn triples_sum_to_one() {
    let mut r = rng(11);
    let data = splits(&four_atom_target(), SMALL, 11);
    for _ in 0..20 {
        let o = stub(random_policy(4, 5, &mut r), PerceptionStub::Constant(r.gen()));
        let (t, _) = o.evaluate(&data.val).unwrap();
        assert!((t.correct + t.abstain + t.wrong - 1.0).abs() < 1e-12);
    }
}

#[test]
fn forced_perception_fires_the_single_rule() {
    let o = stub(policy("a1 implies head", 3), PerceptionStub::Constant(0.9));
    let images = vec![0.0f32; 3 * 784];
    assert_eq!(o.deduce_images(&images).unwrap(), Decision::HeadPositive);
    let o = stub(Policy::empty(3).unwrap(), PerceptionStub::Constant(0.9));
    assert_eq!(o.deduce_images(&images).unwrap(), Decision::Abstain);
}

#[test]
fn pipeline_agrees_with_symbolic_deduction() {
    let mut r = rng(12);
    let data = splits(&four_atom_target(), SetSizes { train: 10, val: 1000, test: 10 }, 12);
    let o = neural(random_policy(4, 6, &mut r), 13);
    let decisions = o.decide_all(&data.val).unwrap();
    for (i, d) in decisions.iter().enumerate() {
        let probs = o.perception.image_probs(&data.val.images(i)).unwrap();
        assert_eq!(*d, deduce(&o.policy, &harden(&probs)));
        assert_eq!(*d, o.deduce_images(&data.val.images(i)).unwrap());
    }
}

#[test]
fn stuck_diagnostics() {
    let data = splits(&four_atom_target(), SMALL, 14);
    let homogeneous = policy("a1, -a2 implies -head\na1, a2 implies head", 4);
    let d = stub(homogeneous.clone(), PerceptionStub::Constant(0.99)).detect_stuck(&data.val).unwrap();
    assert!(d.uniform_prediction && d.homogeneous_latest && d.identical_deductions && d.stuck());
    let d = stub(homogeneous, PerceptionStub::Oracle).detect_stuck(&data.val).unwrap();
    assert!(!d.uniform_prediction && !d.stuck());
    let mixed = policy("a1, -a2 implies head", 4);
    let d = stub(mixed, PerceptionStub::Constant(0.01)).detect_stuck(&data.val).unwrap();
    assert!(d.uniform_prediction && !d.homogeneous_latest && !d.stuck());
}

#[test]
fn hardening_threshold() {
    let c = harden(&[0.5, 0.49, 0.99]);
    assert_eq!(c, Context::from_bits(3, 0b101));
}

#[test]
fn seed_organism_is_empty_and_fresh() {
    let config = EvolutionConfig::full(3);
    let o: Organism<f32> = seed_organism(4, &config);
    assert!(o.policy.is_empty());
    assert_eq!(o.parent_id, None);
    assert_eq!(o.tag.to_string(), "S0/Nrw");
    assert_eq!(o.perception.as_neural().unwrap().encoder.param_count(), 59_702);
}

#[test]
fn snapshot_round_trips_weights() {
    let o = neural(four_atom_target(), 15);
    let dir = tempfile::tempdir().unwrap();
    o.snapshot().write_to(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("policy.txt")).unwrap();
    assert_eq!(evonesy::symbolic::parse_policy(&text, 4).unwrap(), o.policy);
    let bytes = std::fs::read(dir.path().join("encoder.ckpt")).unwrap();
    let net = evonesy::nn::read_checkpoint::<f32, _>(EncoderShape::default(), &bytes[..]).unwrap();
    assert_eq!(&net, &o.perception.as_neural().unwrap().encoder);
}
