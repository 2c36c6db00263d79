//! The evolutionary loop: spawn, train, score against the parent, select.

mod fitness;

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::ExemplarSplits;
use crate::nn::{AdamConfig, EncoderShape, NnError};
use crate::organism::{
    EpochLoss, MutationTag, NeuralMutation, NeuralPerception, Organism, OrganismSnapshot, Perception,
    PerceptionStub, PerformanceTriple, StuckDiagnostics, SymbolicMutation, TrainConfig, TrainStatus,
};
use crate::pool::parallel_map;
use crate::rng::{rng_from, Rng};
use crate::scalar::Scalar;
use crate::symbolic::{induce, Context, Decision, Policy, Rule, Sign};

pub use fitness::{
    relative_fitness, score, select_fittest, selection_probabilities, FitnessReport, Group, LengthMismatch, Status,
    SCORE,
};

// per-organism and per-generation random streams
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_SPAWN: u64 = 3;
const STREAM_SELECT: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PerceptionKind {
    Neural,
    Oracle,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub maxgen: usize,
    /// Neutral band half-width as a fraction of the validation size.
    pub t: f64,
    pub k: f64,
    pub n_splus: usize,
    pub train: TrainConfig,
    /// Stop once the fittest answers this fraction of validation correctly.
    pub early_stop: f64,
    pub workers: usize,
    pub cache: bool,
    pub encoder: EncoderShape,
    pub adam: AdamConfig,
    pub perception: PerceptionKind,
    pub seed: u64,
}

impl EvolutionConfig {
    pub fn full(seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            maxgen: 500,
            t: 0.0,
            k: 2.0,
            n_splus: 5,
            train: TrainConfig::default(),
            early_stop: 0.99,
            workers: 0,
            cache: true,
            encoder: EncoderShape::default(),
            adam: AdamConfig::default(),
            perception: PerceptionKind::Neural,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        if !(self.t >= 0.0) {
            return bad("t must be non-negative");
        }
        if !(self.k > 0.0) {
            return bad("k must be positive");
        }
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.early_stop) {
            return bad("early-stop threshold must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvolveError {
    #[error("dataset split `{0}` is empty")]
    EmptyDataset(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Counts of offspring per selection group in one generation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub beneficial: usize,
    pub neutral: usize,
    pub detrimental: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub generation: usize,
    pub snapshot: OrganismSnapshot,
    /// Absent for the seed organism.
    pub fitness: Option<FitnessReport>,
    pub val: PerformanceTriple,
    pub test: PerformanceTriple,
    pub train_loss: Option<EpochLoss>,
    pub stuck: StuckDiagnostics,
    pub population: usize,
    pub groups: GroupCounts,
}

impl LineageEntry {
    /// One JSON object per line: tag, group letter, scores and triples.
    pub fn to_json_line(&self) -> String {
        let f = self.fitness;
        let rec = serde_json::json!({
            "generation": self.generation,
            "id": self.snapshot.id,
            "parent_id": self.snapshot.parent_id,
            "mutation": self.snapshot.tag.to_string(),
            "group": f.map(|f| f.group.letter().to_string()),
            "raw_score": f.map(|f| f.raw),
            "normalized_score": f.map(|f| f.normalized),
            "val": self.val,
            "test": self.test,
            "semantic_loss": self.train_loss.map(|l| l.semantic),
            "reconstruction_loss": self.train_loss.map(|l| l.reconstruction),
            "status": self.snapshot.status,
            "population": self.population,
            "groups": self.groups,
            "stuck": self.stuck,
            "policy": self.snapshot.policy,
        });
        rec.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub entries: Vec<LineageEntry>,
    /// The early-stop threshold was reached before `maxgen`.
    pub stopped_early: bool,
}

impl Lineage {
    pub fn fittest(&self) -> &LineageEntry {
        self.entries.last().expect("lineage always holds the seed")
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{}", e.to_json_line())?;
        }
        Ok(())
    }

    pub fn ever_stuck(&self) -> bool {
        self.entries.iter().any(|e| e.stuck.stuck())
    }
}

fn fresh_perception<T: Scalar>(config: &EvolutionConfig, rng: &mut Rng) -> Perception<T> {
    match config.perception {
        PerceptionKind::Neural => {
            let decoder = config.train.loss_ratio.uses_reconstruction();
            Perception::neural(NeuralPerception::xavier(config.encoder, config.adam, decoder, rng))
        }
        PerceptionKind::Oracle => Perception::Stub(PerceptionStub::Oracle),
        PerceptionKind::Constant(p) => Perception::Stub(PerceptionStub::Constant(p)),
    }
}

/// The generation-0 organism: empty policy, fresh weights.
pub fn seed_organism<T: Scalar>(n_atoms: usize, config: &EvolutionConfig) -> Organism<T> {
    let policy = Policy::empty(n_atoms).expect("atom count validated by the dataset");
    let perception = fresh_perception(config, &mut rng_from(config.seed, &[0, 0, STREAM_INIT]));
    Organism::new(0, None, MutationTag::new(SymbolicMutation::S0, NeuralMutation::Nrw), policy, perception, config.cache)
}

/// Symbolic variants of `parent`: one S0, `n_splus` random contexts with
/// both heads, and one S↓ per droppable literal of the latest rule.
pub fn symbolic_offspring(parent: &Policy, n_splus: usize, rng: &mut Rng) -> Vec<(SymbolicMutation, Policy)> {
    let n = parent.n_atoms();
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut out = vec![(SymbolicMutation::S0, parent.clone())];
    for _ in 0..n_splus {
        let ctx = Context::from_bits(n, rng.gen::<u64>() & mask);
        for head in [Sign::Positive, Sign::Negative] {
            let p = induce(parent, Rule::from_context(&ctx, head)).expect("total context is a valid body");
            out.push((SymbolicMutation::SPlus, p));
        }
    }
    if let Some(latest) = parent.latest() {
        for j in 0..latest.body().len() {
            // a single-literal body has nothing left to drop
            if let Some(rule) = latest.without_literal(j) {
                out.push((SymbolicMutation::SDown, induce(parent, rule).expect("shorter body stays valid")));
            }
        }
    }
    out
}

/// Every symbolic variant crossed with Npw (inherit weights and Adam state)
/// and Nrw (fresh weights). Ids are assigned from `next_id` in order.
pub fn spawn_population<T: Scalar>(
    parent: &Organism<T>,
    config: &EvolutionConfig,
    generation: u64,
    next_id: &mut u64,
) -> Vec<Organism<T>> {
    let mut spawn_rng = rng_from(config.seed, &[generation, STREAM_SPAWN]);
    let variants = symbolic_offspring(&parent.policy, config.n_splus, &mut spawn_rng);
    let mut pop = Vec::with_capacity(2 * variants.len());
    for (symbolic, policy) in variants {
        for neural in [NeuralMutation::Npw, NeuralMutation::Nrw] {
            let idx = pop.len() as u64;
            let perception = match neural {
                NeuralMutation::Npw => parent.perception.clone(),
                NeuralMutation::Nrw => fresh_perception(config, &mut rng_from(config.seed, &[generation, idx, STREAM_INIT])),
            };
            let tag = MutationTag::new(symbolic, neural);
            pop.push(Organism::new(*next_id, Some(parent.id), tag, policy.clone(), perception, config.cache));
            *next_id += 1;
        }
    }
    pop
}

struct Evaluated<T> {
    organism: Organism<T>,
    loss: Option<EpochLoss>,
    val: PerformanceTriple,
    decisions: Vec<Decision>,
}

fn entry<T: Scalar>(
    generation: usize,
    e: &Evaluated<T>,
    data: &ExemplarSplits,
    fitness: Option<FitnessReport>,
    population: usize,
    groups: GroupCounts,
) -> Result<LineageEntry, EvolveError> {
    Ok(LineageEntry {
        generation,
        snapshot: e.organism.snapshot(),
        fitness,
        val: e.val,
        test: e.organism.evaluate(&data.test)?.0,
        train_loss: e.loss,
        stuck: e.organism.detect_stuck(&data.val)?,
        population,
        groups,
    })
}

/// Runs the evolutionary process from an empty-policy seed organism.
///
/// Each lineage member is scored on the test split when it is appended;
/// the test split never influences selection.
pub fn evolve<T: Scalar>(config: &EvolutionConfig, data: &ExemplarSplits) -> Result<Lineage, EvolveError> {
    evolve_with::<T>(config, data, |_| {})
}

/// As [`evolve`], calling `observe` after each lineage entry is appended.
pub fn evolve_with<T: Scalar>(
    config: &EvolutionConfig,
    data: &ExemplarSplits,
    mut observe: impl FnMut(&LineageEntry),
) -> Result<Lineage, EvolveError> {
    config.validate()?;
    for (name, set) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        if set.is_empty() {
            return Err(EvolveError::EmptyDataset(name));
        }
    }
    let seed: Organism<T> = seed_organism(data.train.n_atoms(), config);
    let (val, decisions) = seed.evaluate(&data.val)?;
    let mut parent = Evaluated { organism: seed, loss: None, val, decisions };
    let first = entry(0, &parent, data, None, 1, GroupCounts::default())?;
    observe(&first);
    let mut entries = vec![first];
    let mut next_id = 1u64;
    let mut stopped_early = false;
    for generation in 1..=config.maxgen {
        let g = generation as u64;
        let pop = spawn_population(&parent.organism, config, g, &mut next_id);
        let population = pop.len();
        let results = parallel_map(pop, config.workers, |idx, mut o: Organism<T>| -> Result<Evaluated<T>, NnError> {
            let mut rng = rng_from(config.seed, &[g, idx as u64, STREAM_TRAIN]);
            let report = o.train(&data.train, &config.train, &mut rng);
            let (val, decisions) = o.evaluate(&data.val)?;
            Ok(Evaluated { organism: o, loss: report.last(), val, decisions })
        });
        let evaluated: Vec<Evaluated<T>> = results.into_iter().collect::<Result<_, _>>()?;
        let reports: Vec<FitnessReport> = evaluated
            .iter()
            .map(|e| relative_fitness(&parent.decisions, &e.decisions, data.val.labels(), config.t).expect("equal lengths"))
            .collect();
        let mut groups = GroupCounts::default();
        for r in &reports {
            match r.group {
                Group::Beneficial => groups.beneficial += 1,
                Group::Neutral => groups.neutral += 1,
                Group::Detrimental => groups.detrimental += 1,
            }
        }
        let pick = select_fittest(&reports, config.k, &mut rng_from(config.seed, &[g, STREAM_SELECT]));
        let fittest = evaluated.into_iter().nth(pick).expect("selected index in range");
        let e = entry(generation, &fittest, data, Some(reports[pick]), population, groups)?;
        observe(&e);
        entries.push(e);
        parent = fittest;
        if parent.val.correct >= config.early_stop {
            stopped_early = true;
            break;
        }
    }
    Ok(Lineage { entries, stopped_early })
}

/// Whether training left this lineage member with divergent weights.
pub fn diverged(entry: &LineageEntry) -> bool {
    entry.snapshot.status == TrainStatus::Diverged
}
