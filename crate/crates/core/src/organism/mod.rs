//! A NeSy organism: a policy, a perception network and a compilation cache.

mod perception;
mod train;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compile::CompilationCache;
use crate::data::ExemplarSet;
use crate::nn::{write_checkpoint, NnError};
use crate::scalar::Scalar;
use crate::symbolic::{deduce, is_homogeneous, render_policy, Context, Decision, Policy, Sign};

pub use perception::{DecoderState, NeuralPerception, Perception, PerceptionStub};
pub use train::{batch_gradients, BatchOutcome, EpochLoss, TrainConfig, TrainReport};

/// Probabilities at or above this harden to a positive literal.
pub const HARDEN_THRESHOLD: f64 = 0.5;
/// Slack for the "everything hardened to one class" flag.
pub const UNIFORM_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolicMutation {
    S0,
    SPlus,
    SDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuralMutation {
    Npw,
    Nrw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MutationTag {
    pub symbolic: SymbolicMutation,
    pub neural: NeuralMutation,
}

impl MutationTag {
    pub const fn new(symbolic: SymbolicMutation, neural: NeuralMutation) -> MutationTag {
        MutationTag { symbolic, neural }
    }
}

impl fmt::Display for MutationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.symbolic {
            SymbolicMutation::S0 => "S0",
            SymbolicMutation::SPlus => "S+",
            SymbolicMutation::SDown => "S-",
        };
        let n = match self.neural {
            NeuralMutation::Npw => "Npw",
            NeuralMutation::Nrw => "Nrw",
        };
        write!(f, "{s}/{n}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainStatus {
    Ok,
    /// A non-finite loss or gradient stopped training; weights are the
    /// last finite ones.
    Diverged,
}

/// Fractions of instances answered correctly, abstained on, or answered
/// wrongly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTriple {
    pub correct: f64,
    pub abstain: f64,
    pub wrong: f64,
}

impl PerformanceTriple {
    /// An empty dataset counts as total abstention.
    pub fn from_counts(correct: usize, abstain: usize, wrong: usize) -> PerformanceTriple {
        let total = correct + abstain + wrong;
        if total == 0 {
            return PerformanceTriple { correct: 0.0, abstain: 1.0, wrong: 0.0 };
        }
        let t = total as f64;
        PerformanceTriple { correct: correct as f64 / t, abstain: abstain as f64 / t, wrong: wrong as f64 / t }
    }

    pub fn from_decisions(decisions: &[Decision], labels: &[Sign]) -> PerformanceTriple {
        let (mut c, mut a, mut w) = (0, 0, 0);
        for (d, l) in decisions.iter().zip(labels) {
            match d.sign() {
                None => a += 1,
                Some(s) if s == *l => c += 1,
                Some(_) => w += 1,
            }
        }
        PerformanceTriple::from_counts(c, a, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuckDiagnostics {
    /// Fraction of all atom images hardened to positive.
    pub positive_fraction: f64,
    pub uniform_prediction: bool,
    pub homogeneous_latest: bool,
    pub identical_deductions: bool,
}

impl StuckDiagnostics {
    pub fn stuck(&self) -> bool {
        self.uniform_prediction && self.homogeneous_latest
    }
}

#[derive(Debug, Clone)]
pub struct Organism<T> {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub tag: MutationTag,
    pub policy: Policy,
    pub perception: Perception<T>,
    pub cache: CompilationCache,
    pub status: TrainStatus,
}

pub fn harden(probs: &[f64]) -> Context {
    let signs: Vec<Sign> = probs.iter().map(|&p| Sign::from_bool(p >= HARDEN_THRESHOLD)).collect();
    Context::from_signs(&signs)
}

impl<T: Scalar> Organism<T> {
    pub fn new(id: u64, parent_id: Option<u64>, tag: MutationTag, policy: Policy, perception: Perception<T>, cache: bool) -> Organism<T> {
        Organism { id, parent_id, tag, policy, perception, cache: CompilationCache::new(cache), status: TrainStatus::Ok }
    }

    /// Translator then symbolic deduction on one instance's raw images.
    pub fn deduce_images(&self, images: &[f32]) -> Result<Decision, NnError> {
        let probs = self.perception.image_probs(images)?;
        if probs.len() != self.policy.n_atoms() {
            return Err(NnError::Shape(format!("{} images for {} atoms", probs.len(), self.policy.n_atoms())));
        }
        Ok(deduce(&self.policy, &harden(&probs)))
    }

    /// Per-glyph positive probabilities for every glyph `set` references,
    /// indexed by glyph id (glyphs not referenced are NaN).
    pub fn glyph_table(&self, set: &ExemplarSet) -> Result<Vec<f64>, NnError> {
        let mut ids: Vec<u32> = set.all_glyphs().to_vec();
        ids.sort_unstable();
        ids.dedup();
        let probs = self.perception.glyph_probs(set.pool(), &ids)?;
        let mut table = vec![f64::NAN; set.pool().len()];
        for (&id, p) in ids.iter().zip(probs) {
            table[id as usize] = p;
        }
        Ok(table)
    }

    /// Decisions for every instance of `set`.
    pub fn decide_all(&self, set: &ExemplarSet) -> Result<Vec<Decision>, NnError> {
        let table = self.glyph_table(set)?;
        let mut probs = vec![0.0; set.n_atoms()];
        Ok((0..set.len())
            .map(|i| {
                for (p, &g) in probs.iter_mut().zip(set.glyphs(i)) {
                    *p = table[g as usize];
                }
                deduce(&self.policy, &harden(&probs))
            })
            .collect())
    }

    pub fn evaluate(&self, set: &ExemplarSet) -> Result<(PerformanceTriple, Vec<Decision>), NnError> {
        let d = self.decide_all(set)?;
        Ok((PerformanceTriple::from_decisions(&d, set.labels()), d))
    }

    pub fn detect_stuck(&self, set: &ExemplarSet) -> Result<StuckDiagnostics, NnError> {
        let table = self.glyph_table(set)?;
        let glyphs = set.all_glyphs();
        let positive = glyphs.iter().filter(|&&g| table[g as usize] >= HARDEN_THRESHOLD).count();
        let positive_fraction = if glyphs.is_empty() { 0.0 } else { positive as f64 / glyphs.len() as f64 };
        let decisions = self.decide_all(set)?;
        Ok(StuckDiagnostics {
            positive_fraction,
            uniform_prediction: positive_fraction <= UNIFORM_TOLERANCE || positive_fraction >= 1.0 - UNIFORM_TOLERANCE,
            homogeneous_latest: self.policy.latest().is_some_and(is_homogeneous),
            identical_deductions: decisions.windows(2).all(|w| w[0] == w[1]),
        })
    }

    pub fn train(&mut self, set: &ExemplarSet, config: &TrainConfig, rng: &mut crate::rng::Rng) -> TrainReport {
        train::train(self, set, config, rng)
    }

    pub fn snapshot(&self) -> OrganismSnapshot {
        let checkpoint = match &self.perception {
            Perception::Neural(n) => {
                let mut bytes = Vec::new();
                write_checkpoint(&n.encoder, &mut bytes).expect("writing to memory");
                Some(bytes)
            }
            Perception::Stub(_) => None,
        };
        OrganismSnapshot {
            id: self.id,
            parent_id: self.parent_id,
            tag: self.tag,
            policy: render_policy(&self.policy),
            status: self.status,
            checkpoint,
        }
    }
}

/// Policy text, encoder checkpoint and metadata of one organism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganismSnapshot {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub tag: MutationTag,
    pub policy: String,
    pub status: TrainStatus,
    #[serde(skip)]
    pub checkpoint: Option<Vec<u8>>,
}

impl OrganismSnapshot {
    /// Writes `policy.txt`, `meta.json` and, for neural organisms,
    /// `encoder.ckpt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("policy.txt"), &self.policy)?;
        let meta = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("meta.json"), meta + "\n")?;
        if let Some(bytes) = &self.checkpoint {
            std::fs::write(dir.join("encoder.ckpt"), bytes)?;
        }
        Ok(())
    }
}
