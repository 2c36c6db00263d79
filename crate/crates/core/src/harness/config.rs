use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baseline::BaselineConfig;
use crate::data::{GlyphSource, SetSizes, TargetPolicySpec};
use crate::evolution::{EvolutionConfig, PerceptionKind};
use crate::nn::{AdamConfig, EncoderShape, LossRatio};
use crate::organism::TrainConfig;
use crate::pool::available_workers;

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "NESY_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    Baseline,
    Datagen,
    ValidatePerf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphConfig {
    pub source: GlyphSource,
    /// Synthetic images per digit in each of the train and test pools.
    pub per_class: usize,
    pub noise: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n_atoms: usize,
    pub sizes: SetSizes,
    pub maxgen: usize,
    pub t: f64,
    pub k: f64,
    pub n_splus: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_ratio: LossRatio,
    pub workers: usize,
    /// One run per (target policy, seed) pair.
    pub seeds: Vec<u64>,
    pub policies: usize,
    /// Seed from which the target policies are drawn.
    pub policy_seed: u64,
    pub cache: bool,
    pub glyphs: GlyphConfig,
    pub baseline_epochs: usize,
    /// Ten optimizer steps per epoch on the train split.
    pub baseline_batch_size: usize,
    pub early_stop: f64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// Scaled-down settings that run on a single CPU core.
    pub fn desk(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            n_atoms: 4,
            sizes: SetSizes::DESK,
            maxgen: 100,
            t: 0.0,
            k: 2.0,
            n_splus: 5,
            epochs: 5,
            batch_size: 2000,
            loss_ratio: LossRatio::SEMANTIC_ONLY,
            workers: available_workers(),
            seeds: (0..10).collect(),
            policies: 5,
            policy_seed: 0,
            cache: true,
            glyphs: GlyphConfig { source: GlyphSource::Synthetic, per_class: 8, noise: 0.2 },
            baseline_epochs: 50,
            baseline_batch_size: 200,
            early_stop: 0.99,
            data_dir: None,
            out_dir: PathBuf::from("runs"),
        }
    }

    /// Full-scale settings (8 atoms, MNIST, 500 generations).
    pub fn full(mode: Mode) -> ExperimentConfig {
        ExperimentConfig {
            n_atoms: 8,
            sizes: SetSizes::FULL,
            maxgen: 500,
            seeds: (0..5).collect(),
            policies: 30,
            glyphs: GlyphConfig { source: GlyphSource::Mnist, per_class: 0, noise: 0.0 },
            baseline_epochs: 100,
            baseline_batch_size: 2000,
            ..ExperimentConfig::desk(mode)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_atoms == 0 || self.n_atoms > 64 {
            return bad(format!("n_atoms {} outside 1..=64", self.n_atoms));
        }
        if self.sizes.train == 0 || self.sizes.val == 0 || self.sizes.test == 0 {
            return bad("every split needs at least one instance".into());
        }
        if self.epochs == 0 || self.batch_size == 0 || self.baseline_batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if self.seeds.is_empty() || self.policies == 0 {
            return bad("at least one seed and one policy are required".into());
        }
        if !(self.t >= 0.0) || !(self.k > 0.0) {
            return bad("t must be non-negative and k positive".into());
        }
        if !(0.0..=1.0).contains(&self.early_stop) {
            return bad("early-stop threshold must lie in [0, 1]".into());
        }
        if self.glyphs.source == GlyphSource::Synthetic {
            if self.glyphs.per_class == 0 {
                return bad("synthetic pools need at least one glyph per class".into());
            }
            if !(0.0..0.5).contains(&self.glyphs.noise) {
                return bad("glyph noise must lie in [0, 0.5)".into());
            }
        }
        if self.mode == Mode::Baseline && self.baseline_epochs == 0 {
            return bad("baseline epochs must be positive".into());
        }
        Ok(())
    }

    pub fn target_spec(&self) -> TargetPolicySpec {
        TargetPolicySpec::new(self.n_atoms)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: self.batch_size, loss_ratio: self.loss_ratio, shuffle: true }
    }

    pub fn evolution_config(&self, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            maxgen: self.maxgen,
            t: self.t,
            k: self.k,
            n_splus: self.n_splus,
            train: self.train_config(),
            early_stop: self.early_stop,
            workers: self.workers,
            cache: self.cache,
            encoder: EncoderShape::default(),
            adam: AdamConfig::default(),
            perception: PerceptionKind::Neural,
            seed,
        }
    }

    pub fn baseline_config(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            epochs: self.baseline_epochs,
            batch_size: self.baseline_batch_size,
            adam: AdamConfig::default(),
            encoder: EncoderShape::default(),
            seed,
        }
    }

    /// Explicit data directory, else the environment variable.
    pub fn resolved_data_dir(&self) -> Option<PathBuf> {
        self.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }
}
