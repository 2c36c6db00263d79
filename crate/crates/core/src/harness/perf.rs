//! Timing checks for the compilation cache and the worker pool.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{prepare_run, target_policies, ExperimentConfig, GlyphProvider, HarnessError, RunId};
use crate::compile::{semantic_loss, CompilationCache};
use crate::data::ExemplarSplits;
use crate::evolution::symbolic_offspring;
use crate::nn::{AdamConfig, EncoderShape};
use crate::organism::{MutationTag, NeuralMutation, NeuralPerception, Organism, Perception, TrainConfig};
use crate::pool::{available_workers, parallel_map};
use crate::rng::{fnv1a64, rng_from, Rng};
use crate::symbolic::{Policy, Sign};
use rand::Rng as _;

/// Instances in the shared-label batch used for the cache contract.
pub const SHARED_LABEL_INSTANCES: usize = 1000;
/// Required cache-on speedup of the semantic-loss stage.
pub const MIN_SEMANTIC_SPEEDUP: f64 = 2.0;
/// Allowed overhead of a one-worker pool over inline execution.
pub const MAX_POOL_OVERHEAD: f64 = 0.20;
/// Slack before an extra worker counts as slowing the batch down.
pub const SCALING_SLACK: f64 = 0.10;
const REPEATS: usize = 3;
const SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub organisms: usize,
    pub train_instances: usize,
    /// One epoch on the train split, cache on vs off.
    pub epoch_identical: bool,
    pub epoch_compilations_on: usize,
    pub epoch_compilations_off: usize,
    pub distinct_labels: usize,
    pub epoch_seconds_on: f64,
    pub epoch_seconds_off: f64,
    /// Shared-label batch through the semantic-loss stage.
    pub shared_instances: usize,
    pub shared_compilations_on: usize,
    pub shared_compilations_off: usize,
    pub semantic_seconds_on: f64,
    pub semantic_seconds_off: f64,
    pub semantic_speedup: f64,
    /// Population training: inline, then 1..=W pooled workers.
    pub inline_seconds: f64,
    pub worker_seconds: Vec<(usize, f64)>,
    pub workers_identical: bool,
    pub available_workers: usize,
}

impl PerfReport {
    pub fn pool_overhead(&self) -> f64 {
        let one = self.worker_seconds.first().map_or(self.inline_seconds, |w| w.1);
        (one - self.inline_seconds).abs() / self.inline_seconds
    }

    pub fn scaling_monotone(&self) -> bool {
        self.worker_seconds.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + SCALING_SLACK))
    }

    /// Every pass/fail condition; the first failure is returned.
    pub fn check(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Perf(m));
        if !self.epoch_identical {
            return fail("cache on and off disagree on losses or weights".into());
        }
        if self.epoch_compilations_on != self.distinct_labels {
            return fail(format!(
                "{} compilations with cache on, expected {}",
                self.epoch_compilations_on, self.distinct_labels
            ));
        }
        if self.shared_compilations_on != 1 || self.shared_compilations_off != self.shared_instances {
            return fail(format!(
                "shared-label compilations {} / {}, expected 1 / {}",
                self.shared_compilations_on, self.shared_compilations_off, self.shared_instances
            ));
        }
        if self.semantic_speedup < MIN_SEMANTIC_SPEEDUP {
            return fail(format!("cache speedup {:.2} below {MIN_SEMANTIC_SPEEDUP}", self.semantic_speedup));
        }
        if self.epoch_seconds_on > self.epoch_seconds_off {
            return fail(format!(
                "cached epoch slower ({:.4}s vs {:.4}s)",
                self.epoch_seconds_on, self.epoch_seconds_off
            ));
        }
        if self.pool_overhead() > MAX_POOL_OVERHEAD {
            return fail(format!("one-worker pool overhead {:.1}%", 100.0 * self.pool_overhead()));
        }
        if !self.scaling_monotone() {
            return fail(format!("worker scaling not monotone: {:?}", self.worker_seconds));
        }
        if !self.workers_identical {
            return fail("results differ between worker counts".into());
        }
        Ok(())
    }
}

fn min_time(mut f: impl FnMut()) -> f64 {
    (0..REPEATS)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn organism(policy: Policy, idx: usize, cache: bool) -> Organism<f32> {
    let mut rng = rng_from(SEED, &[1, idx as u64]);
    let perception = NeuralPerception::xavier(EncoderShape::default(), AdamConfig::default(), false, &mut rng);
    let tag = MutationTag::new(crate::organism::SymbolicMutation::S0, NeuralMutation::Nrw);
    Organism::new(idx as u64, None, tag, policy, Perception::neural(perception), cache)
}

/// Bit-level digest of an organism's weights and its per-epoch losses.
fn digest(o: &Organism<f32>, losses: &[f64]) -> u64 {
    let mut bytes = Vec::new();
    for l in losses {
        bytes.extend_from_slice(&l.to_bits().to_le_bytes());
    }
    if let Some(n) = o.perception.as_neural() {
        for t in n.encoder.params() {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
    }
    fnv1a64(&bytes)
}

fn train_digest(policy: &Policy, idx: usize, cache: bool, data: &ExemplarSplits, train: &TrainConfig) -> (u64, usize) {
    let mut o = organism(policy.clone(), idx, cache);
    let report = o.train(&data.train, train, &mut rng_from(SEED, &[2, idx as u64]));
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.total).collect();
    let compilations = if cache { o.cache.compilations() } else { o.cache.requests() };
    (digest(&o, &losses), compilations)
}

fn population(policies: &[Policy], data: &ExemplarSplits, train: &TrainConfig, workers: usize) -> Vec<u64> {
    let items: Vec<(usize, Policy)> = policies.iter().cloned().enumerate().collect();
    parallel_map(items, workers, |_, (idx, p)| train_digest(&p, idx, true, data, train).0)
}

/// Semantic loss of `n` instances sharing one label; returns compilations.
fn semantic_stage(policy: &Policy, label: Sign, probs: &[Vec<f64>], cache: bool) -> usize {
    let mut c = CompilationCache::new(cache);
    let mut total = 0.0;
    for p in probs {
        let g = c.get_or_compile(policy, label);
        total += semantic_loss(&g.graph, p).loss;
    }
    std::hint::black_box(total);
    if cache {
        c.compilations()
    } else {
        c.requests()
    }
}

/// Times training of a fixed organism batch under the cache and worker
/// configurations and records whether the numbers agree bit for bit.
pub fn validate_perf(config: &ExperimentConfig) -> Result<PerfReport, HarnessError> {
    let provider = GlyphProvider::from_config(config)?;
    let target = target_policies(config)?.swap_remove(0);
    let run = RunId { policy: 0, seed: config.seeds[0] };
    let data = prepare_run(config, &provider, &target, run)?;
    let one_epoch = TrainConfig { epochs: 1, ..config.train_config() };

    // cache transparency over one epoch of the target policy itself
    let (on, compilations_on) = train_digest(&target, 0, true, &data, &one_epoch);
    let (off, compilations_off) = train_digest(&target, 0, false, &data, &one_epoch);
    let mut labels: Vec<Sign> = data.train.labels().to_vec();
    labels.sort_by_key(|s| s.is_positive());
    labels.dedup();
    let epoch_on = min_time(|| {
        train_digest(&target, 0, true, &data, &one_epoch);
    });
    let epoch_off = min_time(|| {
        train_digest(&target, 0, false, &data, &one_epoch);
    });

    let mut rng: Rng = rng_from(SEED, &[3]);
    let probs: Vec<Vec<f64>> = (0..SHARED_LABEL_INSTANCES)
        .map(|_| (0..config.n_atoms).map(|_| rng.gen_range(0.01..0.99)).collect())
        .collect();
    let label = data.train.label(0);
    let shared_on = semantic_stage(&target, label, &probs, true);
    let shared_off = semantic_stage(&target, label, &probs, false);
    let sem_on = min_time(|| {
        semantic_stage(&target, label, &probs, true);
    });
    let sem_off = min_time(|| {
        semantic_stage(&target, label, &probs, false);
    });

    let policies: Vec<Policy> =
        symbolic_offspring(&target, config.n_splus, &mut rng_from(SEED, &[4])).into_iter().map(|(_, p)| p).collect();
    let reference = population(&policies, &data, &one_epoch, 0);
    let inline = min_time(|| {
        population(&policies, &data, &one_epoch, 0);
    });
    let max_workers = available_workers().min(config.workers.max(1));
    let mut worker_seconds = Vec::new();
    let mut identical = true;
    for w in 1..=max_workers {
        identical &= population(&policies, &data, &one_epoch, w) == reference;
        worker_seconds.push((w, min_time(|| {
            population(&policies, &data, &one_epoch, w);
        })));
    }

    Ok(PerfReport {
        organisms: policies.len(),
        train_instances: data.train.len(),
        epoch_identical: on == off,
        epoch_compilations_on: compilations_on,
        epoch_compilations_off: compilations_off,
        distinct_labels: labels.len(),
        epoch_seconds_on: epoch_on,
        epoch_seconds_off: epoch_off,
        shared_instances: SHARED_LABEL_INSTANCES,
        shared_compilations_on: shared_on,
        shared_compilations_off: shared_off,
        semantic_seconds_on: sem_on,
        semantic_seconds_off: sem_off,
        semantic_speedup: sem_off / sem_on,
        inline_seconds: inline,
        worker_seconds,
        workers_identical: identical,
        available_workers: available_workers(),
    })
}
