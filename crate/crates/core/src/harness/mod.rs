//! Experiment orchestration: dataset preparation, batched runs and the
//! CSV/JSON artifacts they leave on disk.

mod config;
pub mod perf;
pub mod stats;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::{train_baseline, BaselineRun};
use crate::data::{
    build_exemplar_set, generate_target_policy, load_mnist_dir, synth_glyphs, DataError, ExemplarSplits, GlyphPool,
    GlyphSource,
};
use crate::evolution::{evolve_with, EvolveError, Lineage};
use crate::nn::NnError;
use crate::rng::{derive_seed, rng_from};
use crate::symbolic::Policy;

pub use config::{ExperimentConfig, GlyphConfig, Mode, DATA_DIR_ENV};
use stats::{describe, interpolate, moving_average, non_increasing, Describe};

const STREAM_TARGET: u64 = 11;
const STREAM_GLYPHS: u64 = 12;
const STREAM_DATA: u64 = 13;
const STREAM_EVOLVE: u64 = 14;
const STREAM_BASELINE: u64 = 15;

/// Points on the unified scale used for cross-run aggregation.
pub const AGGREGATE_POINTS: usize = 100;
/// Window of the moving average in the abstain-trend check.
pub const ABSTAIN_WINDOW: usize = 5;
/// Final abstain fraction regarded as "near zero".
pub const ABSTAIN_FINAL_MAX: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(#[from] DataError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("evolution: {0}")]
    Evolve(#[from] EvolveError),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("performance check failed: {0}")]
    Perf(String),
}

impl HarnessError {
    /// Process exit status for each error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Io(_) => 4,
            HarnessError::Evolve(_) | HarnessError::Nn(_) => 5,
            HarnessError::Perf(_) => 6,
        }
    }
}

fn csv_err(e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::Io(io),
        other => HarnessError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn json_err(e: serde_json::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// One (target policy, seed) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunId {
    pub policy: usize,
    pub seed: u64,
}

impl RunId {
    pub fn name(&self) -> String {
        format!("p{:02}-s{:02}", self.policy, self.seed)
    }
}

pub fn run_ids(config: &ExperimentConfig) -> Vec<RunId> {
    (0..config.policies).flat_map(|policy| config.seeds.iter().map(move |&seed| RunId { policy, seed })).collect()
}

/// The target policies shared by every seed.
pub fn target_policies(config: &ExperimentConfig) -> Result<Vec<Policy>, HarnessError> {
    let spec = config.target_spec();
    (0..config.policies)
        .map(|i| Ok(generate_target_policy(&spec, &mut rng_from(config.policy_seed, &[STREAM_TARGET, i as u64]))?))
        .collect()
}

/// Where glyph images come from: a loaded MNIST pair or per-run synthesis.
#[derive(Debug, Clone)]
pub enum GlyphProvider {
    Mnist { train: Arc<GlyphPool>, test: Arc<GlyphPool> },
    Synthetic(GlyphConfig),
}

impl GlyphProvider {
    pub fn from_config(config: &ExperimentConfig) -> Result<GlyphProvider, HarnessError> {
        match config.glyphs.source {
            GlyphSource::Synthetic => Ok(GlyphProvider::Synthetic(config.glyphs)),
            GlyphSource::Mnist => {
                let dir = config.resolved_data_dir().ok_or_else(|| {
                    HarnessError::Config(format!("MNIST glyphs need --data-dir or {DATA_DIR_ENV}"))
                })?;
                let (train, test) = load_mnist_dir(&dir)?;
                Ok(GlyphProvider::Mnist { train: Arc::new(train), test: Arc::new(test) })
            }
        }
    }

    /// Train/val and test pools for one run; synthetic pools are drawn from
    /// separate streams so the test glyphs are never seen in training.
    pub fn pools(&self, run: RunId) -> (Arc<GlyphPool>, Arc<GlyphPool>) {
        match self {
            GlyphProvider::Mnist { train, test } => (train.clone(), test.clone()),
            GlyphProvider::Synthetic(g) => {
                let p = run.policy as u64;
                let train = synth_glyphs(g.per_class, g.noise, &mut rng_from(run.seed, &[STREAM_GLYPHS, p, 0]));
                let test = synth_glyphs(g.per_class, g.noise, &mut rng_from(run.seed, &[STREAM_GLYPHS, p, 1]));
                (Arc::new(train), Arc::new(test))
            }
        }
    }
}

pub fn prepare_run(
    config: &ExperimentConfig,
    provider: &GlyphProvider,
    target: &Policy,
    run: RunId,
) -> Result<ExemplarSplits, HarnessError> {
    let (train, test) = provider.pools(run);
    let mut rng = rng_from(run.seed, &[STREAM_DATA, run.policy as u64]);
    let (splits, _) = build_exemplar_set(target, config.sizes, train, test, &mut rng)?;
    Ok(splits)
}

/// Final abstain near zero and a non-increasing smoothed abstain curve.
pub fn abstain_settles(abstain: &[f64]) -> bool {
    match abstain.last() {
        Some(&last) => last <= ABSTAIN_FINAL_MAX && non_increasing(&moving_average(abstain, ABSTAIN_WINDOW)),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub run: RunId,
    pub generations: usize,
    pub stopped_early: bool,
    pub rules: usize,
    pub val_correct: f64,
    pub test_correct: f64,
    pub test_abstain: f64,
    pub test_wrong: f64,
    pub ever_stuck: bool,
    pub abstain_settles: bool,
    pub policy: String,
}

impl EvolveSummary {
    pub fn from_lineage(run: RunId, lineage: &Lineage) -> EvolveSummary {
        let last = lineage.fittest();
        let abstain: Vec<f64> = lineage.entries.iter().map(|e| e.test.abstain).collect();
        EvolveSummary {
            run,
            generations: last.generation,
            stopped_early: lineage.stopped_early,
            rules: last.snapshot.policy.lines().count(),
            val_correct: last.val.correct,
            test_correct: last.test.correct,
            test_abstain: last.test.abstain,
            test_wrong: last.test.wrong,
            ever_stuck: lineage.ever_stuck(),
            abstain_settles: abstain_settles(&abstain),
            policy: last.snapshot.policy.replace('\n', "; "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveStats {
    pub runs: usize,
    pub test_correct: Describe,
    pub test_abstain: Describe,
    pub test_wrong: Describe,
    pub stuck_fraction: f64,
    pub abstain_settles_fraction: f64,
}

impl EvolveStats {
    pub fn of(summaries: &[EvolveSummary]) -> EvolveStats {
        let n = summaries.len();
        let col = |f: fn(&EvolveSummary) -> f64| describe(&summaries.iter().map(f).collect::<Vec<_>>());
        let frac = |f: fn(&EvolveSummary) -> bool| summaries.iter().filter(|s| f(s)).count() as f64 / n.max(1) as f64;
        EvolveStats {
            runs: n,
            test_correct: col(|s| s.test_correct),
            test_abstain: col(|s| s.test_abstain),
            test_wrong: col(|s| s.test_wrong),
            stuck_fraction: frac(|s| s.ever_stuck),
            abstain_settles_fraction: frac(|s| s.abstain_settles),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub policy: usize,
    pub seed: u64,
    pub epochs: usize,
    pub diverged: bool,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub runs: usize,
    pub test_accuracy: Describe,
    pub diverged: usize,
}

/// Wall-clock measurements, kept apart from the deterministic artifacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub runs: Vec<(String, f64)>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentReport {
    Evolve { runs: Vec<EvolveSummary>, stats: EvolveStats, timing: Timing },
    Baseline { runs: Vec<BaselineSummary>, stats: BaselineStats, timing: Timing },
    Datagen { datasets: Vec<PathBuf> },
    Perf(perf::PerfReport),
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with(config, |_| {})
}

/// As [`run_experiment`], reporting progress messages through `progress`.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut progress: impl FnMut(&str),
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    if config.mode == Mode::ValidatePerf {
        let report = perf::validate_perf(config)?;
        write_json(&config.out_dir.join("perf_report.json"), &report)?;
        report.check()?;
        return Ok(ExperimentReport::Perf(report));
    }
    write_json(&config.out_dir.join("config.json"), config)?;
    let provider = GlyphProvider::from_config(config)?;
    let targets = target_policies(config)?;
    let runs = run_ids(config);
    let started = Instant::now();
    let mut timing = Timing::default();
    match config.mode {
        Mode::Datagen => {
            let mut datasets = Vec::new();
            for run in runs {
                let splits = prepare_run(config, &provider, &targets[run.policy], run)?;
                let dir = config.out_dir.join(run.name());
                splits.save(&dir, run.seed)?;
                progress(&format!("{}: dataset written", run.name()));
                datasets.push(dir);
            }
            Ok(ExperimentReport::Datagen { datasets })
        }
        Mode::Evolve => {
            let mut summaries = Vec::new();
            let mut series = Vec::new();
            for run in runs {
                let t0 = Instant::now();
                let data = prepare_run(config, &provider, &targets[run.policy], run)?;
                let ec = config.evolution_config(derive_seed(run.seed, &[STREAM_EVOLVE, run.policy as u64]));
                let lineage = evolve_with::<f32>(&ec, &data, |_| {})?;
                let dir = config.out_dir.join(run.name());
                fs::create_dir_all(&dir)?;
                write_lineage(&dir, &lineage)?;
                let s = EvolveSummary::from_lineage(run, &lineage);
                let secs = t0.elapsed().as_secs_f64();
                progress(&format!(
                    "{}: gen {} test {:.3}/{:.3}/{:.3} ({secs:.1}s)",
                    run.name(),
                    s.generations,
                    s.test_correct,
                    s.test_abstain,
                    s.test_wrong
                ));
                timing.runs.push((run.name(), secs));
                series.push(lineage);
                summaries.push(s);
            }
            let stats = EvolveStats::of(&summaries);
            write_summary(&config.out_dir.join("summary.csv"), &summaries)?;
            write_json(&config.out_dir.join("summary_stats.json"), &stats)?;
            write_aggregate(&config.out_dir.join("aggregate.csv"), &series)?;
            timing.total_seconds = started.elapsed().as_secs_f64();
            write_json(&config.out_dir.join("timing.json"), &timing)?;
            Ok(ExperimentReport::Evolve { runs: summaries, stats, timing })
        }
        Mode::Baseline => {
            let mut summaries = Vec::new();
            for run in runs {
                let t0 = Instant::now();
                let data = prepare_run(config, &provider, &targets[run.policy], run)?;
                let bc = config.baseline_config(derive_seed(run.seed, &[STREAM_BASELINE, run.policy as u64]));
                let (_, result) = train_baseline::<f32>(&bc, &data)?;
                let dir = config.out_dir.join(run.name());
                fs::create_dir_all(&dir)?;
                write_curves(&dir.join("baseline_curves.csv"), &result)?;
                let s = baseline_summary(run, &result);
                let secs = t0.elapsed().as_secs_f64();
                progress(&format!("{}: test accuracy {:.3} ({secs:.1}s)", run.name(), s.test_accuracy));
                timing.runs.push((run.name(), secs));
                summaries.push(s);
            }
            let accs: Vec<f64> = summaries.iter().map(|s| s.test_accuracy).collect();
            let stats = BaselineStats {
                runs: summaries.len(),
                test_accuracy: describe(&accs),
                diverged: summaries.iter().filter(|s| s.diverged).count(),
            };
            write_rows(&config.out_dir.join("baseline_summary.csv"), &summaries)?;
            write_json(&config.out_dir.join("baseline_stats.json"), &stats)?;
            timing.total_seconds = started.elapsed().as_secs_f64();
            write_json(&config.out_dir.join("timing.json"), &timing)?;
            Ok(ExperimentReport::Baseline { runs: summaries, stats, timing })
        }
        Mode::ValidatePerf => unreachable!("handled above"),
    }
}

fn baseline_summary(run: RunId, result: &BaselineRun) -> BaselineSummary {
    let m = result.final_metrics();
    BaselineSummary {
        policy: run.policy,
        seed: run.seed,
        epochs: result.curves.len(),
        diverged: result.diverged,
        train_accuracy: m.map_or(f64::NAN, |m| m.train_accuracy),
        val_accuracy: m.map_or(f64::NAN, |m| m.val_accuracy),
        test_accuracy: m.map_or(f64::NAN, |m| m.test_accuracy),
        test_loss: m.map_or(f64::NAN, |m| m.test_loss),
    }
}

/// Column order of `generations.csv`.
pub const GENERATION_COLUMNS: [&str; 16] = [
    "generation",
    "mutation",
    "group",
    "raw_score",
    "normalized_score",
    "val_correct",
    "val_abstain",
    "val_wrong",
    "test_correct",
    "test_abstain",
    "test_wrong",
    "semantic_loss",
    "reconstruction_loss",
    "status",
    "stuck",
    "rules",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// `lineage.jsonl` and the plot-ready `generations.csv` of one run.
pub fn write_lineage(dir: &Path, lineage: &Lineage) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(fs::File::create(dir.join("lineage.jsonl"))?);
    lineage.write_jsonl(&mut out)?;
    out.flush()?;
    let mut w = csv::Writer::from_path(dir.join("generations.csv")).map_err(csv_err)?;
    w.write_record(GENERATION_COLUMNS).map_err(csv_err)?;
    for e in &lineage.entries {
        let f = e.fitness;
        let status = match e.snapshot.status {
            crate::organism::TrainStatus::Ok => "ok",
            crate::organism::TrainStatus::Diverged => "diverged",
        };
        w.write_record([
            e.generation.to_string(),
            e.snapshot.tag.to_string(),
            opt(f.map(|f| f.group.letter())),
            opt(f.map(|f| f.raw)),
            opt(f.map(|f| f.normalized)),
            e.val.correct.to_string(),
            e.val.abstain.to_string(),
            e.val.wrong.to_string(),
            e.test.correct.to_string(),
            e.test.abstain.to_string(),
            e.test.wrong.to_string(),
            opt(e.train_loss.map(|l| l.semantic)),
            opt(e.train_loss.map(|l| l.reconstruction)),
            status.to_string(),
            e.stuck.stuck().to_string(),
            e.snapshot.policy.lines().count().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Column order of `summary.csv`.
pub const SUMMARY_COLUMNS: [&str; 12] = [
    "policy",
    "seed",
    "generations",
    "stopped_early",
    "rules",
    "val_correct",
    "test_correct",
    "test_abstain",
    "test_wrong",
    "ever_stuck",
    "abstain_settles",
    "final_policy",
];

fn write_summary(path: &Path, rows: &[EvolveSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for s in rows {
        w.write_record([
            s.run.policy.to_string(),
            s.run.seed.to_string(),
            s.generations.to_string(),
            s.stopped_early.to_string(),
            s.rules.to_string(),
            s.val_correct.to_string(),
            s.test_correct.to_string(),
            s.test_abstain.to_string(),
            s.test_wrong.to_string(),
            s.ever_stuck.to_string(),
            s.abstain_settles.to_string(),
            s.policy.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Column order of `aggregate.csv`.
pub fn aggregate_columns() -> Vec<String> {
    let mut cols = vec!["point".to_string()];
    for metric in ["correct", "abstain", "wrong"] {
        for stat in ["median", "mean", "q1", "q3"] {
            cols.push(format!("test_{metric}_{stat}"));
        }
    }
    cols
}

/// Every run's test curve resampled onto 1..=100 and summarised per point.
fn write_aggregate(path: &Path, lineages: &[Lineage]) -> Result<(), HarnessError> {
    type Pick = fn(&crate::organism::PerformanceTriple) -> f64;
    let picks: [Pick; 3] = [|t| t.correct, |t| t.abstain, |t| t.wrong];
    let curves: Vec<Vec<Vec<f64>>> = picks
        .iter()
        .map(|pick| {
            lineages
                .iter()
                .map(|l| interpolate(&l.entries.iter().map(|e| pick(&e.test)).collect::<Vec<_>>(), AGGREGATE_POINTS))
                .collect()
        })
        .collect();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(aggregate_columns()).map_err(csv_err)?;
    for point in 0..AGGREGATE_POINTS {
        let mut row = vec![(point + 1).to_string()];
        for metric in &curves {
            let d = describe(&metric.iter().map(|c| c[point]).collect::<Vec<_>>());
            row.extend([d.median, d.mean, d.q1, d.q3].iter().map(f64::to_string));
        }
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_curves(path: &Path, run: &BaselineRun) -> Result<(), HarnessError> {
    write_rows(path, &run.curves)
}
