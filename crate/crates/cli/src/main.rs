use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use evonesy::data::GlyphSource;
use evonesy::harness::{run_experiment_with, ExperimentConfig, ExperimentReport, HarnessError, Mode};
use evonesy::nn::LossRatio;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Evolve,
    Baseline,
    Datagen,
    ValidatePerf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceArg {
    Mnist,
    Synthetic,
}

/// Evolve neural-symbolic organisms, train the end-to-end baseline, write
/// datasets or time the training pipeline.
#[derive(Debug, Parser)]
#[command(name = "evonesy", version)]
struct Cli {
    #[arg(long, value_enum, default_value = "evolve")]
    mode: ModeArg,
    /// Full-scale defaults (8 atoms, MNIST, 20000/2000/2000, 500 generations).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    n_atoms: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    maxgen: Option<usize>,
    /// Neutrality threshold of the fitness groups.
    #[arg(long)]
    t: Option<f64>,
    /// Exponent of fitness-proportionate selection.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    n_splus: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Semantic:reconstruction weights, e.g. 1:0 or 1:10000.
    #[arg(long)]
    loss_ratio: Option<LossRatio>,
    /// Worker threads; 0 trains organisms inline.
    #[arg(long)]
    workers: Option<usize>,
    /// Single seed (overrides --seeds).
    #[arg(long)]
    seed: Option<u64>,
    /// Seed list: `a..b` or comma separated.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Number of random target policies.
    #[arg(long)]
    policies: Option<usize>,
    #[arg(long)]
    policy_seed: Option<u64>,
    /// Compile every label query afresh.
    #[arg(long)]
    no_cache: bool,
    #[arg(long, value_enum)]
    glyph_source: Option<SourceArg>,
    #[arg(long)]
    glyphs_per_class: Option<usize>,
    #[arg(long)]
    glyph_noise: Option<f32>,
    #[arg(long)]
    baseline_epochs: Option<usize>,
    #[arg(long)]
    baseline_batch_size: Option<usize>,
    /// Validation correct fraction that ends a run early.
    #[arg(long)]
    early_stop: Option<f64>,
    /// Directory with the MNIST IDX files (else $NESY_DATA_DIR).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> Result<SeedList, String> {
    let err = |e: std::num::ParseIntError| e.to_string();
    let seeds: Vec<u64> = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(err)?..b.trim().parse().map_err(err)?).collect(),
        None => s.split(',').map(|p| p.trim().parse().map_err(err)).collect::<Result<_, _>>()?,
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(SeedList(seeds))
}

impl Cli {
    fn config(&self) -> ExperimentConfig {
        let mode = match self.mode {
            ModeArg::Evolve => Mode::Evolve,
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Datagen => Mode::Datagen,
            ModeArg::ValidatePerf => Mode::ValidatePerf,
        };
        let mut c = if self.full_scale { ExperimentConfig::full(mode) } else { ExperimentConfig::desk(mode) };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { $field = v; })*
            };
        }
        set! {
            n_atoms => c.n_atoms,
            train_size => c.sizes.train,
            val_size => c.sizes.val,
            test_size => c.sizes.test,
            maxgen => c.maxgen,
            t => c.t,
            k => c.k,
            n_splus => c.n_splus,
            epochs => c.epochs,
            batch_size => c.batch_size,
            loss_ratio => c.loss_ratio,
            workers => c.workers,
            policies => c.policies,
            policy_seed => c.policy_seed,
            glyphs_per_class => c.glyphs.per_class,
            glyph_noise => c.glyphs.noise,
            baseline_epochs => c.baseline_epochs,
            baseline_batch_size => c.baseline_batch_size,
            early_stop => c.early_stop,
            out => c.out_dir,
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.0.clone();
        }
        if let Some(s) = self.seed {
            c.seeds = vec![s];
        }
        if let Some(src) = self.glyph_source {
            c.glyphs.source = match src {
                SourceArg::Mnist => GlyphSource::Mnist,
                SourceArg::Synthetic => GlyphSource::Synthetic,
            };
            if c.glyphs.source == GlyphSource::Synthetic && c.glyphs.per_class == 0 {
                c.glyphs = ExperimentConfig::desk(mode).glyphs;
            }
        }
        c.cache = !self.no_cache;
        c.data_dir = self.data_dir.clone();
        c
    }
}

fn summarize(report: &ExperimentReport) {
    match report {
        ExperimentReport::Evolve { stats, timing, .. } => {
            println!(
                "runs {}  test correct median {:.3} mean {:.3} sd {:.3}  wrong median {:.3}",
                stats.runs, stats.test_correct.median, stats.test_correct.mean, stats.test_correct.sd, stats.test_wrong.median
            );
            println!(
                "stuck {:.0}%  abstain settles {:.0}%  wall {:.1}s",
                100.0 * stats.stuck_fraction,
                100.0 * stats.abstain_settles_fraction,
                timing.total_seconds
            );
        }
        ExperimentReport::Baseline { stats, timing, .. } => println!(
            "runs {}  test accuracy median {:.3} mean {:.3}  diverged {}  wall {:.1}s",
            stats.runs, stats.test_accuracy.median, stats.test_accuracy.mean, stats.diverged, timing.total_seconds
        ),
        ExperimentReport::Datagen { datasets } => println!("{} datasets written", datasets.len()),
        ExperimentReport::Perf(p) => println!(
            "semantic stage speedup {:.2}x  epoch {:.4}s cached / {:.4}s uncached  pool overhead {:.1}%",
            p.semantic_speedup,
            p.epoch_seconds_on,
            p.epoch_seconds_off,
            100.0 * p.pool_overhead()
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = cli.config();
    let quiet = cli.quiet;
    match run_experiment_with(&config, |msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    }) {
        Ok(report) => {
            summarize(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &HarnessError) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap().0, vec![4, 9]);
        assert!(parse_seeds("2..2").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn flags_override_desk_defaults() {
        let cli = Cli::parse_from(["evonesy", "--mode", "datagen", "--seed", "7", "--n-atoms", "3", "--no-cache"]);
        let c = cli.config();
        assert_eq!(c.mode, Mode::Datagen);
        assert_eq!(c.seeds, vec![7]);
        assert_eq!(c.n_atoms, 3);
        assert!(!c.cache);
        let full = Cli::parse_from(["evonesy", "--full-scale"]).config();
        assert_eq!((full.n_atoms, full.maxgen), (8, 500));
    }
}
