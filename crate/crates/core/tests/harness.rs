use std::fs;
use std::path::{Path, PathBuf};

use evonesy::data::{ExemplarSplits, GlyphSource, SetSizes};
use evonesy::harness::{
    aggregate_columns, run_experiment, ExperimentConfig, ExperimentReport, HarnessError, Mode, GENERATION_COLUMNS,
    SUMMARY_COLUMNS,
};

fn small(mode: Mode, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        sizes: SetSizes { train: 200, val: 60, test: 60 },
        maxgen: 2,
        epochs: 1,
        batch_size: 200,
        workers: 1,
        seeds: vec![0, 1],
        policies: 2,
        baseline_epochs: 2,
        out_dir: out.to_path_buf(),
        ..ExperimentConfig::desk(mode)
    }
}

fn headers(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

fn rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().collect::<Result<Vec<_>, _>>().unwrap().len()
}

/// Every file under `dir` except wall-clock timings and the config (which
/// records the output directory), relative path first.
fn artifacts(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !["timing.json", "config.json"].contains(&p.file_name().unwrap().to_str().unwrap()) {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn same(x: &[(PathBuf, Vec<u8>)], y: &[(PathBuf, Vec<u8>)]) {
    let names = |v: &[(PathBuf, Vec<u8>)]| v.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    assert_eq!(names(x), names(y));
    for ((p, a), (_, b)) in x.iter().zip(y) {
        assert!(a == b, "{} differs", p.display());
    }
}

#[test]
fn datagen_is_byte_identical_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let config = ExperimentConfig { seeds: vec![7], ..small(Mode::Datagen, dir.path()) };
        let ExperimentReport::Datagen { datasets } = run_experiment(&config).unwrap() else { panic!() };
        assert_eq!(datasets.len(), 2);
    }
    let (x, y) = (artifacts(a.path()), artifacts(b.path()));
    assert!(x.iter().any(|(p, _)| p.ends_with("manifest.json")));
    same(&x, &y);
    let (data, seed) = ExemplarSplits::load(&a.path().join("p00-s07")).unwrap();
    assert_eq!(seed, 7);
    assert_eq!(data.train.len(), 200);
}

#[test]
fn targets_are_shared_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(Mode::Datagen, dir.path())).unwrap();
    let load = |name: &str| ExemplarSplits::load(&dir.path().join(name)).unwrap().0;
    assert_eq!(load("p00-s00").target, load("p00-s01").target);
    assert_ne!(load("p00-s00").target, load("p01-s00").target);
    assert_ne!(load("p00-s00").train.labels(), load("p00-s01").train.labels());
}

#[test]
fn evolve_without_generations_logs_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { maxgen: 0, ..small(Mode::Evolve, dir.path()) };
    let ExperimentReport::Evolve { runs, stats, .. } = run_experiment(&config).unwrap() else { panic!() };
    assert_eq!(runs.len(), 4);
    assert_eq!(stats.runs, 4);
    for r in &runs {
        assert_eq!(r.generations, 0);
        // the seed organism has an empty policy
        assert_eq!((r.test_correct, r.test_abstain, r.test_wrong), (0.0, 1.0, 0.0));
        let run = dir.path().join(r.run.name());
        assert_eq!(fs::read_to_string(run.join("lineage.jsonl")).unwrap().lines().count(), 1);
        assert_eq!(rows(&run.join("generations.csv")), 1);
    }
}

#[test]
fn evolve_artifacts_follow_their_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(Mode::Evolve, dir.path());
    run_experiment(&config).unwrap();
    let d = dir.path();
    assert_eq!(headers(&d.join("summary.csv")), SUMMARY_COLUMNS);
    assert_eq!(rows(&d.join("summary.csv")), config.seeds.len() * config.policies);
    assert_eq!(headers(&d.join("aggregate.csv")), aggregate_columns());
    assert_eq!(rows(&d.join("aggregate.csv")), 100);
    let gens = d.join("p01-s01/generations.csv");
    assert_eq!(headers(&gens), GENERATION_COLUMNS);
    let lines = fs::read_to_string(d.join("p01-s01/lineage.jsonl")).unwrap();
    assert_eq!(rows(&gens), lines.lines().count());
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("generation").is_some());
    }
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("summary_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["runs"], 4);
    let config_back: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(d.join("config.json")).unwrap()).unwrap();
    assert_eq!(config_back, config);
}

#[test]
fn reruns_reproduce_every_artifact() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&ExperimentConfig { seeds: vec![3], ..small(Mode::Evolve, a.path()) }).unwrap();
    run_experiment(&ExperimentConfig { seeds: vec![3], workers: 2, ..small(Mode::Evolve, b.path()) }).unwrap();
    same(&artifacts(a.path()), &artifacts(b.path()));
}

#[test]
fn baseline_mode_writes_curves_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(Mode::Baseline, dir.path());
    let ExperimentReport::Baseline { runs, stats, .. } = run_experiment(&config).unwrap() else { panic!() };
    assert_eq!(runs.len(), 4);
    assert_eq!(stats.runs, 4);
    assert_eq!(rows(&dir.path().join("baseline_summary.csv")), 4);
    assert_eq!(rows(&dir.path().join("p00-s01/baseline_curves.csv")), 2);
    assert!(runs.iter().all(|r| r.epochs == 2 && !r.diverged));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = ExperimentConfig { seeds: vec![], ..small(Mode::Evolve, dir.path()) };
    let err = run_experiment(&bad).unwrap_err();
    assert!(matches!(err, HarnessError::Config(_)));
    assert_eq!(err.exit_code(), 2);

    let missing = ExperimentConfig {
        data_dir: Some(dir.path().join("nowhere")),
        glyphs: evonesy::harness::GlyphConfig { source: GlyphSource::Mnist, per_class: 0, noise: 0.0 },
        ..small(Mode::Datagen, dir.path())
    };
    let err = run_experiment(&missing).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");

    let blocked = dir.path().join("file");
    fs::write(&blocked, "x").unwrap();
    let err = run_experiment(&small(Mode::Datagen, &blocked.join("out"))).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}
