//! Labelled instances: sequences of glyphs whose digits encode a context.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{DataError, GlyphPool, GlyphSource};
use crate::nn::IMAGE_PIXELS;
use crate::rng::Rng;
use crate::symbolic::{deduce, parse_policy, render_policy, Context, Policy, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SetSizes {
    pub const FULL: SetSizes = SetSizes { train: 20_000, val: 2_000, test: 2_000 };
    pub const DESK: SetSizes = SetSizes { train: 2_000, val: 500, test: 500 };
}

/// One split. Images are ids into a shared pool.
#[derive(Debug, Clone)]
pub struct ExemplarSet {
    split: Split,
    n_atoms: usize,
    pool: Arc<GlyphPool>,
    glyphs: Vec<u32>,
    labels: Vec<Sign>,
    contexts: Vec<Context>,
}

impl ExemplarSet {
    pub fn from_parts(
        split: Split,
        pool: Arc<GlyphPool>,
        n_atoms: usize,
        glyphs: Vec<u32>,
        labels: Vec<Sign>,
        contexts: Vec<Context>,
    ) -> Result<ExemplarSet, DataError> {
        if glyphs.len() != labels.len() * n_atoms || contexts.len() != labels.len() {
            return Err(DataError::Dimension("instance arrays disagree in length".into()));
        }
        if glyphs.iter().any(|&g| g as usize >= pool.len()) {
            return Err(DataError::Dimension("glyph id outside pool".into()));
        }
        Ok(ExemplarSet { split, n_atoms, pool, glyphs, labels, contexts })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pool(&self) -> &Arc<GlyphPool> {
        &self.pool
    }

    /// Glyph ids of instance `i`, one per atom.
    pub fn glyphs(&self, i: usize) -> &[u32] {
        &self.glyphs[i * self.n_atoms..][..self.n_atoms]
    }

    pub fn all_glyphs(&self) -> &[u32] {
        &self.glyphs
    }

    pub fn label(&self, i: usize) -> Sign {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Sign] {
        &self.labels
    }

    /// Ground-truth context; for diagnostics and oracles only.
    pub fn context(&self, i: usize) -> Context {
        self.contexts[i]
    }

    /// Copies instance `i`'s images into a `[n×784]` buffer.
    pub fn images(&self, i: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.n_atoms * IMAGE_PIXELS);
        for &g in self.glyphs(i) {
            out.extend_from_slice(self.pool.image(g));
        }
        out
    }

    /// Same instances with labels permuted; used for no-signal controls.
    pub fn with_shuffled_labels(&self, rng: &mut Rng) -> ExemplarSet {
        let mut out = self.clone();
        out.labels.shuffle(rng);
        out
    }

    /// Same instances with every label replaced.
    pub fn with_constant_label(&self, label: Sign) -> ExemplarSet {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|l| *l = label);
        out
    }

    fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["label", "context", "glyphs"]).map_err(csv_err)?;
        for i in 0..self.len() {
            let ctx: String = self.contexts[i].signs().iter().map(|s| sign_char(*s)).collect();
            let glyphs = self.glyphs(i).iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
            w.write_record([sign_char(self.labels[i]).to_string(), ctx, glyphs]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    fn read_csv(split: Split, pool: Arc<GlyphPool>, n_atoms: usize, path: &Path) -> Result<ExemplarSet, DataError> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let (mut glyphs, mut labels, mut contexts) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let bad = || DataError::Corrupt(format!("{}: malformed row", path.display()));
            let label = rec.get(0).and_then(parse_sign_str).ok_or_else(bad)?;
            let signs: Vec<Sign> = rec.get(1).ok_or_else(bad)?.chars().map(parse_sign).collect::<Option<_>>().ok_or_else(bad)?;
            if signs.len() != n_atoms {
                return Err(bad());
            }
            let ids: Vec<u32> = rec
                .get(2)
                .ok_or_else(bad)?
                .split(' ')
                .map(|s| s.parse().ok())
                .collect::<Option<_>>()
                .ok_or_else(bad)?;
            if ids.len() != n_atoms {
                return Err(bad());
            }
            labels.push(label);
            contexts.push(Context::from_signs(&signs));
            glyphs.extend(ids);
        }
        ExemplarSet::from_parts(split, pool, n_atoms, glyphs, labels, contexts)
    }
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Corrupt(e.to_string())
}

fn sign_char(s: Sign) -> char {
    if s.is_positive() {
        '+'
    } else {
        '-'
    }
}

fn parse_sign(c: char) -> Option<Sign> {
    match c {
        '+' => Some(Sign::Positive),
        '-' => Some(Sign::Negative),
        _ => None,
    }
}

fn parse_sign_str(s: &str) -> Option<Sign> {
    let mut it = s.chars();
    let c = parse_sign(it.next()?)?;
    it.next().is_none().then_some(c)
}

/// Train and validation draw from the train pool, test from the test pool.
#[derive(Debug, Clone)]
pub struct ExemplarSplits {
    pub target: Policy,
    pub train: ExemplarSet,
    pub val: ExemplarSet,
    pub test: ExemplarSet,
}

fn sample_split(
    split: Split,
    target: &Policy,
    size: usize,
    pool: &Arc<GlyphPool>,
    rng: &mut Rng,
    rejections: &mut usize,
) -> Result<ExemplarSet, DataError> {
    let n = target.n_atoms();
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let budget = 1000 + 100 * size;
    let (mut glyphs, mut labels, mut contexts) = (Vec::with_capacity(size * n), Vec::with_capacity(size), Vec::with_capacity(size));
    let mut attempts = 0;
    while labels.len() < size {
        attempts += 1;
        if attempts > budget {
            return Err(DataError::AbstainBudget(format!("{split}: {} of {size} instances after {budget} draws", labels.len())));
        }
        let ctx = Context::from_bits(n, rng.gen::<u64>() & mask);
        let Some(label) = deduce(target, &ctx).sign() else {
            *rejections += 1;
            continue;
        };
        for sign in ctx.signs() {
            glyphs.push(*pool.ids(sign.is_positive()).choose(rng).expect("pool checked"));
        }
        labels.push(label);
        contexts.push(ctx);
    }
    ExemplarSet::from_parts(split, pool.clone(), n, glyphs, labels, contexts)
}

/// Rejection-samples uniform contexts, dropping those the target abstains on.
/// Returns the splits and the number of rejected contexts.
pub fn build_exemplar_set(
    target: &Policy,
    sizes: SetSizes,
    train_pool: Arc<GlyphPool>,
    test_pool: Arc<GlyphPool>,
    rng: &mut Rng,
) -> Result<(ExemplarSplits, usize), DataError> {
    train_pool.require_both()?;
    test_pool.require_both()?;
    let mut rejected = 0;
    let train = sample_split(Split::Train, target, sizes.train, &train_pool, rng, &mut rejected)?;
    let val = sample_split(Split::Val, target, sizes.val, &train_pool, rng, &mut rejected)?;
    let test = sample_split(Split::Test, target, sizes.test, &test_pool, rng, &mut rejected)?;
    Ok((ExemplarSplits { target: target.clone(), train, val, test }, rejected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PoolManifest {
    source: GlyphSource,
    ones: usize,
    twos: usize,
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    seed: u64,
    n_atoms: usize,
    target_policy: String,
    sizes: SetSizes,
    train_pool: PoolManifest,
    test_pool: PoolManifest,
}

fn pool_manifest(p: &GlyphPool) -> PoolManifest {
    PoolManifest { source: p.source(), ones: p.count(1), twos: p.count(2), fingerprint: format!("{:016x}", p.fingerprint()) }
}

fn write_pool(dir: &Path, name: &str, pool: &GlyphPool) -> Result<(), DataError> {
    let mut bytes = Vec::with_capacity(pool.pixels().len() * 4);
    for v in pool.pixels() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{name}.f32")), bytes)?;
    fs::write(dir.join(format!("{name}.digits")), pool.digits())?;
    Ok(())
}

fn read_pool(dir: &Path, name: &str, meta: &PoolManifest) -> Result<GlyphPool, DataError> {
    let bytes = fs::read(dir.join(format!("{name}.f32")))?;
    let digits = fs::read(dir.join(format!("{name}.digits")))?;
    if bytes.len() != digits.len() * IMAGE_PIXELS * 4 {
        return Err(DataError::Corrupt(format!("{name}: tensor size does not match digit count")));
    }
    let pixels: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
    let mut pool = GlyphPool::new(meta.source);
    for (i, &d) in digits.iter().enumerate() {
        pool.push(d, &pixels[i * IMAGE_PIXELS..][..IMAGE_PIXELS])?;
    }
    if pool_manifest(&pool) != *meta {
        return Err(DataError::Corrupt(format!("{name}: contents do not match manifest")));
    }
    Ok(pool)
}

impl ExemplarSplits {
    /// Writes `manifest.json`, the two pools as packed little-endian `f32`
    /// tensors with digit files, and one CSV per split.
    pub fn save(&self, dir: &Path, seed: u64) -> Result<(), DataError> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest {
            format: 1,
            seed,
            n_atoms: self.target.n_atoms(),
            target_policy: render_policy(&self.target),
            sizes: SetSizes { train: self.train.len(), val: self.val.len(), test: self.test.len() },
            train_pool: pool_manifest(self.train.pool()),
            test_pool: pool_manifest(self.test.pool()),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| DataError::Corrupt(e.to_string()))?;
        fs::write(dir.join("manifest.json"), json + "\n")?;
        write_pool(dir, "train_pool", self.train.pool())?;
        write_pool(dir, "test_pool", self.test.pool())?;
        for set in [&self.train, &self.val, &self.test] {
            set.write_csv(&dir.join(format!("{}.csv", set.split())))?;
        }
        Ok(())
    }

    /// Loads a directory written by [`ExemplarSplits::save`]; returns the seed too.
    pub fn load(dir: &Path) -> Result<(ExemplarSplits, u64), DataError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Corrupt(e.to_string()))?;
        let target = parse_policy(&m.target_policy, m.n_atoms).map_err(|e| DataError::Corrupt(e.to_string()))?;
        let train_pool = Arc::new(read_pool(dir, "train_pool", &m.train_pool)?);
        let test_pool = Arc::new(read_pool(dir, "test_pool", &m.test_pool)?);
        let load = |split: Split, pool: &Arc<GlyphPool>| {
            ExemplarSet::read_csv(split, pool.clone(), m.n_atoms, &dir.join(format!("{split}.csv")))
        };
        let splits = ExemplarSplits {
            train: load(Split::Train, &train_pool)?,
            val: load(Split::Val, &train_pool)?,
            test: load(Split::Test, &test_pool)?,
            target,
        };
        let got = SetSizes { train: splits.train.len(), val: splits.val.len(), test: splits.test.len() };
        if got != m.sizes {
            return Err(DataError::Corrupt("split sizes do not match manifest".into()));
        }
        Ok((splits, m.seed))
    }
}
