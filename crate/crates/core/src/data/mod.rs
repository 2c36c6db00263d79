//! Datasets: glyph pools, random target policies and labelled exemplar sets.

mod exemplar;
mod glyphs;
mod idx;
mod target;

use serde::{Deserialize, Serialize};

use crate::nn::IMAGE_PIXELS;

pub use exemplar::{build_exemplar_set, ExemplarSet, ExemplarSplits, SetSizes, Split};
pub use glyphs::{glyph_template, synth_glyphs};
pub use idx::{load_idx, load_mnist_dir, MNIST_TEST_FILES, MNIST_TRAIN_FILES};
pub use target::{generate_target_policy, label_statistics, LabelStatistics, TargetPolicySpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: bad magic number {found:#010x}")]
    BadMagic { path: String, found: u32 },
    #[error("{0}: file truncated")]
    Truncated(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("glyph pool has no images of digit {0}")]
    MissingDigit(u8),
    #[error("target policy abstains too often: {0}")]
    AbstainBudget(String),
    #[error("invalid target policy spec: {0}")]
    Spec(String),
    #[error("target generation exhausted {0} attempts")]
    GenerationBudget(usize),
    #[error("dataset file corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlyphSource {
    Mnist,
    Synthetic,
}

/// Images of the digits 1 (positive atom) and 2 (negative atom).
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphPool {
    source: GlyphSource,
    images: Vec<f32>,
    digits: Vec<u8>,
    ones: Vec<u32>,
    twos: Vec<u32>,
}

impl GlyphPool {
    pub fn new(source: GlyphSource) -> GlyphPool {
        GlyphPool { source, images: Vec::new(), digits: Vec::new(), ones: Vec::new(), twos: Vec::new() }
    }

    /// Appends one 28×28 image of digit 1 or 2 and returns its id.
    pub fn push(&mut self, digit: u8, image: &[f32]) -> Result<u32, DataError> {
        if image.len() != IMAGE_PIXELS {
            return Err(DataError::Dimension(format!("image has {} pixels", image.len())));
        }
        if !image.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(DataError::Dimension("pixel outside [0, 1]".into()));
        }
        let id = self.digits.len() as u32;
        match digit {
            1 => self.ones.push(id),
            2 => self.twos.push(id),
            d => return Err(DataError::Dimension(format!("digit {d} is not 1 or 2"))),
        }
        self.digits.push(digit);
        self.images.extend_from_slice(image);
        Ok(id)
    }

    pub fn source(&self) -> GlyphSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn image(&self, id: u32) -> &[f32] {
        &self.images[id as usize * IMAGE_PIXELS..][..IMAGE_PIXELS]
    }

    pub fn digit(&self, id: u32) -> u8 {
        self.digits[id as usize]
    }

    /// Ids of all images of digit 1 (`positive`) or digit 2.
    pub fn ids(&self, positive: bool) -> &[u32] {
        if positive {
            &self.ones
        } else {
            &self.twos
        }
    }

    pub fn count(&self, digit: u8) -> usize {
        match digit {
            1 => self.ones.len(),
            2 => self.twos.len(),
            _ => 0,
        }
    }

    pub fn pixels(&self) -> &[f32] {
        &self.images
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub(crate) fn require_both(&self) -> Result<(), DataError> {
        for d in [1, 2] {
            if self.count(d) == 0 {
                return Err(DataError::MissingDigit(d));
            }
        }
        Ok(())
    }

    /// Order-sensitive content hash.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.images.len() * 4 + self.digits.len());
        bytes.extend_from_slice(&self.digits);
        for v in &self.images {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        crate::rng::fnv1a64(&bytes)
    }
}
