//! IDX (MNIST) ingestion keeping only the digits 1 and 2.

use std::path::Path;

use super::{DataError, GlyphPool, GlyphSource};
use crate::nn::IMAGE_SIDE;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

pub const MNIST_TRAIN_FILES: (&str, &str) = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
pub const MNIST_TEST_FILES: (&str, &str) = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| DataError::Truncated(path.to_string()))
}

fn check_magic(bytes: &[u8], want: u32, path: &str) -> Result<(), DataError> {
    let found = if bytes.len() < 4 { 0 } else { be_u32(bytes, 0, path)? };
    if found != want {
        return Err(DataError::BadMagic { path: path.to_string(), found });
    }
    Ok(())
}

/// Parses raw IDX image/label buffers.
pub fn parse_idx(images: &[u8], labels: &[u8], images_name: &str, labels_name: &str) -> Result<GlyphPool, DataError> {
    check_magic(images, IMAGES_MAGIC, images_name)?;
    check_magic(labels, LABELS_MAGIC, labels_name)?;
    let count = be_u32(images, 4, images_name)? as usize;
    let rows = be_u32(images, 8, images_name)? as usize;
    let cols = be_u32(images, 12, images_name)? as usize;
    let n_labels = be_u32(labels, 4, labels_name)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(DataError::Dimension(format!("{images_name}: images are {rows}×{cols}")));
    }
    if n_labels != count {
        return Err(DataError::Dimension(format!("{count} images but {n_labels} labels")));
    }
    let pixels = &images[16..];
    let label_bytes = &labels[8..];
    if pixels.len() < count * rows * cols {
        return Err(DataError::Truncated(images_name.to_string()));
    }
    if label_bytes.len() < count {
        return Err(DataError::Truncated(labels_name.to_string()));
    }
    let mut pool = GlyphPool::new(GlyphSource::Mnist);
    let mut buf = vec![0.0f32; rows * cols];
    for (i, &digit) in label_bytes[..count].iter().enumerate() {
        if digit != 1 && digit != 2 {
            continue;
        }
        for (dst, &src) in buf.iter_mut().zip(&pixels[i * rows * cols..][..rows * cols]) {
            *dst = src as f32 / 255.0;
        }
        pool.push(digit, &buf)?;
    }
    Ok(pool)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<GlyphPool, DataError> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels, &images_path.display().to_string(), &labels_path.display().to_string())
}

/// Loads the standard four MNIST files from `dir` as (train pool, test pool).
pub fn load_mnist_dir(dir: &Path) -> Result<(GlyphPool, GlyphPool), DataError> {
    let train = load_idx(&dir.join(MNIST_TRAIN_FILES.0), &dir.join(MNIST_TRAIN_FILES.1))?;
    let test = load_idx(&dir.join(MNIST_TEST_FILES.0), &dir.join(MNIST_TEST_FILES.1))?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(labels: &[u8], fill: impl Fn(usize) -> u8) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [IMAGES_MAGIC, labels.len() as u32, 28, 28] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        for i in 0..labels.len() {
            img.extend(std::iter::repeat_n(fill(i), 784));
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn keeps_only_ones_and_twos() {
        let (img, lab) = idx(&[0, 1, 2, 7, 1], |i| if i == 1 { 255 } else { 0 });
        let pool = parse_idx(&img, &lab, "i", "l").unwrap();
        assert_eq!((pool.count(1), pool.count(2)), (2, 1));
        assert!(pool.image(0).iter().all(|&v| v == 1.0));
        assert_eq!(pool.digit(1), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_idx(&[], &[], "i", "l"), Err(DataError::BadMagic { found: 0, .. })));
        let (img, lab) = idx(&[1, 2], |_| 3);
        assert!(matches!(parse_idx(&img[..img.len() - 1], &lab, "i", "l"), Err(DataError::Truncated(_))));
        let (_, lab3) = idx(&[1, 2, 1], |_| 3);
        assert!(matches!(parse_idx(&img, &lab3, "i", "l"), Err(DataError::Dimension(_))));
        let mut bad = img.clone();
        bad[11] = 27;
        assert!(matches!(parse_idx(&bad, &lab, "i", "l"), Err(DataError::Dimension(_))));
        assert!(matches!(parse_idx(&lab, &img, "i", "l"), Err(DataError::BadMagic { .. })));
    }
}
