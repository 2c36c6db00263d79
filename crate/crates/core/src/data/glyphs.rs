//! Synthetic stroke glyphs for the digits 1 and 2.

use rand::Rng as _;

use super::{GlyphPool, GlyphSource};
use crate::nn::{IMAGE_PIXELS, IMAGE_SIDE};
use crate::rng::Rng;

const STROKE: f32 = 1.6;

// polylines in pixel coordinates (x, y)
const ONE: &[&[(f32, f32)]] = &[&[(10.0, 9.0), (14.0, 5.0), (14.0, 22.0)], &[(10.0, 22.0), (18.0, 22.0)]];
const TWO: &[&[(f32, f32)]] = &[&[
    (8.0, 9.0),
    (10.0, 6.0),
    (14.0, 5.0),
    (18.0, 6.0),
    (19.5, 9.5),
    (18.0, 13.0),
    (8.0, 22.0),
    (20.0, 22.0),
]];

fn segment_distance(px: f32, py: f32, a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// The noiseless 28×28 template of digit 1 or 2.
pub fn glyph_template(digit: u8) -> Vec<f32> {
    let strokes = if digit == 1 { ONE } else { TWO };
    let mut img = vec![0.0f32; IMAGE_PIXELS];
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let (px, py) = (x as f32, y as f32);
            let mut d = f32::INFINITY;
            for line in strokes {
                for w in line.windows(2) {
                    d = d.min(segment_distance(px, py, w[0], w[1]));
                }
            }
            // one pixel of anti-aliasing around the stroke
            img[y * IMAGE_SIDE + x] = (STROKE + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    img
}

fn shifted(template: &[f32], dx: i32, dy: i32) -> Vec<f32> {
    let side = IMAGE_SIDE as i32;
    let mut out = vec![0.0f32; IMAGE_PIXELS];
    for y in 0..side {
        for x in 0..side {
            let (sx, sy) = (x - dx, y - dy);
            if (0..side).contains(&sx) && (0..side).contains(&sy) {
                out[(y * side + x) as usize] = template[(sy * side + sx) as usize];
            }
        }
    }
    out
}

/// `count` glyphs of each digit. Each glyph is the template shifted by up to
/// `ceil(4·noise)` pixels per axis plus uniform per-pixel noise of amplitude
/// `noise`, clamped to `[0, 1]`.
pub fn synth_glyphs(count: usize, noise: f32, rng: &mut Rng) -> GlyphPool {
    assert!((0.0..0.5).contains(&noise), "noise must lie in [0, 0.5)");
    let max_shift = (noise * 4.0).ceil() as i32;
    let templates = [glyph_template(1), glyph_template(2)];
    let mut pool = GlyphPool::new(GlyphSource::Synthetic);
    for _ in 0..count {
        for (digit, template) in [1u8, 2].into_iter().zip(&templates) {
            let dx = rng.gen_range(-max_shift..=max_shift);
            let dy = rng.gen_range(-max_shift..=max_shift);
            let mut img = shifted(template, dx, dy);
            if noise > 0.0 {
                for v in img.iter_mut() {
                    *v = (*v + rng.gen_range(-noise..noise)).clamp(0.0, 1.0);
                }
            }
            pool.push(digit, &img).expect("synthetic glyph is valid");
        }
    }
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn noiseless_glyphs_are_identical() {
        let pool = synth_glyphs(5, 0.0, &mut Rng::seed_from_u64(3));
        let ones = pool.ids(true);
        assert_eq!(ones.len(), 5);
        assert!(ones.iter().all(|&i| pool.image(i) == pool.image(ones[0])));
    }

    #[test]
    fn templates_differ() {
        let (a, b) = (glyph_template(1), glyph_template(2));
        let differing = a.iter().zip(&b).filter(|(x, y)| (*x - *y).abs() >= 0.5).count();
        assert!(differing >= 50, "{differing}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_glyphs(4, 0.2, &mut Rng::seed_from_u64(9));
        let b = synth_glyphs(4, 0.2, &mut Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }
}
