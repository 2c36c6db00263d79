use rand::Rng as _;

use crate::rng::Rng;
use crate::scalar::Scalar;

/// Default relaxation temperature.
pub const GUMBEL_TEMPERATURE: f64 = 1.0;

/// One relaxed categorical sample over two classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelSample<T> {
    pub y: [T; 2],
    pub temperature: T,
}

/// `softmax((log π + g) / τ)` with `π = softmax(logits)` and
/// `g_i = -ln(-ln u_i)`, `u_i ~ U(0, 1)`.
pub fn gumbel_softmax<T: Scalar>(logits: [T; 2], temperature: T, rng: &mut Rng) -> GumbelSample<T> {
    assert!(temperature > T::zero(), "temperature must be positive");
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    let mut s = [T::zero(); 2];
    for (i, z) in logits.iter().enumerate() {
        // open interval keeps both logarithms finite
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        let g = T::from_f64_lossy(-(-u.ln()).ln());
        s[i] = (*z - lse + g) / temperature;
    }
    let mx = s[0].max(s[1]);
    let e0 = (s[0] - mx).exp();
    let e1 = (s[1] - mx).exp();
    GumbelSample { y: [e0 / (e0 + e1), e1 / (e0 + e1)], temperature }
}

/// Gradient with respect to the logits given `∂L/∂y`, the noise held fixed.
pub fn gumbel_softmax_backward<T: Scalar>(sample: &GumbelSample<T>, dy: [T; 2]) -> [T; 2] {
    let y = sample.y;
    let dot = y[0] * dy[0] + y[1] * dy[1];
    [
        y[0] * (dy[0] - dot) / sample.temperature,
        y[1] * (dy[1] - dot) / sample.temperature,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sums_to_one_and_is_seeded() {
        let mut a = Rng::seed_from_u64(5);
        let mut b = Rng::seed_from_u64(5);
        let x = gumbel_softmax([0.3f64, -0.2], 1.0, &mut a);
        let y = gumbel_softmax([0.3f64, -0.2], 1.0, &mut b);
        assert_eq!(x, y);
        assert!((x.y[0] + x.y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn high_temperature_flattens() {
        let mut rng = Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s = gumbel_softmax([0.0f64, 0.0], 1e4, &mut rng);
            assert!((s.y[0] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn argmax_frequency_follows_probabilities() {
        // Gumbel-max: argmax of log π + g is distributed as π
        let mut rng = Rng::seed_from_u64(2024);
        let logits = [0.8f64.ln(), 0.2f64.ln()];
        let hits = (0..10_000)
            .filter(|_| {
                let s = gumbel_softmax(logits, 1.0, &mut rng);
                s.y[0] > s.y[1]
            })
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.8).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let logits = [0.4f64, -0.9];
        let dy = [1.3, -0.6];
        let sample = |z: [f64; 2]| gumbel_softmax(z, 0.7, &mut Rng::seed_from_u64(3));
        let g = gumbel_softmax_backward(&sample(logits), dy);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = logits;
            p[i] += h;
            let mut m = logits;
            m[i] -= h;
            let f = |z| {
                let s = sample(z);
                s.y[0] * dy[0] + s.y[1] * dy[1]
            };
            let fd = (f(p) - f(m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
