//! Small descriptive statistics and the curve helpers used in reports.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Describe {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation (0 for fewer than two values).
    pub sd: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn describe(values: &[f64]) -> Describe {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let mean = if n == 0 { f64::NAN } else { v.iter().sum::<f64>() / n as f64 };
    let sd = if n < 2 { 0.0 } else { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
    Describe { n, median: quantile(&v, 0.5), mean, sd, q1: quantile(&v, 0.25), q3: quantile(&v, 0.75) }
}

pub fn median(values: &[f64]) -> f64 {
    describe(values).median
}

/// Resamples a per-generation series onto `points` evenly spaced positions
/// (1..=points) by linear interpolation over the generation index.
pub fn interpolate(series: &[f64], points: usize) -> Vec<f64> {
    match series.len() {
        0 => vec![f64::NAN; points],
        1 => vec![series[0]; points],
        len => (0..points)
            .map(|i| {
                let u = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 * (len - 1) as f64 };
                let lo = u.floor() as usize;
                let hi = (lo + 1).min(len - 1);
                series[lo] + (series[hi] - series[lo]) * (u - lo as f64)
            })
            .collect(),
    }
}

/// Trailing moving average with the window clipped at the start.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            series[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

pub fn non_increasing(series: &[f64]) -> bool {
    // summing the same values in a different window order can differ in the last bit
    series.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_small() {
        let d = describe(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(d.median, 2.5);
        assert_eq!(d.mean, 2.5);
        assert_eq!((d.q1, d.q3), (1.75, 3.25));
        assert!((d.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn interpolation_endpoints() {
        let s = [1.0, 0.5, 0.0];
        let r = interpolate(&s, 100);
        assert_eq!(r.len(), 100);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[99], 0.0);
        assert!(non_increasing(&r));
        assert_eq!(interpolate(&[0.3], 5), vec![0.3; 5]);
    }

    #[test]
    fn moving_average_window() {
        assert_eq!(moving_average(&[4.0, 2.0, 0.0, 0.0], 2), vec![4.0, 3.0, 1.0, 0.0]);
    }
}
