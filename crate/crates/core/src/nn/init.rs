use rand::Rng as _;

use super::Tensor;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Weight tensor drawn uniformly from `[-b, b]`. Samples are drawn in `f64`
/// so the same seed yields the same weights in every scalar type.
pub fn xavier_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let b = xavier_bound(fan_in, fan_out);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-b..=b))).collect();
    Tensor::from_vec(shape, data).expect("shape matches sample count")
}
