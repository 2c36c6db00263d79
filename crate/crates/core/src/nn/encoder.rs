//! Per-glyph convolutional encoder.
//!
//! `28×28 → conv3×3(c1) → ReLU → pool2 → conv3×3(c2) → ReLU → pool2 →
//! FC(h1) → ReLU → FC(h2) → ReLU → FC(2) → softmax`. Component 0 of the
//! softmax is the probability that the glyph shows a positive atom.
//!
//! Batches are laid out channel-major (`[C, N, H, W]`) so each convolution
//! is a single GEMM over the whole batch.

use serde::{Deserialize, Serialize};

use super::init::xavier_uniform;
use super::ops::{
    col2im3, im2col3, linear_backward, linear_forward, maxpool2, maxpool2_backward, relu_in_place,
    relu_mask, softmax2,
};
use super::{NnError, Tensor};
use crate::rng::{fnv1a64, Rng};
use crate::scalar::{gemm, Scalar, Trans};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

const C1_SIDE: usize = IMAGE_SIDE - 2; // 26
const P1_SIDE: usize = C1_SIDE / 2; // 13
const C2_SIDE: usize = P1_SIDE - 2; // 11
const P2_SIDE: usize = C2_SIDE / 2; // 5

/// Layer widths; everything else about the architecture is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncoderShape {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        EncoderShape { conv1: 8, conv2: 16, hidden1: 120, hidden2: 84 }
    }
}

impl EncoderShape {
    pub fn flat(&self) -> usize {
        self.conv2 * P2_SIDE * P2_SIDE
    }

    /// Parameter tensor shapes in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        vec![
            vec![self.conv1, 1, 3, 3],
            vec![self.conv1],
            vec![self.conv2, self.conv1, 3, 3],
            vec![self.conv2],
            vec![self.hidden1, self.flat()],
            vec![self.hidden1],
            vec![self.hidden2, self.hidden1],
            vec![self.hidden2],
            vec![2, self.hidden2],
            vec![2],
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn architecture_hash(&self) -> u64 {
        let desc = format!(
            "encoder:conv3x3({}),pool2,conv3x3({}),pool2,fc({}),fc({}),fc(2)",
            self.conv1, self.conv2, self.hidden1, self.hidden2
        );
        fnv1a64(desc.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderNet<T> {
    shape: EncoderShape,
    params: Vec<Tensor<T>>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderPass<T> {
    n: usize,
    cols1: Vec<T>,
    a1: Vec<T>,
    arg1: Vec<u32>,
    cols2: Vec<T>,
    a2: Vec<T>,
    arg2: Vec<u32>,
    flat: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    /// `[N×2]` pre-softmax outputs.
    pub logits: Vec<T>,
    /// `[N×2]` softmax outputs.
    pub probs: Vec<T>,
}

impl<T> EncoderPass<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl<T: Scalar> EncoderPass<T> {
    /// Probability of the positive reading for image `i`.
    pub fn positive(&self, i: usize) -> T {
        self.probs[2 * i]
    }
}

impl<T: Scalar> EncoderNet<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn xavier(shape: EncoderShape, rng: &mut Rng) -> EncoderNet<T> {
        let s = shape;
        let params = vec![
            xavier_uniform(&[s.conv1, 1, 3, 3], 9, s.conv1 * 9, rng),
            Tensor::zeros(&[s.conv1]),
            xavier_uniform(&[s.conv2, s.conv1, 3, 3], s.conv1 * 9, s.conv2 * 9, rng),
            Tensor::zeros(&[s.conv2]),
            xavier_uniform(&[s.hidden1, s.flat()], s.flat(), s.hidden1, rng),
            Tensor::zeros(&[s.hidden1]),
            xavier_uniform(&[s.hidden2, s.hidden1], s.hidden1, s.hidden2, rng),
            Tensor::zeros(&[s.hidden2]),
            xavier_uniform(&[2, s.hidden2], s.hidden2, 2, rng),
            Tensor::zeros(&[2]),
        ];
        EncoderNet { shape, params }
    }

    pub fn from_params(shape: EncoderShape, params: Vec<Tensor<T>>) -> Result<EncoderNet<T>, NnError> {
        let want = shape.param_shapes();
        if want.len() != params.len() || want.iter().zip(&params).any(|(w, p)| w.as_slice() != p.shape()) {
            return Err(NnError::Shape("parameter shapes do not match the encoder architecture".into()));
        }
        Ok(EncoderNet { shape, params })
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> EncoderNet<U> {
        EncoderNet { shape: self.shape, params: self.params.iter().map(Tensor::cast).collect() }
    }

    /// Forward pass over `images.len() / 784` glyphs stored back to back.
    pub fn forward(&self, images: &[f32]) -> Result<EncoderPass<T>, NnError> {
        if !images.len().is_multiple_of(IMAGE_PIXELS) {
            return Err(NnError::Shape(format!(
                "image buffer of {} values is not a whole number of 28×28 glyphs",
                images.len()
            )));
        }
        let n = images.len() / IMAGE_PIXELS;
        let s = self.shape;
        let p = &self.params;
        let x: Vec<T> = images.iter().map(|&v| T::from_f32(v).unwrap_or_else(T::zero)).collect();

        let cols1 = im2col3(&x, 1, n, IMAGE_SIDE, IMAGE_SIDE);
        let m1 = n * C1_SIDE * C1_SIDE;
        let mut a1 = conv_bias(p[1].data(), m1);
        gemm(s.conv1, 9, m1, T::one(), p[0].data(), Trans::No, &cols1, Trans::No, T::one(), &mut a1);
        relu_in_place(&mut a1);
        let (pool1, arg1) = maxpool2(&a1, s.conv1 * n, C1_SIDE, C1_SIDE);

        let cols2 = im2col3(&pool1, s.conv1, n, P1_SIDE, P1_SIDE);
        let m2 = n * C2_SIDE * C2_SIDE;
        let mut a2 = conv_bias(p[3].data(), m2);
        gemm(s.conv2, s.conv1 * 9, m2, T::one(), p[2].data(), Trans::No, &cols2, Trans::No, T::one(), &mut a2);
        relu_in_place(&mut a2);
        let (pool2, arg2) = maxpool2(&a2, s.conv2 * n, C2_SIDE, C2_SIDE);

        // [C, N, 5, 5] -> [N, C·25]
        let area = P2_SIDE * P2_SIDE;
        let mut flat = vec![T::zero(); n * s.flat()];
        for c in 0..s.conv2 {
            for i in 0..n {
                flat[i * s.flat() + c * area..][..area].copy_from_slice(&pool2[(c * n + i) * area..][..area]);
            }
        }

        let mut h1 = linear_forward(&flat, n, p[4].data(), p[5].data(), s.flat(), s.hidden1);
        relu_in_place(&mut h1);
        let mut h2 = linear_forward(&h1, n, p[6].data(), p[7].data(), s.hidden1, s.hidden2);
        relu_in_place(&mut h2);
        let logits = linear_forward(&h2, n, p[8].data(), p[9].data(), s.hidden2, 2);
        let probs = softmax2(&logits);
        Ok(EncoderPass { n, cols1, a1, arg1, cols2, a2, arg2, flat, h1, h2, logits, probs })
    }

    /// Positive-reading probabilities, processed in chunks to bound memory.
    pub fn positive_probs(&self, images: &[f32]) -> Result<Vec<T>, NnError> {
        const CHUNK: usize = 256 * IMAGE_PIXELS;
        let mut out = Vec::with_capacity(images.len() / IMAGE_PIXELS);
        for chunk in images.chunks(CHUNK) {
            let pass = self.forward(chunk)?;
            out.extend((0..pass.len()).map(|i| pass.positive(i)));
        }
        Ok(out)
    }

    /// Parameter gradients for upstream `∂L/∂logits` (`[N×2]`).
    pub fn backward(&self, pass: &EncoderPass<T>, d_logits: &[T]) -> Vec<Tensor<T>> {
        let mut grads = self.zero_grads();
        self.backward_into(pass, d_logits, &mut grads);
        grads
    }

    /// As [`EncoderNet::backward`], accumulating into `grads`.
    pub fn backward_into(&self, pass: &EncoderPass<T>, d_logits: &[T], grads: &mut [Tensor<T>]) {
        assert_eq!(d_logits.len(), 2 * pass.n, "upstream gradient length");
        let s = self.shape;
        let p = &self.params;
        let n = pass.n;
        let (g01, rest) = grads.split_at_mut(2);
        let (g23, rest) = rest.split_at_mut(2);
        let (g45, rest) = rest.split_at_mut(2);
        let (g67, g89) = rest.split_at_mut(2);

        let (w, b) = pair(g89);
        let mut dh2 = linear_backward(&pass.h2, n, p[8].data(), d_logits, s.hidden2, 2, w, b, true);
        relu_mask(&mut dh2, &pass.h2);
        let (w, b) = pair(g67);
        let mut dh1 = linear_backward(&pass.h1, n, p[6].data(), &dh2, s.hidden1, s.hidden2, w, b, true);
        relu_mask(&mut dh1, &pass.h1);
        let (w, b) = pair(g45);
        let dflat = linear_backward(&pass.flat, n, p[4].data(), &dh1, s.flat(), s.hidden1, w, b, true);

        let area = P2_SIDE * P2_SIDE;
        let mut dpool2 = vec![T::zero(); s.conv2 * n * area];
        for c in 0..s.conv2 {
            for i in 0..n {
                dpool2[(c * n + i) * area..][..area].copy_from_slice(&dflat[i * s.flat() + c * area..][..area]);
            }
        }
        let mut dz2 = maxpool2_backward(&dpool2, &pass.arg2, pass.a2.len());
        relu_mask(&mut dz2, &pass.a2);
        let m2 = n * C2_SIDE * C2_SIDE;
        let (w, b) = pair(g23);
        gemm(s.conv2, m2, s.conv1 * 9, T::one(), &dz2, Trans::No, &pass.cols2, Trans::Yes, T::one(), w);
        row_sums_into(&dz2, m2, b);
        let mut dcols2 = vec![T::zero(); s.conv1 * 9 * m2];
        gemm(s.conv1 * 9, s.conv2, m2, T::one(), p[2].data(), Trans::Yes, &dz2, Trans::No, T::zero(), &mut dcols2);
        let dpool1 = col2im3(&dcols2, s.conv1, n, P1_SIDE, P1_SIDE);

        let mut dz1 = maxpool2_backward(&dpool1, &pass.arg1, pass.a1.len());
        relu_mask(&mut dz1, &pass.a1);
        let m1 = n * C1_SIDE * C1_SIDE;
        let (w, b) = pair(g01);
        gemm(s.conv1, m1, 9, T::one(), &dz1, Trans::No, &pass.cols1, Trans::Yes, T::one(), w);
        row_sums_into(&dz1, m1, b);
    }
}

fn pair<T: Scalar>(g: &mut [Tensor<T>]) -> (&mut [T], &mut [T]) {
    let (w, b) = g.split_at_mut(1);
    (w[0].data_mut(), b[0].data_mut())
}

fn conv_bias<T: Scalar>(bias: &[T], cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(bias.len() * cols);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, cols));
    }
    out
}

fn row_sums_into<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    for (row, acc) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *acc += row.iter().copied().sum::<T>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ops::softmax_backward;
    use rand::{Rng as _, SeedableRng};

    fn images(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = Rng::seed_from_u64(seed);
        (0..n * IMAGE_PIXELS).map(|_| rng.gen::<f32>()).collect()
    }

    #[test]
    fn default_architecture_sizes() {
        let s = EncoderShape::default();
        assert_eq!(s.flat(), 400);
        assert_eq!(s.param_count(), 80 + 1168 + 48120 + 10164 + 170);
        let net: EncoderNet<f32> = EncoderNet::xavier(s, &mut Rng::seed_from_u64(0));
        assert_eq!(net.param_count(), s.param_count());
    }

    #[test]
    fn outputs_are_probabilities() {
        let net: EncoderNet<f32> = EncoderNet::xavier(EncoderShape::default(), &mut Rng::seed_from_u64(1));
        let pass = net.forward(&images(3, 2)).unwrap();
        assert_eq!(pass.len(), 3);
        for i in 0..3 {
            let (a, b) = (pass.probs[2 * i], pass.probs[2 * i + 1]);
            assert!(a > 0.0 && a < 1.0);
            assert!((a + b - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_partial_images() {
        let net: EncoderNet<f32> = EncoderNet::xavier(EncoderShape::default(), &mut Rng::seed_from_u64(1));
        assert!(net.forward(&[0.0; 100]).is_err());
    }

    #[test]
    fn batched_equals_single() {
        let net: EncoderNet<f64> = EncoderNet::xavier(EncoderShape::default(), &mut Rng::seed_from_u64(4));
        let imgs = images(3, 5);
        let all = net.forward(&imgs).unwrap();
        for i in 0..3 {
            let one = net.forward(&imgs[i * IMAGE_PIXELS..][..IMAGE_PIXELS]).unwrap();
            assert!((one.probs[0] - all.probs[2 * i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net: EncoderNet<f64> = EncoderNet::xavier(EncoderShape::default(), &mut Rng::seed_from_u64(6));
        let pass = net.forward(&images(2, 7)).unwrap();
        let grads = net.backward(&pass, &[0.0; 4]);
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    /// Central differences on a random subset of parameters of a scalar
    /// objective `Σ c_i · p_i(positive)`.
    #[test]
    #[allow(clippy::needless_range_loop)]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::seed_from_u64(11);
        let net: EncoderNet<f64> = EncoderNet::xavier(EncoderShape::default(), &mut rng);
        let imgs = images(3, 12);
        let coef = [0.7, -1.3, 0.4];
        let objective = |net: &EncoderNet<f64>| {
            let pass = net.forward(&imgs).unwrap();
            (0..3).map(|i| coef[i] * pass.positive(i)).sum::<f64>()
        };
        let pass = net.forward(&imgs).unwrap();
        let d_probs: Vec<f64> = (0..3).flat_map(|i| [coef[i], 0.0]).collect();
        let d_logits = softmax_backward(&pass.probs, &d_probs, 2);
        let grads = net.backward(&pass, &d_logits);
        let h = 1e-5;
        let mut checked = 0;
        for t in 0..net.params().len() {
            for _ in 0..4 {
                let k = rng.gen_range(0..net.params()[t].len());
                let mut plus = net.clone();
                plus.params_mut()[t].data_mut()[k] += h;
                let mut minus = net.clone();
                minus.params_mut()[t].data_mut()[k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = grads[t].data()[k];
                let scale = fd.abs().max(an.abs()).max(1e-7);
                assert!((fd - an).abs() / scale < 1e-4 || (fd - an).abs() < 1e-9, "tensor {t} index {k}: fd {fd} vs {an}");
                checked += 1;
            }
        }
        assert_eq!(checked, 40);
    }
}
