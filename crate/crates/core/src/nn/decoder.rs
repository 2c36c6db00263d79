//! Mirrored transposed-convolution decoder used by the optional
//! reconstruction loss.
//!
//! `code(2) → FC(h2) → FC(h1) → FC(c2·5·5) → tconv5×5/2(c1) → 13×13 →
//! tconv4×4/2(1) → 28×28 → sigmoid`.

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderShape, IMAGE_PIXELS};
use super::init::xavier_uniform;
use super::ops::{linear_backward, linear_forward, relu_in_place, relu_mask};
use super::{NnError, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

const SEED_SIDE: usize = 5;
const MID_SIDE: usize = 13;
const K1: usize = 5;
const K2: usize = 4;
const STRIDE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderNet<T> {
    shape: EncoderShape,
    params: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct DecoderPass<T> {
    n: usize,
    code: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
    d3: Vec<T>,
    mid: Vec<T>,
    /// `[N×784]` reconstructions in `(0, 1)`.
    pub output: Vec<T>,
}

/// Reconstruction MSE with gradients for the decoder and for the code.
#[derive(Debug, Clone)]
pub struct Reconstruction<T> {
    pub loss: T,
    pub grads: Vec<Tensor<T>>,
    pub d_code: Vec<T>,
}

/// `x[N, cin, h, w] → y[N, cout, (h-1)·s + k, (w-1)·s + k]`, `w` stored
/// `[cin, cout, k, k]`.
#[allow(clippy::too_many_arguments)]
fn tconv_forward<T: Scalar>(x: &[T], n: usize, cin: usize, side: usize, w: &[T], b: &[T], cout: usize, k: usize) -> Vec<T> {
    let oside = (side - 1) * STRIDE + k;
    let mut y = vec![T::zero(); n * cout * oside * oside];
    for ni in 0..n {
        for co in 0..cout {
            y[(ni * cout + co) * oside * oside..][..oside * oside].fill(b[co]);
        }
        for ci in 0..cin {
            for i in 0..side {
                for j in 0..side {
                    let xv = x[((ni * cin + ci) * side + i) * side + j];
                    if xv == T::zero() {
                        continue;
                    }
                    for co in 0..cout {
                        let plane = (ni * cout + co) * oside * oside;
                        let kern = (ci * cout + co) * k * k;
                        for ky in 0..k {
                            let row = plane + (i * STRIDE + ky) * oside + j * STRIDE;
                            for kx in 0..k {
                                y[row + kx] += xv * w[kern + ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates weight/bias gradients and returns `∂L/∂x`.
#[allow(clippy::too_many_arguments)]
fn tconv_backward<T: Scalar>(
    x: &[T],
    n: usize,
    cin: usize,
    side: usize,
    w: &[T],
    cout: usize,
    k: usize,
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let oside = (side - 1) * STRIDE + k;
    let mut dx = vec![T::zero(); x.len()];
    for ni in 0..n {
        for co in 0..cout {
            db[co] += dy[(ni * cout + co) * oside * oside..][..oside * oside].iter().copied().sum::<T>();
        }
        for ci in 0..cin {
            for i in 0..side {
                for j in 0..side {
                    let xi = ((ni * cin + ci) * side + i) * side + j;
                    let xv = x[xi];
                    let mut acc = T::zero();
                    for co in 0..cout {
                        let plane = (ni * cout + co) * oside * oside;
                        let kern = (ci * cout + co) * k * k;
                        for ky in 0..k {
                            let row = plane + (i * STRIDE + ky) * oside + j * STRIDE;
                            for kx in 0..k {
                                let g = dy[row + kx];
                                acc += g * w[kern + ky * k + kx];
                                dw[kern + ky * k + kx] += g * xv;
                            }
                        }
                    }
                    dx[xi] = acc;
                }
            }
        }
    }
    dx
}

impl<T: Scalar> DecoderNet<T> {
    pub fn xavier(shape: EncoderShape, rng: &mut Rng) -> DecoderNet<T> {
        let s = shape;
        let params = vec![
            xavier_uniform(&[s.hidden2, 2], 2, s.hidden2, rng),
            Tensor::zeros(&[s.hidden2]),
            xavier_uniform(&[s.hidden1, s.hidden2], s.hidden2, s.hidden1, rng),
            Tensor::zeros(&[s.hidden1]),
            xavier_uniform(&[s.flat(), s.hidden1], s.hidden1, s.flat(), rng),
            Tensor::zeros(&[s.flat()]),
            xavier_uniform(&[s.conv2, s.conv1, K1, K1], s.conv2 * K1 * K1, s.conv1 * K1 * K1, rng),
            Tensor::zeros(&[s.conv1]),
            xavier_uniform(&[s.conv1, 1, K2, K2], s.conv1 * K2 * K2, K2 * K2, rng),
            Tensor::zeros(&[1]),
        ];
        DecoderNet { shape, params }
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Decodes `[N×2]` codes into `[N×784]` images.
    pub fn forward(&self, code: &[T]) -> DecoderPass<T> {
        let n = code.len() / 2;
        let s = self.shape;
        let p = &self.params;
        let mut d1 = linear_forward(code, n, p[0].data(), p[1].data(), 2, s.hidden2);
        relu_in_place(&mut d1);
        let mut d2 = linear_forward(&d1, n, p[2].data(), p[3].data(), s.hidden2, s.hidden1);
        relu_in_place(&mut d2);
        let mut d3 = linear_forward(&d2, n, p[4].data(), p[5].data(), s.hidden1, s.flat());
        relu_in_place(&mut d3);
        let mut mid = tconv_forward(&d3, n, s.conv2, SEED_SIDE, p[6].data(), p[7].data(), s.conv1, K1);
        relu_in_place(&mut mid);
        let mut output = tconv_forward(&mid, n, s.conv1, MID_SIDE, p[8].data(), p[9].data(), 1, K2);
        for v in output.iter_mut() {
            *v = T::one() / (T::one() + (-*v).exp());
        }
        debug_assert_eq!(output.len(), n * IMAGE_PIXELS);
        DecoderPass { n, code: code.to_vec(), d1, d2, d3, mid, output }
    }

    /// Gradients for `∂L/∂output`; returns parameter gradients and `∂L/∂code`.
    pub fn backward(&self, pass: &DecoderPass<T>, d_out: &[T]) -> (Vec<Tensor<T>>, Vec<T>) {
        let s = self.shape;
        let p = &self.params;
        let n = pass.n;
        let mut g: Vec<Tensor<T>> = self.params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        let dpre: Vec<T> = d_out
            .iter()
            .zip(&pass.output)
            .map(|(&d, &o)| d * o * (T::one() - o))
            .collect();
        let (g8, g9) = two(&mut g, 8);
        let mut dmid = tconv_backward(&pass.mid, n, s.conv1, MID_SIDE, p[8].data(), 1, K2, &dpre, g8, g9);
        relu_mask(&mut dmid, &pass.mid);
        let (g6, g7) = two(&mut g, 6);
        let mut dd3 = tconv_backward(&pass.d3, n, s.conv2, SEED_SIDE, p[6].data(), s.conv1, K1, &dmid, g6, g7);
        relu_mask(&mut dd3, &pass.d3);
        let (g4, g5) = two(&mut g, 4);
        let mut dd2 = linear_backward(&pass.d2, n, p[4].data(), &dd3, s.hidden1, s.flat(), g4, g5, true);
        relu_mask(&mut dd2, &pass.d2);
        let (g2, g3) = two(&mut g, 2);
        let mut dd1 = linear_backward(&pass.d1, n, p[2].data(), &dd2, s.hidden2, s.hidden1, g2, g3, true);
        relu_mask(&mut dd1, &pass.d1);
        let (g0, g1) = two(&mut g, 0);
        let d_code = linear_backward(&pass.code, n, p[0].data(), &dd1, 2, s.hidden2, g0, g1, true);
        (g, d_code)
    }

    /// Mean squared error between `decode(code)` and `images`, averaged
    /// over every pixel of every image.
    pub fn reconstruction_loss(&self, code: &[T], images: &[f32]) -> Result<Reconstruction<T>, NnError> {
        if code.len() * IMAGE_PIXELS != images.len() * 2 {
            return Err(NnError::Shape(format!(
                "{} codes for {} images",
                code.len() / 2,
                images.len() / IMAGE_PIXELS
            )));
        }
        let pass = self.forward(code);
        let (loss, d_out) = mse(&pass.output, images);
        let (grads, d_code) = self.backward(&pass, &d_out);
        Ok(Reconstruction { loss, grads, d_code })
    }
}

/// Mean squared error and its gradient with respect to `output`.
pub fn mse<T: Scalar>(output: &[T], target: &[f32]) -> (T, Vec<T>) {
    let count = T::from_usize(output.len().max(1)).expect("count");
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(output.len());
    for (&o, &t) in output.iter().zip(target) {
        let d = o - T::from_f32(t).expect("pixel");
        loss += d * d;
        grad.push((d + d) / count);
    }
    (loss / count, grad)
}

fn two<T: Scalar>(g: &mut [Tensor<T>], i: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = g[i..].split_at_mut(1);
    (a[0].data_mut(), b[0].data_mut())
}

/// Relative weights of the semantic and reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRatio {
    pub semantic: f64,
    pub reconstruction: f64,
}

impl LossRatio {
    pub const SEMANTIC_ONLY: LossRatio = LossRatio { semantic: 1.0, reconstruction: 0.0 };
    pub const EQUAL: LossRatio = LossRatio { semantic: 1.0, reconstruction: 1.0 };
    pub const RECONSTRUCTION_HEAVY: LossRatio = LossRatio { semantic: 1.0, reconstruction: 10_000.0 };

    pub fn uses_reconstruction(&self) -> bool {
        self.reconstruction != 0.0
    }

    pub fn combine(&self, semantic: f64, reconstruction: f64) -> f64 {
        if self.uses_reconstruction() {
            self.semantic * semantic + self.reconstruction * reconstruction
        } else {
            self.semantic * semantic
        }
    }
}

impl std::str::FromStr for LossRatio {
    type Err = String;

    /// Parses `a:b`, e.g. `1:10000`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected `semantic:reconstruction`, got `{s}`"))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
        let (semantic, reconstruction) = (parse(a)?, parse(b)?);
        if !(semantic >= 0.0 && reconstruction >= 0.0) {
            return Err("loss weights must be non-negative".into());
        }
        Ok(LossRatio { semantic, reconstruction })
    }
}

impl std::fmt::Display for LossRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.semantic, self.reconstruction)
    }
}
