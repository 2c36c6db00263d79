//! End-to-end neural baseline: the shared encoder on every atom image, the
//! concatenated `2n` softmax outputs through `FC(64) → ReLU → FC(2)`, trained
//! with cross-entropy on the labels directly.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ExemplarSet, ExemplarSplits};
use crate::nn::ops::{linear_backward, linear_forward, relu_in_place, relu_mask, softmax2, softmax_backward};
use crate::nn::{xavier_uniform, AdamConfig, AdamState, EncoderNet, EncoderPass, EncoderShape, NnError, Tensor, IMAGE_PIXELS};
use crate::rng::{rng_from, Rng};
use crate::scalar::Scalar;
use crate::symbolic::Sign;

pub const HEAD_HIDDEN: usize = 64;
const STREAM_INIT: u64 = 1;
const STREAM_ORDER: u64 = 2;
const NO_ROW: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineNet<T> {
    pub encoder: EncoderNet<T>,
    n_atoms: usize,
    /// `[64, 2n]`, `[64]`, `[2, 64]`, `[2]`.
    head: Vec<Tensor<T>>,
}

struct HeadPass<T> {
    x: Vec<T>,
    h: Vec<T>,
    probs: Vec<T>,
}

impl<T: Scalar> BaselineNet<T> {
    pub fn xavier(shape: EncoderShape, n_atoms: usize, rng: &mut Rng) -> BaselineNet<T> {
        let encoder = EncoderNet::xavier(shape, rng);
        let d = 2 * n_atoms;
        let head = vec![
            xavier_uniform(&[HEAD_HIDDEN, d], d, HEAD_HIDDEN, rng),
            Tensor::zeros(&[HEAD_HIDDEN]),
            xavier_uniform(&[2, HEAD_HIDDEN], HEAD_HIDDEN, 2, rng),
            Tensor::zeros(&[2]),
        ];
        BaselineNet { encoder, n_atoms, head }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn head(&self) -> &[Tensor<T>] {
        &self.head
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.head.iter().map(Tensor::len).sum::<usize>()
    }

    fn head_forward(&self, x: Vec<T>, n: usize) -> HeadPass<T> {
        let d = 2 * self.n_atoms;
        let mut h = linear_forward(&x, n, self.head[0].data(), self.head[1].data(), d, HEAD_HIDDEN);
        relu_in_place(&mut h);
        let logits = linear_forward(&h, n, self.head[2].data(), self.head[3].data(), HEAD_HIDDEN, 2);
        HeadPass { x, h, probs: softmax2(&logits) }
    }

    /// Class probabilities (`[N×2]`, component 0 = positive head) for raw
    /// instances of `n_atoms` images each.
    pub fn predict(&self, images: &[f32]) -> Result<Vec<T>, NnError> {
        let per = self.n_atoms * IMAGE_PIXELS;
        if !images.len().is_multiple_of(per) {
            return Err(NnError::Shape(format!("{} pixels is not a whole number of instances", images.len())));
        }
        let pass = self.encoder.forward(images)?;
        let n = images.len() / per;
        Ok(self.head_forward(pass.probs, n).probs)
    }
}

/// Per-epoch metrics on every split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub encoder: EncoderShape,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn full(seed: u64) -> BaselineConfig {
        BaselineConfig { epochs: 100, batch_size: 2000, adam: AdamConfig::default(), encoder: EncoderShape::default(), seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub curves: Vec<EpochMetrics>,
    /// Training hit a non-finite loss or gradient and stopped early.
    pub diverged: bool,
}

impl BaselineRun {
    pub fn final_metrics(&self) -> Option<EpochMetrics> {
        self.curves.last().copied()
    }
}

fn target_index(label: Sign) -> usize {
    if label.is_positive() {
        0
    } else {
        1
    }
}

/// Encoder pass over the distinct glyphs of `batch` plus each slot's row.
fn encode_batch<T: Scalar>(net: &BaselineNet<T>, set: &ExemplarSet, batch: &[usize]) -> Result<(EncoderPass<T>, Vec<u32>), NnError> {
    let pool = set.pool();
    let mut row_of = vec![NO_ROW; pool.len()];
    let mut images = Vec::new();
    let mut rows = Vec::with_capacity(batch.len() * net.n_atoms);
    let mut distinct = 0u32;
    for &i in batch {
        for &g in set.glyphs(i) {
            if row_of[g as usize] == NO_ROW {
                row_of[g as usize] = distinct;
                distinct += 1;
                images.extend_from_slice(pool.image(g));
            }
            rows.push(row_of[g as usize]);
        }
    }
    Ok((net.encoder.forward(&images)?, rows))
}

fn gather<T: Scalar>(pass: &EncoderPass<T>, rows: &[u32]) -> Vec<T> {
    rows.iter().flat_map(|&r| [pass.probs[2 * r as usize], pass.probs[2 * r as usize + 1]]).collect()
}

/// Mean cross-entropy and accuracy over `batch`.
fn score<T: Scalar>(probs: &[T], set: &ExemplarSet, batch: &[usize]) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (k, &i) in batch.iter().enumerate() {
        let t = target_index(set.label(i));
        let p = probs[2 * k + t].to_f64_lossy();
        loss -= p.max(crate::compile::LOG_CLAMP).ln();
        if p > 0.5 || (p == 0.5 && t == 0) {
            correct += 1;
        }
    }
    (loss, correct)
}

/// Loss and accuracy over a whole split.
pub fn evaluate_baseline<T: Scalar>(net: &BaselineNet<T>, set: &ExemplarSet) -> Result<(f64, f64), NnError> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let all: Vec<usize> = (0..set.len()).collect();
    let (mut loss, mut correct) = (0.0, 0);
    for chunk in all.chunks(2048) {
        let (pass, rows) = encode_batch(net, set, chunk)?;
        let head = net.head_forward(gather(&pass, &rows), chunk.len());
        let (l, c) = score(&head.probs, set, chunk);
        loss += l;
        correct += c;
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

/// One optimizer step on `batch`; returns the batch's summed loss and hits.
fn step<T: Scalar>(net: &mut BaselineNet<T>, adam: &mut AdamState<T>, set: &ExemplarSet, batch: &[usize]) -> Result<(f64, usize), NnError> {
    let b = batch.len();
    let d = 2 * net.n_atoms;
    let (pass, rows) = encode_batch(net, set, batch)?;
    let head = net.head_forward(gather(&pass, &rows), b);
    let (loss, correct) = score(&head.probs, set, batch);
    if !loss.is_finite() {
        return Err(NnError::NonFinite("loss"));
    }
    // softmax + cross-entropy: ∂L/∂logits = (p - onehot) / B
    let inv_b = T::from_f64_lossy(1.0 / b as f64);
    let mut d_logits = head.probs.clone();
    for (k, &i) in batch.iter().enumerate() {
        d_logits[2 * k + target_index(set.label(i))] -= T::one();
    }
    d_logits.iter_mut().for_each(|v| *v *= inv_b);

    let mut head_grads: Vec<Tensor<T>> = net.head.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let (g01, g23) = head_grads.split_at_mut(2);
    let (w2, b2) = g23.split_at_mut(1);
    let mut dh = linear_backward(&head.h, b, net.head[2].data(), &d_logits, HEAD_HIDDEN, 2, w2[0].data_mut(), b2[0].data_mut(), true);
    relu_mask(&mut dh, &head.h);
    let (w1, b1) = g01.split_at_mut(1);
    let dx = linear_backward(&head.x, b, net.head[0].data(), &dh, d, HEAD_HIDDEN, w1[0].data_mut(), b1[0].data_mut(), true);

    let mut d_probs = vec![T::zero(); pass.probs.len()];
    for (slot, &r) in rows.iter().enumerate() {
        d_probs[2 * r as usize] += dx[2 * slot];
        d_probs[2 * r as usize + 1] += dx[2 * slot + 1];
    }
    let d_enc_logits = softmax_backward(&pass.probs, &d_probs, 2);
    let mut grads = net.encoder.backward(&pass, &d_enc_logits);
    grads.extend(head_grads);

    let mut params: Vec<Tensor<T>> = net.encoder.params().to_vec();
    params.extend(net.head.iter().cloned());
    adam.step(&mut params, &grads)?;
    let n_enc = net.encoder.params().len();
    for (dst, src) in net.encoder.params_mut().iter_mut().zip(&params[..n_enc]) {
        *dst = src.clone();
    }
    for (dst, src) in net.head.iter_mut().zip(&params[n_enc..]) {
        *dst = src.clone();
    }
    Ok((loss, correct))
}

/// Trains a fresh baseline and records metrics after every epoch.
pub fn train_baseline<T: Scalar>(config: &BaselineConfig, data: &ExemplarSplits) -> Result<(BaselineNet<T>, BaselineRun), NnError> {
    let mut net: BaselineNet<T> = BaselineNet::xavier(config.encoder, data.train.n_atoms(), &mut rng_from(config.seed, &[STREAM_INIT]));
    let mut all_params = net.encoder.params().to_vec();
    all_params.extend(net.head.iter().cloned());
    let mut adam = AdamState::new(config.adam, &all_params);
    let mut rng = rng_from(config.seed, &[STREAM_ORDER]);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut run = BaselineRun { curves: Vec::new(), diverged: false };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut correct) = (0.0, 0);
        for batch in order.chunks(config.batch_size.max(1)) {
            match step(&mut net, &mut adam, &data.train, batch) {
                Ok((l, c)) => {
                    loss += l;
                    correct += c;
                }
                Err(_) => {
                    run.diverged = true;
                    return Ok((net, run));
                }
            }
        }
        let n = data.train.len().max(1) as f64;
        let (val_loss, val_accuracy) = evaluate_baseline(&net, &data.val)?;
        let (test_loss, test_accuracy) = evaluate_baseline(&net, &data.test)?;
        run.curves.push(EpochMetrics {
            epoch,
            train_loss: loss / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
            test_loss,
            test_accuracy,
        });
    }
    Ok((net, run))
}
