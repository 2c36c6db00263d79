//! Abductive training: semantic loss through the compiled label graphs.
//!
//! A batch references few distinct glyphs compared to its `batch × n`
//! atom slots, so the encoder runs once per distinct glyph and upstream
//! gradients are summed per glyph before the backward pass. This is exact:
//! the gradient of a sum over slots equals the sum of per-slot gradients.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Organism, Perception, TrainStatus};
use crate::compile::{semantic_loss, CompilationCache, CompiledLabel, LOG_CLAMP};
use crate::data::ExemplarSet;
use crate::nn::{
    gumbel_softmax, gumbel_softmax_backward, DecoderNet, EncoderNet, EncoderPass, LossRatio, NnError, Tensor,
    GUMBEL_TEMPERATURE, IMAGE_PIXELS,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::symbolic::Policy;

const FORWARD_CHUNK: usize = 512;
const NO_ROW: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss_ratio: LossRatio,
    /// Reshuffle instance order every epoch.
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 5, batch_size: 2000, loss_ratio: LossRatio::SEMANTIC_ONLY, shuffle: true }
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub semantic: f64,
    pub reconstruction: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    /// Optimizer steps taken.
    pub steps: u64,
    pub status: TrainStatus,
}

impl TrainReport {
    pub fn last(&self) -> Option<EpochLoss> {
        self.epochs.last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome<T> {
    pub semantic: f64,
    pub reconstruction: f64,
    pub loss: f64,
    /// `None` when the batch carries no gradient signal at all.
    pub encoder_grads: Option<Vec<Tensor<T>>>,
    pub decoder_grads: Option<Vec<Tensor<T>>>,
}

fn fetch_graphs(policy: &Policy, cache: &mut CompilationCache, set: &ExemplarSet, batch: &[usize]) -> Vec<Arc<CompiledLabel>> {
    batch.iter().map(|&i| cache.get_or_compile(policy, set.label(i))).collect()
}

fn constant_loss(c: &CompiledLabel) -> f64 {
    if c.graph.is_unsatisfiable() {
        -LOG_CLAMP.ln()
    } else {
        0.0
    }
}

/// Semantic (and optional reconstruction) loss of one batch and its
/// gradients.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradients<T: Scalar>(
    encoder: &EncoderNet<T>,
    decoder: Option<&DecoderNet<T>>,
    ratio: LossRatio,
    policy: &Policy,
    cache: &mut CompilationCache,
    set: &ExemplarSet,
    batch: &[usize],
    rng: &mut Rng,
) -> Result<BatchOutcome<T>, NnError> {
    let b = batch.len().max(1) as f64;
    let n = set.n_atoms();
    let graphs = fetch_graphs(policy, cache, set, batch);
    let decoder = decoder.filter(|_| ratio.uses_reconstruction());
    if decoder.is_none() && graphs.iter().all(|g| g.graph.is_empty()) {
        let semantic = graphs.iter().map(|g| constant_loss(g)).sum::<f64>() / b;
        return Ok(BatchOutcome { semantic, reconstruction: 0.0, loss: ratio.combine(semantic, 0.0), encoder_grads: None, decoder_grads: None });
    }

    let pool = set.pool();
    let mut row_of = vec![NO_ROW; pool.len()];
    let mut ids = Vec::new();
    for &i in batch {
        for &g in set.glyphs(i) {
            if row_of[g as usize] == NO_ROW {
                row_of[g as usize] = ids.len() as u32;
                ids.push(g);
            }
        }
    }
    let mut passes: Vec<EncoderPass<T>> = Vec::new();
    let mut buf = Vec::with_capacity(FORWARD_CHUNK.min(ids.len()) * IMAGE_PIXELS);
    for chunk in ids.chunks(FORWARD_CHUNK) {
        buf.clear();
        for &g in chunk {
            buf.extend_from_slice(pool.image(g));
        }
        passes.push(encoder.forward(&buf)?);
    }
    let row = |r: usize| (&passes[r / FORWARD_CHUNK], r % FORWARD_CHUNK);
    let p: Vec<f64> = (0..ids.len())
        .map(|r| {
            let (pass, k) = row(r);
            pass.positive(k).to_f64_lossy()
        })
        .collect();

    let mut dp = vec![0.0f64; ids.len()];
    let mut semantic = 0.0;
    let mut probs = vec![0.0f64; n];
    let mut rows = vec![0usize; n];
    for (&i, g) in batch.iter().zip(&graphs) {
        if g.graph.is_empty() {
            semantic += constant_loss(g);
            continue;
        }
        for (k, &glyph) in set.glyphs(i).iter().enumerate() {
            rows[k] = row_of[glyph as usize] as usize;
            probs[k] = p[rows[k]];
        }
        let sl = semantic_loss(&g.graph, &probs);
        semantic += sl.loss;
        for (k, d) in sl.grad.iter().enumerate() {
            dp[rows[k]] += d;
        }
    }
    semantic /= b;

    // ∂p/∂z0 = p(1-p) = -∂p/∂z1
    let mut d_logits: Vec<f64> = Vec::with_capacity(2 * ids.len());
    for (r, &g) in dp.iter().enumerate() {
        let d = ratio.semantic * g / b * p[r] * (1.0 - p[r]);
        d_logits.push(d);
        d_logits.push(-d);
    }

    let mut reconstruction = 0.0;
    let mut decoder_grads = None;
    if let Some(dec) = decoder {
        let mut mult = vec![0usize; ids.len()];
        for &i in batch {
            for &g in set.glyphs(i) {
                mult[row_of[g as usize] as usize] += 1;
            }
        }
        let tau = T::from_f64_lossy(GUMBEL_TEMPERATURE);
        let samples: Vec<_> = (0..ids.len())
            .map(|r| {
                let (pass, k) = row(r);
                gumbel_softmax([pass.logits[2 * k], pass.logits[2 * k + 1]], tau, rng)
            })
            .collect();
        let code: Vec<T> = samples.iter().flat_map(|s| s.y).collect();
        let dpass = dec.forward(&code);
        let slots = b * n as f64;
        let mut d_out = vec![T::zero(); dpass.output.len()];
        for (r, &g) in ids.iter().enumerate() {
            let w = mult[r] as f64 / slots;
            let target = pool.image(g);
            let out = &dpass.output[r * IMAGE_PIXELS..][..IMAGE_PIXELS];
            let mut se = 0.0;
            for (j, (&o, &t)) in out.iter().zip(target).enumerate() {
                let diff = o.to_f64_lossy() - t as f64;
                se += diff * diff;
                d_out[r * IMAGE_PIXELS + j] = T::from_f64_lossy(ratio.reconstruction * w * 2.0 * diff / IMAGE_PIXELS as f64);
            }
            reconstruction += w * se / IMAGE_PIXELS as f64;
        }
        let (grads, d_code) = dec.backward(&dpass, &d_out);
        for (r, s) in samples.iter().enumerate() {
            let dz = gumbel_softmax_backward(s, [d_code[2 * r], d_code[2 * r + 1]]);
            d_logits[2 * r] += dz[0].to_f64_lossy();
            d_logits[2 * r + 1] += dz[1].to_f64_lossy();
        }
        decoder_grads = Some(grads);
    }

    let loss = ratio.combine(semantic, reconstruction);
    let encoder_grads = if decoder_grads.is_none() && d_logits.iter().all(|&d| d == 0.0) {
        None
    } else {
        let mut grads = encoder.zero_grads();
        for (c, pass) in passes.iter().enumerate() {
            let lo = 2 * c * FORWARD_CHUNK;
            let up: Vec<T> = d_logits[lo..lo + 2 * pass.len()].iter().map(|&d| T::from_f64_lossy(d)).collect();
            encoder.backward_into(pass, &up, &mut grads);
        }
        Some(grads)
    };
    Ok(BatchOutcome { semantic, reconstruction, loss, encoder_grads, decoder_grads })
}

fn stub_batch_loss(perception: &Perception<impl Scalar>, policy: &Policy, cache: &mut CompilationCache, set: &ExemplarSet, batch: &[usize]) -> Result<f64, NnError> {
    let graphs = fetch_graphs(policy, cache, set, batch);
    let mut total = 0.0;
    for (&i, g) in batch.iter().zip(&graphs) {
        let probs = perception.glyph_probs(set.pool(), set.glyphs(i))?;
        total += semantic_loss(&g.graph, &probs).loss;
    }
    Ok(total / batch.len().max(1) as f64)
}

pub(super) fn train<T: Scalar>(org: &mut Organism<T>, set: &ExemplarSet, config: &TrainConfig, rng: &mut Rng) -> TrainReport {
    let mut report = TrainReport { epochs: Vec::new(), steps: 0, status: TrainStatus::Ok };
    let mut order: Vec<usize> = (0..set.len()).collect();
    let batch_size = config.batch_size.max(1);
    'epochs: for _ in 0..config.epochs {
        if config.shuffle {
            order.shuffle(rng);
        }
        let mut sums = (0.0, 0.0, 0.0);
        for batch in order.chunks(batch_size) {
            let w = batch.len() as f64 / set.len() as f64;
            let outcome = match &mut org.perception {
                Perception::Stub(_) => stub_batch_loss(&org.perception, &org.policy, &mut org.cache, set, batch)
                    .map(|l| (l, 0.0, l)),
                Perception::Neural(net) => {
                    let dec = net.decoder.as_ref().map(|d| &d.net);
                    batch_gradients(&net.encoder, dec, config.loss_ratio, &org.policy, &mut org.cache, set, batch, rng).and_then(|o| {
                        if !o.loss.is_finite() {
                            return Err(NnError::NonFinite("loss"));
                        }
                        if let Some(g) = &o.encoder_grads {
                            net.adam.step(net.encoder.params_mut(), g)?;
                            report.steps += 1;
                        }
                        if let (Some(g), Some(d)) = (&o.decoder_grads, net.decoder.as_mut()) {
                            d.adam.step(d.net.params_mut(), g)?;
                        }
                        Ok((o.semantic, o.reconstruction, o.loss))
                    })
                }
            };
            match outcome {
                Ok((s, r, t)) => {
                    sums.0 += w * s;
                    sums.1 += w * r;
                    sums.2 += w * t;
                }
                Err(_) => {
                    report.status = TrainStatus::Diverged;
                    break 'epochs;
                }
            }
        }
        report.epochs.push(EpochLoss { semantic: sums.0, reconstruction: sums.1, total: sums.2 });
    }
    org.status = report.status;
    report
}
