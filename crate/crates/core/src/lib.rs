//! Neural-symbolic organisms: prioritized rule policies trained together
//! with a convolutional perception network, and evolved as a population.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the single-precision types used by the harness.

// `!(x >= y)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod compile;
pub mod data;
pub mod evolution;
pub mod harness;
pub mod nn;
pub mod organism;
pub mod pool;
pub mod rng;
pub mod scalar;
pub mod symbolic;

pub type Encoder = nn::EncoderNet<f32>;
pub type Decoder = nn::DecoderNet<f32>;
pub type NesyOrganism = organism::Organism<f32>;
pub type Baseline = baseline::BaselineNet<f32>;

/// Double-precision variants, used for gradient checks.
pub type Encoder64 = nn::EncoderNet<f64>;
pub type NesyOrganism64 = organism::Organism<f64>;
