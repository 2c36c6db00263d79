use crate::data::GlyphPool;
use crate::nn::{AdamConfig, AdamState, DecoderNet, EncoderNet, EncoderShape, NnError, IMAGE_PIXELS};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Images per encoder call when only probabilities are needed.
const INFERENCE_CHUNK: usize = 512;

/// Fixed perception used for oracle and diagnostic runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerceptionStub {
    /// Reads the glyph's true digit: 1.0 for digit 1, 0.0 for digit 2.
    Oracle,
    /// The same probability for every image.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub net: DecoderNet<T>,
    pub adam: AdamState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPerception<T> {
    pub encoder: EncoderNet<T>,
    pub adam: AdamState<T>,
    pub decoder: Option<DecoderState<T>>,
}

impl<T: Scalar> NeuralPerception<T> {
    /// Fresh Xavier weights and Adam state. The decoder, when requested,
    /// draws from the same stream after the encoder.
    pub fn xavier(shape: EncoderShape, adam: AdamConfig, with_decoder: bool, rng: &mut Rng) -> NeuralPerception<T> {
        let encoder = EncoderNet::xavier(shape, rng);
        let adam_state = AdamState::new(adam, encoder.params());
        let decoder = with_decoder.then(|| {
            let net = DecoderNet::xavier(shape, rng);
            let adam = AdamState::new(adam, net.params());
            DecoderState { net, adam }
        });
        NeuralPerception { encoder, adam: adam_state, decoder }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Perception<T> {
    Neural(Box<NeuralPerception<T>>),
    Stub(PerceptionStub),
}

impl<T: Scalar> Perception<T> {
    pub fn neural(n: NeuralPerception<T>) -> Perception<T> {
        Perception::Neural(Box::new(n))
    }

    pub fn as_neural(&self) -> Option<&NeuralPerception<T>> {
        match self {
            Perception::Neural(n) => Some(n),
            Perception::Stub(_) => None,
        }
    }

    /// Positive probability for each of a sequence of raw images.
    pub fn image_probs(&self, images: &[f32]) -> Result<Vec<f64>, NnError> {
        if !images.len().is_multiple_of(IMAGE_PIXELS) {
            return Err(NnError::Shape(format!("{} pixels is not a whole number of images", images.len())));
        }
        let n = images.len() / IMAGE_PIXELS;
        match self {
            Perception::Neural(net) => Ok(net.encoder.positive_probs(images)?.into_iter().map(|p| p.to_f64_lossy()).collect()),
            Perception::Stub(PerceptionStub::Constant(p)) => Ok(vec![*p; n]),
            Perception::Stub(PerceptionStub::Oracle) => {
                Err(NnError::Shape("the oracle stub needs glyph ids rather than raw images".into()))
            }
        }
    }

    /// Positive probability for each pool glyph in `ids`.
    pub fn glyph_probs(&self, pool: &GlyphPool, ids: &[u32]) -> Result<Vec<f64>, NnError> {
        match self {
            Perception::Neural(net) => {
                let mut out = Vec::with_capacity(ids.len());
                let mut buf = Vec::with_capacity(INFERENCE_CHUNK * IMAGE_PIXELS);
                for chunk in ids.chunks(INFERENCE_CHUNK) {
                    buf.clear();
                    for &id in chunk {
                        buf.extend_from_slice(pool.image(id));
                    }
                    out.extend(net.encoder.positive_probs(&buf)?.into_iter().map(|p| p.to_f64_lossy()));
                }
                Ok(out)
            }
            Perception::Stub(PerceptionStub::Constant(p)) => Ok(vec![*p; ids.len()]),
            Perception::Stub(PerceptionStub::Oracle) => {
                Ok(ids.iter().map(|&id| if pool.digit(id) == 1 { 1.0 } else { 0.0 }).collect())
            }
        }
    }
}
