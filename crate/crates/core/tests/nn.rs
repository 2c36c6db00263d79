mod common;

use common::policy;
use evonesy::compile::{semantic_loss, CompiledLabel};
use evonesy::data::{glyph_template, synth_glyphs};
use evonesy::nn::ops::softmax_backward;
use evonesy::nn::{EncoderNet, EncoderShape, IMAGE_PIXELS};
use evonesy::rng::rng_from;
use evonesy::symbolic::Sign;
use evonesy::{Encoder, Encoder64};
use rand::Rng;

#[test]
fn fresh_encoder_is_undecided_on_average() {
    let mut rng = rng_from(1, &[0]);
    let net = Encoder::xavier(EncoderShape::default(), &mut rng);
    let images: Vec<f32> = (0..1000 * IMAGE_PIXELS).map(|_| rng.gen::<f32>()).collect();
    let p = net.positive_probs(&images).unwrap();
    let mean = p.iter().map(|&x| x as f64).sum::<f64>() / p.len() as f64;
    assert!((0.3..=0.7).contains(&mean), "{mean}");
    assert_eq!(net.param_count(), 59_702);
}

#[test]
fn identical_images_read_identically() {
    let net = Encoder::xavier(EncoderShape::default(), &mut rng_from(2, &[0]));
    let pool = synth_glyphs(3, 0.2, &mut rng_from(2, &[1]));
    let mut images = Vec::new();
    for id in [0u32, 4, 0, 1, 4] {
        images.extend_from_slice(pool.image(id));
    }
    let p = net.positive_probs(&images).unwrap();
    assert_eq!(p[0], p[2]);
    assert_eq!(p[1], p[4]);
    // batching does not change a reading
    assert_eq!(net.positive_probs(pool.image(1)).unwrap()[0], p[3]);
}

fn chain_loss(net: &EncoderNet<f64>, images: &[f32], graph: &evonesy::compile::WmcGraph) -> f64 {
    let p = net.positive_probs(images).unwrap();
    semantic_loss(graph, &p).loss
}

/// Semantic loss through WMC, softmax and the encoder, against central
/// differences on a spread of weights in every layer.
#[test]
#[allow(clippy::needless_range_loop)]
fn gradient_flows_through_the_whole_chain() {
    let target = policy("a1 implies head\n-a2, a3 implies -head\na4, -a1 implies head", 4);
    let compiled = CompiledLabel::build(&target, Sign::Positive);
    let mut rng = rng_from(3, &[0]);
    let mut net = Encoder64::xavier(EncoderShape::default(), &mut rng);
    let mut images = Vec::new();
    for d in [1, 2, 2, 1] {
        let mut img = glyph_template(d);
        for v in img.iter_mut() {
            *v = (*v + rng.gen_range(-0.1f32..0.1)).clamp(0.0, 1.0);
        }
        images.extend(img);
    }

    let pass = net.forward(&images).unwrap();
    let p: Vec<f64> = (0..4).map(|i| pass.positive(i)).collect();
    let sl = semantic_loss(&compiled.graph, &p);
    let mut d_probs = vec![0.0; 8];
    for i in 0..4 {
        d_probs[2 * i] = sl.grad[i];
    }
    let d_logits = softmax_backward(&pass.probs, &d_probs, 2);
    let grads = net.backward(&pass, &d_logits);

    let h = 1e-6;
    let mut checked = 0;
    for t in 0..grads.len() {
        let len = grads[t].len();
        for k in [0, len / 3, len / 2, len - 1] {
            let analytic = grads[t].data()[k];
            let orig = net.params()[t].data()[k];
            net.params_mut()[t].data_mut()[k] = orig + h;
            let up = chain_loss(&net, &images, &compiled.graph);
            net.params_mut()[t].data_mut()[k] = orig - h;
            let down = chain_loss(&net, &images, &compiled.graph);
            net.params_mut()[t].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = analytic.abs().max(numeric.abs());
            if scale < 1e-7 {
                continue;
            }
            assert!((analytic - numeric).abs() / scale <= 1e-3, "tensor {t} index {k}: {analytic} vs {numeric}");
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} non-trivial gradients");
}
