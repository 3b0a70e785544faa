#![allow(dead_code)]

use rand::Rng;
use vitforge_core::data::rng::{seeded_rng, DataRng};
use vitforge_core::gradcheck::finite_difference_check_at;
use vitforge_core::model::{init_kind, InitKind, ViT, ViTConfig, ViTParams};
use vitforge_core::{Element, Tensor};

pub fn rng(seed: u64) -> DataRng {
    seeded_rng(seed)
}

/// Uniform entries in `[-scale, scale)`.
pub fn random_tensor<T: Element>(rng: &mut DataRng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.random_range(-scale..scale)))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `Σ r ⊙ y` accumulated in 64-bit.
pub fn weighted_sum<T: Element>(y: &Tensor<T>, r: &Tensor<T>) -> f64 {
    y.data()
        .iter()
        .zip(r.data())
        .map(|(a, b)| a.as_f64() * b.as_f64())
        .sum()
}

/// Preprocessed synthetic fire/nofire images at the tiny model's resolution.
pub fn synthetic_source(n: usize, seed: u64) -> vitforge_core::data::InMemorySource {
    use vitforge_core::data::{preprocess, synth, InMemorySource, NormalizationSpec};
    let spec = NormalizationSpec::default();
    let (images, labels) = synth::synthetic_set(n, 32, seed)
        .into_iter()
        .map(|(img, label)| (preprocess(&img, &spec, 32).unwrap(), label))
        .unzip();
    InMemorySource::new(images, labels).unwrap()
}

/// Parameters far from initialization so every path carries signal.
pub fn scrambled(config: &ViTConfig, seed: u64) -> ViT {
    let mut model = ViT::init(config.clone(), seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    for (name, t) in model.params.named_mut() {
        let noise: Tensor = random_tensor(&mut r, t.shape(), 0.5);
        *t = if init_kind(&name) == InitKind::Ones {
            noise.map(|v| 1.0 + 0.6 * v)
        } else {
            noise
        };
    }
    model
}

pub fn images(config: &ViTConfig, batch: usize, seed: u64) -> Tensor {
    let [c, h, w] = config.image_shape();
    random_tensor(&mut rng(seed), &[batch, c, h, w], 2.0)
}

/// Key-bias coordinates have an exactly zero gradient, so their numeric side is
/// pure roundoff divided by `2h`; smaller steps inflate it past the 1e-8 floor.
pub const STEP: f64 = 1e-3;

/// Largest relative error per parameter tensor over up to 20 random coordinates.
/// `analytic` comes from the model under test; the numeric side always runs the
/// forward pass in 64-bit.
pub fn end_to_end_errors(
    model64: &ViT<f64>,
    analytic: &ViTParams<f64>,
    x: &Tensor<f64>,
    up: &Tensor<f64>,
    h: f64,
) -> Vec<(String, f64)> {
    let mut r = rng(77);
    let count = model64.params.named().len();
    (0..count)
        .map(|k| {
            let (name, base) = {
                let named = model64.params.named();
                (named[k].0.clone(), named[k].1.clone())
            };
            let indices: Vec<usize> = if base.len() <= 20 {
                (0..base.len()).collect()
            } else {
                (0..20).map(|_| r.random_range(0..base.len())).collect()
            };
            let grad = analytic.named()[k].1.clone();
            let f = |t: &Tensor<f64>| {
                let mut m = model64.clone();
                *m.params.named_mut()[k].1 = t.clone();
                weighted_sum(&m.forward(x).unwrap(), up)
            };
            (
                name,
                finite_difference_check_at(f, &base, &grad, h, &indices),
            )
        })
        .collect()
}
