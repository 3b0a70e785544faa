//! Per-batch timing and an analytic memory account.
//!
//! Memory is computed from shapes, not measured: parameters, the two Adam
//! moment buffers and the activations one training batch caches, at four
//! bytes per scalar.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::data::{Batch, SampleSource};
use crate::error::{Error, Result};
use crate::model::{activation_floats_per_sample, param_count, Mode, ViT, ViTConfig};
use crate::train::{cross_entropy_loss, AdamHyper, AdamState, TrainConfig};

pub trait Clock {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
}

pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryAccount {
    pub parameter_floats: usize,
    pub adam_floats: usize,
    pub activation_floats: usize,
    pub bytes: usize,
}

impl MemoryAccount {
    pub fn megabytes(&self) -> f64 {
        self.bytes as f64 / (1u64 << 20) as f64
    }
}

pub fn memory_account(config: &ViTConfig, batch_size: usize) -> MemoryAccount {
    let parameter_floats = param_count(config);
    let adam_floats = 2 * parameter_floats;
    let activation_floats = batch_size * activation_floats_per_sample(config);
    MemoryAccount {
        parameter_floats,
        adam_floats,
        activation_floats,
        bytes: 4 * (parameter_floats + adam_floats + activation_floats),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSettings {
    pub batch_size: usize,
    pub warmup_batches: usize,
    pub timed_batches: usize,
}

impl Default for ProfileSettings {
    fn default() -> Self {
        Self {
            batch_size: 32,
            warmup_batches: 3,
            timed_batches: 10,
        }
    }
}

/// Per-batch durations in seconds, in timing order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingSamples {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub train_step: Vec<f64>,
    pub inference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub threads: usize,
    pub build: String,
}

impl Environment {
    pub fn current() -> Self {
        #[cfg(feature = "parallel")]
        let threads = rayon::current_num_threads();
        #[cfg(not(feature = "parallel"))]
        let threads = 1;
        Self {
            threads,
            build: if cfg!(debug_assertions) {
                "debug"
            } else {
                "release"
            }
            .into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    /// Training-mode forward pass, median seconds.
    pub forward_s_per_batch: f64,
    /// Loss and backward pass, median seconds.
    pub backward_s_per_batch: f64,
    /// Median full training step times the number of batches in one epoch.
    pub train_s_per_epoch: f64,
    /// Inference-mode forward pass, median seconds.
    pub inference_s_per_batch: f64,
    pub memory_mb: f64,
    pub memory: MemoryAccount,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub environment: Environment,
    pub samples: TimingSamples,
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

fn cyclic_batch(source: &dyn SampleSource, start: usize, size: usize) -> Result<Batch> {
    let indices: Vec<usize> = (start..start + size).map(|i| i % source.len()).collect();
    let samples = indices
        .iter()
        .map(|&i| source.load(i))
        .collect::<Result<Vec<_>>>()?;
    let labels = indices.iter().map(|&i| source.label(i)).collect();
    Batch::from_samples(samples, labels, indices)
}

/// Times forward, backward, a full training step and inference on batches
/// drawn cyclically from `source`. Training runs on a copy of `model`.
pub fn profile(
    model: &ViT,
    source: &dyn SampleSource,
    settings: &ProfileSettings,
    clock: &dyn Clock,
) -> Result<ProfileReport> {
    if source.is_empty() {
        return Err(Error::Config("profiling needs at least one sample".into()));
    }
    if settings.batch_size == 0 || settings.timed_batches == 0 {
        return Err(Error::Config(
            "batch size and timed batch count must be positive".into(),
        ));
    }
    let mut model = model.clone();
    let hyper = AdamHyper::from(&TrainConfig::default());
    let mut adam = AdamState::new(&model.params);
    let secs = |a: Duration, b: Duration| b.saturating_sub(a).as_secs_f64();
    let mut samples = TimingSamples::default();

    for i in 0..settings.warmup_batches + settings.timed_batches {
        let batch = cyclic_batch(source, i * settings.batch_size, settings.batch_size)?;
        let t0 = clock.now();
        let (logits, cache) = model.forward_with(&batch.images, Mode::Train)?;
        let t1 = clock.now();
        let (_, dlogits) = cross_entropy_loss(&logits, &batch.labels)?;
        let grads = model.backward(&cache, &dlogits)?;
        let t2 = clock.now();
        adam.step(&mut model.params, &grads, &hyper)?;
        let t3 = clock.now();
        drop(cache);
        model.forward(&batch.images)?;
        let t4 = clock.now();
        if i >= settings.warmup_batches {
            samples.forward.push(secs(t0, t1));
            samples.backward.push(secs(t1, t2));
            samples.train_step.push(secs(t0, t3));
            samples.inference.push(secs(t3, t4));
        }
    }

    let batches_per_epoch = source.len().div_ceil(settings.batch_size);
    let memory = memory_account(&model.config, settings.batch_size);
    Ok(ProfileReport {
        forward_s_per_batch: median(&samples.forward),
        backward_s_per_batch: median(&samples.backward),
        train_s_per_epoch: median(&samples.train_step) * batches_per_epoch as f64,
        inference_s_per_batch: median(&samples.inference),
        memory_mb: memory.megabytes(),
        memory,
        batch_size: settings.batch_size,
        batches_per_epoch,
        environment: Environment::current(),
        samples,
    })
}

pub fn render_profile(report: &ProfileReport) -> String {
    format!(
        "Memory Used: {:.2} MB\n\
         Forward Pass Time per Batch: {:.6} seconds\n\
         Backward Pass Time per Batch: {:.6} seconds\n\
         Training Time per Epoch: {:.2} seconds\n\
         Inference Time per Batch: {:.6} seconds\n",
        report.memory_mb,
        report.forward_s_per_batch,
        report.backward_s_per_batch,
        report.train_s_per_epoch,
        report.inference_s_per_batch
    )
}

/// One-line description of how the numbers were obtained.
pub fn render_profile_note(report: &ProfileReport) -> String {
    format!(
        "# memory: analytic account (parameters + Adam moments + activations of one batch of {}), \
         not a process measurement; timings: median of {} batches, {} thread(s), {} build\n",
        report.batch_size,
        report.samples.forward.len(),
        report.environment.threads,
        report.environment.build
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InMemorySource;
    use crate::tensor::Tensor;

    struct Frozen;

    impl Clock for Frozen {
        fn now(&self) -> Duration {
            Duration::ZERO
        }
    }

    fn tiny_source(n: usize) -> InMemorySource {
        let images = (0..n)
            .map(|i| Tensor::full(&[3, 32, 32], i as f32 * 0.1))
            .collect();
        InMemorySource::new(images, (0..n).map(|i| i % 2).collect()).unwrap()
    }

    #[test]
    fn median_handles_parity() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }

    #[test]
    fn activation_account_is_linear_in_batch() {
        let c = ViTConfig::tiny(2);
        let a = memory_account(&c, 8);
        let b = memory_account(&c, 16);
        assert_eq!(b.activation_floats, 2 * a.activation_floats);
        assert_eq!(a.parameter_floats, b.parameter_floats);
    }

    #[test]
    fn frozen_clock_renders_zero() {
        let model = ViT::init(ViTConfig::tiny(2), 0).unwrap();
        let settings = ProfileSettings {
            batch_size: 2,
            warmup_batches: 1,
            timed_batches: 10,
        };
        let r = profile(&model, &tiny_source(3), &settings, &Frozen).unwrap();
        assert_eq!(r.samples.forward.len(), 10);
        let text = render_profile(&r);
        assert!(text.contains("Forward Pass Time per Batch: 0.000000 seconds"));
        assert!(text.contains("Inference Time per Batch: 0.000000 seconds"));
        assert_eq!(r.batches_per_epoch, 2);
        let back: ProfileReport =
            serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_source_is_config_error() {
        let model = ViT::init(ViTConfig::tiny(2), 0).unwrap();
        let err = profile(
            &model,
            &InMemorySource::default(),
            &ProfileSettings::default(),
            &Frozen,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
