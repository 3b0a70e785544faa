//! Browser demo: image preprocessing, live training of a tiny ViT on
//! synthetic fire/nofire images, and a metrics explorer.
//!
//! Every export returns JSON text or raw bytes so the page needs no glue
//! beyond `JSON.parse`.

use serde::Serialize;
use vitforge_core::data::{
    batch_iter, decode_image, preprocess, resize_bilinear, synth, DecodePolicy, ImageRGB,
    InMemorySource, NormalizationSpec,
};
use vitforge_core::metrics::{
    classification_report, render_report, roc_auc, roc_curve, ConfusionMatrix, MetricsReport,
    ScoredPrediction,
};
use vitforge_core::model::{ViT, ViTConfig};
use vitforge_core::train::{
    curves_csv, evaluate, train_epoch, AdamHyper, AdamState, EpochLog, SamplePrediction,
    TrainConfig,
};
use vitforge_core::Tensor;
use wasm_bindgen::prelude::*;

pub const CLASS_NAMES: [&str; 2] = ["fire", "nofire"];
const CHANNELS: [&str; 3] = ["red", "green", "blue"];

fn json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize)]
struct ChannelStats {
    channel: &'static str,
    mean: f32,
    std: f32,
    min: f32,
    max: f32,
}

#[derive(Serialize)]
struct PreprocessSummary {
    original: [usize; 2],
    size: usize,
    center_raw: [u8; 3],
    center_normalized: [f32; 3],
    channels: Vec<ChannelStats>,
}

/// An image after decoding, resizing and normalization.
#[wasm_bindgen]
pub struct Preprocessed {
    rgba: Vec<u8>,
    summary: String,
}

#[wasm_bindgen]
impl Preprocessed {
    /// Resized pixels as RGBA, ready for `ImageData`.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

pub fn preprocess_bytes(bytes: &[u8], size: usize) -> vitforge_core::Result<Preprocessed> {
    let img = decode_image(bytes, "upload".as_ref())?;
    let spec = NormalizationSpec::default();
    let tensor = preprocess(&img, &spec, size)?;
    let resized = resize_bilinear(&img, size, size);
    let plane = size * size;
    let channels = CHANNELS
        .iter()
        .enumerate()
        .map(|(c, &channel)| {
            let v = &tensor.data()[c * plane..(c + 1) * plane];
            let mean = v.iter().map(|&x| x as f64).sum::<f64>() / plane as f64;
            let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / plane as f64;
            ChannelStats {
                channel,
                mean: mean as f32,
                std: var.sqrt() as f32,
                min: v.iter().copied().fold(f32::INFINITY, f32::min),
                max: v.iter().copied().fold(f32::NEG_INFINITY, f32::max),
            }
        })
        .collect();
    let (cy, cx) = (size / 2, size / 2);
    let center_raw = [0, 1, 2].map(|c| resized.get(cy, cx, c));
    let center_normalized = [0, 1, 2].map(|c| tensor.data()[c * plane + cy * size + cx]);
    let summary = PreprocessSummary {
        original: [img.height, img.width],
        size,
        center_raw,
        center_normalized,
        channels,
    };
    Ok(Preprocessed {
        rgba: to_rgba(&resized),
        summary: json(&summary),
    })
}

fn to_rgba(img: &ImageRGB) -> Vec<u8> {
    img.pixels
        .chunks_exact(3)
        .flat_map(|p| [p[0], p[1], p[2], 255])
        .collect()
}

/// Decodes a PNG or JPEG, resizes it to `size`×`size` and normalizes it.
#[wasm_bindgen]
pub fn preprocess_image(bytes: &[u8], size: usize) -> Result<Preprocessed, JsError> {
    preprocess_bytes(bytes, size).map_err(js_err)
}

/// A synthetic tiny-ViT training run advanced one epoch per call.
#[wasm_bindgen]
pub struct Trainer {
    model: ViT,
    state: AdamState,
    hyper: AdamHyper,
    train: InMemorySource,
    val: InMemorySource,
    previews: Vec<ImageRGB>,
    batch_size: usize,
    seed: u64,
    epochs: usize,
    logs: Vec<EpochLog>,
    val_predictions: Vec<SamplePrediction>,
}

fn synthetic_source(n: usize, size: usize, seed: u64) -> (InMemorySource, Vec<ImageRGB>) {
    let spec = NormalizationSpec::default();
    let set = synth::synthetic_set(n, size, seed);
    let previews = set.iter().take(8).map(|(img, _)| img.clone()).collect();
    let (images, labels) = set
        .into_iter()
        .map(|(img, label)| (preprocess(&img, &spec, size).expect("valid size"), label))
        .unzip();
    let source = InMemorySource::new(images, labels).expect("matching lengths");
    (source, previews)
}

#[derive(Serialize)]
struct EpochReport<'a> {
    log: &'a EpochLog,
    line: String,
    done: bool,
}

#[derive(Serialize)]
struct RocReport {
    positive: &'static str,
    auc: Option<f64>,
    points: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct Classification {
    class: &'static str,
    probabilities: Vec<(&'static str, f64)>,
}

impl Trainer {
    pub fn create(
        samples: usize,
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> vitforge_core::Result<Self> {
        let config = ViTConfig::tiny(2);
        let size = config.image_size;
        let (train, previews) = synthetic_source(samples.max(2), size, seed);
        let (val, _) = synthetic_source((samples / 4).max(2), size, seed ^ 0x5eed);
        let model = ViT::init(config, seed)?;
        let cfg = TrainConfig {
            learning_rate: lr,
            epochs: epochs.max(1),
            seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(Self {
            state: AdamState::new(&model.params),
            hyper: AdamHyper::from(&cfg),
            model,
            train,
            val,
            previews,
            batch_size: cfg.batch_size,
            seed,
            epochs: cfg.epochs,
            logs: Vec::new(),
            val_predictions: Vec::new(),
        })
    }

    /// Runs one training epoch and one validation pass.
    pub fn advance(&mut self) -> vitforge_core::Result<&EpochLog> {
        let e = self.logs.len();
        let batches = batch_iter(
            &self.train,
            self.batch_size,
            true,
            self.seed,
            e,
            DecodePolicy::Abort,
        );
        let tr = train_epoch(&mut self.model, batches, &mut self.state, &self.hyper)?;
        let batches = batch_iter(
            &self.val,
            self.batch_size,
            false,
            self.seed,
            e,
            DecodePolicy::Abort,
        );
        let ev = evaluate(&self.model, batches)?;
        self.val_predictions = ev.predictions;
        self.logs.push(EpochLog {
            epoch: e + 1,
            epochs: self.epochs,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: ev.stats.loss,
            val_acc: ev.stats.accuracy,
        });
        Ok(self.logs.last().expect("just pushed"))
    }

    pub fn roc_report(&self) -> String {
        let scored: Vec<ScoredPrediction> = self
            .val_predictions
            .iter()
            .map(|p| ScoredPrediction {
                truth: p.label,
                predicted: p.predicted(),
                score: p.probabilities()[0],
            })
            .collect();
        json(&RocReport {
            positive: CLASS_NAMES[0],
            auc: roc_auc(&scored, 0).ok(),
            points: roc_curve(&scored, 0).unwrap_or_default(),
        })
    }

    pub fn classify_bytes(&self, bytes: &[u8]) -> vitforge_core::Result<String> {
        let img = decode_image(bytes, "upload".as_ref())?;
        let size = self.model.config.image_size;
        let t = preprocess(&img, &NormalizationSpec::default(), size)?;
        let batch = Tensor::new(vec![1, 3, size, size], t.data().to_vec())?;
        let logits = self.model.forward(&batch)?.row(0).to_vec();
        let p = SamplePrediction {
            index: 0,
            label: 0,
            logits,
        };
        let probs = p.probabilities();
        Ok(json(&Classification {
            class: CLASS_NAMES[p.predicted()],
            probabilities: CLASS_NAMES.iter().copied().zip(probs).collect(),
        }))
    }
}

#[wasm_bindgen]
impl Trainer {
    /// `samples` synthetic training images (a quarter as many for validation).
    #[wasm_bindgen(constructor)]
    pub fn new(samples: usize, epochs: usize, lr: f64, seed: u32) -> Result<Trainer, JsError> {
        Self::create(samples, epochs, lr, seed as u64).map_err(js_err)
    }

    /// One epoch; returns `{log, line, done}`.
    pub fn step(&mut self) -> Result<String, JsError> {
        let log = self.advance().map_err(js_err)?.clone();
        Ok(json(&EpochReport {
            line: log.to_string(),
            done: log.epoch >= self.epochs,
            log: &log,
        }))
    }

    pub fn epochs_done(&self) -> usize {
        self.logs.len()
    }

    pub fn curves(&self) -> String {
        curves_csv(&self.logs)
    }

    /// ROC curve of the validation set with `fire` as the positive class.
    pub fn roc(&self) -> String {
        self.roc_report()
    }

    pub fn classify(&self, bytes: &[u8]) -> Result<String, JsError> {
        self.classify_bytes(bytes).map_err(js_err)
    }

    /// Number of preview training images.
    pub fn preview_count(&self) -> usize {
        self.previews.len()
    }

    pub fn preview_label(&self, index: usize) -> String {
        CLASS_NAMES[index % 2].to_string()
    }

    /// RGBA pixels of preview image `index`.
    pub fn preview(&self, index: usize) -> Vec<u8> {
        self.previews.get(index).map(to_rgba).unwrap_or_default()
    }

    pub fn image_size(&self) -> usize {
        self.model.config.image_size
    }
}

#[derive(Serialize)]
struct MetricsView {
    text: String,
    metrics: MetricsReport,
}

/// Classification report and confusion grid for the two-class counts
/// (rows are the true class: fire then nofire).
pub fn metrics_json(
    fire_as_fire: u32,
    fire_as_nofire: u32,
    nofire_as_fire: u32,
    nofire_as_nofire: u32,
) -> vitforge_core::Result<String> {
    let counts = vec![
        vec![fire_as_fire as u64, fire_as_nofire as u64],
        vec![nofire_as_fire as u64, nofire_as_nofire as u64],
    ];
    let cm = ConfusionMatrix::from_counts(counts, CLASS_NAMES.map(String::from).to_vec())?;
    let report = classification_report(&cm)?;
    Ok(json(&MetricsView {
        text: format!("{}\n{}", render_report(&report), cm.render()),
        metrics: MetricsReport::new(&report, &cm, None),
    }))
}

#[wasm_bindgen]
pub fn metrics_from_counts(
    fire_as_fire: u32,
    fire_as_nofire: u32,
    nofire_as_fire: u32,
    nofire_as_nofire: u32,
) -> Result<String, JsError> {
    metrics_json(
        fire_as_fire,
        fire_as_nofire,
        nofire_as_fire,
        nofire_as_nofire,
    )
    .map_err(js_err)
}
