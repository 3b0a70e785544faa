use std::fmt;

use serde::{Deserialize, Serialize};

use super::adam::{AdamHyper, AdamState};
use super::checkpoint::{Checkpoint, RngState};
use super::config::TrainConfig;
use super::loss::cross_entropy_loss;
use crate::data::{batch_iter, Batch, DecodePolicy, SampleSource};
use crate::error::{Error, Result};
use crate::model::{Mode, ViT};
use crate::tensor::Tensor;

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub epochs: usize,
    pub train_loss: f64,
    /// Percent.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Epoch [{}/{}] -> Train Loss: {:.4}, Train Acc: {:.2}% | Val Loss: {:.4}, Val Acc: {:.2}%",
            self.epoch, self.epochs, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

/// Header of the per-epoch curves file.
pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

/// Plot-ready CSV of the training curves, one row per epoch.
pub fn curves_csv(logs: &[EpochLog]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.epoch, l.train_loss, l.train_acc, l.val_loss, l.val_acc
        ));
    }
    out
}

/// The evaluation summary line, e.g. `Test Loss: 0.1237, Test Accuracy: 96.10%`.
pub fn test_line(loss: f64, accuracy: f64) -> String {
    format!("Test Loss: {loss:.4}, Test Accuracy: {accuracy:.2}%")
}

/// Sample-weighted loss and accuracy over one pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub loss: f64,
    /// Percent.
    pub accuracy: f64,
    pub samples: usize,
}

/// Raw model output for one evaluated sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub index: usize,
    pub label: usize,
    pub logits: Vec<f32>,
}

impl SamplePrediction {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }

    /// Softmax of the logits.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self
            .logits
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = self
            .logits
            .iter()
            .map(|&l| (l as f64 - max).exp())
            .collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

/// Index of the first maximum.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Default)]
struct Accumulator {
    /// Mean loss and size of each batch.
    batches: Vec<(f64, usize)>,
    correct: usize,
    samples: usize,
}

impl Accumulator {
    fn add(&mut self, batch_loss: f64, logits: &Tensor, labels: &[usize]) {
        self.batches.push((batch_loss, labels.len()));
        self.samples += labels.len();
        self.correct += labels
            .iter()
            .enumerate()
            .filter(|&(i, &l)| argmax(logits.row(i)) == l)
            .count();
    }

    /// Weights are `n_b / N`, so a single batch reproduces its own loss exactly.
    fn finish(self) -> EpochStats {
        if self.samples == 0 {
            return EpochStats::default();
        }
        let total = self.samples as f64;
        EpochStats {
            loss: self
                .batches
                .iter()
                .map(|&(l, n)| l * (n as f64 / total))
                .sum(),
            accuracy: 100.0 * self.correct as f64 / total,
            samples: self.samples,
        }
    }
}

fn at_batch(i: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric { what } => Error::Numeric {
            what: format!("{what} (batch {i})"),
        },
        other => other,
    }
}

fn check_loss(loss: f64, i: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric {
            what: format!("loss (batch {i})"),
        })
    }
}

/// Forward/loss/backward/Adam over every batch.
pub fn train_epoch(
    model: &mut ViT,
    batches: impl Iterator<Item = Result<Batch>>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<EpochStats> {
    let mut acc = Accumulator::default();
    for (i, batch) in batches.enumerate() {
        let batch = batch?;
        let (logits, cache) = model
            .forward_with(&batch.images, Mode::Train)
            .map_err(at_batch(i))?;
        let (loss, dlogits) = cross_entropy_loss(&logits, &batch.labels)?;
        check_loss(loss, i)?;
        let grads = model.backward(&cache, &dlogits)?;
        state.step(&mut model.params, &grads, hyper)?;
        acc.add(loss, &logits, &batch.labels);
    }
    Ok(acc.finish())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub stats: EpochStats,
    pub predictions: Vec<SamplePrediction>,
}

/// Loss, accuracy and per-sample logits without touching the parameters.
pub fn evaluate(model: &ViT, batches: impl Iterator<Item = Result<Batch>>) -> Result<Evaluation> {
    let mut acc = Accumulator::default();
    let mut predictions = Vec::new();
    for (i, batch) in batches.enumerate() {
        let batch = batch?;
        let logits = model.forward(&batch.images).map_err(at_batch(i))?;
        let (loss, _) = cross_entropy_loss(&logits, &batch.labels)?;
        check_loss(loss, i)?;
        acc.add(loss, &logits, &batch.labels);
        for (r, (&index, &label)) in batch.indices.iter().zip(&batch.labels).enumerate() {
            predictions.push(SamplePrediction {
                index,
                label,
                logits: logits.row(r).to_vec(),
            });
        }
    }
    Ok(Evaluation {
        stats: acc.finish(),
        predictions,
    })
}

pub enum Phase<'a> {
    Train {
        state: &'a mut AdamState,
        hyper: AdamHyper,
    },
    Eval,
}

/// One pass in either mode; eval mode leaves `model` untouched.
pub fn run_epoch(
    model: &mut ViT,
    batches: impl Iterator<Item = Result<Batch>>,
    phase: Phase<'_>,
) -> Result<EpochStats> {
    match phase {
        Phase::Train { state, hyper } => train_epoch(model, batches, state, &hyper),
        Phase::Eval => Ok(evaluate(model, batches)?.stats),
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub logs: Vec<EpochLog>,
    /// Final-epoch model with optimizer state.
    pub checkpoint: Checkpoint,
    /// Best validation-accuracy epoch, when [`TrainConfig::save_best`] is set.
    pub best: Option<Checkpoint>,
}

/// Path of the best-validation checkpoint next to `path`.
pub fn best_checkpoint_path(path: &std::path::Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("vitf");
    path.with_file_name(format!("{stem}.best.{ext}"))
}

/// The train/validate loop: per epoch one shuffled training pass, one
/// sequential validation pass and one [`EpochLog`] handed to `on_epoch`.
pub fn fit(
    model: &mut ViT,
    train: &dyn SampleSource,
    val: &dyn SampleSource,
    cfg: &TrainConfig,
    class_names: &[String],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty train and val sets (got {} and {})",
            train.len(),
            val.len()
        )));
    }
    let hyper = AdamHyper::from(cfg);
    let mut state = AdamState::new(&model.params);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Checkpoint)> = None;
    let snapshot = |model: &ViT, epoch: usize, adam: Option<AdamState>| Checkpoint {
        config: model.config.clone(),
        train_config: cfg.clone(),
        epoch,
        rng_state: RngState {
            seed: cfg.seed,
            next_epoch: epoch,
        },
        class_names: class_names.to_vec(),
        params: model.params.clone(),
        adam,
    };

    for e in 0..cfg.epochs {
        let train_batches =
            batch_iter(train, cfg.batch_size, true, cfg.seed, e, DecodePolicy::Skip);
        let tr = train_epoch(model, train_batches, &mut state, &hyper)?;
        let val_batches = batch_iter(val, cfg.batch_size, false, cfg.seed, e, DecodePolicy::Skip);
        let va = evaluate(model, val_batches)?.stats;
        let log = EpochLog {
            epoch: e + 1,
            epochs: cfg.epochs,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_loss: va.loss,
            val_acc: va.accuracy,
        };
        on_epoch(&log);
        if cfg.save_best && best.as_ref().is_none_or(|(acc, _)| va.accuracy > *acc) {
            best = Some((va.accuracy, snapshot(model, e + 1, None)));
        }
        logs.push(log);
    }

    let checkpoint = snapshot(model, cfg.epochs, Some(state));
    let best = best.map(|(_, c)| c);
    if let Some(path) = &cfg.checkpoint_path {
        checkpoint.save(path)?;
        if let Some(b) = &best {
            b.save(&best_checkpoint_path(path))?;
        }
    }
    Ok(FitOutcome {
        logs,
        checkpoint,
        best,
    })
}
