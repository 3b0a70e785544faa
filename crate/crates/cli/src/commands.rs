use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use vitforge_core::data::{
    batch_iter, load_image, preprocess, scan_dataset, synth, DecodePolicy, ManifestSource,
    NormalizationSpec, SampleSource, Split,
};
use vitforge_core::metrics::{
    classification_report, confusion_matrix, render_report, roc_auc, MetricsReport,
    ScoredPrediction,
};
use vitforge_core::model::{ViT, ViTConfig};
use vitforge_core::profiler::{
    profile as run_profile, render_profile, render_profile_note, MonotonicClock, ProfileSettings,
};
use vitforge_core::train::{
    curves_csv, evaluate, fit, test_line, Checkpoint, EpochLog, SamplePrediction,
};
use vitforge_core::{Error, Tensor};

use crate::config::RunConfig;
use crate::sources::{load_manifest, open_split, SyntheticSource};
use crate::{EvalArgs, PredictArgs, ProfileArgs, ScanArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "model.vitf";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct ClassCount<'a> {
    class: &'a str,
    count: usize,
}

#[derive(Serialize)]
struct SplitSummary<'a> {
    split: Split,
    manifest: PathBuf,
    total: usize,
    classes: Vec<ClassCount<'a>>,
}

pub fn scan(args: &ScanArgs, json: bool) -> Result<()> {
    let manifests = Split::ALL
        .into_iter()
        .filter(|s| args.data.join(s.as_str()).is_dir())
        .map(|s| scan_dataset(&args.data, s))
        .collect::<Result<Vec<_>, _>>()?;
    if manifests.is_empty() {
        return Err(Error::Config(format!(
            "no train/, val/ or test/ directory under {}; expected <root>/<split>/<class>/<images>",
            args.data.display()
        ))
        .into());
    }
    create_dir(&args.out)?;
    let mut summaries = Vec::new();
    for m in &manifests {
        let path = args.out.join(format!("{}.json", m.split));
        m.save(&path)?;
        let classes = m
            .class_names
            .iter()
            .zip(m.class_counts())
            .map(|(class, count)| ClassCount { class, count })
            .collect();
        summaries.push(SplitSummary {
            split: m.split,
            manifest: path,
            total: m.len(),
            classes,
        });
    }
    if json {
        print!("{}", pretty(&summaries));
    } else {
        for s in &summaries {
            let counts: Vec<String> = s
                .classes
                .iter()
                .map(|c| format!("{} {}", c.class, c.count))
                .collect();
            println!("{}: {}", s.split, counts.join(", "));
        }
    }
    Ok(())
}

fn resolve_run_config(args: &TrainArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &args.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &args.model {
        cfg.model = v.clone();
    }
    if let Some(v) = &args.out {
        cfg.output = v.clone();
    }
    let t = &mut cfg.train;
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lr {
        t.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    t.save_best |= args.save_best;
    t.checkpoint_path = Some(cfg.output.join(CHECKPOINT_FILE));
    t.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    checkpoint: &'a Path,
    best_checkpoint: Option<PathBuf>,
    curves: PathBuf,
    epochs: &'a [EpochLog],
}

pub fn train(args: &TrainArgs, json: bool) -> Result<()> {
    let cfg = resolve_run_config(args)?;
    let data = cfg.data.clone().ok_or_else(|| {
        Error::Config("no dataset given: pass --data or set `data` in the config".into())
    })?;
    let train_m = load_manifest(&data, Split::Train)?;
    let val_m = load_manifest(&data, Split::Val)?;
    if train_m.class_names != val_m.class_names {
        return Err(Error::Config(format!(
            "train classes {:?} differ from val classes {:?}",
            train_m.class_names, val_m.class_names
        ))
        .into());
    }
    let names = train_m.class_names.clone();
    let model_cfg = ViTConfig::by_name(&cfg.model, names.len())?;

    create_dir(&cfg.output)?;
    write_file(&cfg.output.join("run_config.json"), cfg.to_json())?;

    let size = model_cfg.image_size;
    let train_src = ManifestSource::new(train_m, size, NormalizationSpec::default());
    let val_src = ManifestSource::new(val_m, size, NormalizationSpec::default());
    let mut model = ViT::init(model_cfg, cfg.train.seed)?;
    let outcome = fit(
        &mut model,
        &train_src,
        &val_src,
        &cfg.train,
        &names,
        |log| {
            if !json {
                println!("{log}");
            }
        },
    )?;

    let curves = cfg.output.join("curves.csv");
    write_file(&curves, curves_csv(&outcome.logs))?;
    let jsonl: String = outcome
        .logs
        .iter()
        .map(|l| serde_json::to_string(l).expect("serializable") + "\n")
        .collect();
    write_file(&cfg.output.join("epochs.jsonl"), jsonl)?;

    let checkpoint = cfg.train.checkpoint_path.as_deref().expect("set above");
    let best = outcome
        .best
        .is_some()
        .then(|| vitforge_core::train::best_checkpoint_path(checkpoint));
    if json {
        print!(
            "{}",
            pretty(&TrainSummary {
                checkpoint,
                best_checkpoint: best,
                curves,
                epochs: &outcome.logs,
            })
        );
    } else {
        println!("Saved checkpoint to {}", checkpoint.display());
        if let Some(b) = best {
            println!("Saved best-validation checkpoint to {}", b.display());
        }
        println!("Wrote curves to {}", curves.display());
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(Checkpoint, ViT), Error> {
    let ckpt = Checkpoint::load(path)?;
    let model = ViT::new(ckpt.config.clone(), ckpt.params.clone())?;
    Ok((ckpt, model))
}

/// Index of the class whose probability serves as the ROC score.
fn positive_class(names: &[String]) -> usize {
    names.iter().position(|n| n == "fire").unwrap_or(0)
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    split: Split,
    samples: usize,
    loss: f64,
    /// Percent.
    accuracy: f64,
    positive_class: &'a str,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    index: usize,
    path: String,
    label: usize,
    predicted: usize,
    class: &'a str,
    probabilities: Vec<f64>,
    logits: &'a [f32],
}

pub fn eval(args: &EvalArgs, json: bool) -> Result<()> {
    let split: Split = args.split.parse()?;
    let (ckpt, model) = load_model(&args.checkpoint)?;
    let source = open_split(&args.data, split, ckpt.config.image_size)?;
    let names = &ckpt.class_names;
    if &source.manifest.class_names != names {
        return Err(Error::Format {
            field: "class_names".into(),
            reason: format!(
                "checkpoint was trained on {:?} but split {split} has {:?}",
                names, source.manifest.class_names
            ),
        }
        .into());
    }
    let batch_size = args.batch_size.unwrap_or(ckpt.train_config.batch_size);
    let ev = evaluate(
        &model,
        batch_iter(&source, batch_size, false, 0, 0, DecodePolicy::Abort),
    )?;

    let truth: Vec<usize> = ev.predictions.iter().map(|p| p.label).collect();
    let pred: Vec<usize> = ev.predictions.iter().map(|p| p.predicted()).collect();
    let cm = confusion_matrix(&truth, &pred, names)?;
    let report = classification_report(&cm)?;
    let positive = positive_class(names);
    let scored: Vec<ScoredPrediction> = ev
        .predictions
        .iter()
        .map(|p| ScoredPrediction {
            truth: p.label,
            predicted: p.predicted(),
            score: p.probabilities()[positive],
        })
        .collect();
    let auc = match roc_auc(&scored, positive) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(msg)) => {
            log::warn!("ROC-AUC undefined: {msg}");
            None
        }
        Err(e) => return Err(e.into()),
    };

    let out = args
        .out
        .clone()
        .or_else(|| args.checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    create_dir(&out)?;
    let summary = EvalSummary {
        split,
        samples: ev.stats.samples,
        loss: ev.stats.loss,
        accuracy: ev.stats.accuracy,
        positive_class: &names[positive],
        metrics: MetricsReport::new(&report, &cm, auc),
    };
    write_file(&out.join("metrics.json"), pretty(&summary))?;
    let records: String = ev
        .predictions
        .iter()
        .map(|p| {
            let record = PredictionRecord {
                index: p.index,
                path: source.describe(p.index),
                label: p.label,
                predicted: p.predicted(),
                class: &names[p.predicted()],
                probabilities: p.probabilities(),
                logits: &p.logits,
            };
            serde_json::to_string(&record).expect("serializable") + "\n"
        })
        .collect();
    write_file(&out.join("predictions.jsonl"), records)?;

    if json {
        print!("{}", pretty(&summary));
    } else {
        println!("{}", test_line(ev.stats.loss, ev.stats.accuracy));
        println!();
        println!("Classification Report:");
        print!("{}", render_report(&report));
        println!();
        print!("{}", cm.render());
        println!();
        match auc {
            Some(v) => println!("ROC-AUC ({}): {v:.4}", names[positive]),
            None => println!("ROC-AUC ({}): undefined", names[positive]),
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    image: &'a Path,
    class: &'a str,
    probability: f64,
    probabilities: Vec<(&'a str, f64)>,
    logits: Vec<f32>,
}

pub fn predict(args: &PredictArgs, json: bool) -> Result<()> {
    let (ckpt, model) = load_model(&args.checkpoint)?;
    let size = ckpt.config.image_size;
    let mut results = Vec::with_capacity(args.images.len());
    for path in &args.images {
        let img = preprocess(&load_image(path)?, &NormalizationSpec::default(), size)?;
        let batch = Tensor::new([&[1], img.shape()].concat(), img.data().to_vec())?;
        let logits = model.forward(&batch)?.row(0).to_vec();
        let sample = SamplePrediction {
            index: 0,
            label: 0,
            logits,
        };
        let probs = sample.probabilities();
        let predicted = sample.predicted();
        results.push(Prediction {
            image: path,
            class: &ckpt.class_names[predicted],
            probability: probs[predicted],
            probabilities: ckpt
                .class_names
                .iter()
                .map(String::as_str)
                .zip(probs)
                .collect(),
            logits: sample.logits,
        });
    }
    if json {
        print!("{}", pretty(&results));
    } else {
        for r in &results {
            let all: Vec<String> = r
                .probabilities
                .iter()
                .map(|(n, p)| format!("{n} {p:.6}"))
                .collect();
            println!(
                "{}: {} {:.6} ({})",
                r.image.display(),
                r.class,
                r.probability,
                all.join(", ")
            );
        }
    }
    Ok(())
}

pub fn profile(args: &ProfileArgs, json: bool) -> Result<()> {
    let model = match &args.checkpoint {
        Some(path) => load_model(path)?.1,
        None => ViT::init(ViTConfig::by_name(&args.model, 2)?, 0)?,
    };
    let size = model.config.image_size;
    let source: Box<dyn SampleSource> = match &args.data {
        Some(dir) => Box::new(open_split(dir, Split::Train, size)?),
        None => Box::new(SyntheticSource {
            len: args.samples,
            image_size: size,
            seed: 0,
        }),
    };
    let settings = ProfileSettings {
        batch_size: args.batch_size,
        warmup_batches: args.warmup,
        timed_batches: args.timed,
    };
    let report = run_profile(
        &model,
        source.as_ref(),
        &settings,
        &MonotonicClock::default(),
    )?;
    write_file(&args.out, pretty(&report))?;
    if json {
        print!("{}", pretty(&report));
    } else {
        print!("{}", render_profile_note(&report));
        print!("{}", render_profile(&report));
    }
    Ok(())
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    root: &'a Path,
    image_size: usize,
    splits: Vec<(&'a str, usize)>,
}

pub fn synth(args: &SynthArgs, json: bool) -> Result<()> {
    let splits: Vec<(&str, usize)> = [
        ("train", args.train),
        ("val", args.val),
        ("test", args.test),
    ]
    .into_iter()
    .filter(|&(_, n)| n > 0)
    .collect();
    if splits.is_empty() || args.size == 0 {
        return Err(Error::Config("nothing to generate".into()).into());
    }
    synth::write_synthetic_dataset(&args.out, &splits, args.size, args.seed)?;
    let summary = SynthSummary {
        root: &args.out,
        image_size: args.size,
        splits,
    };
    if json {
        print!("{}", pretty(&summary));
    } else {
        for (split, n) in &summary.splits {
            println!("{split}: {n} images");
        }
        println!("Wrote synthetic dataset to {}", args.out.display());
    }
    Ok(())
}
