mod common;

use common::{random_tensor, rng, synthetic_source};
use vitforge_core::data::{batch_iter, DecodePolicy, InMemorySource, SampleSource};
use vitforge_core::gradcheck::finite_difference_check;
use vitforge_core::model::{ViT, ViTConfig};
use vitforge_core::profiler::{profile, MonotonicClock, ProfileSettings};
use vitforge_core::train::*;
use vitforge_core::{Error, Tensor};

fn names() -> Vec<String> {
    vec!["fire".into(), "nofire".into()]
}

#[test]
fn loss_closed_forms() {
    let (l, _) = cross_entropy_loss(
        &Tensor::new(vec![1, 2], vec![30.0f32, -30.0]).unwrap(),
        &[0],
    )
    .unwrap();
    assert!(l < 1e-9);
    let (l, _) = cross_entropy_loss(&Tensor::<f32>::zeros(&[1, 2]), &[0]).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-6);
    let (l, _) = cross_entropy_loss(&Tensor::<f32>::zeros(&[3, 5]), &[0, 4, 2]).unwrap();
    assert!((l - 5f64.ln()).abs() < 1e-6);
}

#[test]
fn loss_gradient_properties() {
    let mut r = rng(1);
    for _ in 0..20 {
        let logits: Tensor = random_tensor(&mut r, &[3, 4], 4.0);
        let labels = [0, 3, 1];
        let (loss, grad) = cross_entropy_loss(&logits, &labels).unwrap();
        assert!(loss >= 0.0);
        for i in 0..3 {
            let s: f64 = grad.row(i).iter().map(|&v| v as f64).sum();
            assert!(s.abs() < 1e-6);
        }
        // Raising the true-class logit lowers the loss.
        let mut up = logits.clone();
        up.row_mut(1)[3] += 0.5;
        assert!(cross_entropy_loss(&up, &labels).unwrap().0 < loss);
    }

    let logits: Tensor<f64> = random_tensor(&mut r, &[3, 4], 2.0);
    let (_, grad) = cross_entropy_loss(&logits, &[2, 0, 1]).unwrap();
    let err = finite_difference_check(
        |x| cross_entropy_loss(x, &[2, 0, 1]).unwrap().0,
        &logits,
        &grad,
        1e-5,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn out_of_range_label_names_its_batch_index() {
    let err = cross_entropy_loss(&Tensor::<f32>::zeros(&[3, 2]), &[0, 1, 2]).unwrap_err();
    assert!(matches!(
        err,
        Error::Label {
            index: 2,
            label: 2,
            num_classes: 2
        }
    ));
}

fn hyper(lr: f32) -> AdamHyper {
    AdamHyper {
        lr,
        ..AdamHyper::from(&TrainConfig::default())
    }
}

#[test]
fn adam_first_step_closed_form() {
    let (mut p, mut m, mut v) = ([0.0f32], [0.0f32], [0.0f32]);
    adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &hyper(1e-4));
    assert!((p[0] as f64 + 9.99999e-5).abs() < 1e-10, "{}", p[0]);

    // The first step is sign-normalized: ≈ lr whatever the gradient scale.
    for g in [1e3f32, 1e-3] {
        let (mut p, mut m, mut v) = ([0.0f32], [0.0f32], [0.0f32]);
        adam_update(&mut p, &[g], &mut m, &mut v, 1, &hyper(1e-4));
        assert!((p[0] as f64 + 1e-4).abs() < 1e-8, "{g}: {}", p[0]);
    }
}

#[test]
fn adam_zero_gradient_and_zero_lr() {
    let config = ViTConfig::tiny(2);
    let model = ViT::init(config, 0).unwrap();
    let mut params = model.params.clone();
    let mut state = AdamState::new(&params);
    let zeros = params.zeros_like();
    state.step(&mut params, &zeros, &hyper(1e-3)).unwrap();
    assert_eq!(params, model.params);

    let mut grads = params.zeros_like();
    for (_, g) in grads.named_mut() {
        g.fill(0.5);
    }
    let mut state = AdamState::new(&params);
    state.step(&mut params, &grads, &hyper(0.0)).unwrap();
    assert_eq!(params, model.params);
    assert_eq!(state.t, 1);
    assert!(state
        .m
        .iter()
        .all(|m| m.data().iter().all(|&x| (x - 0.05).abs() < 1e-7)));
    assert!(state.v.iter().all(|v| v.data().iter().all(|&x| x > 0.0)));
}

#[test]
fn eval_is_pure_and_repeatable() {
    let src = synthetic_source(10, 4);
    let mut model = ViT::init(ViTConfig::tiny(2), 1).unwrap();
    let before = model.clone();
    let run = |m: &mut ViT| {
        run_epoch(
            m,
            batch_iter(&src, 4, false, 0, 0, DecodePolicy::Abort),
            Phase::Eval,
        )
        .unwrap()
    };
    let a = run(&mut model);
    let b = run(&mut model);
    assert_eq!(a, b);
    assert_eq!(model, before);
    assert_eq!(a.samples, 10);
}

#[test]
fn single_batch_epoch_loss_is_the_batch_loss() {
    let src = synthetic_source(6, 2);
    let model = ViT::init(ViTConfig::tiny(2), 3).unwrap();
    let stats = evaluate(
        &model,
        batch_iter(&src, 32, false, 0, 0, DecodePolicy::Abort),
    )
    .unwrap()
    .stats;
    let batch = batch_iter(&src, 32, false, 0, 0, DecodePolicy::Abort)
        .next()
        .unwrap()
        .unwrap();
    let (loss, _) =
        cross_entropy_loss(&model.forward(&batch.images).unwrap(), &batch.labels).unwrap();
    assert_eq!(stats.loss, loss);
}

fn quick_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: lr,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn fit_is_bit_deterministic() {
    let train = synthetic_source(40, 1);
    let val = synthetic_source(12, 2);
    let run = || {
        let mut model = ViT::init(ViTConfig::tiny(2), 5).unwrap();
        let mut lines = Vec::new();
        let out = fit(
            &mut model,
            &train,
            &val,
            &quick_config(3, 1e-3),
            &names(),
            |l| lines.push(l.to_string()),
        )
        .unwrap();
        (out.logs, lines, out.checkpoint.to_bytes(), model)
    };
    let (logs, lines, bytes, model) = run();
    assert_eq!(logs.len(), 3);
    assert_eq!(logs.iter().map(|l| l.epoch).collect::<Vec<_>>(), [1, 2, 3]);
    assert!(lines[0].starts_with("Epoch [1/3] -> Train Loss: "));
    let again = run();
    assert_eq!(again.0, logs);
    assert_eq!(again.1, lines);
    assert_eq!(again.2, bytes);
    assert_eq!(again.3, model);
    for l in &logs {
        assert!((0.0..=100.0).contains(&l.train_acc) && (0.0..=100.0).contains(&l.val_acc));
        assert!(l.train_loss >= 0.0 && l.val_loss >= 0.0);
    }
}

#[test]
fn fit_writes_final_and_best_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.vitf");
    let train = synthetic_source(20, 1);
    let val = synthetic_source(8, 2);
    let cfg = TrainConfig {
        checkpoint_path: Some(path.clone()),
        save_best: true,
        ..quick_config(2, 1e-3)
    };
    let mut model = ViT::init(ViTConfig::tiny(2), 5).unwrap();
    let out = fit(&mut model, &train, &val, &cfg, &names(), |_| {}).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    assert_eq!(loaded.params, model.params);
    assert_eq!(loaded.epoch, 2);
    assert!(loaded.adam.is_some());
    assert!(best_checkpoint_path(&path).exists());

    let bytes = std::fs::read(&path).unwrap();
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn empty_split_is_a_config_error() {
    let train = synthetic_source(4, 1);
    let mut model = ViT::init(ViTConfig::tiny(2), 0).unwrap();
    let err = fit(
        &mut model,
        &train,
        &InMemorySource::default(),
        &quick_config(1, 1e-3),
        &names(),
        |_| {},
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn tiny_model_fits_64_samples() {
    // Learning rate 1e-3: the tiny regime's permitted ×10 over 1e-4.
    let train = synthetic_source(64, 11);
    let mut model = ViT::init(ViTConfig::tiny(2), 0).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        ..quick_config(30, 1e-3)
    };
    let out = fit(&mut model, &train, &train, &cfg, &names(), |_| {}).unwrap();
    let best = out.logs.iter().map(|l| l.train_acc).fold(0.0, f64::max);
    assert!(best > 90.0, "best train accuracy {best}");
    assert!(out.logs[29].train_loss < out.logs[0].train_loss);
}

#[test]
fn profiled_backward_is_slower_than_forward() {
    let src = synthetic_source(16, 3);
    let model = ViT::init(ViTConfig::tiny(2), 0).unwrap();
    let settings = ProfileSettings {
        batch_size: 8,
        warmup_batches: 3,
        timed_batches: 10,
    };
    let r = profile(
        &model,
        &src as &dyn SampleSource,
        &settings,
        &MonotonicClock::default(),
    )
    .unwrap();
    assert!(r.forward_s_per_batch > 0.0);
    assert!(r.backward_s_per_batch >= r.forward_s_per_batch);
    assert!(r.memory_mb > 0.0);
    assert_eq!(r.samples.backward.len(), 10);
}
