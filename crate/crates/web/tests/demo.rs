use serde_json::Value;
use vitforge_web::{metrics_json, preprocess_bytes, Trainer, CLASS_NAMES};

fn solid_png(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    let img = image::RgbImage::from_pixel(width, height, image::Rgb(rgb));
    let mut buf = std::io::Cursor::new(Vec::new());
    image::DynamicImage::ImageRgb8(img)
        .write_to(&mut buf, image::ImageFormat::Png)
        .unwrap();
    buf.into_inner()
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn preprocess_solid_image_normalizes_every_pixel() {
    let rgb = [200, 30, 90];
    let out = preprocess_bytes(&solid_png(10, 6, rgb), 16).unwrap();
    let rgba = out.rgba();
    assert_eq!(rgba.len(), 16 * 16 * 4);
    assert!(rgba.chunks_exact(4).all(|p| p == [200, 30, 90, 255]));

    let s = parse(&out.summary());
    assert_eq!(s["original"], serde_json::json!([6, 10]));
    assert_eq!(s["size"], 16);
    assert_eq!(s["center_raw"], serde_json::json!([200, 30, 90]));
    let mean = [0.485, 0.456, 0.406];
    let std = [0.229, 0.224, 0.225];
    for c in 0..3 {
        let expected = (rgb[c] as f64 / 255.0 - mean[c]) / std[c];
        let stats = &s["channels"][c];
        for key in ["mean", "min", "max"] {
            let v = stats[key].as_f64().unwrap();
            assert!((v - expected).abs() < 1e-5, "{key} {v} vs {expected}");
        }
        assert!(stats["std"].as_f64().unwrap() < 1e-6);
        let center = s["center_normalized"][c].as_f64().unwrap();
        assert!((center - expected).abs() < 1e-5);
    }
}

#[test]
fn preprocess_rejects_garbage_and_zero_size() {
    assert!(preprocess_bytes(b"not an image", 16).is_err());
    assert!(preprocess_bytes(&solid_png(4, 4, [0, 0, 0]), 0).is_err());
}

#[test]
fn trainer_logs_epochs_and_curves() {
    let mut t = Trainer::create(16, 3, 1e-3, 7).unwrap();
    for e in 1..=3 {
        let log = t.advance().unwrap();
        assert_eq!((log.epoch, log.epochs), (e, 3));
        assert!(log.train_loss.is_finite() && log.val_loss.is_finite());
        assert!((0.0..=100.0).contains(&log.train_acc));
    }
    let curves = t.curves();
    let lines: Vec<&str> = curves.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
    assert!(lines[3].starts_with("3,"));
    assert_eq!(t.epochs_done(), 3);
    assert_eq!(t.preview_count(), 8);
    let size = t.image_size();
    assert_eq!(t.preview(0).len(), size * size * 4);
    assert!(t.preview(99).is_empty());
}

#[test]
fn trainer_is_deterministic_per_seed() {
    let run = |seed| {
        let mut t = Trainer::create(8, 2, 1e-3, seed).unwrap();
        t.advance().unwrap();
        t.advance().unwrap();
        t.curves()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn roc_report_spans_unit_square() {
    let mut t = Trainer::create(16, 1, 1e-3, 0).unwrap();
    t.advance().unwrap();
    let roc = parse(&t.roc_report());
    assert_eq!(roc["positive"], "fire");
    let points = roc["points"].as_array().unwrap();
    assert_eq!(points.first().unwrap(), &serde_json::json!([0.0, 0.0]));
    assert_eq!(points.last().unwrap(), &serde_json::json!([1.0, 1.0]));
    let auc = roc["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn classify_returns_a_distribution() {
    let t = Trainer::create(8, 1, 1e-3, 0).unwrap();
    let r = parse(
        &t.classify_bytes(&solid_png(40, 30, [250, 120, 20]))
            .unwrap(),
    );
    let class = r["class"].as_str().unwrap();
    assert!(CLASS_NAMES.contains(&class));
    let probs = r["probabilities"].as_array().unwrap();
    assert_eq!(probs.len(), 2);
    let total: f64 = probs.iter().map(|p| p[1].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    let best = probs
        .iter()
        .max_by(|a, b| a[1].as_f64().unwrap().total_cmp(&b[1].as_f64().unwrap()))
        .unwrap();
    assert_eq!(best[0], class);
}

#[test]
fn metrics_for_reference_counts() {
    let v = parse(&metrics_json(149, 10, 10, 241).unwrap());
    let m = &v["metrics"];
    assert!((m["accuracy"].as_f64().unwrap() - 390.0 / 410.0).abs() < 1e-12);
    let fire = &m["classes"][0];
    assert_eq!(fire["name"], "fire");
    assert_eq!(fire["support"], 159);
    assert!((fire["precision"].as_f64().unwrap() - 149.0 / 159.0).abs() < 1e-12);
    let nofire = &m["classes"][1];
    assert_eq!(nofire["support"], 251);
    assert!((nofire["recall"].as_f64().unwrap() - 241.0 / 251.0).abs() < 1e-12);
    assert_eq!(m["confusion"], serde_json::json!([[149, 10], [10, 241]]));
    let text = v["text"].as_str().unwrap();
    assert!(text.contains("0.94"));
    assert!(text.contains("410"));
}

#[test]
fn metrics_reject_empty_counts() {
    assert!(metrics_json(0, 0, 0, 0).is_err());
}
