mod common;

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use rand::{Rng, RngCore};
use vitforge_core::data::rng::{epoch_order, seeded_rng};
use vitforge_core::data::*;
use vitforge_core::{Error, Tensor};

#[test]
fn checkerboard_upscale_matches_half_pixel_oracle() {
    let mut px = Vec::new();
    for v in [0u8, 255, 255, 0] {
        px.extend([v, v, v]);
    }
    let src = ImageRGB::new(2, 2, px).unwrap();
    let out = resize_bilinear(&src, 4, 4);
    // Computed independently with source coordinate (d + 0.5)·scale − 0.5,
    // clamped, then rounded half away from zero.
    let want = [
        [0, 64, 191, 255],
        [64, 96, 159, 191],
        [191, 159, 96, 64],
        [255, 191, 64, 0],
    ];
    for (y, row) in want.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(out.get(y, x, c), v, "({y},{x},{c})");
            }
        }
    }
}

#[test]
fn constant_image_stays_constant() {
    let src = ImageRGB::filled(100, 100, [12, 200, 77]);
    let out = resize_bilinear(&src, 224, 224);
    assert_eq!(out, ImageRGB::filled(224, 224, [12, 200, 77]));
}

#[test]
fn same_size_resize_is_identity() {
    let mut r = seeded_rng(1);
    let mut px = vec![0u8; 224 * 224 * 3];
    r.fill_bytes(&mut px);
    let img = ImageRGB::new(224, 224, px).unwrap();
    assert_eq!(resize_bilinear(&img, 224, 224), img);
}

fn image_strategy() -> impl Strategy<Value = ImageRGB> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<u8>(), h * w * 3)
            .prop_map(move |px| ImageRGB::new(h, w, px).unwrap())
    })
}

proptest! {
    #[test]
    fn resize_stays_in_source_range(img in image_strategy(), oh in 1usize..=9, ow in 1usize..=9) {
        let out = resize_bilinear(&img, oh, ow);
        prop_assert_eq!(out.pixels.len(), oh * ow * 3);
        for c in 0..3 {
            let channel = |i: &ImageRGB| i.pixels.iter().skip(c).step_by(3).copied().collect::<Vec<u8>>();
            let src = channel(&img);
            let (lo, hi) = (*src.iter().min().unwrap(), *src.iter().max().unwrap());
            prop_assert!(channel(&out).iter().all(|&v| lo <= v && v <= hi));
        }
    }

    #[test]
    fn normalization_round_trips(raw in any::<u8>(), c in 0usize..3) {
        let spec = NormalizationSpec::default();
        let back = spec.denormalize(spec.normalize(raw, c), c);
        prop_assert!((back as f64 - raw as f64 / 255.0).abs() < 1e-6);
    }
}

#[test]
fn normalization_spot_values() {
    let spec = NormalizationSpec::default();
    // (124/255 − 0.485)/0.229, evaluated exactly.
    assert!((spec.normalize(124, 0) as f64 - 0.005_565_5).abs() < 1e-5);
    assert!((spec.normalize(255, 0) as f64 - 2.248_908_3).abs() < 1e-5);
    let id = NormalizationSpec::identity();
    for raw in 0..=255u8 {
        assert_eq!(id.normalize(raw, 1), raw as f32 / 255.0);
    }
}

#[test]
fn normalized_tensor_is_channel_major() {
    let mut img = ImageRGB::filled(2, 2, [0, 0, 0]);
    img.pixels[3..6].copy_from_slice(&[255, 128, 0]);
    let t = to_normalized_tensor(&img, &NormalizationSpec::identity(), 2).unwrap();
    assert_eq!(t.shape(), &[3, 2, 2]);
    assert_eq!(t.data()[1], 1.0);
    assert_eq!(t.data()[4 + 1], 128.0 / 255.0);
    assert!(matches!(
        to_normalized_tensor(&img, &NormalizationSpec::identity(), 3),
        Err(Error::Dimension { .. })
    ));
}

fn index_source(n: usize) -> InMemorySource {
    let images = (0..n).map(|i| Tensor::full(&[1, 1, 1], i as f32)).collect();
    InMemorySource::new(images, (0..n).map(|i| i % 2).collect()).unwrap()
}

#[test]
fn every_epoch_covers_the_manifest_exactly_once() {
    let mut r = seeded_rng(99);
    for _ in 0..50 {
        let n = r.random_range(1..=200);
        let batch = r.random_range(1..=40);
        let shuffle = r.random_bool(0.5);
        let seed = r.next_u64();
        let epoch = r.random_range(0..20);
        let src = index_source(n);
        let mut seen = Vec::new();
        let mut batches = 0;
        for b in batch_iter(&src, batch, shuffle, seed, epoch, DecodePolicy::Abort) {
            let b = b.unwrap();
            assert!(b.len() <= batch && !b.is_empty());
            for (row, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.images.data()[row], i as f32);
                assert_eq!(b.labels[row], i % 2);
            }
            seen.extend(b.indices);
            batches += 1;
        }
        assert_eq!(batches, n.div_ceil(batch));
        if !shuffle {
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}

#[test]
fn batch_streams_are_reproducible() {
    let src = index_source(77);
    let run = |seed, epoch| -> Vec<Vec<usize>> {
        batch_iter(&src, 8, true, seed, epoch, DecodePolicy::Abort)
            .map(|b| b.unwrap().indices)
            .collect()
    };
    assert_eq!(run(5, 2), run(5, 2));
    assert_ne!(run(5, 2), run(5, 3));
    assert_ne!(run(5, 2), run(6, 2));
    assert_eq!(epoch_order(77, true, 5, 2), run(5, 2).concat());
}

#[test]
fn generator_matches_reference_stream() {
    // splitmix64 expansion of the seed into xoshiro256** state, computed
    // by an independent implementation.
    let mut r = seeded_rng(0);
    assert_eq!(r.next_u64(), 0x99ec5f36cb75f2b4);
    assert_eq!(r.next_u64(), 0xbf6e1f784956452a);
    let mut r = seeded_rng(42);
    assert_eq!(r.next_u64(), 0x15780b2e0c2ec716);
}

fn write_png(path: &Path, rgb: [u8; 3]) {
    let img = image::RgbImage::from_pixel(3, 2, image::Rgb(rgb));
    img.save(path).unwrap();
}

#[test]
fn scan_then_load_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    for (class, n) in [("nofire", 3), ("fire", 2)] {
        fs::create_dir_all(train.join(class)).unwrap();
        for i in 0..n {
            write_png(
                &train.join(class).join(format!("{i}.PNG")),
                [i as u8 * 50, 10, 200],
            );
        }
    }
    fs::write(train.join("fire/notes.txt"), "x").unwrap();

    let m = scan_dataset(dir.path(), Split::Train).unwrap();
    assert_eq!(m.class_names, ["fire", "nofire"]);
    assert_eq!(m.len(), 5);
    assert_eq!(m.class_counts(), [2, 3]);
    let labels: Vec<usize> = m.entries.iter().map(|e| e.label).collect();
    assert_eq!(labels, [0, 0, 1, 1, 1]);
    assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);

    let src = ManifestSource::new(m, 4, NormalizationSpec::identity());
    let batches: Vec<Batch> = batch_iter(&src, 2, false, 0, 0, DecodePolicy::Abort)
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(
        batches.iter().map(Batch::len).collect::<Vec<_>>(),
        [2, 2, 1]
    );
    assert_eq!(batches[0].images.shape(), &[2, 3, 4, 4]);
    // Blue channel of a constant image survives resizing unchanged.
    assert_eq!(batches[0].images.data()[2 * 16], 200.0 / 255.0);

    assert!(matches!(
        scan_dataset(dir.path(), Split::Test),
        Err(Error::Config(_))
    ));
}

#[test]
fn decode_errors_carry_the_path() {
    let err = decode_image(b"definitely not an image", Path::new("bad/file.jpg")).unwrap_err();
    match err {
        Error::Decode { path, .. } => assert!(path.ends_with("bad/file.jpg")),
        other => panic!("expected decode error, got {other}"),
    }
}

#[test]
fn synthetic_classes_differ_in_color() {
    let set = synth::synthetic_set(20, 8, 3);
    let mean_red = |label| {
        let px: Vec<f64> = set
            .iter()
            .filter(|(_, l)| *l == label)
            .flat_map(|(img, _)| {
                img.pixels
                    .iter()
                    .step_by(3)
                    .map(|&v| v as f64)
                    .collect::<Vec<_>>()
            })
            .collect();
        px.iter().sum::<f64>() / px.len() as f64
    };
    assert!(mean_red(0) > mean_red(1) + 60.0);
    assert_eq!(synth::synthetic_set(20, 8, 3), set);
}
