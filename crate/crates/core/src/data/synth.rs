//! Synthetic two-class images with class-dependent color statistics.
//!
//! Class 0 (`fire`) is centered on a warm orange, class 1 (`nofire`) on a
//! forest green. Each image gets a random tint offset and per-pixel noise,
//! so the classes overlap per pixel but separate on average color.

use std::path::Path;

use rand::RngCore;

use super::image::ImageRGB;
use super::rng::{seeded_rng, DataRng};
use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 2] = ["fire", "nofire"];

const CLASS_MEANS: [[f64; 3]; 2] = [[190.0, 85.0, 40.0], [65.0, 125.0, 80.0]];
const TINT: f64 = 30.0;
const PIXEL_NOISE: f64 = 45.0;

fn uniform(rng: &mut DataRng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn synthetic_image(label: usize, size: usize, rng: &mut DataRng) -> ImageRGB {
    let tint: Vec<f64> = (0..3).map(|_| (uniform(rng) * 2.0 - 1.0) * TINT).collect();
    let mut pixels = Vec::with_capacity(size * size * 3);
    for _ in 0..size * size {
        for c in 0..3 {
            let noise = (uniform(rng) * 2.0 - 1.0) * PIXEL_NOISE;
            let v = CLASS_MEANS[label][c] + tint[c] + noise;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageRGB {
        height: size,
        width: size,
        pixels,
    }
}

/// `n` images with alternating labels `0, 1, 0, …`.
pub fn synthetic_set(n: usize, size: usize, seed: u64) -> Vec<(ImageRGB, usize)> {
    let mut rng = seeded_rng(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            (synthetic_image(label, size, &mut rng), label)
        })
        .collect()
}

/// Writes `<root>/<split>/<class>/NNNNN.png` for each `(split, count)`.
pub fn write_synthetic_dataset(
    root: &Path,
    splits: &[(&str, usize)],
    size: usize,
    seed: u64,
) -> Result<()> {
    for (k, &(split, n)) in splits.iter().enumerate() {
        for class in CLASS_NAMES {
            let dir = root.join(split).join(class);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for (i, (img, label)) in synthetic_set(n, size, seed.wrapping_add(k as u64))
            .into_iter()
            .enumerate()
        {
            let path = root
                .join(split)
                .join(CLASS_NAMES[label])
                .join(format!("{i:05}.png"));
            image::RgbImage::from_raw(size as u32, size as u32, img.pixels)
                .expect("buffer matches dimensions")
                .save(&path)
                .map_err(|e| Error::io(&path, std::io::Error::other(e)))?;
        }
    }
    Ok(())
}
