use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRGB {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl ImageRGB {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::dim(
                "image",
                format!(
                    "{height}x{width} RGB needs {} bytes, got {}",
                    height * width * 3,
                    pixels.len()
                ),
            ));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * 3 + c]
    }
}

fn jpeg_is_complete(bytes: &[u8]) -> bool {
    // Trailing bytes after EOI are tolerated; a missing EOI means truncation.
    bytes.windows(2).rev().take(64).any(|w| w == [0xFF, 0xD9])
}

/// Decodes PNG or JPEG bytes into RGB. Grayscale is replicated across
/// channels; alpha is dropped.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<ImageRGB> {
    let fail = |reason: String| Error::Decode {
        path: path.to_path_buf(),
        reason,
    };
    let format = image::guess_format(bytes).map_err(|e| fail(e.to_string()))?;
    match format {
        image::ImageFormat::Png => {}
        image::ImageFormat::Jpeg => {
            if !jpeg_is_complete(bytes) {
                return Err(fail(
                    "truncated JPEG stream (no end-of-image marker)".into(),
                ));
            }
        }
        other => return Err(fail(format!("unsupported format {other:?}"))),
    }
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| fail(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    ImageRGB::new(h as usize, w as usize, img.into_raw())
}

pub fn load_image(path: &Path) -> Result<ImageRGB> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// Source coordinate for a destination index under half-pixel centers.
fn source_coord(dst: usize, scale: f64, src_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize with half-pixel center alignment, rounding half away
/// from zero.
pub fn resize_bilinear(img: &ImageRGB, out_h: usize, out_w: usize) -> ImageRGB {
    assert!(out_h > 0 && out_w > 0, "output size must be positive");
    if img.height == out_h && img.width == out_w {
        return img.clone();
    }
    let sy = img.height as f64 / out_h as f64;
    let sx = img.width as f64 / out_w as f64;
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, sx, img.width)).collect();
    let mut pixels = Vec::with_capacity(out_h * out_w * 3);
    for y in 0..out_h {
        let (y0, y1, fy) = source_coord(y, sy, img.height);
        for &(x0, x1, fx) in &cols {
            for c in 0..3 {
                let top = img.get(y0, x0, c) as f64 * (1.0 - fx) + img.get(y0, x1, c) as f64 * fx;
                let bot = img.get(y1, x0, c) as f64 * (1.0 - fx) + img.get(y1, x1, c) as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRGB {
        height: out_h,
        width: out_w,
        pixels,
    }
}

/// Per-channel mean and standard deviation applied after scaling to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for NormalizationSpec {
    /// ImageNet channel statistics.
    fn default() -> Self {
        Self {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl NormalizationSpec {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config(format!(
                "normalization std must be positive, got {:?}",
                self.std
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, raw: u8, channel: usize) -> f32 {
        (raw as f32 / 255.0 - self.mean[channel]) / self.std[channel]
    }

    /// Inverse of [`normalize`](Self::normalize), returning the `[0, 1]` value.
    pub fn denormalize(&self, value: f32, channel: usize) -> f32 {
        value * self.std[channel] + self.mean[channel]
    }
}

/// Channel-major `[3×size×size]` tensor of `(pixel/255 − mean)/std`.
pub fn to_normalized_tensor(
    img: &ImageRGB,
    spec: &NormalizationSpec,
    size: usize,
) -> Result<Tensor> {
    if img.height != size || img.width != size {
        return Err(Error::dim(
            "to_normalized_tensor",
            format!(
                "image is {}x{}, expected {size}x{size}",
                img.height, img.width
            ),
        ));
    }
    let plane = size * size;
    let mut data = vec![0f32; 3 * plane];
    for (p, px) in img.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = spec.normalize(px[c], c);
        }
    }
    Tensor::new(vec![3, size, size], data)
}

/// Decode, resize and normalize in one step.
pub fn preprocess(img: &ImageRGB, spec: &NormalizationSpec, size: usize) -> Result<Tensor> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    to_normalized_tensor(&resize_bilinear(img, size, size), spec, size)
}
