//! Dataset ingestion and preprocessing.

mod batch;
mod image;
mod manifest;
pub mod rng;
pub mod synth;

pub use batch::{
    batch_iter, Batch, BatchIter, DecodePolicy, InMemorySource, ManifestSource, SampleSource,
};
pub use image::{
    decode_image, load_image, preprocess, resize_bilinear, to_normalized_tensor, ImageRGB,
    NormalizationSpec,
};
pub use manifest::{scan_dataset, DatasetManifest, ManifestEntry, Split, IMAGE_EXTENSIONS};
