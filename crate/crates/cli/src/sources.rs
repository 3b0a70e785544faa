use std::path::Path;

use vitforge_core::data::{
    preprocess, rng::seeded_rng, scan_dataset, synth, DatasetManifest, ManifestSource,
    NormalizationSpec, SampleSource, Split,
};
use vitforge_core::{Error, Result, Tensor};

/// Reads `<dir>/<split>.json` when `scan` wrote one there, otherwise scans
/// `<dir>` as a dataset root.
pub fn load_manifest(dir: &Path, split: Split) -> Result<DatasetManifest> {
    let file = dir.join(format!("{split}.json"));
    if file.is_file() {
        let text = std::fs::read_to_string(&file).map_err(|e| Error::Io {
            path: file.clone(),
            source: e,
        })?;
        DatasetManifest::from_json(&text)
    } else {
        scan_dataset(dir, split)
    }
}

pub fn open_split(dir: &Path, split: Split, image_size: usize) -> Result<ManifestSource> {
    let manifest = load_manifest(dir, split)?;
    if manifest.is_empty() {
        return Err(Error::Config(format!(
            "split {split} under {} contains no images",
            dir.display()
        )));
    }
    Ok(ManifestSource::new(
        manifest,
        image_size,
        NormalizationSpec::default(),
    ))
}

/// Synthetic fire/nofire images generated on demand, so a profiling epoch
/// of any length costs no memory.
pub struct SyntheticSource {
    pub len: usize,
    pub image_size: usize,
    pub seed: u64,
}

impl SampleSource for SyntheticSource {
    fn len(&self) -> usize {
        self.len
    }

    fn label(&self, index: usize) -> usize {
        index % 2
    }

    fn load(&self, index: usize) -> Result<Tensor> {
        let mut rng = seeded_rng(self.seed.wrapping_add(index as u64));
        let img = synth::synthetic_image(self.label(index), self.image_size, &mut rng);
        preprocess(&img, &NormalizationSpec::default(), self.image_size)
    }

    fn describe(&self, index: usize) -> String {
        format!("synthetic #{index}")
    }
}
