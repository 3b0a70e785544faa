use super::image::{load_image, preprocess, NormalizationSpec};
use super::manifest::DatasetManifest;
use super::rng::epoch_order;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Indexed access to preprocessed samples.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> usize;

    /// Model-ready `[C×H×W]` tensor for sample `index`.
    fn load(&self, index: usize) -> Result<Tensor>;

    /// Human-readable identifier, used in logs and prediction dumps.
    fn describe(&self, index: usize) -> String {
        format!("#{index}")
    }
}

/// Decodes files listed in a manifest on demand.
pub struct ManifestSource {
    pub manifest: DatasetManifest,
    pub image_size: usize,
    pub normalization: NormalizationSpec,
}

impl ManifestSource {
    pub fn new(
        manifest: DatasetManifest,
        image_size: usize,
        normalization: NormalizationSpec,
    ) -> Self {
        Self {
            manifest,
            image_size,
            normalization,
        }
    }
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.manifest.len()
    }

    fn label(&self, index: usize) -> usize {
        self.manifest.entries[index].label
    }

    fn load(&self, index: usize) -> Result<Tensor> {
        let img = load_image(&self.manifest.entries[index].path)?;
        preprocess(&img, &self.normalization, self.image_size)
    }

    fn describe(&self, index: usize) -> String {
        self.manifest.entries[index].path.display().to_string()
    }
}

/// Already-preprocessed samples held in memory.
#[derive(Clone, Debug, Default)]
pub struct InMemorySource {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl InMemorySource {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dim(
                "InMemorySource",
                format!("{} images, {} labels", images.len(), labels.len()),
            ));
        }
        Ok(Self { images, labels })
    }

    /// Materializes any source.
    pub fn collect(source: &dyn SampleSource) -> Result<Self> {
        let mut images = Vec::with_capacity(source.len());
        let mut labels = Vec::with_capacity(source.len());
        for i in 0..source.len() {
            images.push(source.load(i)?);
            labels.push(source.label(i));
        }
        Ok(Self { images, labels })
    }
}

impl SampleSource for InMemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn load(&self, index: usize) -> Result<Tensor> {
        Ok(self.images[index].clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[B×C×H×W]`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Source indices of the rows, in order.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn from_samples(
        samples: Vec<Tensor>,
        labels: Vec<usize>,
        indices: Vec<usize>,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::State("empty batch".into()))?;
        let sample_shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(samples.len() * first.len());
        for s in &samples {
            if s.shape() != sample_shape.as_slice() {
                return Err(Error::dim(
                    "batch",
                    format!("sample {:?} vs {:?}", s.shape(), sample_shape),
                ));
            }
            data.extend_from_slice(s.data());
        }
        let mut shape = vec![samples.len()];
        shape.extend(sample_shape);
        Ok(Self {
            images: Tensor::new(shape, data)?,
            labels,
            indices,
        })
    }
}

/// What to do with a sample that fails to decode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodePolicy {
    /// Log and drop the sample.
    Skip,
    /// Fail the whole pass.
    Abort,
}

/// Iterator over the batches of one epoch.
pub struct BatchIter<'a> {
    source: &'a dyn SampleSource,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    policy: DecodePolicy,
}

/// Batches for `epoch`; shuffled orders come from `seed ^ epoch`. The final
/// short batch is kept.
pub fn batch_iter<'a>(
    source: &'a dyn SampleSource,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: usize,
    policy: DecodePolicy,
) -> BatchIter<'a> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    BatchIter {
        source,
        order: epoch_order(source.len(), shuffle, seed, epoch),
        pos: 0,
        batch_size,
        policy,
    }
}

impl BatchIter<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    fn load_all(&self, indices: &[usize]) -> Vec<Result<Tensor>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            indices.par_iter().map(|&i| self.source.load(i)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            indices.iter().map(|&i| self.source.load(i)).collect()
        }
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos < self.order.len() {
            let end = (self.pos + self.batch_size).min(self.order.len());
            let indices = self.order[self.pos..end].to_vec();
            self.pos = end;

            let mut samples = Vec::with_capacity(indices.len());
            let mut labels = Vec::with_capacity(indices.len());
            let mut kept = Vec::with_capacity(indices.len());
            for (&i, loaded) in indices.iter().zip(self.load_all(&indices)) {
                match loaded {
                    Ok(t) => {
                        samples.push(t);
                        labels.push(self.source.label(i));
                        kept.push(i);
                    }
                    Err(e @ Error::Decode { .. }) if self.policy == DecodePolicy::Skip => {
                        log::warn!("skipping sample: {e}");
                    }
                    Err(e) => return Some(Err(e)),
                }
            }
            if !samples.is_empty() {
                return Some(Batch::from_samples(samples, labels, kept));
            }
        }
        None
    }
}
