//! Manifests, preprocessing, contamination mixing and toy-data synthesis.

mod manifest;
mod mix;
mod preprocess;
pub mod synth;

use rayon::prelude::*;

pub use manifest::{
    EvalLabel, Manifest, SampleRecord, UnlabeledManifest, UnlabeledRecord, MANIFEST_HEADER,
    MANIFEST_SCHEMA_VERSION,
};
pub use mix::{contaminant_count, mix_datasets};
pub use preprocess::{bilinear_resize, preprocess_file, preprocess_rgb, to_rgb8};
pub use synth::{synth_generate, SynthConfig, SynthOutput};

use crate::error::{Error, Result};
use crate::model::ImageTensor;
use crate::scalar::Scalar;

/// Preprocessed, label-free samples handed to the trainer.
///
/// There is no label accessor; the only constructors take unlabeled input.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    ids: Vec<String>,
    images: Vec<ImageTensor<T>>,
}

impl<T: Scalar> TrainingSet<T> {
    /// In-memory set; ids must be unique and match the image count.
    pub fn new(ids: Vec<String>, images: Vec<ImageTensor<T>>) -> Result<Self> {
        if ids.len() != images.len() {
            return Err(Error::invalid(format!(
                "{} ids for {} images",
                ids.len(),
                images.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self { ids, images })
    }

    /// Ids `sample_0`, `sample_1`, ...
    pub fn from_images(images: Vec<ImageTensor<T>>) -> Self {
        let ids = (0..images.len()).map(|i| format!("sample_{i}")).collect();
        Self { ids, images }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn image(&self, i: usize) -> &ImageTensor<T> {
        &self.images[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ImageTensor<T>)> {
        self.ids.iter().map(String::as_str).zip(&self.images)
    }

    pub fn images(&self) -> &[ImageTensor<T>] {
        &self.images
    }
}

/// Thread pool for preprocessing, capped by `SPAD_THREADS` when set.
pub fn preprocessing_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("SPAD_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Loads and preprocesses every record of an unlabeled manifest.
pub fn load_training_set<T: Scalar>(manifest: &UnlabeledManifest, side: usize) -> Result<TrainingSet<T>> {
    if manifest.is_empty() {
        return Err(Error::invalid("training manifest is empty"));
    }
    let pool = preprocessing_pool()?;
    let images = pool.install(|| {
        manifest
            .records
            .par_iter()
            .map(|r| preprocess_file::<T>(&r.path, side))
            .collect::<Result<Vec<_>>>()
    })?;
    TrainingSet::new(manifest.records.iter().map(|r| r.id.clone()).collect(), images)
}
