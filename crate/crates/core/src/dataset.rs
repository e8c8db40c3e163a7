//! Dataset manifests and deterministic sampling.
//!
//! A manifest is the sorted, de-duplicated listing of one dataset's images.
//! Every split drawn from it is a pure function of `(manifest, counts, seed)`:
//! the sampler is a Fisher-Yates shuffle of the sorted usable index list driven
//! by a [`CounterRng`] keyed by `hash64(seed, dataset_id)`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::hash::hash64;
use crate::image::{shorter_side_dims, Image};
use crate::rng::CounterRng;

/// Shorter side of stored images after ingestion.
pub const PREPROCESS_SHORTER_SIDE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub relative_path: String,
    pub width: u32,
    pub height: u32,
    #[serde(default = "default_true")]
    pub decode_ok: bool,
}

fn default_true() -> bool {
    true
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, relative_path: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            relative_path: relative_path.into(),
            width,
            height,
            decode_ok: true,
        }
    }

    pub fn undecodable(image_id: impl Into<String>, relative_path: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            relative_path: relative_path.into(),
            width: 0,
            height: 0,
            decode_ok: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub display_name: String,
    pub root_uri: String,
    images: Vec<ImageRecord>,
    /// Indices into the sorted `images` list. When present only these are
    /// eligible for sampling.
    predefined_train_split: Option<Vec<usize>>,
    #[serde(default)]
    pub notes: String,
}

impl DatasetManifest {
    /// Validates and canonicalizes: records are sorted by `image_id`,
    /// duplicate ids and empty listings are rejected.
    pub fn new(
        dataset_id: impl Into<String>,
        display_name: impl Into<String>,
        root_uri: impl Into<String>,
        mut images: Vec<ImageRecord>,
        predefined_train_split: Option<Vec<usize>>,
    ) -> Result<Self, DatasetError> {
        if images.is_empty() {
            return Err(DatasetError::EmptyManifest);
        }
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for pair in images.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(DatasetError::DuplicateId(pair[0].image_id.clone()));
            }
        }
        if let Some(r) = images.iter().find(|r| r.decode_ok && (r.width == 0 || r.height == 0)) {
            return Err(DatasetError::InvalidDimensions(r.image_id.clone()));
        }
        let predefined_train_split = match predefined_train_split {
            Some(mut split) => {
                split.sort_unstable();
                split.dedup();
                if let Some(&index) = split.iter().find(|&&i| i >= images.len()) {
                    return Err(DatasetError::SplitIndexOutOfRange { index, len: images.len() });
                }
                Some(split)
            }
            None => None,
        };
        Ok(Self {
            dataset_id: dataset_id.into(),
            display_name: display_name.into(),
            root_uri: root_uri.into(),
            images,
            predefined_train_split,
            notes: String::new(),
        })
    }

    pub fn with_notes(mut self, notes: impl Into<String>) -> Self {
        self.notes = notes.into();
        self
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn predefined_train_split(&self) -> Option<&[usize]> {
        self.predefined_train_split.as_deref()
    }

    pub fn record(&self, index: usize) -> &ImageRecord {
        &self.images[index]
    }

    pub fn index_of(&self, image_id: &str) -> Option<usize> {
        self.images.binary_search_by(|r| r.image_id.as_str().cmp(image_id)).ok()
    }

    /// Sorted indices eligible for sampling: decodable, and inside the
    /// predefined train split when one exists.
    pub fn usable_indices(&self) -> Vec<usize> {
        match &self.predefined_train_split {
            Some(split) => split.iter().copied().filter(|&i| self.images[i].decode_ok).collect(),
            None => (0..self.images.len()).filter(|&i| self.images[i].decode_ok).collect(),
        }
    }

    fn sampling_rng(&self, seed: u64) -> CounterRng {
        CounterRng::new(hash64(seed, &self.dataset_id))
    }
}

/// Something that can produce the pixels for a manifest record.
pub trait ImageSource {
    fn load(&self, record: &ImageRecord) -> Result<Image, DatasetError>;
}

/// Train/val indices drawn from one manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dataset_id: String,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn is_disjoint(&self) -> bool {
        let train: BTreeSet<_> = self.train_indices.iter().collect();
        self.val_indices.iter().all(|i| !train.contains(i))
    }

    pub fn check_against(&self, manifest: &DatasetManifest) -> Result<(), DatasetError> {
        let len = manifest.len();
        if let Some(&index) = self.train_indices.iter().chain(&self.val_indices).find(|&&i| i >= len) {
            return Err(DatasetError::SplitIndexOutOfRange { index, len });
        }
        Ok(())
    }
}

/// Uniformly samples disjoint train and val index sets of exactly the
/// requested sizes. Both lists are returned in ascending order.
pub fn sample_split(
    manifest: &DatasetManifest,
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<SplitSpec, DatasetError> {
    let mut pool = manifest.usable_indices();
    let requested = n_train + n_val;
    if requested > pool.len() {
        return Err(DatasetError::InsufficientImages { requested, usable: pool.len() });
    }
    manifest.sampling_rng(seed).partial_shuffle(&mut pool, requested);
    let mut train_indices = pool[..n_train].to_vec();
    let mut val_indices = pool[n_train..requested].to_vec();
    train_indices.sort_unstable();
    val_indices.sort_unstable();
    Ok(SplitSpec {
        dataset_id: manifest.dataset_id.clone(),
        train_indices,
        val_indices,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoDatasetSpec {
    pub source_dataset_id: String,
    pub k: usize,
    pub n_per_set: usize,
    /// Held-out validation images per pseudo-set.
    #[serde(default)]
    pub n_val_per_set: usize,
    pub seed: u64,
}

/// Splits one source manifest into `k` pairwise-disjoint pseudo-datasets,
/// each with `n_per_set` training and `n_val_per_set` validation images.
/// Every returned split indexes the source manifest; its `dataset_id` is
/// `"{source}#p{i}"`.
pub fn build_pseudo_datasets(
    manifest: &DatasetManifest,
    spec: &PseudoDatasetSpec,
) -> Result<Vec<SplitSpec>, DatasetError> {
    if spec.source_dataset_id != manifest.dataset_id {
        return Err(DatasetError::DatasetMismatch {
            expected: manifest.dataset_id.clone(),
            found: spec.source_dataset_id.clone(),
        });
    }
    let mut pool = manifest.usable_indices();
    let train_total = spec.k * spec.n_per_set;
    let requested = train_total + spec.k * spec.n_val_per_set;
    if requested > pool.len() {
        return Err(DatasetError::InsufficientImages { requested, usable: pool.len() });
    }
    // Distinct stream from sample_split so the two never alias.
    let mut rng = manifest.sampling_rng(spec.seed).fork(0x7073_6575_646f);
    rng.partial_shuffle(&mut pool, requested);
    let sets = (0..spec.k)
        .map(|i| {
            let mut train_indices = pool[i * spec.n_per_set..(i + 1) * spec.n_per_set].to_vec();
            let v0 = train_total + i * spec.n_val_per_set;
            let mut val_indices = pool[v0..v0 + spec.n_val_per_set].to_vec();
            train_indices.sort_unstable();
            val_indices.sort_unstable();
            SplitSpec {
                dataset_id: format!("{}#p{}", manifest.dataset_id, i),
                train_indices,
                val_indices,
                seed: spec.seed,
            }
        })
        .collect();
    Ok(sets)
}

/// Target size for ingestion: shorter side capped at 500 pixels, aspect kept.
pub fn preprocess_dims(width: usize, height: usize) -> (usize, usize) {
    if width.min(height) > PREPROCESS_SHORTER_SIDE {
        shorter_side_dims(width, height, PREPROCESS_SHORTER_SIDE)
    } else {
        (width, height)
    }
}

/// In-memory version of ingestion preprocessing (bilinear). The file-based
/// path in the companion crate uses a higher-quality filter for downscaling.
pub fn preprocess_image(image: &Image) -> Image {
    let (w, h) = preprocess_dims(image.width(), image.height());
    if (w, h) == (image.width(), image.height()) {
        image.clone()
    } else {
        image.resize_bilinear(w, h)
    }
}
