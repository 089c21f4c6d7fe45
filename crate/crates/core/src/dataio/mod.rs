//! Dataset I/O: PNG codec, on-disk manifests, identity-level splitting and
//! the synthetic face generator.

mod manifest;
mod png;
mod split;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use manifest::{
    load_manifest, read_manifest_csv, write_dataset, write_manifest_csv, DatasetManifest, ManifestEntry,
};
pub use png::{read_png, write_png};
pub use split::{split_dataset, SplitAssignment, SplitParams};
pub use synthetic::{generate_synthetic_faces, FaceLatent, SyntheticConfig, View};

use crate::image::ImageTensor;

/// Key of one image inside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ImageKey {
    pub identity_id: String,
    pub image_id: String,
}

impl ImageKey {
    pub fn new(identity_id: impl Into<String>, image_id: impl Into<String>) -> Self {
        Self {
            identity_id: identity_id.into(),
            image_id: image_id.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: ImageTensor,
    pub identity_id: String,
    pub image_id: String,
}

impl LabeledImage {
    pub fn new(image: ImageTensor, identity_id: impl Into<String>, image_id: impl Into<String>) -> Self {
        Self {
            image,
            identity_id: identity_id.into(),
            image_id: image_id.into(),
        }
    }

    pub fn key(&self) -> ImageKey {
        ImageKey::new(self.identity_id.clone(), self.image_id.clone())
    }

    /// Same labels, different pixels.
    pub fn with_image(&self, image: ImageTensor) -> Self {
        Self {
            image,
            identity_id: self.identity_id.clone(),
            image_id: self.image_id.clone(),
        }
    }

    /// Globally unique id used for per-image seeding and overlay selection.
    pub fn qualified_id(&self) -> String {
        format!("{}/{}", self.identity_id, self.image_id)
    }
}

/// An in-memory labeled image collection, ordered by key.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub source_tag: String,
}

impl Dataset {
    pub fn new(mut images: Vec<LabeledImage>, source_tag: impl Into<String>) -> Self {
        images.sort_by(|a, b| a.key().cmp(&b.key()));
        Self {
            images,
            source_tag: source_tag.into(),
        }
    }

    pub fn keys(&self) -> Vec<ImageKey> {
        self.images.iter().map(LabeledImage::key).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn identity_count(&self) -> usize {
        self.by_identity().len()
    }

    pub fn by_identity(&self) -> BTreeMap<&str, Vec<&LabeledImage>> {
        let mut map: BTreeMap<&str, Vec<&LabeledImage>> = BTreeMap::new();
        for img in &self.images {
            map.entry(img.identity_id.as_str()).or_default().push(img);
        }
        map
    }

    /// Images whose key satisfies `keep`, in dataset order.
    pub fn select(&self, mut keep: impl FnMut(&LabeledImage) -> bool) -> Vec<LabeledImage> {
        self.images.iter().filter(|i| keep(i)).cloned().collect()
    }

    pub fn resolution(&self) -> Option<(usize, usize)> {
        self.images.first().map(|i| (i.image.height(), i.image.width()))
    }
}
