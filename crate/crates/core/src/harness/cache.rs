//! Content-addressed storage of anonymized image sets and trained models.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataio::{read_png, write_png, LabeledImage};
use crate::error::{Error, Result};
use crate::neural::{load_checkpoint, save_checkpoint, AutoencoderModel};

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hex SHA-256 over the keys and 8-bit pixel data of a set of images.
pub fn images_hash(images: &[LabeledImage]) -> String {
    let mut h = Sha256::new();
    for img in images {
        h.update(img.identity_id.as_bytes());
        h.update([0]);
        h.update(img.image_id.as_bytes());
        h.update([0]);
        h.update((img.image.height() as u64).to_le_bytes());
        h.update((img.image.width() as u64).to_le_bytes());
        h.update(img.image.to_u8());
    }
    hex::encode(h.finalize())
}

/// Cache rooted at a directory; `None` disables caching.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    root: Option<PathBuf>,
}

impl Cache {
    pub fn new(root: Option<PathBuf>) -> Self {
        Self { root }
    }

    pub fn disabled() -> Self {
        Self { root: None }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn set_dir(&self, key: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("anonymized").join(key))
    }

    /// Loads a cached image set, in the order of `like`.
    pub fn load_images(&self, key: &str, like: &[LabeledImage]) -> Result<Option<Vec<LabeledImage>>> {
        let Some(dir) = self.set_dir(key) else { return Ok(None) };
        if !dir.join("complete").exists() {
            return Ok(None);
        }
        like.iter()
            .map(|img| {
                let path = dir.join(&img.identity_id).join(format!("{}.png", img.image_id));
                Ok(img.with_image(read_png(&path)?))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Stores an image set as a PNG tree with a JSON sidecar describing it.
    pub fn store_images<T: Serialize>(&self, key: &str, images: &[LabeledImage], sidecar: &T) -> Result<()> {
        let Some(dir) = self.set_dir(key) else { return Ok(()) };
        let staging = staging_path(&dir);
        for img in images {
            write_png(
                &staging.join(&img.identity_id).join(format!("{}.png", img.image_id)),
                &img.image,
            )?;
        }
        write_json(&staging.join("spec.json"), sidecar)?;
        std::fs::write(staging.join("complete"), b"").map_err(|e| Error::io(&staging, e))?;
        publish(&staging, &dir)
    }

    fn model_path(&self, key: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("models").join(format!("{key}.ckpt")))
    }

    pub fn load_model(&self, key: &str) -> Result<Option<AutoencoderModel>> {
        match self.model_path(key) {
            Some(p) if p.exists() => load_checkpoint(&p).map(Some),
            _ => Ok(None),
        }
    }

    pub fn store_model(&self, key: &str, model: &AutoencoderModel) -> Result<()> {
        match self.model_path(key) {
            Some(p) => {
                let staging = staging_path(&p);
                save_checkpoint(model, &staging)?;
                publish(&staging, &p)
            }
            None => Ok(()),
        }
    }

    /// Path for an auxiliary artifact of a cached model, such as its
    /// training log.
    pub fn model_artifact(&self, key: &str, suffix: &str) -> Option<PathBuf> {
        self.root
            .as_ref()
            .map(|r| r.join("models").join(format!("{key}.{suffix}")))
    }
}

static STAGING_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Sibling path of `target` unique to this process and call.
pub(crate) fn staging_path(target: &Path) -> PathBuf {
    let n = STAGING_COUNTER.fetch_add(1, Ordering::Relaxed);
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    target.with_file_name(format!(".{name}.{}.{n}.tmp", std::process::id()))
}

/// Renames a fully written file or directory into place. If another writer
/// published the same content-addressed entry first, the staged copy is
/// discarded.
pub(crate) fn publish(staging: &Path, target: &Path) -> Result<()> {
    match std::fs::rename(staging, target) {
        Ok(()) => Ok(()),
        Err(_) if target.exists() => {
            let _ = if staging.is_dir() {
                std::fs::remove_dir_all(staging)
            } else {
                std::fs::remove_file(staging)
            };
            Ok(())
        }
        Err(e) => Err(Error::io(target, e)),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
