use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::png::{read_png, write_png};
use super::{Dataset, ImageKey, LabeledImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub identity_id: String,
    pub image_id: String,
    pub path: PathBuf,
}

/// Files of an identity-labeled dataset laid out as
/// `<root>/<identity_id>/<image_id>.png`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub source_tag: String,
    /// Identities dropped while loading, with the reason.
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn keys(&self) -> Vec<ImageKey> {
        self.entries
            .iter()
            .map(|e| ImageKey::new(e.identity_id.clone(), e.image_id.clone()))
            .collect()
    }

    pub fn identity_count(&self) -> usize {
        let mut ids: Vec<&str> = self.entries.iter().map(|e| e.identity_id.as_str()).collect();
        ids.dedup();
        ids.len()
    }

    /// Decodes every entry into memory.
    pub fn load_images(&self) -> Result<Dataset> {
        let images = self
            .entries
            .iter()
            .map(|e| {
                Ok(LabeledImage::new(
                    read_png(&e.path)?,
                    e.identity_id.clone(),
                    e.image_id.clone(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(images, self.source_tag.clone()))
    }
}

/// Enumerates `<root>/<identity>/<image>.png`, decoding each file once to
/// validate it. Identities with fewer than two images are dropped with a
/// warning.
pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut per_identity: BTreeMap<String, Vec<ManifestEntry>> = BTreeMap::new();
    for dir in sorted_children(root)? {
        if !dir.is_dir() {
            continue;
        }
        let identity_id = file_name(&dir);
        let mut images = Vec::new();
        for file in sorted_children(&dir)? {
            let is_png = file.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !file.is_file() || !is_png {
                continue;
            }
            read_png(&file)?;
            let image_id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            images.push(ManifestEntry {
                identity_id: identity_id.clone(),
                image_id,
                path: file,
            });
        }
        per_identity.insert(identity_id, images);
    }

    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (identity, images) in per_identity {
        if images.len() < 2 {
            let msg = format!(
                "identity `{identity}` has {} image(s); at least 2 required, dropped",
                images.len()
            );
            warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        entries.extend(images);
    }
    if entries.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no identities found under {}",
            root.display()
        )));
    }
    Ok(DatasetManifest {
        entries,
        source_tag: root.display().to_string(),
        warnings,
    })
}

/// Writes a dataset as a PNG tree and returns the resulting manifest.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::with_capacity(dataset.len());
    for img in &dataset.images {
        let path = root.join(&img.identity_id).join(format!("{}.png", img.image_id));
        write_png(&path, &img.image)?;
        entries.push(ManifestEntry {
            identity_id: img.identity_id.clone(),
            image_id: img.image_id.clone(),
            path,
        });
    }
    Ok(DatasetManifest {
        entries,
        source_tag: dataset.source_tag.clone(),
        warnings: Vec::new(),
    })
}

/// CSV with header `identity_id,image_id,path`.
pub fn write_manifest_csv(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for entry in &manifest.entries {
        writer.serialize(entry)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest_csv(path: &Path, source_tag: &str) -> Result<DatasetManifest> {
    let mut reader = csv::Reader::from_path(path)?;
    let entries = reader
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestEntry>, _>>()?;
    Ok(DatasetManifest {
        entries,
        source_tag: source_tag.to_string(),
        warnings: Vec::new(),
    })
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
