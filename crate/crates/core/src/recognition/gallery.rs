use crate::dataio::LabeledImage;
use crate::error::{Error, Result};

use super::PcaModel;

/// Enrolled embeddings, one entry per enrolled image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    entries: Vec<(String, Vec<f64>)>,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enroll(&mut self, identity_id: impl Into<String>, embedding: Vec<f64>) {
        self.entries.push((identity_id.into(), embedding));
    }

    pub fn from_images(pca: &PcaModel, images: &[LabeledImage]) -> Result<Self> {
        let mut gallery = Self::new();
        for img in images {
            gallery.enroll(img.identity_id.clone(), pca.embed(&img.image)?);
        }
        Ok(gallery)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Nearest enrolled embedding by Euclidean distance; exact ties resolve to
/// the lexicographically smaller identity.
pub fn identify<'g>(gallery: &'g Gallery, probe: &[f64]) -> Result<&'g str> {
    let mut best: Option<(f64, &str)> = None;
    for (identity, emb) in &gallery.entries {
        if emb.len() != probe.len() {
            return Err(Error::shape(
                format!("{}-d embedding", emb.len()),
                format!("{}-d probe", probe.len()),
            ));
        }
        let dist: f64 = emb.iter().zip(probe).map(|(a, b)| (a - b).powi(2)).sum();
        best = match best {
            None => Some((dist, identity)),
            Some((bd, bid)) if dist < bd || (dist == bd && identity.as_str() < bid) => Some((dist, identity)),
            keep => keep,
        };
    }
    best.map(|(_, id)| id)
        .ok_or_else(|| Error::InsufficientData("gallery is empty".into()))
}
