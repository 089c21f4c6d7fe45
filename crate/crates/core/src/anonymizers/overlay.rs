//! k-RTIO: keyed, block-permuted, semi-transparent overlays.

use sha2::{Digest, Sha256};

use super::permute::block_permute;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Blend weight of the combined overlay.
pub const RTIO_ALPHA: f64 = 0.4;
/// Block size used to scramble each overlay.
pub const RTIO_BLOCK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OverlaySet {
    images: Vec<ImageTensor>,
}

impl OverlaySet {
    pub fn new(images: Vec<ImageTensor>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InsufficientData("overlay set is empty".into()))?;
        for img in &images {
            first.ensure_same_shape(img)?;
        }
        Ok(Self { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Keyed pseudo-random function of `(key, image_id, counter)`.
fn prf(key: u64, image_id: &str, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(key.to_le_bytes());
    h.update((image_id.len() as u64).to_le_bytes());
    h.update(image_id.as_bytes());
    h.update(counter.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("32-byte digest"))
}

/// Overlay indices chosen for an image: distinct while the set allows it.
pub fn select_overlays(key: u64, image_id: &str, count: usize, available: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..available).collect();
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        if pool.is_empty() {
            pool = (0..available).collect();
        }
        let pick = (prf(key, image_id, j as u64) % pool.len() as u64) as usize;
        out.push(pool.swap_remove(pick));
    }
    out
}

pub fn k_rtio(img: &ImageTensor, overlays: &OverlaySet, count: usize, key: u64, image_id: &str) -> Result<ImageTensor> {
    k_rtio_with_alpha(img, overlays, count, key, image_id, RTIO_ALPHA)
}

/// k-RTIO with an explicit blend weight: `(1 − α) · img + α · combined`,
/// where `combined` is the mean of the selected, block-permuted overlays.
pub fn k_rtio_with_alpha(
    img: &ImageTensor,
    overlays: &OverlaySet,
    count: usize,
    key: u64,
    image_id: &str,
    alpha: f64,
) -> Result<ImageTensor> {
    if count == 0 {
        return Err(Error::InvalidParameter("k-RTIO needs at least one overlay".into()));
    }
    let combined = combined_overlay(img, overlays, count, key, image_id)?;
    let data = img
        .data()
        .iter()
        .zip(combined.data())
        .map(|(a, o)| (1.0 - alpha) * a + alpha * o)
        .collect();
    ImageTensor::from_clamped(img.height(), img.width(), data)
}

/// Mean of the selected overlays after keyed block permutation.
pub fn combined_overlay(
    img: &ImageTensor,
    overlays: &OverlaySet,
    count: usize,
    key: u64,
    image_id: &str,
) -> Result<ImageTensor> {
    img.ensure_same_shape(&overlays.images[0])?;
    let block = RTIO_BLOCK.min(img.height()).min(img.width());
    let mut acc = vec![0.0; img.len()];
    for idx in select_overlays(key, image_id, count, overlays.len()) {
        let scrambled = block_permute(&overlays.images[idx], block, key)?;
        for (a, v) in acc.iter_mut().zip(scrambled.data()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    ImageTensor::from_clamped(img.height(), img.width(), acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overlays() -> OverlaySet {
        OverlaySet::new(
            (0..5)
                .map(|k| {
                    ImageTensor::from_fn(32, 32, |y, x, c| ((y * 3 + x * 5 + c + k * 7) % 17) as f64 / 16.0).unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    fn face() -> ImageTensor {
        ImageTensor::from_fn(32, 32, |y, x, c| 0.3 + 0.4 * ((y + x + c) % 9) as f64 / 8.0).unwrap()
    }

    #[test]
    fn zero_alpha_is_identity() {
        let f = face();
        assert_eq!(k_rtio_with_alpha(&f, &overlays(), 1, 3, "a/1", 0.0).unwrap(), f);
    }

    #[test]
    fn deterministic_per_image_id() {
        let f = face();
        let o = overlays();
        assert_eq!(
            k_rtio(&f, &o, 3, 9, "x/2").unwrap(),
            k_rtio(&f, &o, 3, 9, "x/2").unwrap()
        );
        let picks: Vec<_> = (0..20).map(|i| select_overlays(9, &format!("x/{i}"), 3, 5)).collect();
        assert!(picks.iter().any(|p| p != &picks[0]));
        for p in &picks {
            let mut s = p.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
        }
    }

    #[test]
    fn blend_recomputed_pixelwise() {
        let f = face();
        let o = overlays();
        let out = k_rtio(&f, &o, 2, 4, "id/7").unwrap();
        let combined = combined_overlay(&f, &o, 2, 4, "id/7").unwrap();
        for i in 0..f.len() {
            let want = (1.0 - RTIO_ALPHA) * f.data()[i] + RTIO_ALPHA * combined.data()[i];
            assert!((out.data()[i] - want).abs() < 1e-12);
        }
        assert!(OverlaySet::new(vec![]).is_err());
    }
}
