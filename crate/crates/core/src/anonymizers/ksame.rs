//! k-Same style averaging against a background identity database.

use crate::dataio::LabeledImage;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::recognition::{fit_pca, PcaModel};

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundRecord {
    pub identity_id: String,
    pub coeffs: Vec<f64>,
    pub image: ImageTensor,
}

/// Background identities, each represented by one image and its PCA
/// coefficients. The PCA is fitted on every background image.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundDb {
    pub pca: PcaModel,
    pub records: Vec<BackgroundRecord>,
}

pub fn build_background_db(background: &[LabeledImage], components: usize) -> Result<BackgroundDb> {
    let mut sorted: Vec<&LabeledImage> = background.iter().collect();
    sorted.sort_by_key(|i| i.key());
    let mut firsts: Vec<&LabeledImage> = Vec::new();
    for img in &sorted {
        if firsts.last().is_none_or(|f| f.identity_id != img.identity_id) {
            firsts.push(img);
        }
    }
    if firsts.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "background database needs at least 2 identities, got {}",
            firsts.len()
        )));
    }
    let images: Vec<ImageTensor> = sorted.iter().map(|i| i.image.clone()).collect();
    let pca = fit_pca(&images, components)?;
    let records = firsts
        .into_iter()
        .map(|img| {
            Ok(BackgroundRecord {
                identity_id: img.identity_id.clone(),
                coeffs: pca.embed(&img.image)?,
                image: img.image.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BackgroundDb { pca, records })
}

impl BackgroundDb {
    /// Indices of the `count` records nearest to `coeffs` (ties by index).
    pub fn nearest(&self, coeffs: &[f64], count: usize) -> Result<Vec<usize>> {
        if count > self.records.len() {
            return Err(Error::InsufficientData(format!(
                "k - 1 = {count} exceeds the {} background identities",
                self.records.len()
            )));
        }
        let mut dist: Vec<(f64, usize)> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.coeffs.iter().zip(coeffs).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(dist.into_iter().take(count).map(|(_, i)| i).collect())
    }

    /// The `k − 1` background records k-Same averages `img` with.
    pub fn neighbors_of(&self, img: &ImageTensor, k: usize) -> Result<Vec<usize>> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
        }
        self.nearest(&self.pca.embed(img)?, k - 1)
    }
}

/// Pixel-wise mean of the image and its `k − 1` nearest background faces.
pub fn k_same_pixel(img: &ImageTensor, db: &BackgroundDb, k: usize) -> Result<ImageTensor> {
    let neighbors = db.neighbors_of(img, k)?;
    let mut acc = img.data().to_vec();
    for &i in &neighbors {
        let other = &db.records[i].image;
        img.ensure_same_shape(other)?;
        for (a, v) in acc.iter_mut().zip(other.data()) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= k as f64);
    ImageTensor::from_clamped(img.height(), img.width(), acc)
}

/// Inverse PCA transform of the mean coefficient vector of the image and
/// its `k − 1` nearest background faces.
pub fn k_same_eigen(img: &ImageTensor, db: &BackgroundDb, k: usize) -> Result<ImageTensor> {
    let own = db.pca.embed(img)?;
    let neighbors = db.neighbors_of(img, k)?;
    let mut mean = own.clone();
    for &i in &neighbors {
        for (m, c) in mean.iter_mut().zip(&db.records[i].coeffs) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    db.pca.reconstruct(&mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn labeled(n_ids: usize, per: usize, seed: u64) -> Vec<LabeledImage> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n_ids {
            let base: f64 = rng.random_range(0.2..0.8);
            for j in 0..per {
                let img =
                    ImageTensor::from_fn(8, 8, |_, _, _| (base + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0)).unwrap();
                out.push(LabeledImage::new(img, format!("bg{i:03}"), format!("{j}")));
            }
        }
        out
    }

    #[test]
    fn one_record_per_identity() {
        let bg = labeled(200, 1, 1);
        let db = build_background_db(&bg, 20).unwrap();
        assert_eq!(db.records.len(), 200);
        let two = labeled(2, 1, 2);
        let db1 = build_background_db(&two, 1).unwrap();
        assert_eq!(db1.records[0].coeffs.len(), 1);
        assert!(build_background_db(&labeled(1, 3, 3), 1).is_err());
    }

    #[test]
    fn representation_error_decreases_with_components() {
        let bg = labeled(12, 2, 4);
        let mut last = f64::INFINITY;
        for c in [1, 2, 4, 8, 16, 24] {
            let db = build_background_db(&bg, c).unwrap();
            let err: f64 = db
                .records
                .iter()
                .map(|r| {
                    let back = db.pca.reconstruct_raw(&r.coeffs).unwrap();
                    back.iter()
                        .zip(r.image.data())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum();
            assert!(err <= last + 1e-12, "{c}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-12);
    }

    #[test]
    fn pixel_mean_matches_oracle_and_bounds() {
        let bg = labeled(15, 1, 5);
        let db = build_background_db(&bg, 10).unwrap();
        let probe = labeled(1, 1, 6).remove(0).image;
        let k = 10;
        let out = k_same_pixel(&probe, &db, k).unwrap();
        let nb = db.neighbors_of(&probe, k).unwrap();
        assert_eq!(nb.len(), 9);
        let mut contributors = vec![&probe];
        contributors.extend(nb.iter().map(|&i| &db.records[i].image));
        for idx in 0..probe.len() {
            let vals: Vec<f64> = contributors.iter().map(|c| c.data()[idx]).collect();
            let mean = vals.iter().sum::<f64>() / k as f64;
            assert!((out.data()[idx] - mean).abs() < 1e-12);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(out.data()[idx] >= lo - 1e-12 && out.data()[idx] <= hi + 1e-12);
        }
        assert!(k_same_pixel(&probe, &db, 17).is_err());
    }

    #[test]
    fn exact_copy_in_db_is_fixed_point_for_k2() {
        let bg = labeled(6, 1, 7);
        let copy = bg[3].image.clone();
        let db = build_background_db(&bg, 6).unwrap();
        assert_eq!(k_same_pixel(&copy, &db, 2).unwrap(), copy);
        let eig = k_same_eigen(&copy, &db, 2).unwrap();
        for (a, b) in eig.data().iter().zip(copy.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn eigen_output_valid_and_depends_on_own_coefficients() {
        let bg = labeled(12, 2, 8);
        let db = build_background_db(&bg, 12).unwrap();
        let probes = labeled(2, 1, 9);
        let a = &probes[0].image;
        // a slightly perturbed copy shares the neighbor set
        let b = ImageTensor::from_clamped(8, 8, a.data().iter().map(|v| v * 0.97 + 0.01).collect()).unwrap();
        assert_eq!(db.neighbors_of(a, 10).unwrap(), db.neighbors_of(&b, 10).unwrap());
        let oa = k_same_eigen(a, &db, 10).unwrap();
        let ob = k_same_eigen(&b, &db, 10).unwrap();
        assert!(oa.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(oa, ob);
    }
}
