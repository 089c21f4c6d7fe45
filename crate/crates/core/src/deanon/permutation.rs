use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{check_pairs, Deanonymizer, ImagePair};
use crate::anonymizers::{gather_pixels, invert};
use crate::error::{Error, Result};
use crate::image::{to_u8, ImageTensor};

/// A learned pixel rearrangement. Applying it sets output pixel `i` to
/// input pixel `mapping[i]`, so for a learned map `mapping[i]` is the
/// anonymized position holding clear pixel `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationMap {
    pub height: usize,
    pub width: usize,
    pub mapping: Vec<usize>,
    /// Fraction of positions matched to a unique signature.
    pub confidence: f64,
}

impl PermutationMap {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            mapping: (0..height * width).collect(),
            confidence: 1.0,
        }
    }

    /// Builds a map from explicit indices, checking that they form a
    /// bijection over `height · width` positions.
    pub fn from_indices(height: usize, width: usize, mapping: Vec<usize>) -> Result<Self> {
        let n = height * width;
        if mapping.len() != n {
            return Err(Error::shape(format!("{n} indices"), format!("{}", mapping.len())));
        }
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || std::mem::replace(&mut seen[m], true) {
                return Err(Error::InvalidParameter(format!("index {m} repeated or out of range")));
            }
        }
        Ok(Self {
            height,
            width,
            mapping,
            confidence: 1.0,
        })
    }

    pub fn inverse(&self) -> Self {
        Self {
            mapping: invert(&self.mapping),
            ..self.clone()
        }
    }

    /// The index array as JSON.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.mapping)?)
    }

    pub fn from_json(height: usize, width: usize, json: &str) -> Result<Self> {
        Self::from_indices(height, width, serde_json::from_str(json)?)
    }
}

fn signatures(images: &[&ImageTensor]) -> Vec<Vec<u8>> {
    let n = images[0].pixel_count();
    (0..n)
        .map(|i| images.iter().flat_map(|img| img.pixel(i).map(to_u8)).collect())
        .collect()
}

/// Recovers a fixed pixel permutation from `(clear, anonymized)` pairs by
/// matching each position's 8-bit color sequence across all pairs.
pub fn learn_permutation(pairs: &[ImagePair]) -> Result<PermutationMap> {
    check_pairs(pairs)?;
    let (h, w) = (pairs[0].0.height(), pairs[0].0.width());
    let n = h * w;
    let clear: Vec<&ImageTensor> = pairs.iter().map(|p| &p.0).collect();
    let anon: Vec<&ImageTensor> = pairs.iter().map(|p| &p.1).collect();

    let mut candidates: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
    for (pos, sig) in signatures(&anon).into_iter().enumerate() {
        candidates.entry(sig).or_default().push(pos);
    }
    let mut cursor: HashMap<&[u8], usize> = HashMap::new();

    let mut mapping: Vec<Option<usize>> = vec![None; n];
    let mut used = vec![false; n];
    let mut unique = 0usize;
    let clear_sigs = signatures(&clear);
    for (pos, sig) in clear_sigs.iter().enumerate() {
        let Some(list) = candidates.get(sig) else { continue };
        let next = cursor.entry(sig.as_slice()).or_insert(0);
        if let Some(&anon_pos) = list.get(*next) {
            *next += 1;
            mapping[pos] = Some(anon_pos);
            used[anon_pos] = true;
            if list.len() == 1 {
                unique += 1;
            }
        }
    }

    for pos in 0..n {
        if mapping[pos].is_none() && !used[pos] {
            mapping[pos] = Some(pos);
            used[pos] = true;
        }
    }
    let mut free = (0..n).filter(|&p| !used[p]);
    let mapping = mapping
        .into_iter()
        .map(|m| m.unwrap_or_else(|| free.next().expect("free positions match unassigned ones")))
        .collect();

    Ok(PermutationMap {
        height: h,
        width: w,
        mapping,
        confidence: unique as f64 / n as f64,
    })
}

pub fn apply_permutation(map: &PermutationMap, img: &ImageTensor) -> Result<ImageTensor> {
    if img.height() != map.height || img.width() != map.width {
        return Err(Error::shape(
            format!("{}x{}", map.height, map.width),
            img.shape_string(),
        ));
    }
    Ok(gather_pixels(img, &map.mapping))
}

impl Deanonymizer for PermutationMap {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        apply_permutation(self, img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymizers::{block_permute, pixel_relocate};
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64) -> ImageTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(16, 16, |_, _, _| rng.random())
            .unwrap()
            .quantized()
    }

    #[test]
    fn identity_anonymization_gives_identity_map() {
        let pairs: Vec<ImagePair> = (0..3).map(|s| (random_image(s), random_image(s))).collect();
        let map = learn_permutation(&pairs).unwrap();
        assert_eq!(map, PermutationMap::identity(16, 16));
    }

    #[test]
    fn relocation_is_recovered_on_held_out_image() {
        let anonymize = |img: &ImageTensor| pixel_relocate(img, 50, 21).unwrap();
        let pairs: Vec<ImagePair> = (0..3).map(|s| (random_image(s), anonymize(&random_image(s)))).collect();
        let map = learn_permutation(&pairs).unwrap();
        assert!(map.confidence >= 0.999);
        let held_out = random_image(99);
        assert_eq!(apply_permutation(&map, &anonymize(&held_out)).unwrap(), held_out);
    }

    #[test]
    fn block_permutation_is_recovered() {
        let anonymize = |img: &ImageTensor| block_permute(img, 4, 8).unwrap();
        let pairs: Vec<ImagePair> = (0..3).map(|s| (random_image(s), anonymize(&random_image(s)))).collect();
        let map = learn_permutation(&pairs).unwrap();
        let held_out = random_image(77);
        assert_eq!(apply_permutation(&map, &anonymize(&held_out)).unwrap(), held_out);
    }

    #[test]
    fn constant_images_give_ties_but_a_bijection() {
        let flat = ImageTensor::filled(8, 8, 0.5).unwrap();
        let map = learn_permutation(&[(flat.clone(), flat.clone())]).unwrap();
        assert_eq!(map.confidence, 0.0);
        assert!(PermutationMap::from_indices(8, 8, map.mapping.clone()).is_ok());
    }

    #[test]
    fn apply_and_inverse() {
        let img = random_image(5);
        let id = PermutationMap::identity(16, 16);
        assert_eq!(apply_permutation(&id, &img).unwrap(), img);
        let mut idx: Vec<usize> = (0..256).collect();
        idx.rotate_left(37);
        let map = PermutationMap::from_indices(16, 16, idx).unwrap();
        let there = apply_permutation(&map, &img).unwrap();
        assert_eq!(apply_permutation(&map.inverse(), &there).unwrap(), img);

        let mut one_hot = ImageTensor::filled(16, 16, 0.0).unwrap();
        one_hot.set_pixel(100, [1.0; 3]);
        let moved = apply_permutation(&map, &one_hot).unwrap();
        assert_eq!(moved.pixel(100 - 37), [1.0; 3]);
        assert!(apply_permutation(&map, &ImageTensor::filled(8, 8, 0.0).unwrap()).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let map = PermutationMap::from_indices(8, 8, (0..64).rev().collect()).unwrap();
        let json = map.to_json().unwrap();
        assert!(json.starts_with("[63,62"));
        assert_eq!(PermutationMap::from_json(8, 8, &json).unwrap(), map);
        assert!(PermutationMap::from_indices(8, 8, vec![0; 64]).is_err());
        assert!(learn_permutation(&[]).is_err());
    }
}
