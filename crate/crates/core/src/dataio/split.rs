use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ImageKey;
use crate::error::{Error, Result};
use crate::seeding::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    /// Identities reserved for k-Same background data and overlays.
    pub background_count: usize,
    /// Identities used for enrollment and testing.
    pub test_identity_count: usize,
    /// Share of each evaluation identity's images that goes to enrollment.
    #[serde(default = "default_enroll_fraction")]
    pub enroll_fraction: f64,
}

fn default_enroll_fraction() -> f64 {
    0.5
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            background_count: 10,
            test_identity_count: 15,
            enroll_fraction: 0.5,
        }
    }
}

/// Identity-level split into background, de-anonymization training and
/// evaluation sets; evaluation images are further split into enrollment
/// and test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub background_ids: BTreeSet<String>,
    pub training_ids: BTreeSet<String>,
    pub eval_ids: BTreeSet<String>,
    pub enrollment_images: BTreeSet<ImageKey>,
    pub test_images: BTreeSet<ImageKey>,
}

impl SplitAssignment {
    pub fn is_background(&self, identity: &str) -> bool {
        self.background_ids.contains(identity)
    }

    pub fn is_training(&self, identity: &str) -> bool {
        self.training_ids.contains(identity)
    }

    pub fn is_enrollment(&self, key: &ImageKey) -> bool {
        self.enrollment_images.contains(key)
    }

    pub fn is_test(&self, key: &ImageKey) -> bool {
        self.test_images.contains(key)
    }
}

/// Deterministic split: a pure function of the keys, the parameters and
/// `seed`.
pub fn split_dataset(keys: &[ImageKey], params: &SplitParams, seed: u64) -> Result<SplitAssignment> {
    if !(params.enroll_fraction > 0.0 && params.enroll_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "enroll_fraction {} must lie in (0, 1)",
            params.enroll_fraction
        )));
    }
    let mut per_identity: BTreeMap<&str, Vec<&ImageKey>> = BTreeMap::new();
    for key in keys {
        per_identity.entry(&key.identity_id).or_default().push(key);
    }
    let total = per_identity.len();
    if params.background_count + params.test_identity_count >= total {
        return Err(Error::InsufficientData(format!(
            "{} background + {} test identities leave no training identities out of {total}",
            params.background_count, params.test_identity_count
        )));
    }
    if params.test_identity_count == 0 {
        return Err(Error::InsufficientData("no test identities requested".into()));
    }

    let mut identities: Vec<&str> = per_identity.keys().copied().collect();
    identities.shuffle(&mut rng_for(seed, "split/identities"));
    let (background, rest) = identities.split_at(params.background_count);
    let (eval, training) = rest.split_at(params.test_identity_count);

    let mut enrollment_images = BTreeSet::new();
    let mut test_images = BTreeSet::new();
    for identity in eval {
        let mut images = per_identity[identity].clone();
        images.sort();
        let n = images.len();
        let n_enroll = (params.enroll_fraction * n as f64).ceil() as usize;
        if n < 2 || n_enroll >= n {
            return Err(Error::InsufficientData(format!(
                "identity `{identity}` has {n} image(s); cannot split into enrollment and test"
            )));
        }
        images.shuffle(&mut rng_for(seed, &format!("split/images/{identity}")));
        enrollment_images.extend(images[..n_enroll].iter().map(|k| (*k).clone()));
        test_images.extend(images[n_enroll..].iter().map(|k| (*k).clone()));
    }

    let owned = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    Ok(SplitAssignment {
        seed,
        background_ids: owned(background),
        training_ids: owned(training),
        eval_ids: owned(eval),
        enrollment_images,
        test_images,
    })
}
