use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub true_id: String,
    pub predicted_id: String,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.true_id == self.predicted_id
    }
}

/// Identification results with statistics computed over identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionOutcome {
    pub predictions: Vec<Prediction>,
    pub per_identity: BTreeMap<String, f64>,
    pub mean: f64,
    /// Half-width of the 95% confidence interval of the mean.
    pub ci: f64,
}

/// Per-identity accuracy, their mean, and `1.96 · s / √n` with `s` the
/// sample standard deviation over identities.
pub fn summarize(predictions: Vec<Prediction>) -> Result<RecognitionOutcome> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for p in &predictions {
        let entry = tally.entry(p.true_id.clone()).or_default();
        entry.1 += 1;
        if p.correct() {
            entry.0 += 1;
        }
    }
    if tally.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "confidence interval needs at least 2 identities, got {}",
            tally.len()
        )));
    }
    let per_identity: BTreeMap<String, f64> = tally
        .into_iter()
        .map(|(id, (ok, total))| (id, ok as f64 / total as f64))
        .collect();
    let n = per_identity.len() as f64;
    let mean = per_identity.values().sum::<f64>() / n;
    let var = per_identity.values().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(RecognitionOutcome {
        predictions,
        per_identity,
        mean,
        ci: 1.96 * var.sqrt() / n.sqrt(),
    })
}
