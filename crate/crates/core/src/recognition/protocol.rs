use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{identify, summarize, Gallery, PcaModel, Prediction, RecognitionOutcome};
use crate::dataio::LabeledImage;
use crate::deanon::Deanonymizer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Clear enrollment, clear probes.
    ClearBaseline,
    /// Clear enrollment, anonymized probes.
    Naive,
    /// Anonymized enrollment, anonymized probes.
    Parrot,
    /// Clear enrollment, de-anonymized probes.
    Reversal,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::ClearBaseline => "clear_baseline",
            Protocol::Naive => "naive",
            Protocol::Parrot => "parrot",
            Protocol::Reversal => "reversal",
        }
    }
}

/// Images and recognizer shared by every protocol of one experiment.
pub struct ProtocolData<'a> {
    /// Fitted once on clear de-anonymization training images.
    pub pca: &'a PcaModel,
    pub clear_enroll: &'a [LabeledImage],
    pub clear_test: &'a [LabeledImage],
    pub anon_enroll: &'a [LabeledImage],
    pub anon_test: &'a [LabeledImage],
}

fn identities(images: &[LabeledImage]) -> BTreeSet<&str> {
    images.iter().map(|i| i.identity_id.as_str()).collect()
}

pub fn run_protocol(
    protocol: Protocol,
    data: &ProtocolData<'_>,
    deanonymizer: Option<&dyn Deanonymizer>,
) -> Result<RecognitionOutcome> {
    if identities(data.clear_enroll) != identities(data.anon_test) {
        return Err(Error::InvalidParameter(
            "enrollment and test identity sets differ".into(),
        ));
    }
    match (protocol, deanonymizer.is_some()) {
        (Protocol::Reversal, false) => {
            return Err(Error::InvalidParameter(
                "reversal protocol requires a de-anonymizer".into(),
            ))
        }
        (p, true) if p != Protocol::Reversal => {
            return Err(Error::InvalidParameter(format!(
                "{} protocol does not take a de-anonymizer",
                p.as_str()
            )))
        }
        _ => {}
    }

    let enrolled = match protocol {
        Protocol::Parrot => data.anon_enroll,
        _ => data.clear_enroll,
    };
    let gallery = Gallery::from_images(data.pca, enrolled)?;

    let probes = match protocol {
        Protocol::ClearBaseline => data.clear_test,
        _ => data.anon_test,
    };
    let mut predictions = Vec::with_capacity(probes.len());
    for probe in probes {
        let image = match deanonymizer {
            Some(d) => d.deanonymize(&probe.image)?,
            None => probe.image.clone(),
        };
        let embedding = data.pca.embed(&image)?;
        predictions.push(Prediction {
            image_id: probe.qualified_id(),
            true_id: probe.identity_id.clone(),
            predicted_id: identify(&gallery, &embedding)?.to_string(),
        });
    }
    summarize(predictions)
}
