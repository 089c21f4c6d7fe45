//! Eigenface identification and the attacker protocols.
//!
//! A [`PcaModel`] is fitted on clear images, enrolled images are embedded
//! into a [`Gallery`], and probes are identified by their nearest enrolled
//! embedding. [`run_protocol`] differs per protocol only in which images
//! are enrolled and which are probed.

mod gallery;
mod pca;
mod protocol;
mod summary;

pub use gallery::{identify, Gallery};
pub use pca::{fit_pca, PcaModel};
pub use protocol::{run_protocol, Protocol, ProtocolData};
pub use summary::{summarize, Prediction, RecognitionOutcome};
