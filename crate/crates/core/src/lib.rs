//! Face-image anonymization, de-anonymization attacks and the reversibility
//! evaluation pipeline.
//!
//! The crate is organised bottom-up:
//!
//! - [`image`] holds the [`ImageTensor`] payload shared by every stage.
//! - [`dataio`] loads and writes PNG datasets, splits them by identity and
//!   renders synthetic faces for desk-scale experiments.
//! - [`anonymizers`] implements the anonymization methods.
//! - [`deanon`] holds the specialized and signal-processing attacks.
//! - [`neural`] is the convolution / linear / deconvolution autoencoder with
//!   its hand-written backward pass and trainer.
//! - [`recognition`] provides eigenface identification and the naive, parrot
//!   and reversal attacker protocols.
//! - [`metrics`] has SSIM, MSE/MAE and the reversibility score.
//! - [`harness`] wires everything into experiments and suites.

pub mod anonymizers;
pub mod dataio;
pub mod deanon;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod neural;
pub mod recognition;
mod seeding;

pub use error::{Error, Result};
pub use image::ImageTensor;
