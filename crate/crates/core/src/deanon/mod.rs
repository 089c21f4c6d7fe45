//! Specialized and signal-processing de-anonymization attacks.
//!
//! Every attack implements [`Deanonymizer`], so the recognition protocols
//! can treat a learned permutation, a gray-pixel interpolator, a resampling
//! filter, a deconvolution or a trained autoencoder uniformly.

mod deconv;
mod interpolate;
mod permutation;
mod resample;

pub use deconv::{
    grid_search_deconv, richardson_lucy, wiener_deconv, DeconvMethod, DeconvModel, DeconvParams, BALANCE_GRID,
    PSF_SIGMA_GRID, RL_ITERATION_GRID,
};
pub use interpolate::{interpolate_gray, is_snow_gray, GrayInterpolator};
pub use permutation::{apply_permutation, learn_permutation, PermutationMap};
pub use resample::{resample, resample_search, resample_search_modes, ResampleMode, ResampleModel, ResampleSearch};

use crate::error::Result;
use crate::image::ImageTensor;

/// A transform mapping an anonymized image back towards its clear version.
pub trait Deanonymizer {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor>;
}

impl<F> Deanonymizer for F
where
    F: Fn(&ImageTensor) -> Result<ImageTensor>,
{
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        self(img)
    }
}

/// `(clear, anonymized)` training pair.
pub type ImagePair = (ImageTensor, ImageTensor);

pub(crate) fn check_pairs(pairs: &[ImagePair]) -> Result<()> {
    use crate::error::Error;
    let first = pairs
        .first()
        .ok_or_else(|| Error::InsufficientData("no training pairs".into()))?;
    for (clear, anon) in pairs {
        first.0.ensure_same_shape(clear)?;
        first.0.ensure_same_shape(anon)?;
    }
    Ok(())
}
