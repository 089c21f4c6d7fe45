//! Anonymization methods. Every method is a deterministic function of the
//! image, its parameters, a secret key and a noise seed.

mod basic;
mod dp;
mod ksame;
mod overlay;
mod permute;
mod spec;

pub use basic::{
    blur_sigma, convolve_image, eye_mask, eye_mask_rect, gaussian_blur, gaussian_noise, gaussian_taps, pixelate,
};
pub use dp::{dp_pix, dp_pix_scale, dp_samp, dp_samp_detailed, dp_snow, dp_snow_positions, DpSampOutput, SNOW_GRAY};
pub use ksame::{build_background_db, k_same_eigen, k_same_pixel, BackgroundDb, BackgroundRecord};
pub use overlay::{combined_overlay, k_rtio, k_rtio_with_alpha, select_overlays, OverlaySet, RTIO_ALPHA, RTIO_BLOCK};
pub use permute::{block_permutation, block_permute, block_permute_with, pixel_relocate, relocation_map};
pub use spec::{AnonymizerContext, AnonymizerSpec, Method};

pub(crate) use basic::convolve_plane;
pub(crate) use permute::{gather_pixels, invert};
