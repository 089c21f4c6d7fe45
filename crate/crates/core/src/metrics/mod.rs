//! Image similarity measures and the reversibility score.

mod error;
mod reversibility;
mod ssim;

pub use error::{mae, mse};
pub use reversibility::{reversibility, ReversibilityCategory, ReversibilityScore};
pub use ssim::{
    filter_plane, filter_plane_adjoint, gaussian_window, ssim, ssim_plane, ssim_plane_with_grad, SsimConfig,
};
