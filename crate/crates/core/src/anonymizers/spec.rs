//! Serializable anonymizer descriptions and their application.

use serde::{Deserialize, Serialize};

use super::{
    block_permute, dp_pix, dp_samp, dp_snow, eye_mask, gaussian_blur, gaussian_noise, k_rtio, k_same_eigen,
    k_same_pixel, pixel_relocate, pixelate, BackgroundDb, OverlaySet,
};
use crate::dataio::LabeledImage;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seeding::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "snake_case")]
pub enum Method {
    Identity,
    EyeMask,
    BlockPermute { block_size: usize },
    PixelRelocate { steps: usize },
    GaussianNoise { sigma: f64 },
    GaussianBlur { kernel: usize },
    Pixelate { size: usize },
    KRtio { overlays: usize },
    DpPix { epsilon: f64, b: f64, m: usize },
    DpSnow { delta: f64 },
    DpSamp { epsilon: f64, k: usize, m: f64 },
    KSamePixel { k: usize },
    KSameEigen { k: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Identity => "identity",
            Method::EyeMask => "eye_mask",
            Method::BlockPermute { .. } => "block_permute",
            Method::PixelRelocate { .. } => "pixel_relocate",
            Method::GaussianNoise { .. } => "gaussian_noise",
            Method::GaussianBlur { .. } => "gaussian_blur",
            Method::Pixelate { .. } => "pixelate",
            Method::KRtio { .. } => "k_rtio",
            Method::DpPix { .. } => "dp_pix",
            Method::DpSnow { .. } => "dp_snow",
            Method::DpSamp { .. } => "dp_samp",
            Method::KSamePixel { .. } => "k_same_pixel",
            Method::KSameEigen { .. } => "k_same_eigen",
        }
    }
}

/// A method, its parameters, the secret key and the noise seed. Together
/// they fully determine the anonymization of any labeled image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizerSpec {
    #[serde(flatten)]
    pub method: Method,
    #[serde(default)]
    pub key: u64,
    #[serde(default)]
    pub noise_seed: u64,
}

/// Side data some methods need: the k-Same background database and the
/// k-RTIO overlay set.
#[derive(Debug, Clone, Default)]
pub struct AnonymizerContext {
    pub background: Option<BackgroundDb>,
    pub overlays: Option<OverlaySet>,
}

impl AnonymizerSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            key: 0,
            noise_seed: 0,
        }
    }

    pub fn with_key(mut self, key: u64) -> Self {
        self.key = key;
        self
    }

    pub fn with_noise_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    /// Short human-readable label such as `gaussian_blur(kernel=9)`.
    pub fn label(&self) -> String {
        let params = match serde_json::to_value(&self.method) {
            Ok(serde_json::Value::Object(map)) => match map.get("params") {
                Some(serde_json::Value::Object(p)) => {
                    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
                }
                _ => String::new(),
            },
            _ => String::new(),
        };
        format!("{}({params})", self.method.name())
    }

    pub fn needs_background(&self) -> bool {
        matches!(self.method, Method::KSamePixel { .. } | Method::KSameEigen { .. })
    }

    pub fn needs_overlays(&self) -> bool {
        matches!(self.method, Method::KRtio { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self.method {
            Method::BlockPermute { block_size: 0 } => bad("block_size must be at least 1".into()),
            Method::PixelRelocate { steps: 0 } => bad("steps must be at least 1".into()),
            Method::GaussianNoise { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma {sigma} must be a finite value >= 0"))
            }
            Method::GaussianBlur { kernel } if kernel < 3 || kernel % 2 == 0 => {
                bad(format!("blur kernel {kernel} must be odd and at least 3"))
            }
            Method::Pixelate { size: 0 } => bad("pixelate size must be at least 1".into()),
            Method::KRtio { overlays: 0 } => bad("k-RTIO needs at least one overlay".into()),
            Method::DpPix { epsilon, b, m } if !(epsilon > 0.0) || !(b >= 1.0) || m == 0 => {
                bad(format!("dp_pix parameters invalid: epsilon {epsilon}, b {b}, m {m}"))
            }
            Method::DpSnow { delta } if !(0.0..=1.0).contains(&delta) => bad(format!("delta {delta} outside [0, 1]")),
            Method::DpSamp { epsilon, k, m } if !(epsilon > 0.0) || k < 2 || !(m >= 0.0) => {
                bad(format!("dp_samp parameters invalid: epsilon {epsilon}, k {k}, m {m}"))
            }
            Method::KSamePixel { k } | Method::KSameEigen { k } if k < 2 => bad(format!("k = {k} must be at least 2")),
            _ => Ok(()),
        }
    }

    /// Noise seed of one image, derived from the spec's seed and the
    /// image's qualified id.
    pub fn image_seed(&self, qualified_id: &str) -> u64 {
        derive_seed(self.noise_seed, qualified_id)
    }

    pub fn apply(&self, img: &LabeledImage, ctx: &AnonymizerContext) -> Result<ImageTensor> {
        let seed = self.image_seed(&img.qualified_id());
        let x = &img.image;
        match self.method {
            Method::Identity => Ok(x.clone()),
            Method::EyeMask => Ok(eye_mask(x)),
            Method::BlockPermute { block_size } => block_permute(x, block_size, self.key),
            Method::PixelRelocate { steps } => pixel_relocate(x, steps, self.key),
            Method::GaussianNoise { sigma } => gaussian_noise(x, sigma, seed),
            Method::GaussianBlur { kernel } => gaussian_blur(x, kernel),
            Method::Pixelate { size } => pixelate(x, size),
            Method::KRtio { overlays } => {
                let set = ctx
                    .overlays
                    .as_ref()
                    .ok_or_else(|| Error::Config("k_rtio requires an overlay set".into()))?;
                k_rtio(x, set, overlays, self.key, &img.qualified_id())
            }
            Method::DpPix { epsilon, b, m } => dp_pix(x, epsilon, b, m, seed),
            Method::DpSnow { delta } => dp_snow(x, delta, seed),
            Method::DpSamp { epsilon, k, m } => dp_samp(x, epsilon, k, m, seed),
            Method::KSamePixel { k } => k_same_pixel(x, background(ctx)?, k),
            Method::KSameEigen { k } => k_same_eigen(x, background(ctx)?, k),
        }
    }
}

fn background(ctx: &AnonymizerContext) -> Result<&BackgroundDb> {
    ctx.background
        .as_ref()
        .ok_or_else(|| Error::Config("k-Same requires a background database".into()))
}
