//! Parametric "faces" used in place of a real face dataset.
//!
//! Each identity draws a latent vector once (skin tone, face oval, eyes,
//! nose, mouth, hair, a fine skin texture). Every image of that identity
//! re-renders the same latent under its own [`View`]: a sub-pixel
//! translation, background, brightness and a horizontal illumination
//! gradient, plus faint pixel noise. Shapes are rendered with a one-pixel
//! soft edge so that translations are sub-pixel smooth.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledImage};
use crate::anonymizers::{convolve_plane, gaussian_taps};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::seeding::{rng_for, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub identities: usize,
    pub images_per_identity: usize,
    pub resolution: usize,
    pub seed: u64,
    /// Latent family. Families draw skin, iris, lip and hair colors from
    /// disjoint ranges, so two families share no identity.
    #[serde(default)]
    pub family: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            identities: 50,
            images_per_identity: 10,
            resolution: 32,
            seed: 7,
            family: 0,
        }
    }
}

/// Per-identity appearance. Coordinates are fractions of the image edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceLatent {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub hairline: f64,
    pub oval_half_width: f64,
    pub oval_half_height: f64,
    pub eye_y: f64,
    pub eye_spacing: f64,
    pub eye_radius: f64,
    pub iris: [f64; 3],
    pub brow_gap: f64,
    pub nose_length: f64,
    pub nose_width: f64,
    pub mouth_y: f64,
    pub mouth_half_width: f64,
    pub mouth_thickness: f64,
    pub lips: [f64; 3],
    /// Standard deviation of the multiplicative skin texture.
    pub texture_amplitude: f64,
    /// Seed of the identity's skin texture field.
    pub texture_seed: u64,
}

const MAX_SHIFT: f64 = 0.005;
const BRIGHTNESS: f64 = 0.06;
/// Largest left-to-right illumination change per image.
const LIGHT_GRADIENT: f64 = 0.05;
const BACKGROUND: std::ops::Range<f64> = 0.45..0.55;
const PIXEL_NOISE: f64 = 0.003;
/// Correlation length of the skin texture in 32-pixel units.
const TEXTURE_SCALE: f64 = 0.9;

impl FaceLatent {
    /// Draws one identity. `family` selects one of the disjoint color bands.
    pub fn sample<R: Rng>(rng: &mut R, family: u32) -> Self {
        let band = |rng: &mut R, lo: f64, hi: f64| {
            // two disjoint halves of [lo, hi], chosen by family parity
            let mid = 0.5 * (lo + hi);
            if family % 2 == 0 {
                rng.random_range(lo..mid)
            } else {
                rng.random_range(mid..hi)
            }
        };
        let skin_r = band(rng, 0.45, 0.92);
        let skin = [
            skin_r,
            skin_r * rng.random_range(0.68..0.86),
            skin_r * rng.random_range(0.50..0.72),
        ];
        let hue = band(rng, 0.0, 1.0);
        let iris = hue_color(hue, rng.random_range(0.15..0.55));
        let lips_r = band(rng, 0.45, 0.85);
        let lips = [
            lips_r,
            lips_r * rng.random_range(0.25..0.55),
            lips_r * rng.random_range(0.25..0.55),
        ];
        let hair_v = band(rng, 0.08, 0.6);
        let hair = [
            hair_v,
            hair_v * rng.random_range(0.55..0.9),
            hair_v * rng.random_range(0.3..0.7),
        ];
        Self {
            skin,
            hair,
            hairline: rng.random_range(0.14..0.26),
            oval_half_width: rng.random_range(0.27..0.38),
            oval_half_height: rng.random_range(0.36..0.45),
            eye_y: rng.random_range(0.35..0.40),
            eye_spacing: rng.random_range(0.12..0.19),
            eye_radius: rng.random_range(0.045..0.07),
            iris,
            brow_gap: rng.random_range(0.05..0.08),
            nose_length: rng.random_range(0.10..0.20),
            nose_width: rng.random_range(0.025..0.05),
            mouth_y: rng.random_range(0.66..0.74),
            mouth_half_width: rng.random_range(0.08..0.17),
            mouth_thickness: rng.random_range(0.025..0.05),
            lips,
            texture_amplitude: rng.random_range(0.04..0.12),
            texture_seed: rng.random(),
        }
    }

    /// Skin texture on the pixel grid: seeded white noise smoothed to a
    /// fixed correlation length and scaled to unit standard deviation.
    pub fn texture(&self, resolution: usize) -> Vec<f64> {
        let mut rng = rng_from(self.texture_seed);
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let raw: Vec<f64> = (0..resolution * resolution).map(|_| normal.sample(&mut rng)).collect();
        let sigma = TEXTURE_SCALE * resolution as f64 / 32.0;
        let radius = (3.0 * sigma).ceil() as usize;
        let taps = gaussian_taps(2 * radius + 1, sigma);
        let smooth = convolve_plane(&raw, resolution, resolution, &taps);
        let mean = smooth.iter().sum::<f64>() / smooth.len() as f64;
        let sd = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / smooth.len() as f64).sqrt();
        smooth.iter().map(|v| (v - mean) / sd.max(1e-12)).collect()
    }

    /// Renders the face under one set of viewing conditions.
    pub fn render(&self, resolution: usize, view: &View) -> Vec<f64> {
        let n = resolution as f64;
        let edge = 1.0 / n;
        let texture = self.texture(resolution);
        let mut data = vec![0.0; resolution * resolution * CHANNELS];
        for py in 0..resolution {
            for px in 0..resolution {
                let x = (px as f64 + 0.5) / n - view.dx;
                let y = (py as f64 + 0.5) / n - view.dy;
                let mut color = view.background;

                // face oval
                let (cx, cy) = (0.5, 0.55);
                let r = ((x - cx) / self.oval_half_width).hypot((y - cy) / self.oval_half_height);
                let face_sd = (r - 1.0) * self.oval_half_width.min(self.oval_half_height);
                let face_cover = coverage(face_sd, edge);
                blend(&mut color, self.skin, face_cover);

                // hair cap above the hairline, clipped to a slightly larger oval
                let hair_r =
                    ((x - cx) / (self.oval_half_width + 0.05)).hypot((y - cy) / (self.oval_half_height + 0.05));
                let hair_sd =
                    ((hair_r - 1.0) * self.oval_half_width).max(y - (cy - self.oval_half_height + self.hairline));
                blend(&mut color, self.hair, coverage(hair_sd, edge));

                for side in [-1.0, 1.0] {
                    let ex = cx + side * self.eye_spacing;
                    // brow
                    let brow_sd = sd_segment(
                        x,
                        y,
                        (ex - self.eye_radius * 1.3, self.eye_y - self.brow_gap),
                        (ex + self.eye_radius * 1.3, self.eye_y - self.brow_gap),
                    ) - 0.012;
                    blend(&mut color, self.hair, coverage(brow_sd, edge));
                    // eye white then iris
                    let d = (x - ex).hypot(y - self.eye_y);
                    blend(&mut color, [0.93, 0.93, 0.9], coverage(d - self.eye_radius, edge));
                    blend(&mut color, self.iris, coverage(d - self.eye_radius * 0.55, edge));
                }

                // nose
                let nose_top = self.eye_y + 0.04;
                let nose_sd =
                    sd_segment(x, y, (cx, nose_top), (cx, nose_top + self.nose_length)) - self.nose_width * 0.5;
                let shade = self.skin.map(|v| v * 0.72);
                blend(&mut color, shade, coverage(nose_sd, edge));

                // mouth
                let mouth_sd = sd_segment(
                    x,
                    y,
                    (cx - self.mouth_half_width, self.mouth_y),
                    (cx + self.mouth_half_width, self.mouth_y),
                ) - self.mouth_thickness * 0.5;
                blend(&mut color, self.lips, coverage(mouth_sd, edge));

                let grain = 1.0 + self.texture_amplitude * texture[py * resolution + px] * face_cover;
                let light = view.gain * (1.0 + view.light * (x - 0.5));
                let base = (py * resolution + px) * CHANNELS;
                for c in 0..CHANNELS {
                    data[base + c] = color[c] * grain * light;
                }
            }
        }
        data
    }
}

/// Per-image viewing conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    /// Translation in fractions of the edge.
    pub dx: f64,
    pub dy: f64,
    /// Global brightness factor.
    pub gain: f64,
    /// Relative brightness change from the left to the right edge.
    pub light: f64,
    pub background: [f64; 3],
}

impl View {
    pub fn neutral() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            gain: 1.0,
            light: 0.0,
            background: [0.5; 3],
        }
    }

    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let bg: f64 = rng.random_range(BACKGROUND);
        Self {
            dx: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            dy: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            gain: 1.0 + rng.random_range(-BRIGHTNESS..=BRIGHTNESS),
            light: rng.random_range(-LIGHT_GRADIENT..=LIGHT_GRADIENT),
            background: [bg, bg * rng.random_range(0.8..1.2), bg * rng.random_range(0.8..1.2)]
                .map(|v| v.clamp(0.05, 0.95)),
        }
    }
}

/// Renders `identities × images_per_identity` faces. Output images are
/// quantized to 8 bits so they equal what a PNG round trip would yield.
pub fn generate_synthetic_faces(config: &SyntheticConfig) -> Result<Dataset> {
    if config.resolution % 4 != 0 {
        return Err(Error::InvalidParameter(format!(
            "resolution {} is not divisible by 4",
            config.resolution
        )));
    }
    if config.identities == 0 || config.images_per_identity == 0 {
        return Err(Error::InvalidParameter(
            "identity and image counts must be at least 1".into(),
        ));
    }
    let res = config.resolution;
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid normal");
    let mut images = Vec::with_capacity(config.identities * config.images_per_identity);
    for identity in 0..config.identities {
        let identity_id = format!("id{identity:04}");
        let latent = identity_latent(config, identity);
        for image in 0..config.images_per_identity {
            let mut rng = rng_for(
                config.seed,
                &format!("synthetic/{}/image/{identity}/{image}", config.family),
            );
            let view = View::sample(&mut rng);
            let mut data = latent.render(res, &view);
            for v in &mut data {
                *v += noise.sample(&mut rng);
            }
            let img = ImageTensor::from_clamped(res, res, data)?.quantized();
            images.push(LabeledImage::new(img, identity_id.clone(), format!("img{image:03}")));
        }
    }
    Ok(Dataset::new(
        images,
        format!(
            "synthetic(ids={},per={},res={},seed={},family={})",
            config.identities, config.images_per_identity, res, config.seed, config.family
        ),
    ))
}

/// The latent of identity `index`; identical for every image of it.
pub fn identity_latent(config: &SyntheticConfig, index: usize) -> FaceLatent {
    let mut rng = rng_for(config.seed, &format!("synthetic/{}/identity/{index}", config.family));
    FaceLatent::sample(&mut rng, config.family)
}

fn hue_color(h: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).max(0.0);
    let f = h6.fract();
    let (r, g, b) = match h6 as u32 {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        3 => (0.0, 1.0 - f, 1.0),
        4 => (f, 0.0, 1.0),
        _ => (1.0, 0.0, 1.0 - f),
    };
    // keep some grey so dark irises are not pure black
    [0.05 + v * r, 0.05 + v * g, 0.05 + v * b]
}

fn coverage(signed_distance: f64, edge: f64) -> f64 {
    (0.5 - signed_distance / edge).clamp(0.0, 1.0)
}

fn blend(color: &mut [f64; 3], over: [f64; 3], alpha: f64) {
    for c in 0..3 {
        color[c] = color[c] * (1.0 - alpha) + over[c] * alpha;
    }
}

fn sd_segment(x: f64, y: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (x - a.0, y - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (wx - t * vx).hypot(wy - t * vy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_abs(a: &ImageTensor, b: &ImageTensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn same_identity_images_are_closer() {
        let cfg = SyntheticConfig::default();
        let ds = generate_synthetic_faces(&cfg).unwrap();
        assert_eq!(ds.len(), 500);
        let (mut same, mut n_same, mut diff, mut n_diff) = (0.0, 0usize, 0.0, 0usize);
        for (i, a) in ds.images.iter().enumerate() {
            for b in &ds.images[i + 1..] {
                let d = mean_abs(&a.image, &b.image);
                if a.identity_id == b.identity_id {
                    same += d;
                    n_same += 1;
                } else {
                    diff += d;
                    n_diff += 1;
                }
            }
        }
        let (same, diff) = (same / n_same as f64, diff / n_diff as f64);
        assert!(same < diff, "same {same} vs different {diff}");
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SyntheticConfig {
            identities: 4,
            images_per_identity: 3,
            ..SyntheticConfig::default()
        };
        assert_eq!(
            generate_synthetic_faces(&cfg).unwrap(),
            generate_synthetic_faces(&cfg).unwrap()
        );
        let other = SyntheticConfig { seed: 8, ..cfg };
        assert_ne!(
            generate_synthetic_faces(&cfg).unwrap().images[0].image,
            generate_synthetic_faces(&other).unwrap().images[0].image
        );
    }

    #[test]
    fn latent_is_shared_by_all_images_of_an_identity() {
        let cfg = SyntheticConfig::default();
        for id in [0, 17, 49] {
            let a = identity_latent(&cfg, id);
            let b = identity_latent(&cfg, id);
            assert_eq!(a, b);
        }
        assert_ne!(identity_latent(&cfg, 0), identity_latent(&cfg, 1));
    }

    #[test]
    fn families_have_disjoint_skin_bands() {
        let a = SyntheticConfig::default();
        let b = SyntheticConfig { family: 1, ..a };
        let max_a = (0..50).map(|i| identity_latent(&a, i).skin[0]).fold(0.0, f64::max);
        let min_b = (0..50).map(|i| identity_latent(&b, i).skin[0]).fold(1.0, f64::min);
        assert!(max_a <= min_b);
    }

    #[test]
    fn validates_arguments() {
        let bad = SyntheticConfig {
            resolution: 30,
            ..SyntheticConfig::default()
        };
        assert!(generate_synthetic_faces(&bad).is_err());
        let single = SyntheticConfig {
            identities: 3,
            images_per_identity: 1,
            ..SyntheticConfig::default()
        };
        let ds = generate_synthetic_faces(&single).unwrap();
        assert_eq!(ds.len(), 3);
        let split = super::super::split_dataset(
            &ds.keys(),
            &super::super::SplitParams {
                background_count: 0,
                test_identity_count: 1,
                enroll_fraction: 0.5,
            },
            1,
        );
        assert!(split.is_err());
    }
}
