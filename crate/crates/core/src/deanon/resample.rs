use serde::{Deserialize, Serialize};

use super::{check_pairs, Deanonymizer, ImagePair};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::metrics::{ssim, SsimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    Linear,
    Bicubic,
}

/// Row-stochastic weights mapping `from` samples onto `to` samples.
type Weights = Vec<Vec<(usize, f64)>>;

/// Area averaging: each output sample is the mean of the input interval it
/// covers, with fractional weights at the interval ends.
fn area_weights(from: usize, to: usize) -> Weights {
    let scale = from as f64 / to as f64;
    (0..to)
        .map(|j| {
            let (lo, hi) = (j as f64 * scale, (j + 1) as f64 * scale);
            let mut row = Vec::new();
            let mut i = lo.floor() as usize;
            while (i as f64) < hi && i < from {
                let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    row.push((i, overlap / scale));
                }
                i += 1;
            }
            row
        })
        .collect()
}

fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Interpolation weights with half-pixel centers and clamped borders.
fn interp_weights(from: usize, to: usize, mode: ResampleMode) -> Weights {
    let scale = from as f64 / to as f64;
    let clamp = |i: isize| i.clamp(0, from as isize - 1) as usize;
    (0..to)
        .map(|j| {
            let src = (j as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut row: Vec<(usize, f64)> = match mode {
                ResampleMode::Linear => vec![(clamp(base), 1.0 - t), (clamp(base + 1), t)],
                ResampleMode::Bicubic => (-1..=2).map(|k| (clamp(base + k), cubic(t - k as f64))).collect(),
            };
            row.retain(|&(_, wgt)| wgt != 0.0);
            row
        })
        .collect()
}

/// Resamples interleaved `h × w × 3` data with separate row and column
/// weights.
fn apply_separable(data: &[f64], h: usize, w: usize, rows: &Weights, cols: &Weights) -> Vec<f64> {
    let (nh, nw) = (rows.len(), cols.len());
    let mut tmp = vec![0.0; h * nw * CHANNELS];
    for y in 0..h {
        for (x, row) in cols.iter().enumerate() {
            for c in 0..CHANNELS {
                tmp[(y * nw + x) * CHANNELS + c] =
                    row.iter().map(|&(i, wt)| wt * data[(y * w + i) * CHANNELS + c]).sum();
            }
        }
    }
    let mut out = vec![0.0; nh * nw * CHANNELS];
    for (y, row) in rows.iter().enumerate() {
        for x in 0..nw {
            for c in 0..CHANNELS {
                out[(y * nw + x) * CHANNELS + c] =
                    row.iter().map(|&(i, wt)| wt * tmp[(i * nw + x) * CHANNELS + c]).sum();
            }
        }
    }
    out
}

/// Area-downsamples to `r × r`, then interpolates back to the original size.
pub fn resample(img: &ImageTensor, r: usize, mode: ResampleMode) -> Result<ImageTensor> {
    let (h, w) = (img.height(), img.width());
    if r == 0 || r > h.min(w) {
        return Err(Error::InvalidParameter(format!(
            "resolution {r} outside 1..={}",
            h.min(w)
        )));
    }
    let small = apply_separable(img.data(), h, w, &area_weights(h, r), &area_weights(w, r));
    let back = apply_separable(&small, r, r, &interp_weights(r, h, mode), &interp_weights(r, w, mode));
    ImageTensor::from_clamped(h, w, back)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSearch {
    pub resolution: usize,
    pub mode: ResampleMode,
    /// Mean SSIM against the clear images per `(mode, resolution)`.
    pub scores: Vec<(ResampleMode, usize, f64)>,
}

impl ResampleSearch {
    pub fn model(&self) -> ResampleModel {
        ResampleModel {
            resolution: self.resolution,
            mode: self.mode,
        }
    }
}

/// Chooses the intermediate resolution with the highest mean SSIM over
/// the pairs; ties go to the larger resolution.
pub fn resample_search(pairs: &[ImagePair], mode: ResampleMode) -> Result<ResampleSearch> {
    resample_search_modes(pairs, &[mode])
}

/// [`resample_search`] over several interpolation modes; ties between
/// modes go to the earlier one.
pub fn resample_search_modes(pairs: &[ImagePair], modes: &[ResampleMode]) -> Result<ResampleSearch> {
    check_pairs(pairs)?;
    if modes.is_empty() {
        return Err(Error::InvalidParameter("no resampling modes given".into()));
    }
    let cfg = SsimConfig::default();
    let max_r = pairs[0].0.height().min(pairs[0].0.width());
    let mut scores = Vec::new();
    let mut best: Option<(ResampleMode, usize, f64)> = None;
    for &mode in modes {
        for r in (2..=max_r).step_by(2) {
            let mut total = 0.0;
            for (clear, anon) in pairs {
                total += ssim(&resample(anon, r, mode)?, clear, &cfg)?;
            }
            let score = total / pairs.len() as f64;
            scores.push((mode, r, score));
            let better = match best {
                None => true,
                Some((m, br, bs)) => score > bs || (score == bs && m == mode && r > br),
            };
            if better {
                best = Some((mode, r, score));
            }
        }
    }
    let (mode, resolution, _) = best.expect("at least one candidate");
    Ok(ResampleSearch {
        resolution,
        mode,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleModel {
    pub resolution: usize,
    pub mode: ResampleMode,
}

impl Deanonymizer for ResampleModel {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        resample(img, self.resolution, self.mode)
    }
}
