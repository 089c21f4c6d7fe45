use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::{check_pairs, Deanonymizer, ImagePair};
use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::metrics::{filter_plane, gaussian_window, ssim, SsimConfig};

pub const PSF_SIGMA_GRID: [f64; 16] = [
    0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0,
];
pub const BALANCE_GRID: [f64; 7] = [
    1e-4,
    3.162_277_660_168_379_5e-4,
    1e-3,
    3.162_277_660_168_379_4e-3,
    1e-2,
    3.162_277_660_168_379_6e-2,
    1e-1,
];
pub const RL_ITERATION_GRID: [usize; 3] = [10, 30, 50];

/// Lower clamp of Richardson–Lucy estimates.
const RL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvParams {
    /// Standard deviation of the assumed Gaussian PSF, in pixels.
    pub psf_sigma: f64,
    /// Wiener regularization weight.
    pub balance: f64,
    /// Richardson–Lucy iteration count.
    pub iterations: usize,
}

impl DeconvParams {
    fn check(&self) -> Result<()> {
        if !(self.psf_sigma > 0.0 && self.psf_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "psf_sigma {} must be > 0",
                self.psf_sigma
            )));
        }
        if !(self.balance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "balance {} must be >= 0",
                self.balance
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeconvMethod {
    Wiener,
    RichardsonLucy,
}

struct Fft2 {
    h: usize,
    w: usize,
    rows: [Arc<dyn Fft<f64>>; 2],
    cols: [Arc<dyn Fft<f64>>; 2],
}

impl Fft2 {
    fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            rows: [planner.plan_fft_forward(w), planner.plan_fft_inverse(w)],
            cols: [planner.plan_fft_forward(h), planner.plan_fft_inverse(h)],
        }
    }

    /// In-place 2-D transform of row-major data; the inverse is normalized.
    fn run(&self, data: &mut [Complex<f64>], inverse: bool) {
        let k = inverse as usize;
        for row in data.chunks_mut(self.w) {
            self.rows[k].process(row);
        }
        let mut col = vec![Complex::default(); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                col[y] = data[y * self.w + x];
            }
            self.cols[k].process(&mut col);
            for y in 0..self.h {
                data[y * self.w + x] = col[y];
            }
        }
        if inverse {
            let n = (self.h * self.w) as f64;
            data.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Symmetric extension to `2h × 2w`, which is periodic without jumps.
fn mirror_extend(plane: &[f64], h: usize, w: usize) -> Vec<Complex<f64>> {
    let (eh, ew) = (2 * h, 2 * w);
    let fold = |i: usize, n: usize| if i < n { i } else { 2 * n - 1 - i };
    let mut out = Vec::with_capacity(eh * ew);
    for y in 0..eh {
        for x in 0..ew {
            out.push(Complex::new(plane[fold(y, h) * w + fold(x, w)], 0.0));
        }
    }
    out
}

/// Frequency response of the unit-sum Gaussian PSF centered at the origin
/// of an `h × w` periodic grid.
fn psf_response(fft: &Fft2, sigma: f64) -> Vec<Complex<f64>> {
    let (h, w) = (fft.h, fft.w);
    let wrap = |i: usize, n: usize| i.min(n - i) as f64;
    let mut psf: Vec<Complex<f64>> = (0..h * w)
        .map(|i| {
            let (dy, dx) = (wrap(i / w, h), wrap(i % w, w));
            Complex::new((-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .collect();
    let total: f64 = psf.iter().map(|c| c.re).sum();
    psf.iter_mut().for_each(|c| *c /= total);
    fft.run(&mut psf, false);
    psf
}

/// Squared magnitude of the 4-neighbor Laplacian's frequency response.
fn laplacian_power(h: usize, w: usize) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    (0..h * w)
        .map(|i| {
            let (u, v) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            let l = 4.0 - 2.0 * (tau * u).cos() - 2.0 * (tau * v).cos();
            l * l
        })
        .collect()
}

fn wiener_filter(fft: &Fft2, sigma: f64, balance: f64) -> Vec<Complex<f64>> {
    let lap = laplacian_power(fft.h, fft.w);
    psf_response(fft, sigma)
        .into_iter()
        .zip(lap)
        .map(|(p, l)| {
            let denom = p.norm_sqr() + balance * l;
            if denom == 0.0 {
                Complex::default()
            } else {
                p.conj() / denom
            }
        })
        .collect()
}

/// Spectra of the mirror-extended channels of one image.
fn spectra(fft: &Fft2, img: &ImageTensor) -> Vec<Vec<Complex<f64>>> {
    (0..CHANNELS)
        .map(|c| {
            let mut ext = mirror_extend(&img.channel(c), img.height(), img.width());
            fft.run(&mut ext, false);
            ext
        })
        .collect()
}

fn apply_filter(
    fft: &Fft2,
    spectra: &[Vec<Complex<f64>>],
    filter: &[Complex<f64>],
    h: usize,
    w: usize,
) -> Result<ImageTensor> {
    let planes: Vec<Vec<f64>> = spectra
        .iter()
        .map(|spec| {
            let mut x: Vec<Complex<f64>> = spec.iter().zip(filter).map(|(y, g)| y * g).collect();
            fft.run(&mut x, true);
            (0..h * w)
                .map(|i| x[(i / w) * fft.w + i % w].re.clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    ImageTensor::from_channels(h, w, &planes)
}

/// Frequency-domain Wiener deconvolution with a Gaussian PSF and a
/// Laplacian regularizer weighted by `balance`.
pub fn wiener_deconv(img: &ImageTensor, params: &DeconvParams) -> Result<ImageTensor> {
    params.check()?;
    let (h, w) = (img.height(), img.width());
    let fft = Fft2::new(2 * h, 2 * w);
    let filter = wiener_filter(&fft, params.psf_sigma, params.balance);
    apply_filter(&fft, &spectra(&fft, img), &filter, h, w)
}

fn psf_taps(sigma: f64) -> Vec<f64> {
    gaussian_window(2 * (3.0 * sigma).ceil() as usize + 1, sigma)
}

/// Runs Richardson–Lucy on every channel, calling `visit` after each
/// iteration with the iteration number and the current estimate.
fn richardson_lucy_visit(
    img: &ImageTensor,
    sigma: f64,
    iterations: usize,
    mut visit: impl FnMut(usize, &[Vec<f64>]) -> Result<()>,
) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let taps = psf_taps(sigma);
    let observed: Vec<Vec<f64>> = (0..CHANNELS).map(|c| img.channel(c)).collect();
    let mut estimate: Vec<Vec<f64>> = observed
        .iter()
        .map(|p| p.iter().map(|v| v.clamp(RL_FLOOR, 1.0)).collect())
        .collect();
    for it in 1..=iterations {
        for (u, y) in estimate.iter_mut().zip(&observed) {
            let blurred = filter_plane(u, h, w, &taps);
            let ratio: Vec<f64> = y.iter().zip(&blurred).map(|(o, b)| o / b.max(1e-12)).collect();
            let correction = filter_plane(&ratio, h, w, &taps);
            for (v, c) in u.iter_mut().zip(correction) {
                *v = (*v * c).clamp(RL_FLOOR, 1.0);
            }
        }
        visit(it, &estimate)?;
    }
    Ok(())
}

/// Multiplicative Richardson–Lucy deconvolution with a Gaussian PSF,
/// started from the observed image.
pub fn richardson_lucy(img: &ImageTensor, params: &DeconvParams) -> Result<ImageTensor> {
    params.check()?;
    let mut out = None;
    richardson_lucy_visit(img, params.psf_sigma, params.iterations, |it, est| {
        if it == params.iterations {
            out = Some(ImageTensor::from_channels(img.height(), img.width(), est)?);
        }
        Ok(())
    })?;
    Ok(out.expect("at least one iteration"))
}

/// Exhaustive search of the parameter grid maximizing mean SSIM against
/// the clear images; ties keep the first grid point.
pub fn grid_search_deconv(pairs: &[ImagePair], method: DeconvMethod) -> Result<DeconvParams> {
    check_pairs(pairs)?;
    let cfg = SsimConfig::default();
    let (h, w) = (pairs[0].0.height(), pairs[0].0.width());
    let n = pairs.len() as f64;
    let mut best: Option<(DeconvParams, f64)> = None;
    let mut consider = |params: DeconvParams, score: f64| {
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((params, score));
        }
    };
    match method {
        DeconvMethod::Wiener => {
            let fft = Fft2::new(2 * h, 2 * w);
            let all: Vec<_> = pairs.iter().map(|(_, anon)| spectra(&fft, anon)).collect();
            for &psf_sigma in &PSF_SIGMA_GRID {
                for &balance in &BALANCE_GRID {
                    let filter = wiener_filter(&fft, psf_sigma, balance);
                    let mut total = 0.0;
                    for ((clear, _), spec) in pairs.iter().zip(&all) {
                        total += ssim(&apply_filter(&fft, spec, &filter, h, w)?, clear, &cfg)?;
                    }
                    consider(
                        DeconvParams {
                            psf_sigma,
                            balance,
                            iterations: 1,
                        },
                        total / n,
                    );
                }
            }
        }
        DeconvMethod::RichardsonLucy => {
            let last = *RL_ITERATION_GRID.last().expect("non-empty grid");
            for &psf_sigma in &PSF_SIGMA_GRID {
                let mut totals = vec![0.0; RL_ITERATION_GRID.len()];
                for (clear, anon) in pairs {
                    richardson_lucy_visit(anon, psf_sigma, last, |it, est| {
                        if let Some(k) = RL_ITERATION_GRID.iter().position(|&g| g == it) {
                            totals[k] += ssim(&ImageTensor::from_channels(h, w, est)?, clear, &cfg)?;
                        }
                        Ok(())
                    })?;
                }
                for (&iterations, total) in RL_ITERATION_GRID.iter().zip(totals) {
                    consider(
                        DeconvParams {
                            psf_sigma,
                            balance: 0.0,
                            iterations,
                        },
                        total / n,
                    );
                }
            }
        }
    }
    Ok(best.expect("non-empty grid").0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvModel {
    pub method: DeconvMethod,
    pub params: DeconvParams,
}

impl Deanonymizer for DeconvModel {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        match self.method {
            DeconvMethod::Wiener => wiener_deconv(img, &self.params),
            DeconvMethod::RichardsonLucy => richardson_lucy(img, &self.params),
        }
    }
}
