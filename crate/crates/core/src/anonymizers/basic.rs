//! Eye mask, Gaussian noise, Gaussian blur and pixelation.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::seeding::rng_from;

/// Rows `[0.30 H, 0.45 H)` and columns `[0.15 W, 0.85 W)`, floored.
pub fn eye_mask_rect(height: usize, width: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let rows = (0.30 * height as f64).floor() as usize..(0.45 * height as f64).floor() as usize;
    let cols = (0.15 * width as f64).floor() as usize..(0.85 * width as f64).floor() as usize;
    (rows, cols)
}

/// Blacks out a horizontal bar over the eye region.
pub fn eye_mask(img: &ImageTensor) -> ImageTensor {
    let mut out = img.clone();
    let (rows, cols) = eye_mask_rect(img.height(), img.width());
    for y in rows {
        for x in cols.clone() {
            out.set_pixel(y * img.width() + x, [0.0; 3]);
        }
    }
    out
}

/// Zero-mean Gaussian noise of standard deviation `sigma_8bit / 255`,
/// one sample per pixel and channel, before clamping.
pub(crate) fn gaussian_noise_field(len: usize, sigma_8bit: f64, seed: u64) -> Vec<f64> {
    if sigma_8bit == 0.0 {
        return vec![0.0; len];
    }
    let normal = Normal::new(0.0, sigma_8bit / 255.0).expect("finite non-negative sigma");
    let mut rng = rng_from(seed);
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

pub fn gaussian_noise(img: &ImageTensor, sigma_8bit: f64, seed: u64) -> Result<ImageTensor> {
    if !(sigma_8bit >= 0.0 && sigma_8bit.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma {sigma_8bit} must be >= 0"
        )));
    }
    let noise = gaussian_noise_field(img.len(), sigma_8bit, seed);
    let data = img.data().iter().zip(&noise).map(|(v, n)| v + n).collect();
    ImageTensor::from_clamped(img.height(), img.width(), data)
}

/// Standard deviation implied by an odd kernel size (the OpenCV rule).
pub fn blur_sigma(kernel: usize) -> f64 {
    0.3 * ((kernel as f64 - 1.0) / 2.0 - 1.0) + 0.8
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable correlation with `taps` along both axes, reflect padded,
/// applied to a single plane.
pub(crate) fn convolve_plane(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    crate::metrics::filter_plane(plane, h, w, taps)
}

/// Separable Gaussian blur of every channel.
pub fn convolve_image(img: &ImageTensor, taps: &[f64]) -> ImageTensor {
    let (h, w) = (img.height(), img.width());
    let planes: Vec<Vec<f64>> = (0..CHANNELS)
        .map(|c| convolve_plane(&img.channel(c), h, w, taps))
        .collect();
    ImageTensor::from_channels(h, w, &planes).expect("shape preserved")
}

pub fn gaussian_blur(img: &ImageTensor, kernel: usize) -> Result<ImageTensor> {
    if kernel % 2 == 0 || kernel < 3 {
        return Err(Error::InvalidParameter(format!(
            "blur kernel {kernel} must be odd and at least 3"
        )));
    }
    Ok(convolve_image(img, &gaussian_taps(kernel, blur_sigma(kernel))))
}

/// Replaces each cell of the given row/column partition by its mean color.
pub(crate) fn cell_means(img: &ImageTensor, rows: &[usize], cols: &[usize]) -> ImageTensor {
    let mut out = img.clone();
    let w = img.width();
    for ry in rows.windows(2) {
        for cx in cols.windows(2) {
            let mut sum = [0.0; 3];
            for y in ry[0]..ry[1] {
                for x in cx[0]..cx[1] {
                    let p = img.pixel(y * w + x);
                    for c in 0..3 {
                        sum[c] += p[c];
                    }
                }
            }
            let n = ((ry[1] - ry[0]) * (cx[1] - cx[0])) as f64;
            let mean = sum.map(|s| s / n);
            for y in ry[0]..ry[1] {
                for x in cx[0]..cx[1] {
                    out.set_pixel(y * w + x, mean);
                }
            }
        }
    }
    out
}

/// Boundaries of `cells` near-equal cells over `len` pixels.
pub(crate) fn grid_bounds(len: usize, cells: usize) -> Vec<usize> {
    (0..=cells).map(|j| j * len / cells).collect()
}

/// Boundaries of fixed-size cells; the last cell may be smaller.
pub(crate) fn block_bounds(len: usize, cell: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..len).step_by(cell).collect();
    b.push(len);
    b
}

/// Reduces the image to `size × size` constant cells (output resolution
/// unchanged).
pub fn pixelate(img: &ImageTensor, size: usize) -> Result<ImageTensor> {
    if size == 0 || size > img.height().min(img.width()) {
        return Err(Error::InvalidParameter(format!(
            "pixelation size {size} must lie in 1..={}",
            img.height().min(img.width())
        )));
    }
    Ok(cell_means(
        img,
        &grid_bounds(img.height(), size),
        &grid_bounds(img.width(), size),
    ))
}
