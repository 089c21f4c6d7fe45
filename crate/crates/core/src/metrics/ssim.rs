//! Windowed structural similarity with a Gaussian window and reflect
//! padding, plus its gradient with respect to the first image (used as a
//! training loss).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{reflect, ImageTensor, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    /// Odd window edge length. `1` degenerates to a per-pixel comparison.
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn kernel(&self) -> Vec<f64> {
        gaussian_window(self.window, self.sigma)
    }
}

/// Normalized 1-D Gaussian of odd length `size`.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1, "window size must be odd");
    let r = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable correlation of a row-major plane with `kernel` along both
/// axes, reflect padded.
pub fn filter_plane(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + k as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - r, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Transpose of [`filter_plane`] as a linear operator.
pub fn filter_plane_adjoint(grad: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = reflect(y as isize + k as isize - r, h);
            let src = &grad[y * w..(y + 1) * w];
            let dst = &mut tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let g = tmp[y * w + x];
            for (k, kv) in kernel.iter().enumerate() {
                out[y * w + reflect(x as isize + k as isize - r, w)] += kv * g;
            }
        }
    }
    out
}

struct Moments {
    mx: Vec<f64>,
    my: Vec<f64>,
    exx: Vec<f64>,
    eyy: Vec<f64>,
    exy: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], h: usize, w: usize, kernel: &[f64]) -> Moments {
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    Moments {
        mx: filter_plane(x, h, w, kernel),
        my: filter_plane(y, h, w, kernel),
        exx: filter_plane(&prod(x, x), h, w, kernel),
        eyy: filter_plane(&prod(y, y), h, w, kernel),
        exy: filter_plane(&prod(x, y), h, w, kernel),
    }
}

/// Mean SSIM between two single-channel planes.
pub fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let m = moments(x, y, h, w, &cfg.kernel());
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut total = 0.0;
    for i in 0..h * w {
        let (mx, my) = (m.mx[i], m.my[i]);
        let sxx = m.exx[i] - mx * mx;
        let syy = m.eyy[i] - my * my;
        let sxy = m.exy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    }
    total / (h * w) as f64
}

/// Mean SSIM of a plane and its gradient with respect to `x`.
pub fn ssim_plane_with_grad(x: &[f64], y: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> (f64, Vec<f64>) {
    let kernel = cfg.kernel();
    let m = moments(x, y, h, w, &kernel);
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let n = (h * w) as f64;
    let mut total = 0.0;
    let mut d_mx = vec![0.0; h * w];
    let mut d_exx = vec![0.0; h * w];
    let mut d_exy = vec![0.0; h * w];
    for i in 0..h * w {
        let (mx, my) = (m.mx[i], m.my[i]);
        let sxx = m.exx[i] - mx * mx;
        let syy = m.eyy[i] - my * my;
        let sxy = m.exy[i] - mx * my;
        let a1 = 2.0 * mx * my + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = mx * mx + my * my + c1;
        let b2 = sxx + syy + c2;
        let s = (a1 * a2) / (b1 * b2);
        total += s;
        // partials of the local index, already divided by the pixel count
        d_mx[i] = s * (2.0 * my / a1 - 2.0 * my / a2 - 2.0 * mx / b1 + 2.0 * mx / b2) / n;
        d_exx[i] = -s / b2 / n;
        d_exy[i] = 2.0 * s / a2 / n;
    }
    let g_mx = filter_plane_adjoint(&d_mx, h, w, &kernel);
    let g_exx = filter_plane_adjoint(&d_exx, h, w, &kernel);
    let g_exy = filter_plane_adjoint(&d_exy, h, w, &kernel);
    let grad = (0..h * w)
        .map(|i| g_mx[i] + 2.0 * x[i] * g_exx[i] + y[i] * g_exy[i])
        .collect();
    (total / n, grad)
}

/// SSIM averaged over positions and channels.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, cfg: &SsimConfig) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if cfg.window % 2 == 0 {
        return Err(Error::InvalidParameter("SSIM window must be odd".into()));
    }
    let (h, w) = (a.height(), a.width());
    let total: f64 = (0..CHANNELS)
        .map(|c| ssim_plane(&a.channel(c), &b.channel(c), h, w, cfg))
        .sum();
    Ok(total / CHANNELS as f64)
}
