use super::Deanonymizer;
use crate::error::{Error, Result};
use crate::image::{to_u8, ImageTensor};

/// Maximum number of fill passes.
const MAX_PASSES: usize = 100;

/// True when every channel quantizes to exactly 127.
pub fn is_snow_gray(rgb: [f64; 3]) -> bool {
    rgb.iter().all(|&v| to_u8(v) == 127)
}

/// Replaces every gray pixel by the mean of its known 8-neighbors. Pixels
/// surrounded by gray are filled in later passes from values resolved in
/// earlier ones.
pub fn interpolate_gray(img: &ImageTensor) -> Result<ImageTensor> {
    let (h, w) = (img.height(), img.width());
    let mut known: Vec<bool> = (0..h * w).map(|i| !is_snow_gray(img.pixel(i))).collect();
    if !known.iter().any(|&k| k) {
        return Err(Error::InvalidParameter(
            "nothing to interpolate from: image is entirely gray".into(),
        ));
    }
    let mut out = img.clone();
    for _ in 0..MAX_PASSES {
        let mut updates = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if known[y * w + x] {
                    continue;
                }
                let mut base = None;
                let mut sum = [0.0; 3];
                let mut count = 0usize;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (ny, nx) = (y as isize + dy, x as isize + dx);
                        if (dy, dx) == (0, 0) || ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if known[j] {
                            let p = out.pixel(j);
                            let b = *base.get_or_insert(p);
                            (0..3).for_each(|c| sum[c] += p[c] - b[c]);
                            count += 1;
                        }
                    }
                }
                if let Some(b) = base {
                    updates.push((y * w + x, std::array::from_fn(|c| b[c] + sum[c] / count as f64)));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, rgb) in updates {
            out.set_pixel(i, rgb);
            known[i] = true;
        }
    }
    Ok(out)
}

/// Stateless [`Deanonymizer`] wrapper around [`interpolate_gray`].
#[derive(Debug, Clone, Copy, Default)]
pub struct GrayInterpolator;

impl Deanonymizer for GrayInterpolator {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        interpolate_gray(img)
    }
}
