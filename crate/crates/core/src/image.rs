//! The RGB image payload carried between every pipeline stage.

use crate::error::{Error, Result};

/// Number of color channels. Only RGB is supported.
pub const CHANNELS: usize = 3;

/// Smallest accepted edge length.
pub const MIN_EDGE: usize = 8;

/// An `H×W×3` image with intensities in `[0, 1]`, stored row-major with
/// interleaved channels (`data[(y * W + x) * 3 + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Builds an image from interleaved data, validating shape and range.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * CHANNELS {
            return Err(Error::shape(
                format!("{} values", height * width * CHANNELS),
                format!("{} values", data.len()),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image and clamps every value into `[0, 1]`; NaN maps to 0.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * CHANNELS])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_clamped(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let base = index * CHANNELS;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    pub fn set_pixel(&mut self, index: usize, rgb: [f64; 3]) {
        let base = index * CHANNELS;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[base + c] = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape_string(), other.shape_string()))
        }
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.height, self.width, CHANNELS)
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    /// Reassembles an image from three row-major planes, clamping to `[0, 1]`.
    pub fn from_channels(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        if planes.len() != CHANNELS || planes.iter().any(|p| p.len() != height * width) {
            return Err(Error::shape(
                format!("3 planes of {}", height * width),
                format!("{} planes", planes.len()),
            ));
        }
        let mut data = vec![0.0; height * width * CHANNELS];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * CHANNELS + c] = *v;
            }
        }
        Self::from_clamped(height, width, data)
    }

    /// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantized(&self) -> ImageTensor {
        ImageTensor {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| f64::from(to_u8(*v)) / 255.0).collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| to_u8(*v)).collect()
    }

    pub fn from_u8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|b| f64::from(*b) / 255.0).collect())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub(crate) fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_EDGE || width < MIN_EDGE {
        return Err(Error::InvalidImage(format!(
            "{height}x{width} is smaller than {MIN_EDGE}x{MIN_EDGE}"
        )));
    }
    if height % 4 != 0 || width % 4 != 0 {
        return Err(Error::InvalidImage(format!("{height}x{width} is not divisible by 4")));
    }
    Ok(())
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`d c b | a b c d | c b a`), folding as many times as needed.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_ranges() {
        assert!(ImageTensor::filled(6, 8, 0.0).is_err());
        assert!(ImageTensor::filled(10, 8, 0.0).is_err());
        assert!(ImageTensor::new(8, 8, vec![1.5; 192]).is_err());
        assert!(ImageTensor::new(8, 8, vec![0.5; 191]).is_err());
        assert!(ImageTensor::filled(8, 12, 0.25).is_ok());
    }

    #[test]
    fn reflect_matches_mirror_convention() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-20, 5), reflect(-20 + 8 * 3, 5));
    }

    #[test]
    fn channels_round_trip() {
        let img = ImageTensor::from_fn(8, 8, |y, x, c| (y * 8 + x + c) as f64 / 80.0).unwrap();
        let planes: Vec<_> = (0..3).map(|c| img.channel(c)).collect();
        assert_eq!(ImageTensor::from_channels(8, 8, &planes).unwrap(), img);
    }

    #[test]
    fn quantization_is_within_half_level() {
        let img = ImageTensor::from_fn(8, 8, |y, x, c| ((y * 31 + x * 7 + c) % 97) as f64 / 96.0).unwrap();
        let q = img.quantized();
        for (a, b) in img.data().iter().zip(q.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
