use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Reads an 8-bit RGB PNG into `[0, 1]` intensities.
pub fn read_png(path: &Path) -> Result<ImageTensor> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(rgb) => rgb,
        DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_)
        | DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb32F(_)
        | DynamicImage::ImageRgba32F(_) => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                detail: format!("{:?}", decoded.color()),
            })
        }
        other => {
            return Err(Error::UnsupportedColor {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb.dimensions();
    ImageTensor::from_u8(h as usize, w as usize, rgb.as_raw())
        .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))
}

/// Writes an image as 8-bit RGB PNG, rounding to the nearest level.
pub fn write_png(path: &Path, img: &ImageTensor) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })
}
