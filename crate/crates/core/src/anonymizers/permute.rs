//! Keyed, lossless rearrangements: block permutation and pixel relocation.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seeding::rng_for;

/// Uniform permutation of `n` items determined by `(key, label)`.
fn keyed_permutation(key: u64, label: &str, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(key, label));
    perm
}

/// Permutation of the full-block grid: output block `i` is input block
/// `perm[i]`. Depends only on the key and the grid shape.
pub fn block_permutation(key: u64, grid_rows: usize, grid_cols: usize) -> Vec<usize> {
    keyed_permutation(
        key,
        &format!("block_permute/{grid_rows}x{grid_cols}"),
        grid_rows * grid_cols,
    )
}

/// Splits the image into `block_size` squares and rearranges the full
/// blocks by the keyed permutation. Partial blocks at the right and bottom
/// margins stay in place.
pub fn block_permute(img: &ImageTensor, block_size: usize, key: u64) -> Result<ImageTensor> {
    let (rows, cols) = block_grid(img, block_size)?;
    block_permute_with(img, block_size, &block_permutation(key, rows, cols))
}

fn block_grid(img: &ImageTensor, block_size: usize) -> Result<(usize, usize)> {
    if block_size == 0 {
        return Err(Error::InvalidParameter("block size must be at least 1".into()));
    }
    Ok((img.height() / block_size, img.width() / block_size))
}

/// Block permutation with an explicit permutation of the full-block grid.
pub fn block_permute_with(img: &ImageTensor, block_size: usize, perm: &[usize]) -> Result<ImageTensor> {
    let (rows, cols) = block_grid(img, block_size)?;
    if perm.len() != rows * cols {
        return Err(Error::shape(
            format!("permutation of {} blocks", rows * cols),
            format!("{} entries", perm.len()),
        ));
    }
    let w = img.width();
    let mut out = img.clone();
    for (dst, &src) in perm.iter().enumerate() {
        let (dy, dx) = (dst / cols * block_size, dst % cols * block_size);
        let (sy, sx) = (src / cols * block_size, src % cols * block_size);
        for r in 0..block_size {
            for c in 0..block_size {
                out.set_pixel((dy + r) * w + dx + c, img.pixel((sy + r) * w + sx + c));
            }
        }
    }
    Ok(out)
}

/// Pixel-level keyed permutation composed `steps` times:
/// `out[i] = in[map[i]]`.
pub fn relocation_map(key: u64, height: usize, width: usize, steps: usize) -> Vec<usize> {
    let base = keyed_permutation(key, &format!("pixel_relocate/{height}x{width}"), height * width);
    let mut map: Vec<usize> = (0..height * width).collect();
    for _ in 0..steps {
        map = map.iter().map(|&i| base[i]).collect();
    }
    map
}

/// Relocates every pixel by the keyed permutation applied `steps` times.
pub fn pixel_relocate(img: &ImageTensor, steps: usize, key: u64) -> Result<ImageTensor> {
    if steps == 0 {
        return Err(Error::InvalidParameter("relocation steps must be at least 1".into()));
    }
    let map = relocation_map(key, img.height(), img.width(), steps);
    Ok(gather_pixels(img, &map))
}

/// `out[i] = img[map[i]]` over pixel positions.
pub(crate) fn gather_pixels(img: &ImageTensor, map: &[usize]) -> ImageTensor {
    let mut out = img.clone();
    for (dst, &src) in map.iter().enumerate() {
        out.set_pixel(dst, img.pixel(src));
    }
    out
}

pub(crate) fn invert(map: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; map.len()];
    for (i, &j) in map.iter().enumerate() {
        inv[j] = i;
    }
    inv
}
