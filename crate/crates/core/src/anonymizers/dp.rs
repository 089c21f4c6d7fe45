//! Differential-privacy inspired anonymizations: DP-Pix, DP-Snow and
//! DP-Samp.

use rand::seq::index::sample;
use rand::Rng;

use super::basic::{block_bounds, cell_means};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seeding::rng_from;

/// Gray written by DP-Snow, `127/255` in every channel.
pub const SNOW_GRAY: f64 = 127.0 / 255.0;

/// One Laplace(0, scale) draw by inverse CDF.
pub(crate) fn laplace<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Laplace scale in normalized intensity units, `m / (b² ε)`.
pub fn dp_pix_scale(epsilon: f64, b: f64, m: usize) -> f64 {
    m as f64 / (b * b * epsilon)
}

/// Pixelates with `m × m` cells, then adds independent Laplace noise to
/// every cell of every channel and clamps.
pub fn dp_pix(img: &ImageTensor, epsilon: f64, b: f64, m: usize, seed: u64) -> Result<ImageTensor> {
    if !(epsilon > 0.0) || !(b >= 1.0) || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "dp_pix needs epsilon > 0, b >= 1 and m >= 1 (got {epsilon}, {b}, {m})"
        )));
    }
    let rows = block_bounds(img.height(), m);
    let cols = block_bounds(img.width(), m);
    let mut out = cell_means(img, &rows, &cols);
    let scale = dp_pix_scale(epsilon, b, m);
    let mut rng = rng_from(seed);
    let w = img.width();
    for ry in rows.windows(2) {
        for cx in cols.windows(2) {
            let noise: [f64; 3] = std::array::from_fn(|_| laplace(&mut rng, scale));
            for y in ry[0]..ry[1] {
                for x in cx[0]..cx[1] {
                    let p = out.pixel(y * w + x);
                    out.set_pixel(y * w + x, std::array::from_fn(|c| p[c] + noise[c]));
                }
            }
        }
    }
    Ok(out)
}

/// Positions DP-Snow replaces: exactly `round(δ · H · W)` of them.
pub fn dp_snow_positions(height: usize, width: usize, delta: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside [0, 1]")));
    }
    let n = height * width;
    let count = (delta * n as f64).round() as usize;
    let mut idx = sample(&mut rng_from(seed), n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Sets a uniformly random `δ` share of pixels to gray.
pub fn dp_snow(img: &ImageTensor, delta: f64, seed: u64) -> Result<ImageTensor> {
    let mut out = img.clone();
    for i in dp_snow_positions(img.height(), img.width(), delta, seed)? {
        out.set_pixel(i, [SNOW_GRAY; 3]);
    }
    Ok(out)
}

/// Result of DP-Samp with the intermediate sampling decision exposed.
#[derive(Debug, Clone)]
pub struct DpSampOutput {
    pub image: ImageTensor,
    /// Pixel positions that kept their original color.
    pub sampled: Vec<usize>,
    pub clusters: usize,
}

/// Clusters pixel colors with k-means, allots each cluster a share of the
/// budget proportional to the number of pixels within `m / 255` of its
/// center, samples that share of its pixels, and fills every other pixel
/// by inverse-distance weighting of its four nearest sampled pixels in the
/// same cluster (falling back to all sampled pixels if the cluster kept
/// none).
pub fn dp_samp(img: &ImageTensor, epsilon: f64, k: usize, m: f64, seed: u64) -> Result<ImageTensor> {
    dp_samp_detailed(img, epsilon, k, m, seed).map(|o| o.image)
}

pub fn dp_samp_detailed(img: &ImageTensor, epsilon: f64, k: usize, m: f64, seed: u64) -> Result<DpSampOutput> {
    if k < 2 || !(epsilon > 0.0) || !(m >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dp_samp needs k >= 2, epsilon > 0, m >= 0 (got {k}, {epsilon}, {m})"
        )));
    }
    let n = img.pixel_count();
    let colors: Vec<[f64; 3]> = (0..n).map(|i| img.pixel(i)).collect();
    let mut rng = rng_from(seed);
    let (centers, assignment) = kmeans(&colors, k, 50, &mut rng);

    let threshold = m / 255.0;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    let mut within = vec![0usize; centers.len()];
    for (i, &a) in assignment.iter().enumerate() {
        members[a].push(i);
        if dist2(&colors[i], &centers[a]).sqrt() <= threshold {
            within[a] += 1;
        }
    }
    let total_within: usize = within.iter().sum();

    let mut sampled_mask = vec![false; n];
    for (cluster, idx) in members.iter().enumerate() {
        if idx.is_empty() || total_within == 0 {
            continue;
        }
        let budget = epsilon * within[cluster] as f64 / total_within as f64;
        let share = (budget / epsilon).min(1.0);
        let count = (share * idx.len() as f64).round() as usize;
        for j in sample(&mut rng, idx.len(), count) {
            sampled_mask[idx[j]] = true;
        }
    }
    let sampled: Vec<usize> = (0..n).filter(|&i| sampled_mask[i]).collect();
    if sampled.is_empty() {
        return Err(Error::InsufficientData("dp_samp: empty sample".into()));
    }

    let w = img.width();
    let mut per_cluster: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for &i in &sampled {
        per_cluster[assignment[i]].push(i);
    }
    let mut out = img.clone();
    for i in 0..n {
        if sampled_mask[i] {
            continue;
        }
        let pool = if per_cluster[assignment[i]].is_empty() {
            &sampled
        } else {
            &per_cluster[assignment[i]]
        };
        out.set_pixel(i, idw(img, w, i, pool));
    }
    Ok(DpSampOutput {
        image: out,
        sampled,
        clusters: centers.len(),
    })
}

/// Inverse-distance weighted color of the four spatially nearest pool
/// pixels (ties broken by index).
fn idw(img: &ImageTensor, w: usize, target: usize, pool: &[usize]) -> [f64; 3] {
    let (ty, tx) = ((target / w) as f64, (target % w) as f64);
    let mut near: Vec<(f64, usize)> = pool
        .iter()
        .map(|&j| {
            let (y, x) = ((j / w) as f64, (j % w) as f64);
            ((y - ty).hypot(x - tx), j)
        })
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(4);
    let base = img.pixel(near[0].1);
    let mut acc = [0.0; 3];
    let mut wsum = 0.0;
    for (d, j) in near {
        let wt = 1.0 / d;
        let p = img.pixel(j);
        for c in 0..3 {
            acc[c] += wt * (p[c] - base[c]);
        }
        wsum += wt;
    }
    std::array::from_fn(|c| base[c] + acc[c] / wsum)
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn nearest(p: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best
}

/// Seeded k-means++ with at most `max_iter` Lloyd iterations. Returns fewer
/// than `k` centers when the points have fewer distinct values.
pub(crate) fn kmeans<R: Rng>(
    points: &[[f64; 3]],
    k: usize,
    max_iter: usize,
    rng: &mut R,
) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = points[pick];
        centers.push(c);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &c));
        }
    }

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let mut sums = vec![[0.0; 3]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assignment) {
            for c in 0..3 {
                sums[a][c] += p[c];
            }
            counts[a] += 1;
        }
        for (i, center) in centers.iter_mut().enumerate() {
            if counts[i] > 0 {
                *center = sums[i].map(|s| s / counts[i] as f64);
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    (centers, assignment)
}
