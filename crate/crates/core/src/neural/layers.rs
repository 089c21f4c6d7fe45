//! Column-layout layer kernels. Activations are `(channels, batch · h · w)`
//! matrices whose column index is `b · h · w + y · w + x`.

use std::ops::AddAssign;

use nalgebra::DMatrix;

/// Patches of a 3×3, stride 1, zero-padded convolution: row `c · 9 + ky · 3 + kx`.
pub fn im2col3(input: &DMatrix<f64>, batch: usize, h: usize, w: usize) -> DMatrix<f64> {
    let c_in = input.nrows();
    let rows = c_in * 9;
    let mut cols = DMatrix::zeros(rows, batch * h * w);
    let src = input.as_slice();
    let dst = cols.as_mut_slice();
    for b in 0..batch {
        for y in 0..h {
            for x in 0..w {
                let col = b * h * w + y * w + x;
                let out = &mut dst[col * rows..(col + 1) * rows];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let scol = b * h * w + sy as usize * w + sx as usize;
                        for c in 0..c_in {
                            out[c * 9 + ky * 3 + kx] = src[scol * c_in + c];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`].
pub fn col2im3(cols: &DMatrix<f64>, c_in: usize, batch: usize, h: usize, w: usize) -> DMatrix<f64> {
    let rows = c_in * 9;
    let mut out = DMatrix::zeros(c_in, batch * h * w);
    let src = cols.as_slice();
    let dst = out.as_mut_slice();
    for b in 0..batch {
        for y in 0..h {
            for x in 0..w {
                let col = b * h * w + y * w + x;
                let patch = &src[col * rows..(col + 1) * rows];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let scol = b * h * w + sy as usize * w + sx as usize;
                        for c in 0..c_in {
                            dst[scol * c_in + c] += patch[c * 9 + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Visits every (input column, kernel row, output column) triple of a
/// 4×4, stride 2, padding 1 transposed convolution from `h × w` to
/// `2h × 2w`, for one output channel block.
#[inline]
fn for_each_tap(batch: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (oh, ow) = (2 * h, 2 * w);
    for b in 0..batch {
        for yi in 0..h {
            for xi in 0..w {
                let col_in = b * h * w + yi * w + xi;
                for ky in 0..4 {
                    let oy = 2 * yi as isize - 1 + ky as isize;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    for kx in 0..4 {
                        let ox = 2 * xi as isize - 1 + kx as isize;
                        if ox < 0 || ox >= ow as isize {
                            continue;
                        }
                        f(col_in, ky * 4 + kx, b * oh * ow + oy as usize * ow + ox as usize);
                    }
                }
            }
        }
    }
}

/// Scatters transposed-convolution columns `(c_out · 16, batch · h · w)`
/// into the `(c_out, batch · 2h · 2w)` output.
pub fn tconv_scatter(cols: &DMatrix<f64>, c_out: usize, batch: usize, h: usize, w: usize) -> DMatrix<f64> {
    let rows = c_out * 16;
    let mut out = DMatrix::zeros(c_out, batch * 4 * h * w);
    let src = cols.as_slice();
    let dst = out.as_mut_slice();
    for_each_tap(batch, h, w, |col_in, tap, col_out| {
        for c in 0..c_out {
            dst[col_out * c_out + c] += src[col_in * rows + c * 16 + tap];
        }
    });
    out
}

/// Adjoint of [`tconv_scatter`].
pub fn tconv_gather(grad_out: &DMatrix<f64>, c_out: usize, batch: usize, h: usize, w: usize) -> DMatrix<f64> {
    let rows = c_out * 16;
    let mut cols = DMatrix::zeros(rows, batch * h * w);
    let src = grad_out.as_slice();
    let dst = cols.as_mut_slice();
    for_each_tap(batch, h, w, |col_in, tap, col_out| {
        for c in 0..c_out {
            dst[col_in * rows + c * 16 + tap] = src[col_out * c_out + c];
        }
    });
    cols
}

/// 2×2 max pooling. Returns the pooled map and, per output entry, the
/// flat index of the winning input entry.
pub fn maxpool2(input: &DMatrix<f64>, batch: usize, h: usize, w: usize) -> (DMatrix<f64>, Vec<usize>) {
    let c = input.nrows();
    let (ph, pw) = (h / 2, w / 2);
    let mut out = DMatrix::zeros(c, batch * ph * pw);
    let mut arg = vec![0; c * batch * ph * pw];
    let src = input.as_slice();
    let dst = out.as_mut_slice();
    for b in 0..batch {
        for y in 0..ph {
            for x in 0..pw {
                let ocol = b * ph * pw + y * pw + x;
                for ch in 0..c {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let icol = b * h * w + (2 * y + dy) * w + 2 * x + dx;
                        let v = src[icol * c + ch];
                        if v > best_v {
                            best_v = v;
                            best = icol * c + ch;
                        }
                    }
                    dst[ocol * c + ch] = best_v;
                    arg[ocol * c + ch] = best;
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward(grad: &DMatrix<f64>, arg: &[usize], c: usize, input_cols: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(c, input_cols);
    let dst = out.as_mut_slice();
    for (g, &i) in grad.as_slice().iter().zip(arg) {
        dst[i] += g;
    }
    out
}

pub fn leaky(z: &DMatrix<f64>, slope: f64) -> DMatrix<f64> {
    z.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_backward(grad: &DMatrix<f64>, z: &DMatrix<f64>, slope: f64) -> DMatrix<f64> {
    grad.zip_map(z, |g, v| if v > 0.0 { g } else { slope * g })
}

/// `(c, batch · s)` → `(c · s, batch)` with row index `c · s + position`.
pub fn flatten(x: &DMatrix<f64>, batch: usize) -> DMatrix<f64> {
    let c = x.nrows();
    let s = x.ncols() / batch;
    DMatrix::from_fn(c * s, batch, |r, b| x[(r / s, b * s + r % s)])
}

/// Inverse of [`flatten`].
pub fn unflatten(x: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    let s = x.nrows() / c;
    let batch = x.ncols();
    DMatrix::from_fn(c, batch * s, |ch, col| x[(ch * s + col % s, col / s)])
}

pub fn add_bias(z: &mut DMatrix<f64>, bias: &DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        col += bias.column(0);
    }
}

pub fn bias_grad(grad: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(grad.nrows(), 1);
    for col in grad.column_iter() {
        out.column_mut(0).add_assign(&col);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn im2col_adjoint() {
        let x = random(2, 2 * 8 * 4, 1);
        let g = random(18, 2 * 8 * 4, 2);
        let lhs = dot(&im2col3(&x, 2, 8, 4), &g);
        let rhs = dot(&x, &col2im3(&g, 2, 2, 8, 4));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn tconv_adjoint() {
        let cols = random(3 * 16, 2 * 4 * 4, 3);
        let g = random(3, 2 * 8 * 8, 4);
        let lhs = dot(&tconv_scatter(&cols, 3, 2, 4, 4), &g);
        let rhs = dot(&cols, &tconv_gather(&g, 3, 2, 4, 4));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn conv_matches_direct_loop() {
        let (c_in, c_out, h, w) = (2, 3, 4, 8);
        let x = random(c_in, h * w, 5);
        let k = random(c_out, c_in * 9, 6);
        let y = &k * im2col3(&x, 1, h, w);
        for co in 0..c_out {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (oy as isize + ky as isize - 1, ox as isize + kx as isize - 1);
                                if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                    acc += k[(co, ci * 9 + ky * 3 + kx)] * x[(ci, sy as usize * w + sx as usize)];
                                }
                            }
                        }
                    }
                    assert!((acc - y[(co, oy * w + ox)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tconv_doubles_and_covers_interior_with_four_taps() {
        let ones = DMatrix::from_element(16, 16, 1.0);
        let out = tconv_scatter(&ones, 1, 1, 4, 4);
        assert_eq!(out.ncols(), 64);
        // interior outputs receive 4 taps, borders 2 or 1
        assert_eq!(out[(0, 3 * 8 + 3)], 4.0);
        assert_eq!(out[(0, 0)], 1.0);
        assert_eq!(out[(0, 3)], 2.0);
    }

    #[test]
    fn pool_and_flatten() {
        let x = random(2, 2 * 4 * 4, 7);
        let (p, arg) = maxpool2(&x, 2, 4, 4);
        assert_eq!(p.ncols(), 8);
        for (v, &i) in p.as_slice().iter().zip(&arg) {
            assert_eq!(*v, x.as_slice()[i]);
        }
        let g = random(2, 8, 8);
        let back = maxpool2_backward(&g, &arg, 2, 32);
        assert!((back.sum() - g.sum()).abs() < 1e-12);
        let f = flatten(&p, 2);
        assert_eq!(f.shape(), (8, 2));
        assert_eq!(unflatten(&f, 2), p);
    }
}
