use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::*;
use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHANNELS};
use crate::metrics::{ssim_plane_with_grad, SsimConfig};
use crate::seeding::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `1 − mean SSIM`.
    Ssim,
    Mse,
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeHyperparams {
    pub features: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub loss: Loss,
    pub activation_slope: f64,
    pub with_linear_layer: bool,
    pub seed: u64,
    /// Largest linear layer, in weights, that [`ae_init`] accepts.
    pub max_linear_params: u64,
}

impl Default for AeHyperparams {
    fn default() -> Self {
        Self {
            features: 16,
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 200,
            plateau_patience: 5,
            plateau_factor: 0.75,
            early_stop_patience: 20,
            loss: Loss::Ssim,
            activation_slope: 0.01,
            with_linear_layer: true,
            seed: 0,
            max_linear_params: 1 << 28,
        }
    }
}

impl AeHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.features == 0 {
            return bad("features must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch budget must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau factor must lie in (0, 1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        Ok(())
    }
}

/// Trainable tensors in a fixed order. Convolution weights are
/// `(c_out, c_in · 9)`, transposed-convolution weights `(c_out · 16, c_in)`,
/// biases `(n, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub conv1_w: DMatrix<f64>,
    pub conv1_b: DMatrix<f64>,
    pub conv2_w: DMatrix<f64>,
    pub conv2_b: DMatrix<f64>,
    pub linear: Option<(DMatrix<f64>, DMatrix<f64>)>,
    pub tconv1_w: DMatrix<f64>,
    pub tconv1_b: DMatrix<f64>,
    pub tconv2_w: DMatrix<f64>,
    pub tconv2_b: DMatrix<f64>,
    pub out_w: DMatrix<f64>,
    pub out_b: DMatrix<f64>,
}

impl Weights {
    fn zeros(f: usize, d: usize, with_linear: bool) -> Self {
        let z = DMatrix::zeros;
        Self {
            conv1_w: z(f, CHANNELS * 9),
            conv1_b: z(f, 1),
            conv2_w: z(f, f * 9),
            conv2_b: z(f, 1),
            linear: with_linear.then(|| (z(d, d), z(d, 1))),
            tconv1_w: z(f * 16, f),
            tconv1_b: z(f, 1),
            tconv2_w: z(f * 16, f),
            tconv2_b: z(f, 1),
            out_w: z(CHANNELS, f * 9),
            out_b: z(CHANNELS, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut w = self.clone();
        w.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        w
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut n = vec!["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"];
        if self.linear.is_some() {
            n.extend(["linear.weight", "linear.bias"]);
        }
        n.extend([
            "tconv1.weight",
            "tconv1.bias",
            "tconv2.weight",
            "tconv2.bias",
            "out.weight",
            "out.bias",
        ]);
        n
    }

    pub fn tensors(&self) -> Vec<&DMatrix<f64>> {
        let mut t = vec![&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b];
        if let Some((w, b)) = &self.linear {
            t.extend([w, b]);
        }
        t.extend([
            &self.tconv1_w,
            &self.tconv1_b,
            &self.tconv2_w,
            &self.tconv2_b,
            &self.out_w,
            &self.out_b,
        ]);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut DMatrix<f64>> {
        let mut t = vec![
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
        ];
        if let Some((w, b)) = &mut self.linear {
            t.extend([w, b]);
        }
        t.extend([
            &mut self.tconv1_w,
            &mut self.tconv1_b,
            &mut self.tconv2_w,
            &mut self.tconv2_b,
            &mut self.out_w,
            &mut self.out_b,
        ]);
        t
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Closed-form parameter count for `features` channels at `h × w`.
pub fn parameter_count(features: usize, height: usize, width: usize, with_linear: bool) -> usize {
    let f = features;
    let d = f * (height / 4) * (width / 4);
    let linear = if with_linear { d * d + d } else { 0 };
    (27 * f + f) + (9 * f * f + f) + linear + 2 * (16 * f * f + f) + (27 * f + 3)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub hyper: AeHyperparams,
    pub height: usize,
    pub width: usize,
    pub weights: Weights,
}

fn he_uniform<R: Rng>(rng: &mut R, m: &mut DMatrix<f64>, fan_in: usize) {
    let bound = (6.0 / fan_in as f64).sqrt();
    m.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
}

pub fn ae_init(hyper: &AeHyperparams, height: usize, width: usize) -> Result<AutoencoderModel> {
    hyper.validate()?;
    if height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0 {
        return Err(Error::InvalidParameter(format!(
            "resolution {height}x{width} must be divisible by 4"
        )));
    }
    let f = hyper.features;
    let d = f * (height / 4) * (width / 4);
    if hyper.with_linear_layer && (d as u64).saturating_mul(d as u64) > hyper.max_linear_params {
        return Err(Error::InvalidParameter(format!(
            "linear layer {d}x{d} exceeds the memory cap of {} parameters",
            hyper.max_linear_params
        )));
    }
    let mut w = Weights::zeros(f, d, hyper.with_linear_layer);
    let mut rng = rng_for(hyper.seed, "autoencoder/init");
    he_uniform(&mut rng, &mut w.conv1_w, CHANNELS * 9);
    he_uniform(&mut rng, &mut w.conv2_w, f * 9);
    if let Some((lw, _)) = &mut w.linear {
        he_uniform(&mut rng, lw, d);
    }
    he_uniform(&mut rng, &mut w.tconv1_w, f * 4);
    he_uniform(&mut rng, &mut w.tconv2_w, f * 4);
    he_uniform(&mut rng, &mut w.out_w, f * 9);
    Ok(AutoencoderModel {
        hyper: hyper.clone(),
        height,
        width,
        weights: w,
    })
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Cache {
    batch: usize,
    cols1: DMatrix<f64>,
    z1: DMatrix<f64>,
    arg1: Vec<usize>,
    cols2: DMatrix<f64>,
    z2: DMatrix<f64>,
    arg2: Vec<usize>,
    flat: Option<(DMatrix<f64>, DMatrix<f64>)>,
    bottleneck: DMatrix<f64>,
    zt1: DMatrix<f64>,
    at1: DMatrix<f64>,
    zt2: DMatrix<f64>,
    cols_out: DMatrix<f64>,
    pub(crate) output: DMatrix<f64>,
}

impl AutoencoderModel {
    pub fn parameter_count(&self) -> usize {
        self.weights.parameter_count()
    }

    /// Packs images into a `(3, batch · h · w)` matrix.
    pub(crate) fn pack(&self, images: &[&ImageTensor]) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(images.len() * self.height * self.width * CHANNELS);
        for img in images {
            if img.height() != self.height || img.width() != self.width {
                return Err(Error::shape(
                    format!("{}x{}x3", self.height, self.width),
                    img.shape_string(),
                ));
            }
            data.extend_from_slice(img.data());
        }
        Ok(DMatrix::from_vec(CHANNELS, data.len() / CHANNELS, data))
    }

    pub(crate) fn unpack(&self, out: &DMatrix<f64>) -> Result<Vec<ImageTensor>> {
        let per = self.height * self.width * CHANNELS;
        out.as_slice()
            .chunks(per)
            .map(|c| ImageTensor::from_clamped(self.height, self.width, c.to_vec()))
            .collect()
    }

    pub(crate) fn forward_cached(&self, x: &DMatrix<f64>) -> Cache {
        let (h, w) = (self.height, self.width);
        let batch = x.ncols() / (h * w);
        let f = self.hyper.features;
        let slope = self.hyper.activation_slope;
        let wt = &self.weights;

        let cols1 = im2col3(x, batch, h, w);
        let mut z1 = &wt.conv1_w * &cols1;
        add_bias(&mut z1, &wt.conv1_b);
        let (p1, arg1) = maxpool2(&leaky(&z1, slope), batch, h, w);

        let (h2, w2) = (h / 2, w / 2);
        let cols2 = im2col3(&p1, batch, h2, w2);
        let mut z2 = &wt.conv2_w * &cols2;
        add_bias(&mut z2, &wt.conv2_b);
        let (p2, arg2) = maxpool2(&leaky(&z2, slope), batch, h2, w2);

        let (flat, bottleneck) = match &wt.linear {
            Some((lw, lb)) => {
                let xin = flatten(&p2, batch);
                let mut zl = lw * &xin;
                add_bias(&mut zl, lb);
                let b = unflatten(&leaky(&zl, slope), f);
                (Some((xin, zl)), b)
            }
            None => (None, p2),
        };

        let (h4, w4) = (h / 4, w / 4);
        let mut zt1 = tconv_scatter(&(&wt.tconv1_w * &bottleneck), f, batch, h4, w4);
        add_bias(&mut zt1, &wt.tconv1_b);
        let at1 = leaky(&zt1, slope);
        let mut zt2 = tconv_scatter(&(&wt.tconv2_w * &at1), f, batch, h2, w2);
        add_bias(&mut zt2, &wt.tconv2_b);
        let cols_out = im2col3(&leaky(&zt2, slope), batch, h, w);
        let mut zo = &wt.out_w * &cols_out;
        add_bias(&mut zo, &wt.out_b);
        let output = zo.map(|v| 1.0 / (1.0 + (-v).exp()));

        Cache {
            batch,
            cols1,
            z1,
            arg1,
            cols2,
            z2,
            arg2,
            flat,
            bottleneck,
            zt1,
            at1,
            zt2,
            cols_out,
            output,
        }
    }

    /// Gradients of the loss with respect to every weight, given the
    /// gradient with respect to the output.
    pub(crate) fn backward(&self, cache: &Cache, d_out: &DMatrix<f64>) -> Weights {
        let (h, w) = (self.height, self.width);
        let (h2, w2, h4, w4) = (h / 2, w / 2, h / 4, w / 4);
        let batch = cache.batch;
        let f = self.hyper.features;
        let slope = self.hyper.activation_slope;
        let wt = &self.weights;
        let mut g = wt.zeros_like();

        let dzo = d_out.zip_map(&cache.output, |d, s| d * s * (1.0 - s));
        g.out_w = &dzo * cache.cols_out.transpose();
        g.out_b = bias_grad(&dzo);
        let d_at2 = col2im3(&(wt.out_w.tr_mul(&dzo)), f, batch, h, w);
        let dzt2 = leaky_backward(&d_at2, &cache.zt2, slope);

        g.tconv2_b = bias_grad(&dzt2);
        let dcols = tconv_gather(&dzt2, f, batch, h2, w2);
        g.tconv2_w = &dcols * cache.at1.transpose();
        let d_at1 = wt.tconv2_w.tr_mul(&dcols);
        let dzt1 = leaky_backward(&d_at1, &cache.zt1, slope);

        g.tconv1_b = bias_grad(&dzt1);
        let dcols = tconv_gather(&dzt1, f, batch, h4, w4);
        g.tconv1_w = &dcols * cache.bottleneck.transpose();
        let d_bottleneck = wt.tconv1_w.tr_mul(&dcols);

        let d_p2 = match (&wt.linear, &cache.flat) {
            (Some((lw, _)), Some((xin, zl))) => {
                let dzl = leaky_backward(&flatten(&d_bottleneck, batch), zl, slope);
                g.linear = Some((&dzl * xin.transpose(), bias_grad(&dzl)));
                unflatten(&lw.tr_mul(&dzl), f)
            }
            _ => d_bottleneck,
        };

        let d_a2 = maxpool2_backward(&d_p2, &cache.arg2, f, batch * h2 * w2);
        let dz2 = leaky_backward(&d_a2, &cache.z2, slope);
        g.conv2_w = &dz2 * cache.cols2.transpose();
        g.conv2_b = bias_grad(&dz2);
        let d_p1 = col2im3(&wt.conv2_w.tr_mul(&dz2), f, batch, h2, w2);

        let d_a1 = maxpool2_backward(&d_p1, &cache.arg1, f, batch * h * w);
        let dz1 = leaky_backward(&d_a1, &cache.z1, slope);
        g.conv1_w = &dz1 * cache.cols1.transpose();
        g.conv1_b = bias_grad(&dz1);
        g
    }
}

/// Loss value and its gradient with respect to the `(3, batch · h · w)`
/// prediction matrix.
pub(crate) fn loss_and_grad(
    loss: Loss,
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
    h: usize,
    w: usize,
) -> (f64, DMatrix<f64>) {
    let n = pred.len() as f64;
    match loss {
        Loss::Mse => {
            let diff = pred - target;
            (diff.norm_squared() / n, diff * (2.0 / n))
        }
        Loss::Mae => {
            let diff = pred - target;
            let value = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
            (value, diff.map(|d| d.signum() * (d != 0.0) as u8 as f64 / n))
        }
        Loss::Ssim => {
            let cfg = SsimConfig::default();
            let per = h * w * CHANNELS;
            let batch = pred.len() / per;
            let scale = 1.0 / (batch * CHANNELS) as f64;
            let mut grad = DMatrix::zeros(pred.nrows(), pred.ncols());
            let mut total = 0.0;
            let (p, t) = (pred.as_slice(), target.as_slice());
            let gs = grad.as_mut_slice();
            for b in 0..batch {
                for c in 0..CHANNELS {
                    let idx = |i: usize| b * per + i * CHANNELS + c;
                    let x: Vec<f64> = (0..h * w).map(|i| p[idx(i)]).collect();
                    let y: Vec<f64> = (0..h * w).map(|i| t[idx(i)]).collect();
                    let (s, gx) = ssim_plane_with_grad(&x, &y, h, w, &cfg);
                    total += s;
                    for (i, gv) in gx.into_iter().enumerate() {
                        gs[idx(i)] = -gv * scale;
                    }
                }
            }
            (1.0 - total * scale, grad)
        }
    }
}

/// Forward pass over a batch.
pub fn ae_forward(model: &AutoencoderModel, batch: &[ImageTensor]) -> Result<Vec<ImageTensor>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&ImageTensor> = batch.iter().collect();
    let x = model.pack(&refs)?;
    model.unpack(&model.forward_cached(&x).output)
}

pub fn ae_apply(model: &AutoencoderModel, img: &ImageTensor) -> Result<ImageTensor> {
    Ok(ae_forward(model, std::slice::from_ref(img))?.remove(0))
}

impl crate::deanon::Deanonymizer for AutoencoderModel {
    fn deanonymize(&self, img: &ImageTensor) -> Result<ImageTensor> {
        ae_apply(self, img)
    }
}

/// Mean loss of the model on `(anonymized, clear)` pairs.
pub fn ae_loss(model: &AutoencoderModel, anonymized: &[&ImageTensor], clear: &[&ImageTensor]) -> Result<f64> {
    let x = model.pack(anonymized)?;
    let t = model.pack(clear)?;
    let cache = model.forward_cached(&x);
    Ok(loss_and_grad(model.hyper.loss, &cache.output, &t, model.height, model.width).0)
}
