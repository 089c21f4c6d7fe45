use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ae_init;
use super::model::{loss_and_grad, AeHyperparams, AutoencoderModel, Weights};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::seeding::rng_for;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One training example. `group` keeps validation identity-disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub anonymized: ImageTensor,
    pub clear: ImageTensor,
    pub group: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    /// Weights of the epoch with the lowest validation loss.
    pub model: AutoencoderModel,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Per-batch training losses of the first epoch.
    pub first_epoch_batch_losses: Vec<f64>,
}

struct Adam {
    m: Weights,
    v: Weights,
    t: i32,
}

impl Adam {
    fn new(w: &Weights) -> Self {
        Self {
            m: w.zeros_like(),
            v: w.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, weights: &mut Weights, grads: &Weights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let params = weights.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Splits pair indices into training and validation sets by whole groups.
fn split_validation(pairs: &[TrainingPair], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut groups: Vec<&str> = pairs
        .iter()
        .map(|p| p.group.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if groups.len() < 2 {
        return Err(Error::InsufficientData(
            "validation split needs at least 2 groups".into(),
        ));
    }
    groups.shuffle(&mut rng_for(seed, "autoencoder/validation"));
    let target = (fraction * pairs.len() as f64).ceil() as usize;
    let mut val_groups = BTreeSet::new();
    let mut count = 0;
    for g in &groups[..groups.len() - 1] {
        if count >= target {
            break;
        }
        val_groups.insert(*g);
        count += pairs.iter().filter(|p| p.group == *g).count();
    }
    Ok((0..pairs.len()).partition(|&i| !val_groups.contains(pairs[i].group.as_str())))
}

fn batch_matrices(
    model: &AutoencoderModel,
    pairs: &[TrainingPair],
    idx: &[usize],
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let anon: Vec<&ImageTensor> = idx.iter().map(|&i| &pairs[i].anonymized).collect();
    let clear: Vec<&ImageTensor> = idx.iter().map(|&i| &pairs[i].clear).collect();
    Ok((model.pack(&anon)?, model.pack(&clear)?))
}

fn mean_loss(model: &AutoencoderModel, pairs: &[TrainingPair], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(model.hyper.batch_size) {
        let (x, t) = batch_matrices(model, pairs, chunk)?;
        let out = model.forward_cached(&x).output;
        total += loss_and_grad(model.hyper.loss, &out, &t, model.height, model.width).0 * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Mini-batch Adam training with a plateau learning-rate schedule and
/// early stopping on validation loss.
pub fn ae_train(pairs: &[TrainingPair], hyper: &AeHyperparams, validation_fraction: f64) -> Result<TrainedAutoencoder> {
    if !(validation_fraction > 0.0 && validation_fraction <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {validation_fraction} outside (0, 0.5]"
        )));
    }
    let first = pairs
        .first()
        .ok_or_else(|| Error::InsufficientData("no training pairs".into()))?;
    let (h, w) = (first.clear.height(), first.clear.width());
    let mut model = ae_init(hyper, h, w)?;
    let (train_idx, val_idx) = split_validation(pairs, validation_fraction, hyper.seed)?;
    if train_idx.len() < 2 * hyper.batch_size {
        return Err(Error::InsufficientData(format!(
            "{} training pairs after validation split, need at least {}",
            train_idx.len(),
            2 * hyper.batch_size
        )));
    }

    let mut adam = Adam::new(&model.weights);
    let mut lr = hyper.learning_rate;
    let mut best_weights = model.weights.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut plateau = 0;
    let mut log = Vec::new();
    let mut first_epoch_batch_losses = Vec::new();

    for epoch in 1..=hyper.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_for(hyper.seed, &format!("autoencoder/epoch/{epoch}")));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let (x, t) = batch_matrices(&model, pairs, chunk)?;
            let cache = model.forward_cached(&x);
            let (loss, d_out) = loss_and_grad(hyper.loss, &cache.output, &t, h, w);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            let grads = model.backward(&cache, &d_out);
            adam.step(&mut model.weights, &grads, lr);
            if !model.weights.is_finite() {
                return Err(Error::NonFinite(format!(
                    "weights diverged at epoch {epoch}, batch {b}"
                )));
            }
            total += loss * chunk.len() as f64;
            if epoch == 1 {
                first_epoch_batch_losses.push(loss);
            }
        }
        let train_loss = total / order.len() as f64;
        let val_loss = mean_loss(&model, pairs, &val_idx)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr:.2e}");

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_weights = model.weights.clone();
            plateau = 0;
        } else {
            plateau += 1;
            if plateau > hyper.plateau_patience {
                lr *= hyper.plateau_factor;
                plateau = 0;
            }
            if epoch - best_epoch >= hyper.early_stop_patience {
                break;
            }
        }
    }

    model.weights = best_weights;
    Ok(TrainedAutoencoder {
        model,
        log,
        best_epoch,
        best_val_loss: best_val,
        first_epoch_batch_losses,
    })
}

/// Writes the training log as CSV with columns `epoch,train_loss,val_loss,lr`.
pub fn write_training_log(log: &[EpochRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut wr = csv::Writer::from_path(path)?;
    for rec in log {
        wr.serialize(rec)?;
    }
    wr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_training_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
}
