//! The end-to-end experiment: data → split → anonymization → attack
//! fitting → recognition protocols → metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cache::{content_hash, images_hash, publish, staging_path, write_json, Cache};
use super::config::{DeanonConfig, ExperimentConfig};
use crate::anonymizers::{build_background_db, AnonymizerContext, AnonymizerSpec, OverlaySet};
use crate::dataio::{split_dataset, Dataset, LabeledImage, SplitAssignment};
use crate::deanon::{
    grid_search_deconv, learn_permutation, resample_search_modes, Deanonymizer, DeconvMethod, DeconvModel,
    GrayInterpolator, ImagePair, PermutationMap, ResampleModel,
};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::metrics::{reversibility, ssim, ReversibilityScore, SsimConfig};
use crate::neural::{
    ae_train, decode_checkpoint, encode_checkpoint, read_training_log, save_checkpoint, write_training_log,
    AeHyperparams, AutoencoderModel, EpochRecord, TrainingPair,
};
use crate::recognition::{fit_pca, run_protocol, PcaModel, Protocol, ProtocolData, RecognitionOutcome};
use crate::seeding::derive_seed;

/// Pairs used to learn a permutation.
const PERMUTATION_PAIRS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    /// True when the stage's result came from the cache.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub root: u64,
    pub split: u64,
    pub anonymizer_key: u64,
    pub anonymizer_noise_seed: u64,
    pub autoencoder: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub outcomes: BTreeMap<Protocol, RecognitionOutcome>,
    /// Mean SSIM of anonymized test images against their clear versions.
    pub ssim_anonymized: f64,
    /// Mean SSIM of de-anonymized test images against their clear versions.
    pub ssim_deanonymized: Option<f64>,
    pub reversibility: Option<ReversibilityScore>,
    /// Summary of the fitted de-anonymizer.
    pub deanonymizer: Option<serde_json::Value>,
    /// Hash of the anonymized test images every protocol probes with.
    pub anonymized_test_hash: String,
    pub stages: Vec<StageRecord>,
}

impl ExperimentReport {
    pub fn accuracy(&self, p: Protocol) -> Option<f64> {
        self.outcomes.get(&p).map(|o| o.mean)
    }

    /// Everything except timings, for reproducibility comparisons.
    pub fn metrics_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(stages) = v.get_mut("stages").and_then(|s| s.as_array_mut()) {
            for s in stages {
                s.as_object_mut().map(|o| o.remove("seconds"));
            }
        }
        Ok(serde_json::to_string(&v)?)
    }
}

/// A fitted attack.
#[derive(Debug, Clone)]
pub enum FittedDeanonymizer {
    Permutation(PermutationMap),
    Gray(GrayInterpolator),
    Resample(ResampleModel),
    Deconv(DeconvModel),
    Autoencoder {
        model: AutoencoderModel,
        log: Vec<EpochRecord>,
    },
}

impl FittedDeanonymizer {
    pub fn as_deanonymizer(&self) -> &dyn Deanonymizer {
        match self {
            FittedDeanonymizer::Permutation(m) => m,
            FittedDeanonymizer::Gray(g) => g,
            FittedDeanonymizer::Resample(r) => r,
            FittedDeanonymizer::Deconv(d) => d,
            FittedDeanonymizer::Autoencoder { model, .. } => model,
        }
    }

    pub fn summary(&self) -> Result<serde_json::Value> {
        use serde_json::json;
        Ok(match self {
            FittedDeanonymizer::Permutation(m) => json!({"kind": "learn_permutation", "confidence": m.confidence}),
            FittedDeanonymizer::Gray(_) => json!({"kind": "interpolate_gray"}),
            FittedDeanonymizer::Resample(r) => {
                json!({"kind": "resample", "resolution": r.resolution, "mode": r.mode})
            }
            FittedDeanonymizer::Deconv(d) => json!({"kind": d.method, "params": d.params}),
            FittedDeanonymizer::Autoencoder { model, log } => {
                let best = log
                    .iter()
                    .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.epoch.cmp(&b.epoch)));
                json!({
                    "kind": if model.hyper.with_linear_layer { "autoencoder" } else { "conv_autoencoder" },
                    "parameters": model.parameter_count(),
                    "epochs_run": log.len(),
                    "best_epoch": best.map(|b| b.epoch),
                    "best_val_loss": best.map(|b| b.val_loss),
                })
            }
        })
    }
}

impl FittedDeanonymizer {
    /// Writes the fitted attack into `dir`: `permutation.json` (index
    /// array), `deconv_params.json`, `resample.json`, or `model.ckpt` with
    /// `training_log.csv`, plus `deanonymizer.json` with the summary.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        match self {
            FittedDeanonymizer::Permutation(m) => {
                let path = dir.join("permutation.json");
                std::fs::write(&path, m.to_json()?).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            FittedDeanonymizer::Gray(_) => {}
            FittedDeanonymizer::Resample(r) => {
                let path = dir.join("resample.json");
                write_json(&path, r)?;
                written.push(path);
            }
            FittedDeanonymizer::Deconv(d) => {
                let path = dir.join("deconv_params.json");
                write_json(&path, &d.params)?;
                written.push(path);
            }
            FittedDeanonymizer::Autoencoder { model, log } => {
                let ckpt = dir.join("model.ckpt");
                save_checkpoint(model, &ckpt)?;
                let log_path = dir.join("training_log.csv");
                write_training_log(log, &log_path)?;
                written.extend([ckpt, log_path]);
            }
        }
        let path = dir.join("deanonymizer.json");
        write_json(&path, &self.summary()?)?;
        written.push(path);
        Ok(written)
    }
}

/// Data shared by every stage after the split.
pub struct PreparedData {
    pub dataset_hash: String,
    pub split: SplitAssignment,
    pub background: Vec<LabeledImage>,
    pub training: Vec<LabeledImage>,
    pub enroll: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub context: AnonymizerContext,
    context_key: String,
}

fn partition(dataset: &Dataset, split: &SplitAssignment) -> [Vec<LabeledImage>; 4] {
    [
        dataset.select(|i| split.is_background(&i.identity_id)),
        dataset.select(|i| split.is_training(&i.identity_id)),
        dataset.select(|i| split.is_enrollment(&i.key())),
        dataset.select(|i| split.is_test(&i.key())),
    ]
}

/// Runs the stages of one experiment, recording their timings.
pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub cache: &'a Cache,
    pub stages: Vec<StageRecord>,
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig, cache: &'a Cache) -> Self {
        Self {
            config,
            cache,
            stages: Vec::new(),
        }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<(T, bool)>) -> Result<T> {
        let start = Instant::now();
        let (value, cached) = f(self).map_err(|e| e.in_stage(name))?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "{}: stage {name} {} in {seconds:.2}s",
            self.config.name,
            if cached { "cached" } else { "done" }
        );
        self.stages.push(StageRecord {
            name: name.to_string(),
            seconds,
            cached,
        });
        Ok(value)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.config.seed, "split")
    }

    /// Effective autoencoder hyperparameters, with the seed derived from
    /// the root seed.
    pub fn autoencoder_hyper(&self, hyper: &AeHyperparams) -> AeHyperparams {
        AeHyperparams {
            seed: derive_seed(self.config.seed, &format!("autoencoder/{}", hyper.seed)),
            ..hyper.clone()
        }
    }

    pub fn prepare(&mut self) -> Result<PreparedData> {
        self.stage("config", |p| p.config.validate().map(|_| ((), false)))?;
        let dataset = self.stage("data", |p| Ok((p.config.dataset.load()?, false)))?;
        let split_seed = self.split_seed();
        let split = self.stage("split", |p| {
            Ok((split_dataset(&dataset.keys(), &p.config.split, split_seed)?, false))
        })?;
        let [background, training, enroll, test] = partition(&dataset, &split);
        let dataset_hash = images_hash(&dataset.images);
        let spec_needs = |s: &AnonymizerSpec| (s.needs_background(), s.needs_overlays());
        let mut needs = spec_needs(&self.config.anonymizer);
        if let Some(o) = &self.config.train_anonymizer_override {
            let (b, v) = spec_needs(o);
            needs = (needs.0 || b, needs.1 || v);
        }
        let components = self.config.background_components;
        let context = self.stage("background", |_| {
            let mut ctx = AnonymizerContext::default();
            if needs.0 {
                ctx.background = Some(build_background_db(&background, components)?);
            }
            if needs.1 {
                ctx.overlays = Some(OverlaySet::new(background.iter().map(|i| i.image.clone()).collect())?);
            }
            Ok((ctx, false))
        })?;
        let context_key = content_hash(&(images_hash(&background), components))?;
        Ok(PreparedData {
            dataset_hash,
            split,
            background,
            training,
            enroll,
            test,
            context,
            context_key,
        })
    }

    /// Anonymizes `images` with `spec`, through the cache. Outputs are
    /// 8-bit quantized, exactly as stored on disk.
    fn anonymize(
        &self,
        spec: &AnonymizerSpec,
        images: &[LabeledImage],
        data: &PreparedData,
    ) -> Result<(Vec<LabeledImage>, bool, String)> {
        let uses_context = spec.needs_background() || spec.needs_overlays();
        let key = content_hash(&(spec, images_hash(images), uses_context.then_some(&data.context_key)))?;
        if let Some(hit) = self.cache.load_images(&key, images)? {
            return Ok((hit, true, key));
        }
        let out = images
            .iter()
            .map(|img| Ok(img.with_image(spec.apply(img, &data.context)?.quantized())))
            .collect::<Result<Vec<_>>>()?;
        self.cache.store_images(&key, &out, spec)?;
        Ok((out, false, key))
    }

    pub fn anonymize_eval(&mut self, data: &PreparedData) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
        let spec = self.config.anonymizer.clone();
        self.stage("anonymize", |p| {
            let (enroll, c1, _) = p.anonymize(&spec, &data.enroll, data)?;
            let (test, c2, _) = p.anonymize(&spec, &data.test, data)?;
            Ok(((enroll, test), c1 && c2))
        })
    }

    /// Clear training images and their anonymized counterparts.
    pub fn training_pairs(&mut self, data: &PreparedData) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>, String)> {
        let spec = self
            .config
            .train_anonymizer_override
            .clone()
            .unwrap_or_else(|| self.config.anonymizer.clone());
        self.stage("anonymize_training", |p| {
            let clear = match &p.config.train_dataset_override {
                None => data.training.clone(),
                Some(source) => {
                    let other = source.load()?;
                    let split = split_dataset(&other.keys(), &p.config.split, p.split_seed())?;
                    other.select(|i| split.is_training(&i.identity_id))
                }
            };
            let (anon, cached, key) = p.anonymize(&spec, &clear, data)?;
            Ok(((clear, anon, key), cached))
        })
    }

    fn search_subset(&self, pairs: Vec<ImagePair>, limit: usize) -> Vec<ImagePair> {
        let mut pairs = pairs;
        pairs.shuffle(&mut crate::seeding::rng_for(self.config.seed, "search/pairs"));
        pairs.truncate(limit);
        pairs
    }

    pub fn fit(&mut self, data: &PreparedData) -> Result<Option<FittedDeanonymizer>> {
        if self.config.deanonymizer.is_none() {
            return Ok(None);
        }
        let (clear, anon, train_key) = self.training_pairs(data)?;
        let deanon = self.config.deanonymizer.clone();
        let fitted = self.stage("train", |p| {
            let pairs: Vec<ImagePair> = clear
                .iter()
                .zip(&anon)
                .map(|(c, a)| (c.image.clone(), a.image.clone()))
                .collect();
            let limit = p.config.max_search_pairs;
            Ok(match deanon {
                DeanonConfig::None => unreachable!("checked above"),
                DeanonConfig::LearnPermutation => {
                    let subset = p.search_subset(pairs, PERMUTATION_PAIRS);
                    (FittedDeanonymizer::Permutation(learn_permutation(&subset)?), false)
                }
                DeanonConfig::InterpolateGray => (FittedDeanonymizer::Gray(GrayInterpolator), false),
                DeanonConfig::Resample { modes } => {
                    let subset = p.search_subset(pairs, limit);
                    (
                        FittedDeanonymizer::Resample(resample_search_modes(&subset, &modes)?.model()),
                        false,
                    )
                }
                DeanonConfig::Wiener | DeanonConfig::RichardsonLucy => {
                    let method = if deanon == DeanonConfig::Wiener {
                        DeconvMethod::Wiener
                    } else {
                        DeconvMethod::RichardsonLucy
                    };
                    let subset = p.search_subset(pairs, limit);
                    let params = grid_search_deconv(&subset, method)?;
                    (FittedDeanonymizer::Deconv(DeconvModel { method, params }), false)
                }
                DeanonConfig::Autoencoder { hyper } => {
                    let hyper = p.autoencoder_hyper(&hyper);
                    let key = content_hash(&(&hyper, &train_key, p.config.validation_fraction))?;
                    let log_path = p.cache.model_artifact(&key, "log.csv");
                    if let (Some(model), Some(path)) = (p.cache.load_model(&key)?, &log_path) {
                        if path.exists() {
                            let log = read_training_log(path)?;
                            return Ok((FittedDeanonymizer::Autoencoder { model, log }, true));
                        }
                    }
                    let training: Vec<TrainingPair> = clear
                        .iter()
                        .zip(&anon)
                        .map(|(c, a)| TrainingPair {
                            anonymized: a.image.clone(),
                            clear: c.image.clone(),
                            group: c.identity_id.clone(),
                        })
                        .collect();
                    let trained = ae_train(&training, &hyper, p.config.validation_fraction)?;
                    let model = decode_checkpoint(&encode_checkpoint(&trained.model)?)?;
                    if let Some(path) = &log_path {
                        let staging = staging_path(path);
                        write_training_log(&trained.log, &staging)?;
                        publish(&staging, path)?;
                    }
                    p.cache.store_model(&key, &model)?;
                    let log = match &log_path {
                        Some(path) => read_training_log(path)?,
                        None => trained.log,
                    };
                    (FittedDeanonymizer::Autoencoder { model, log }, false)
                }
            })
        })?;
        Ok(Some(fitted))
    }

    fn fit_recognizer(&mut self, data: &PreparedData) -> Result<PcaModel> {
        let components = self.config.pca_components;
        self.stage("recognizer", |_| {
            let images: Vec<ImageTensor> = data.training.iter().map(|i| i.image.clone()).collect();
            let c = components.min(images.len());
            Ok((fit_pca(&images, c)?, false))
        })
    }
}

fn mean_ssim(a: &[ImageTensor], b: &[LabeledImage]) -> Result<f64> {
    let cfg = SsimConfig::default();
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += ssim(x, &y.image, &cfg)?;
    }
    Ok(total / a.len().max(1) as f64)
}

/// Anonymizes every image of `dataset`. k-Same and k-RTIO draw their
/// background database or overlays from `background`.
pub fn anonymize_dataset(
    spec: &AnonymizerSpec,
    dataset: &Dataset,
    background: Option<&[LabeledImage]>,
    background_components: usize,
) -> Result<Dataset> {
    spec.validate()?;
    let mut ctx = AnonymizerContext::default();
    if spec.needs_background() || spec.needs_overlays() {
        let bg =
            background.ok_or_else(|| Error::Config(format!("{} needs a background dataset", spec.method.name())))?;
        if spec.needs_background() {
            ctx.background = Some(build_background_db(bg, background_components)?);
        }
        if spec.needs_overlays() {
            ctx.overlays = Some(OverlaySet::new(bg.iter().map(|i| i.image.clone()).collect())?);
        }
    }
    let images = dataset
        .images
        .iter()
        .map(|img| Ok(img.with_image(spec.apply(img, &ctx)?.quantized())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(images, format!("{}|{}", dataset.source_tag, spec.label())))
}

/// Runs the stages up to and including de-anonymizer fitting.
pub fn train_deanonymizer(config: &ExperimentConfig, cache: &Cache) -> Result<FittedDeanonymizer> {
    let mut p = Pipeline::new(config, cache);
    let data = p.prepare()?;
    p.fit(&data)?
        .ok_or_else(|| Error::Config(format!("{}: no de-anonymizer configured", config.name)))
}

/// Runs one experiment end to end.
pub fn run_experiment(config: &ExperimentConfig, cache: &Cache) -> Result<ExperimentReport> {
    let mut p = Pipeline::new(config, cache);
    let data = p.prepare()?;
    let (anon_enroll, anon_test) = p.anonymize_eval(&data)?;
    let fitted = p.fit(&data)?;
    let pca = p.fit_recognizer(&data)?;

    let mut protocols: Vec<Protocol> = config.protocols.clone();
    if config.wants(Protocol::Reversal) {
        protocols.extend([Protocol::ClearBaseline, Protocol::Naive]);
    }
    protocols.sort();
    protocols.dedup();

    let outcomes = p.stage("recognize", |_| {
        let pd = ProtocolData {
            pca: &pca,
            clear_enroll: &data.enroll,
            clear_test: &data.test,
            anon_enroll: &anon_enroll,
            anon_test: &anon_test,
        };
        let mut out = BTreeMap::new();
        for &proto in &protocols {
            let d = match proto {
                Protocol::Reversal => fitted.as_ref().map(|f| f.as_deanonymizer()),
                _ => None,
            };
            out.insert(proto, run_protocol(proto, &pd, d)?);
        }
        Ok((out, false))
    })?;

    let (ssim_anonymized, ssim_deanonymized, reversibility_score) = p.stage("metrics", |_| {
        let anon_images: Vec<ImageTensor> = anon_test.iter().map(|i| i.image.clone()).collect();
        let s_anon = mean_ssim(&anon_images, &data.test)?;
        let s_deanon = match &fitted {
            Some(f) => {
                let d = f.as_deanonymizer();
                let restored = anon_images
                    .iter()
                    .map(|img| d.deanonymize(img))
                    .collect::<Result<Vec<_>>>()?;
                Some(mean_ssim(&restored, &data.test)?)
            }
            None => None,
        };
        let score = match (
            outcomes.get(&Protocol::ClearBaseline),
            outcomes.get(&Protocol::Naive),
            outcomes.get(&Protocol::Reversal),
        ) {
            (Some(c), Some(n), Some(r)) if c.mean > n.mean => Some(reversibility(c.mean, n.mean, r.mean)?),
            (Some(_), Some(_), Some(_)) => {
                log::warn!(
                    "{}: clear accuracy does not exceed naive accuracy; reversibility undefined",
                    config.name
                );
                None
            }
            _ => None,
        };
        Ok(((s_anon, s_deanon, score), false))
    })?;

    let seeds = SeedRecord {
        root: config.seed,
        split: p.split_seed(),
        anonymizer_key: config.anonymizer.key,
        anonymizer_noise_seed: config.anonymizer.noise_seed,
        autoencoder: match &config.deanonymizer {
            DeanonConfig::Autoencoder { hyper } => Some(p.autoencoder_hyper(hyper).seed),
            _ => None,
        },
    };
    let deanonymizer = fitted.as_ref().map(|f| f.summary()).transpose()?;
    Ok(ExperimentReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds,
        outcomes,
        ssim_anonymized,
        ssim_deanonymized,
        reversibility: reversibility_score,
        deanonymizer,
        anonymized_test_hash: images_hash(&anon_test),
        stages: p.stages,
    })
}
