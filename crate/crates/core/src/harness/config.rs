use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anonymizers::AnonymizerSpec;
use crate::dataio::{generate_synthetic_faces, load_manifest, Dataset, SplitParams, SyntheticConfig};
use crate::deanon::ResampleMode;
use crate::error::{Error, Result};
use crate::neural::AeHyperparams;
use crate::recognition::Protocol;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic(SyntheticConfig),
    Manifest { root: PathBuf },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic(cfg) => generate_synthetic_faces(cfg),
            DatasetSource::Manifest { root } => {
                let manifest = load_manifest(root)?;
                for w in &manifest.warnings {
                    log::warn!("{w}");
                }
                manifest.load_images()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeanonConfig {
    None,
    LearnPermutation,
    InterpolateGray,
    /// Resampling search over the listed interpolation modes.
    Resample {
        modes: Vec<ResampleMode>,
    },
    Wiener,
    RichardsonLucy,
    Autoencoder {
        hyper: AeHyperparams,
    },
}

impl DeanonConfig {
    pub fn is_none(&self) -> bool {
        matches!(self, DeanonConfig::None)
    }

    pub fn label(&self) -> String {
        match self {
            DeanonConfig::None => "none".into(),
            DeanonConfig::LearnPermutation => "learn_permutation".into(),
            DeanonConfig::InterpolateGray => "interpolate_gray".into(),
            DeanonConfig::Resample { modes } => {
                let m: Vec<&str> = modes
                    .iter()
                    .map(|m| match m {
                        ResampleMode::Linear => "linear",
                        ResampleMode::Bicubic => "bicubic",
                    })
                    .collect();
                format!("resample({})", m.join("|"))
            }
            DeanonConfig::Wiener => "wiener".into(),
            DeanonConfig::RichardsonLucy => "richardson_lucy".into(),
            DeanonConfig::Autoencoder { hyper } if hyper.with_linear_layer => "autoencoder".into(),
            DeanonConfig::Autoencoder { .. } => "conv_autoencoder".into(),
        }
    }
}

fn default_pca_components() -> usize {
    64
}

fn default_background_components() -> usize {
    40
}

fn default_validation_fraction() -> f64 {
    0.1
}

fn default_max_search_pairs() -> usize {
    16
}

/// One experiment: data, split, anonymization, attack and protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitParams,
    /// Root seed for the split and for model initialization.
    #[serde(default)]
    pub seed: u64,
    pub anonymizer: AnonymizerSpec,
    #[serde(default = "none_deanon")]
    pub deanonymizer: DeanonConfig,
    pub protocols: Vec<Protocol>,
    /// Anonymizer applied to the training split instead of `anonymizer`.
    #[serde(default)]
    pub train_anonymizer_override: Option<AnonymizerSpec>,
    /// Dataset whose training split replaces this dataset's training split.
    #[serde(default)]
    pub train_dataset_override: Option<DatasetSource>,
    /// Eigenface components of the recognizer.
    #[serde(default = "default_pca_components")]
    pub pca_components: usize,
    /// PCA components of the k-Same background database.
    #[serde(default = "default_background_components")]
    pub background_components: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Pairs used by the resampling and deconvolution searches.
    #[serde(default = "default_max_search_pairs")]
    pub max_search_pairs: usize,
}

fn none_deanon() -> DeanonConfig {
    DeanonConfig::None
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, dataset: DatasetSource, anonymizer: AnonymizerSpec) -> Self {
        Self {
            name: name.into(),
            dataset,
            split: SplitParams::default(),
            seed: 0,
            anonymizer,
            deanonymizer: DeanonConfig::None,
            protocols: vec![Protocol::ClearBaseline, Protocol::Naive],
            train_anonymizer_override: None,
            train_dataset_override: None,
            pca_components: default_pca_components(),
            background_components: default_background_components(),
            validation_fraction: default_validation_fraction(),
            max_search_pairs: default_max_search_pairs(),
        }
    }

    pub fn with_deanonymizer(mut self, d: DeanonConfig) -> Self {
        self.deanonymizer = d;
        self.protocols = vec![
            Protocol::ClearBaseline,
            Protocol::Naive,
            Protocol::Parrot,
            Protocol::Reversal,
        ];
        self
    }

    pub fn wants(&self, p: Protocol) -> bool {
        self.protocols.contains(&p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("{}: {m}", self.name)));
        if self.protocols.is_empty() {
            return bad("no protocols requested".into());
        }
        let reversal = self.wants(Protocol::Reversal);
        if reversal && self.deanonymizer.is_none() {
            return bad("the reversal protocol requires a de-anonymizer".into());
        }
        if !reversal && !self.deanonymizer.is_none() {
            return bad("a de-anonymizer is only used by the reversal protocol".into());
        }
        if !reversal && (self.train_anonymizer_override.is_some() || self.train_dataset_override.is_some()) {
            return bad("training overrides are only valid with the reversal protocol".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return bad(format!(
                "validation fraction {} outside (0, 0.5]",
                self.validation_fraction
            ));
        }
        if self.pca_components == 0 || self.background_components == 0 || self.max_search_pairs == 0 {
            return bad("component and pair counts must be at least 1".into());
        }
        if let DeanonConfig::Resample { modes } = &self.deanonymizer {
            if modes.is_empty() {
                return bad("resample needs at least one mode".into());
            }
        }
        if let DeanonConfig::Autoencoder { hyper } = &self.deanonymizer {
            hyper
                .validate()
                .map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        }
        self.anonymizer
            .validate()
            .map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        if let Some(o) = &self.train_anonymizer_override {
            o.validate().map_err(|e| Error::Config(format!("{}: {e}", self.name)))?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A list of experiments run together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub experiments: Vec<ExperimentConfig>,
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Config("suite contains no experiments".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &self.experiments {
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate experiment name {}", e.name)));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
