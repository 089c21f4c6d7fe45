//! Suites of experiments, the default anonymization × attack matrix and the
//! aggregate CSV.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::cache::Cache;
use super::config::{DatasetSource, DeanonConfig, ExperimentConfig, SuiteConfig};
use super::pipeline::{run_experiment, ExperimentReport};
use super::report::{emit_failure, emit_report, FailureReport, ReportFormat};
use crate::anonymizers::{AnonymizerSpec, Method};
use crate::deanon::ResampleMode;
use crate::error::{Error, Result};
use crate::neural::AeHyperparams;
use crate::recognition::Protocol;
use crate::seeding::derive_seed;

pub const AGGREGATE_HEADER: [&str; 9] = [
    "experiment",
    "anonymizer",
    "deanonymizer",
    "protocol",
    "recognizer",
    "mean_acc",
    "ci",
    "ssim",
    "reversibility",
];

/// The only recognizer in this crate.
pub const RECOGNIZER: &str = "eigenfaces";

pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Specialized attacks of the default matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attack {
    LearnPermutation,
    Resample,
    Wiener,
    RichardsonLucy,
    Interpolate,
}

impl Attack {
    fn config(self) -> DeanonConfig {
        match self {
            Attack::LearnPermutation => DeanonConfig::LearnPermutation,
            Attack::Resample => DeanonConfig::Resample {
                modes: vec![ResampleMode::Linear, ResampleMode::Bicubic],
            },
            Attack::Wiener => DeanonConfig::Wiener,
            Attack::RichardsonLucy => DeanonConfig::RichardsonLucy,
            Attack::Interpolate => DeanonConfig::InterpolateGray,
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Attack::LearnPermutation => "learn_permutation",
            Attack::Resample => "lin_bic",
            Attack::Wiener => "wiener",
            Attack::RichardsonLucy => "richardson_lucy",
            Attack::Interpolate => "interpolate",
        }
    }
}

/// Anonymizations at desk scale (32 × 32 faces).
pub fn desk_scale_methods() -> Vec<Method> {
    vec![
        Method::EyeMask,
        Method::BlockPermute { block_size: 8 },
        Method::PixelRelocate { steps: 50 },
        Method::GaussianNoise { sigma: 200.0 },
        Method::GaussianBlur { kernel: 9 },
        Method::Pixelate { size: 8 },
        Method::KRtio { overlays: 3 },
        Method::DpPix {
            epsilon: 5.0,
            b: 12.0,
            m: 4,
        },
        Method::DpSnow { delta: 0.5 },
        Method::DpSamp {
            epsilon: 25.0,
            k: 24,
            m: 12.0,
        },
        Method::KSamePixel { k: 10 },
        Method::KSameEigen { k: 10 },
    ]
}

fn specialized_attacks(method: &Method) -> &'static [Attack] {
    use Attack::*;
    match method {
        Method::BlockPermute { .. } | Method::PixelRelocate { .. } => &[LearnPermutation],
        Method::GaussianNoise { .. } | Method::GaussianBlur { .. } | Method::DpPix { .. } => {
            &[Resample, Wiener, RichardsonLucy]
        }
        Method::Pixelate { .. } => &[Resample, Wiener],
        Method::DpSnow { .. } => &[Resample, Wiener, RichardsonLucy, Interpolate],
        _ => &[],
    }
}

/// The default matrix: for every desk-scale anonymization, its specialized
/// attacks, the autoencoder and the autoencoder without linear layer. All
/// experiments share `dataset` and `seed`.
pub fn default_suite(dataset: DatasetSource, hyper: &AeHyperparams, seed: u64) -> SuiteConfig {
    let key = derive_seed(seed, "anonymizer/key");
    let noise_seed = derive_seed(seed, "anonymizer/noise");
    let mut experiments = Vec::new();
    for method in desk_scale_methods() {
        let spec = AnonymizerSpec::new(method.clone())
            .with_key(key)
            .with_noise_seed(noise_seed);
        let mut push = |slug: &str, deanon: DeanonConfig| {
            let mut cfg = ExperimentConfig::new(format!("{}__{slug}", method.name()), dataset.clone(), spec.clone())
                .with_deanonymizer(deanon);
            cfg.seed = seed;
            experiments.push(cfg);
        };
        for attack in specialized_attacks(&method) {
            push(attack.slug(), attack.config());
        }
        for (slug, with_linear_layer) in [("autoencoder", true), ("conv_autoencoder", false)] {
            push(
                slug,
                DeanonConfig::Autoencoder {
                    hyper: AeHyperparams {
                        with_linear_layer,
                        ..hyper.clone()
                    },
                },
            );
        }
    }
    SuiteConfig { experiments }
}

/// Result of one experiment of a suite.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    pub outcome: std::result::Result<ExperimentReport, FailureReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub experiment: String,
    pub anonymizer: String,
    pub deanonymizer: String,
    pub protocol: Protocol,
    pub recognizer: String,
    pub mean_acc: f64,
    pub ci: f64,
    /// SSIM against the clear probes of the images the protocol probes with.
    pub ssim: Option<f64>,
    pub reversibility: Option<f64>,
}

impl AggregateRow {
    fn record(&self) -> [String; 9] {
        let num = |v: f64| format!("{v:.6}");
        [
            self.experiment.clone(),
            self.anonymizer.clone(),
            self.deanonymizer.clone(),
            self.protocol.as_str().to_string(),
            self.recognizer.clone(),
            num(self.mean_acc),
            num(self.ci),
            self.ssim.map(num).unwrap_or_default(),
            self.reversibility.map(num).unwrap_or_default(),
        ]
    }
}

/// Aggregate rows of one report, one per protocol.
pub fn aggregate_rows(report: &ExperimentReport) -> Vec<AggregateRow> {
    report
        .outcomes
        .iter()
        .map(|(&protocol, outcome)| AggregateRow {
            experiment: report.config.name.clone(),
            anonymizer: report.config.anonymizer.label(),
            deanonymizer: match protocol {
                Protocol::Reversal => report.config.deanonymizer.label(),
                _ => DeanonConfig::None.label(),
            },
            protocol,
            recognizer: RECOGNIZER.to_string(),
            mean_acc: outcome.mean,
            ci: outcome.ci,
            ssim: match protocol {
                Protocol::ClearBaseline => Some(1.0),
                Protocol::Naive | Protocol::Parrot => Some(report.ssim_anonymized),
                Protocol::Reversal => report.ssim_deanonymized,
            },
            reversibility: match protocol {
                Protocol::Reversal => report.reversibility.map(|r| r.value),
                _ => None,
            },
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SuiteResult {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteResult {
    pub fn reports(&self) -> impl Iterator<Item = &ExperimentReport> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &FailureReport> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().err())
    }

    pub fn rows(&self) -> Vec<AggregateRow> {
        self.reports().flat_map(aggregate_rows).collect()
    }

    /// The aggregate table as CSV text with a fixed header and six-decimal
    /// numbers.
    pub fn aggregate_csv(&self) -> Result<String> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(AGGREGATE_HEADER)?;
        for row in self.rows() {
            wr.write_record(row.record())?;
        }
        let bytes = wr
            .into_inner()
            .map_err(|e| Error::InvalidParameter(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(format!("csv encoding: {e}")))
    }

    /// Writes `aggregate.csv` plus one directory per experiment holding its
    /// JSON and CSV reports, or its failure report.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        for entry in &self.entries {
            let dir = out.join(&entry.name);
            match &entry.outcome {
                Ok(report) => {
                    emit_report(report, ReportFormat::Json, &dir)?;
                    emit_report(report, ReportFormat::Csv, &dir)?;
                }
                Err(failure) => {
                    emit_failure(failure, &dir)?;
                }
            }
        }
        let path = out.join(AGGREGATE_FILE);
        std::fs::write(&path, self.aggregate_csv()?).map_err(|e| Error::io(&path, e))
    }
}

/// Runs every experiment of the suite on up to `jobs` threads. Failed
/// experiments are recorded and the remaining ones still run. Entries keep
/// the suite order.
pub fn run_suite(suite: &SuiteConfig, cache: &Cache, jobs: usize) -> Result<SuiteResult> {
    suite.validate()?;
    let n = suite.experiments.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SuiteEntry>>> = Mutex::new(vec![None; n]);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(cfg) = suite.experiments.get(i) else { break };
        log::info!("experiment {}/{n}: {}", i + 1, cfg.name);
        let outcome = run_experiment(cfg, cache).map_err(|e| {
            log::error!("{}: {e}", cfg.name);
            FailureReport::from_error(&cfg.name, &e)
        });
        let entry = SuiteEntry {
            name: cfg.name.clone(),
            outcome,
        };
        slots.lock().expect("suite result lock poisoned")[i] = Some(entry);
    };
    let threads = jobs.clamp(1, n);
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let entries = slots
        .into_inner()
        .expect("suite result lock poisoned")
        .into_iter()
        .map(|e| e.expect("every experiment ran"))
        .collect();
    Ok(SuiteResult { entries })
}
