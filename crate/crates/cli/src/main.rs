//! `anonrev` command-line driver.
//!
//! Exit codes: 0 on success, 1 on a configuration or usage error, 2 when a
//! pipeline stage (or any other step) fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anonrev::anonymizers::AnonymizerSpec;
use anonrev::dataio::{generate_synthetic_faces, load_manifest, write_dataset, write_manifest_csv, SyntheticConfig};
use anonrev::harness::{
    anonymize_dataset, default_suite, emit_report, read_report, run_experiment, run_suite, train_deanonymizer, Cache,
    DatasetSource, ExperimentConfig, ReportFormat, SuiteConfig,
};
use anonrev::neural::AeHyperparams;
use anonrev::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "anonrev", version, about = "Face anonymization reversibility experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration for the chosen verb.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Root seed; overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory of the content-addressed cache.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// Experiments run in parallel by `suite`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic face dataset (config: synthetic generator JSON).
    Generate,
    /// Anonymize a dataset directory (config: anonymizer spec JSON).
    Anonymize {
        /// Dataset directory to anonymize.
        #[arg(long)]
        input: PathBuf,
        /// Dataset supplying k-Same background faces or k-RTIO overlays.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        background_components: usize,
    },
    /// Fit the configured de-anonymizer (config: experiment JSON).
    TrainDeanon,
    /// Run one experiment and write its reports (config: experiment JSON).
    Evaluate,
    /// Run a suite (config: suite JSON) or the default matrix.
    Suite {
        /// Run the built-in matrix on the synthetic fixture instead of a
        /// suite file.
        #[arg(long)]
        default_matrix: bool,
        /// Autoencoder hyperparameters for the built-in matrix.
        #[arg(long)]
        autoencoder: Option<PathBuf>,
    },
    /// Re-emit a saved report.
    Report {
        /// A `report.json` written by `evaluate` or `suite`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::InvalidParameter(format!("{}: {e}", dir.display())))
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_file(required(&cli.config, "config")?)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cache(cli: &Cli) -> Cache {
    Cache::new(cli.cache.clone())
}

fn generate(cli: &Cli) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let mut cfg: SyntheticConfig = match &cli.config {
        Some(path) => read_config(path)?,
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dataset = generate_synthetic_faces(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let manifest = write_dataset(&dataset, out)?;
    write_manifest_csv(&manifest, &out.join("manifest.csv"))?;
    write_json(&out.join("synthetic.json"), &cfg)?;
    log::info!(
        "wrote {} images of {} identities to {}",
        dataset.len(),
        dataset.identity_count(),
        out.display()
    );
    Ok(())
}

fn anonymize(cli: &Cli, input: &Path, background: Option<&Path>, components: usize) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let mut spec: AnonymizerSpec = read_config(required(&cli.config, "config")?)?;
    if let Some(seed) = cli.seed {
        spec.noise_seed = seed;
    }
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    let dataset = load_manifest(input)?.load_images()?;
    let bg = background.map(|dir| load_manifest(dir)?.load_images()).transpose()?;
    let anonymized = anonymize_dataset(&spec, &dataset, bg.as_ref().map(|d| d.images.as_slice()), components)?;
    let manifest = write_dataset(&anonymized, out)?;
    write_manifest_csv(&manifest, &out.join("manifest.csv"))?;
    write_json(&out.join("spec.json"), &spec)?;
    log::info!("anonymized {} images with {}", anonymized.len(), spec.label());
    Ok(())
}

fn train(cli: &Cli) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let cfg = experiment_config(cli)?;
    let fitted = train_deanonymizer(&cfg, &cache(cli))?;
    for path in fitted.save(out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn evaluate(cli: &Cli) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let cfg = experiment_config(cli)?;
    let report = run_experiment(&cfg, &cache(cli))?;
    emit_report(&report, ReportFormat::Json, out)?;
    emit_report(&report, ReportFormat::Csv, out)?;
    for (protocol, outcome) in &report.outcomes {
        println!("{:<15} {:.4} ± {:.4}", protocol.as_str(), outcome.mean, outcome.ci);
    }
    if let Some(r) = &report.reversibility {
        println!("reversibility   {:.4} ({:?})", r.value, r.category);
    }
    Ok(())
}

fn suite(cli: &Cli, default_matrix: bool, autoencoder: Option<&Path>) -> Result<bool> {
    let out = required(&cli.out, "out")?;
    let mut suite: SuiteConfig = if default_matrix {
        let hyper: AeHyperparams = match autoencoder {
            Some(path) => read_config(path)?,
            None => AeHyperparams::default(),
        };
        default_suite(
            DatasetSource::Synthetic(SyntheticConfig::default()),
            &hyper,
            cli.seed.unwrap_or(0),
        )
    } else {
        SuiteConfig::from_json_file(required(&cli.config, "config")?)?
    };
    if let Some(seed) = cli.seed {
        for e in &mut suite.experiments {
            e.seed = seed;
        }
    }
    for e in &suite.experiments {
        e.validate()?;
    }
    create_dir(out)?;
    let result = run_suite(&suite, &cache(cli), cli.jobs)?;
    result.write(out)?;
    let failures: Vec<_> = result.failures().collect();
    for f in &failures {
        eprintln!(
            "{} failed in stage {}: {}",
            f.experiment,
            f.stage.as_deref().unwrap_or("?"),
            f.cause
        );
    }
    println!(
        "{} experiments, {} failed; aggregate table in {}",
        result.entries.len(),
        failures.len(),
        out.join(anonrev::harness::AGGREGATE_FILE).display()
    );
    Ok(failures.is_empty())
}

fn report(cli: &Cli, input: &Path, format: Format) -> Result<()> {
    let out = required(&cli.out, "out")?;
    let report = read_report(input).map_err(|e| Error::Config(format!("{}: {e}", input.display())))?;
    for path in emit_report(&report, format.into(), out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate => generate(cli).map(|_| true),
        Command::Anonymize {
            input,
            background,
            background_components,
        } => anonymize(cli, input, background.as_deref(), *background_components).map(|_| true),
        Command::TrainDeanon => train(cli).map(|_| true),
        Command::Evaluate => evaluate(cli).map(|_| true),
        Command::Suite {
            default_matrix,
            autoencoder,
        } => suite(cli, *default_matrix, autoencoder.as_deref()),
        Command::Report { input, format } => report(cli, input, *format).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
