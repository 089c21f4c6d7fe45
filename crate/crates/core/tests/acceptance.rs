//! Acceptance suite on the default synthetic fixture (50 identities × 10
//! images, 32×32). Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 1 5` runs only the listed criteria.

use std::process::ExitCode;
use std::time::Instant;

use anonrev::anonymizers::{
    build_background_db, dp_pix, dp_pix_scale, dp_snow, gaussian_noise, k_same_pixel, AnonymizerSpec, Method, SNOW_GRAY,
};
use anonrev::dataio::{generate_synthetic_faces, split_dataset, LabeledImage, SplitParams, SyntheticConfig};
use anonrev::harness::{
    default_suite, run_experiment, run_suite, Cache, DatasetSource, DeanonConfig, ExperimentConfig, ExperimentReport,
    AGGREGATE_HEADER,
};
use anonrev::metrics::{ssim, ReversibilityCategory, SsimConfig};
use anonrev::neural::{ae_gradient_check, ae_init, AeHyperparams, Loss};
use anonrev::recognition::{fit_pca, run_protocol, Protocol, ProtocolData};
use anonrev::{ImageTensor, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROOT_SEED: u64 = 0;

type Outcome = std::result::Result<Verdict, Box<dyn std::error::Error>>;

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

/// Shared state: one cache for the whole run, so experiments that appear
/// under several criteria are computed once.
struct Ctx {
    cache: Cache,
    _dir: tempfile::TempDir,
}

fn fixture() -> DatasetSource {
    DatasetSource::Synthetic(SyntheticConfig::default())
}

/// Desk-scale autoencoder budget.
fn desk_hyper(with_linear_layer: bool) -> AeHyperparams {
    AeHyperparams {
        features: 8,
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 200,
        with_linear_layer,
        ..AeHyperparams::default()
    }
}

fn spec(method: Method) -> AnonymizerSpec {
    AnonymizerSpec::new(method)
        .with_key(0x5eed_0001)
        .with_noise_seed(0x5eed_0002)
}

fn experiment(name: &str, method: Method, deanon: DeanonConfig) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(name, fixture(), spec(method)).with_deanonymizer(deanon);
    cfg.seed = ROOT_SEED;
    cfg
}

fn autoencoder(name: &str, method: Method) -> ExperimentConfig {
    experiment(
        name,
        method,
        DeanonConfig::Autoencoder {
            hyper: desk_hyper(true),
        },
    )
}

fn acc(r: &ExperimentReport, p: Protocol) -> f64 {
    r.accuracy(p).unwrap_or(f64::NAN)
}

fn ci(r: &ExperimentReport, p: Protocol) -> f64 {
    r.outcomes.get(&p).map_or(f64::NAN, |o| o.ci)
}

fn criterion_1(ctx: &Ctx) -> Outcome {
    use anonrev::harness::Pipeline;
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for method in [
        Method::BlockPermute { block_size: 8 },
        Method::PixelRelocate { steps: 50 },
    ] {
        let cfg = experiment(method.name(), method.clone(), DeanonConfig::LearnPermutation);
        let mut pipeline = Pipeline::new(&cfg, &ctx.cache);
        let data = pipeline.prepare()?;
        let (_, anon_test) = pipeline.anonymize_eval(&data)?;
        let fitted = pipeline.fit(&data)?.expect("configured");
        let mut identical = 0;
        for (clear, anon) in data.test.iter().zip(&anon_test) {
            if fitted.as_deanonymizer().deanonymize(&anon.image)? == clear.image {
                identical += 1;
            }
        }
        let report = run_experiment(&cfg, &ctx.cache)?;
        let same_predictions =
            report.outcomes[&Protocol::Reversal].predictions == report.outcomes[&Protocol::ClearBaseline].predictions;
        let score = report.reversibility.map_or(f64::NAN, |r| r.value);
        ok &= identical == data.test.len() && same_predictions && score == 1.0;
        detail.push(format!(
            "{}: {identical}/{} bit-identical, reversal {:.3} = clear {:.3}: {same_predictions}, score {score}",
            method.name(),
            data.test.len(),
            acc(&report, Protocol::Reversal),
            acc(&report, Protocol::ClearBaseline)
        ));
    }
    let seconds = start.elapsed().as_secs_f64();
    ok &= seconds < 60.0;
    detail.push(format!("{seconds:.1}s"));
    Ok(Verdict::new(ok, detail.join("; ")))
}

fn criterion_2(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let method = Method::BlockPermute { block_size: 8 };
    let linear = run_experiment(&autoencoder("block_permute__autoencoder", method.clone()), &ctx.cache)?;
    let conv = run_experiment(
        &experiment(
            "block_permute__conv_autoencoder",
            method,
            DeanonConfig::Autoencoder {
                hyper: desk_hyper(false),
            },
        ),
        &ctx.cache,
    )?;
    let ssim_gap = linear.ssim_deanonymized.unwrap_or(f64::NAN) - conv.ssim_deanonymized.unwrap_or(f64::NAN);
    let acc_gap = acc(&linear, Protocol::Reversal) - acc(&conv, Protocol::Reversal);
    let seconds = start.elapsed().as_secs_f64();
    Ok(Verdict::new(
        ssim_gap >= 0.1 && acc_gap >= 0.15 && seconds < 1800.0,
        format!(
            "SSIM {:.3} vs {:.3} (gap {ssim_gap:.3}), reversal {:.3} vs {:.3} (gap {acc_gap:.3}), {seconds:.0}s",
            linear.ssim_deanonymized.unwrap_or(f64::NAN),
            conv.ssim_deanonymized.unwrap_or(f64::NAN),
            acc(&linear, Protocol::Reversal),
            acc(&conv, Protocol::Reversal)
        ),
    ))
}

fn criterion_3(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for method in [Method::KSamePixel { k: 10 }, Method::KSameEigen { k: 10 }] {
        let report = run_experiment(
            &autoencoder(&format!("{}__autoencoder", method.name()), method.clone()),
            &ctx.cache,
        )?;
        let gain = acc(&report, Protocol::Reversal) - acc(&report, Protocol::Naive);
        let category = report.reversibility.map(|r| r.category);
        ok &= gain <= 0.10 && category == Some(ReversibilityCategory::Irreversible);
        detail.push(format!(
            "{}: naive {:.3}, reversal {:.3}, gain {gain:.3}, {:?}",
            method.name(),
            acc(&report, Protocol::Naive),
            acc(&report, Protocol::Reversal),
            category
        ));
    }
    Ok(Verdict::new(ok, detail.join("; ")))
}

fn partial_methods() -> [Method; 4] {
    [
        Method::GaussianBlur { kernel: 9 },
        Method::Pixelate { size: 8 },
        Method::GaussianNoise { sigma: 200.0 },
        Method::DpSnow { delta: 0.5 },
    ]
}

fn criterion_4(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for method in partial_methods() {
        let report = run_experiment(
            &autoencoder(&format!("{}__autoencoder", method.name()), method.clone()),
            &ctx.cache,
        )?;
        let (clear, naive, rev) = (
            acc(&report, Protocol::ClearBaseline),
            acc(&report, Protocol::Naive),
            acc(&report, Protocol::Reversal),
        );
        ok &= rev >= naive + 0.05 && rev < clear;
        detail.push(format!(
            "{}: naive {naive:.3} < reversal {rev:.3} < clear {clear:.3}",
            method.name()
        ));
    }
    Ok(Verdict::new(ok, detail.join("; ")))
}

fn criterion_5(ctx: &Ctx) -> Outcome {
    let start = Instant::now();
    let report = run_experiment(
        &experiment(
            "dp_snow__interpolate",
            Method::DpSnow { delta: 0.5 },
            DeanonConfig::InterpolateGray,
        ),
        &ctx.cache,
    )?;
    let s = report.ssim_deanonymized.unwrap_or(f64::NAN);
    let score = report.reversibility.map_or(f64::NAN, |r| r.value);
    let seconds = start.elapsed().as_secs_f64();
    Ok(Verdict::new(
        s >= 0.90 && score >= 0.8 && seconds < 60.0,
        format!("SSIM {s:.3}, reversibility {score:.3}, {seconds:.1}s"),
    ))
}

fn criterion_6(ctx: &Ctx) -> Outcome {
    let test = Method::GaussianBlur { kernel: 9 };
    let kernels = [5usize, 7, 9, 11, 13];
    let mut runs = Vec::new();
    for &k in &kernels {
        let mut cfg = autoencoder(&format!("gaussian_blur__autoencoder__train_k{k}"), test.clone());
        if k != 9 {
            cfg.train_anonymizer_override = Some(spec(Method::GaussianBlur { kernel: k }));
        } else {
            cfg.name = "gaussian_blur__autoencoder".into();
        }
        runs.push(run_experiment(&cfg, &ctx.cache)?);
    }
    let accs: Vec<f64> = runs.iter().map(|r| acc(r, Protocol::Reversal)).collect();
    let cis: Vec<f64> = runs.iter().map(|r| ci(r, Protocol::Reversal)).collect();
    let matched = accs[2];
    let matched_is_max = accs.iter().all(|&a| a <= matched);

    // walk outwards from the matched kernel on both sides
    let mut inversions = Vec::new();
    for side in [[2usize, 1, 0], [2, 3, 4]] {
        for w in side.windows(2) {
            let (near, far) = (w[0], w[1]);
            if accs[far] > accs[near] {
                inversions.push((accs[far] - accs[near], cis[near].max(cis[far])));
            }
        }
    }
    let ordering_ok = inversions.len() <= 1 && inversions.iter().all(|(d, c)| d <= c);

    let naive = acc(&runs[2], Protocol::Naive);
    let naive_ci = ci(&runs[2], Protocol::Naive);
    let mut cross = Vec::new();
    let mut cross_ok = true;
    for other in [Method::DpSnow { delta: 0.5 }, Method::Pixelate { size: 8 }] {
        let mut cfg = autoencoder(
            &format!("gaussian_blur__autoencoder__train_{}", other.name()),
            test.clone(),
        );
        cfg.train_anonymizer_override = Some(spec(other.clone()));
        let a = acc(&run_experiment(&cfg, &ctx.cache)?, Protocol::Reversal);
        cross_ok &= (a - naive).abs() <= naive_ci;
        cross.push(format!("{} {a:.3}", other.name()));
    }

    let table: Vec<String> = kernels.iter().zip(&accs).map(|(k, a)| format!("k{k} {a:.3}")).collect();
    Ok(Verdict::new(
        matched_is_max && ordering_ok && cross_ok,
        format!(
            "{}; inversions {inversions:?}; trained on {} vs naive {naive:.3} ± {naive_ci:.3}",
            table.join(", "),
            cross.join(", ")
        ),
    ))
}

fn criterion_7(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for method in [
        Method::GaussianBlur { kernel: 9 },
        Method::GaussianNoise { sigma: 200.0 },
    ] {
        let same = run_experiment(
            &autoencoder(&format!("{}__autoencoder", method.name()), method.clone()),
            &ctx.cache,
        )?;
        let mut cfg = autoencoder(&format!("{}__autoencoder__family1", method.name()), method.clone());
        cfg.train_dataset_override = Some(DatasetSource::Synthetic(SyntheticConfig {
            family: 1,
            ..SyntheticConfig::default()
        }));
        let cross = run_experiment(&cfg, &ctx.cache)?;
        let (a, b) = (acc(&same, Protocol::Reversal), acc(&cross, Protocol::Reversal));
        ok &= (a - b).abs() <= 0.15;
        detail.push(format!("{}: same family {a:.3}, other family {b:.3}", method.name()));
    }
    Ok(Verdict::new(ok, detail.join("; ")))
}

/// Naive recognition of k-Same-Pixel probes when every probe is averaged
/// with the same k − 1 background faces. The background holds k − 1 real
/// identities plus one black identity that is never a nearest neighbor.
fn criterion_8(_: &Ctx) -> Outcome {
    let dataset = generate_synthetic_faces(&SyntheticConfig::default())?;
    let split = split_dataset(&dataset.keys(), &SplitParams::default(), ROOT_SEED)?;
    let enroll = dataset.select(|i| split.is_enrollment(&i.key()));
    let test = dataset.select(|i| split.is_test(&i.key()));
    let training: Vec<ImageTensor> = dataset
        .select(|i| split.is_training(&i.identity_id))
        .into_iter()
        .map(|i| i.image)
        .collect();
    let pca = fit_pca(&training, 64)?;
    let black = ImageTensor::filled(32, 32, 0.0)?;

    let mut ok = true;
    let mut detail = Vec::new();
    for k in [2usize, 5, 10] {
        let ids: Vec<&String> = split.background_ids.iter().take(k - 1).collect();
        let mut background = dataset.select(|i| ids.contains(&&i.identity_id));
        background.extend((0..2).map(|j| LabeledImage::new(black.clone(), "zz_outlier", format!("{j}"))));
        let db = build_background_db(&background, 8.min(background.len() - 1))?;
        let mut shared = true;
        let mut anon_test = Vec::with_capacity(test.len());
        let neighbor_set = |img: &ImageTensor| -> anonrev::Result<Vec<usize>> {
            let mut n = db.neighbors_of(img, k)?;
            n.sort_unstable();
            Ok(n)
        };
        let first = neighbor_set(&test[0].image)?;
        for probe in &test {
            let neighbors = neighbor_set(&probe.image)?;
            shared &= neighbors == first && neighbors.iter().all(|&n| db.records[n].identity_id != "zz_outlier");
            let mut anon = probe.clone();
            anon.image = k_same_pixel(&probe.image, &db, k)?.quantized();
            anon_test.push(anon);
        }
        let data = ProtocolData {
            pca: &pca,
            clear_enroll: &enroll,
            clear_test: &test,
            anon_enroll: &enroll,
            anon_test: &anon_test,
        };
        let naive = run_protocol(Protocol::Naive, &data, None)?;
        let bound = 1.0 / k as f64 + naive.ci;
        ok &= shared && naive.mean <= bound;
        detail.push(format!(
            "k={k}: naive {:.3} vs bound {bound:.3}, shared neighbors {shared}",
            naive.mean
        ));
    }
    Ok(Verdict::new(ok, detail.join("; ")))
}

fn criterion_9(_: &Ctx) -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(ROOT_SEED);
    let mut random_image = |h, w| ImageTensor::from_fn(h, w, |_, _, _| rng.random::<f64>()).map(|i| i.quantized());

    for (loss, bound) in [(Loss::Mse, 1e-4), (Loss::Ssim, 1e-3)] {
        for linear in [true, false] {
            let hyper = AeHyperparams {
                features: 2,
                loss,
                with_linear_layer: linear,
                seed: 1,
                ..AeHyperparams::default()
            };
            let model = ae_init(&hyper, 8, 8)?;
            let check = ae_gradient_check(&model, &random_image(8, 8)?, &random_image(8, 8)?)?;
            ok &= check.all_finite && check.max_relative_error <= bound;
            detail.push(format!(
                "grad {loss:?}/linear={linear} {:.1e}",
                check.max_relative_error
            ));
        }
    }

    let x = random_image(32, 32)?;
    let self_ssim = ssim(&x, &x, &SsimConfig::default())?;
    ok &= (self_ssim - 1.0).abs() <= 1e-12;
    detail.push(format!("SSIM(x,x)-1 {:.1e}", self_ssim - 1.0));

    let gray = ImageTensor::filled(100, 100, 0.5)?;
    let n = gray.len() as f64;
    let (epsilon, b) = (0.1389, 12.0);
    let scale = dp_pix_scale(epsilon, b, 1);
    let noisy = dp_pix(&gray, epsilon, b, 1, 7)?;
    let mean_abs = noisy.data().iter().map(|v| (v - 0.5).abs()).sum::<f64>() / n;
    let laplace_ok = (mean_abs / scale - 1.0).abs() <= 0.1;
    let noisy = gaussian_noise(&gray, 10.0, 8)?;
    let sd = (noisy.data().iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / n).sqrt();
    let gauss_ok = (sd / (10.0 / 255.0) - 1.0).abs() <= 0.1;
    ok &= laplace_ok && gauss_ok;
    detail.push(format!(
        "Laplace E|x| {:.4} vs {scale:.4}, Gaussian sd {:.4} vs {:.4} (n={n})",
        mean_abs,
        sd,
        10.0 / 255.0
    ));

    let snowed = dp_snow(&ImageTensor::filled(40, 40, 0.9)?, 0.37, 3)?;
    let replaced = (0..snowed.pixel_count())
        .filter(|&i| snowed.pixel(i) == [SNOW_GRAY; 3])
        .count();
    let expected = (0.37f64 * 1600.0).round() as usize;
    ok &= replaced == expected;
    detail.push(format!("snow {replaced}/{expected}"));

    let images: Vec<ImageTensor> = (0..12).map(|_| random_image(8, 8)).collect::<Result<_>>()?;
    let pca = fit_pca(&images, 11)?;
    let mut worst: f64 = 0.0;
    for img in &images {
        let back = pca.reconstruct(&pca.embed(img)?)?;
        for (a, b) in img.data().iter().zip(back.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    ok &= worst <= 1e-5;
    detail.push(format!("PCA round trip {worst:.1e}"));

    let seconds = start.elapsed().as_secs_f64();
    ok &= seconds < 120.0;
    detail.push(format!("{seconds:.1}s"));
    Ok(Verdict::new(ok, detail.join("; ")))
}

fn criterion_10(_: &Ctx) -> Outcome {
    let tiny = AeHyperparams {
        features: 2,
        max_epochs: 1,
        batch_size: 32,
        learning_rate: 1e-3,
        ..AeHyperparams::default()
    };
    let suite = default_suite(fixture(), &tiny, ROOT_SEED);
    let mut tables = Vec::new();
    let mut rows = 0;
    let mut failures = 0;
    for _ in 0..2 {
        // cold, independent caches for each run
        let dir = tempfile::tempdir()?;
        let cache = tempfile::tempdir()?;
        let result = run_suite(&suite, &Cache::new(Some(cache.path().to_path_buf())), 2)?;
        result.write(dir.path())?;
        failures = result.failures().count();
        rows = result.rows().len();
        let mut files = vec![std::fs::read(dir.path().join("aggregate.csv"))?];
        for entry in &result.entries {
            for name in ["outcomes_reversal.csv", "outcomes_naive.csv"] {
                let path = dir.path().join(&entry.name).join(name);
                files.push(std::fs::read(&path)?);
            }
        }
        tables.push(files);
    }
    let identical = tables[0] == tables[1];
    let header_ok = String::from_utf8_lossy(&tables[0][0]).starts_with(&AGGREGATE_HEADER.join(","));
    let reversal_rows = String::from_utf8_lossy(&tables[0][0])
        .lines()
        .filter(|l| l.contains(",reversal,"))
        .count();
    Ok(Verdict::new(
        identical && header_ok && failures == 0 && suite.experiments.len() == 41 && reversal_rows == 41,
        format!(
            "{} experiments, {rows} aggregate rows ({reversal_rows} reversal), {failures} failures, byte-identical: {identical}",
            suite.experiments.len()
        ),
    ))
}

type Criterion = fn(&Ctx) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "permutations are perfectly reversed", criterion_1),
        (2, "the linear layer is necessary", criterion_2),
        (3, "k-Same is irreversible", criterion_3),
        (4, "partial reversibility ordering", criterion_4),
        (5, "DP Snow is nearly perfectly reversed", criterion_5),
        (6, "training mismatch degrades reversal", criterion_6),
        (7, "cross-family training generalizes", criterion_7),
        (8, "k-anonymity bound", criterion_8),
        (9, "numerical core", criterion_9),
        (10, "pipeline reproducibility", criterion_10),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dir = tempfile::tempdir().expect("temporary cache directory");
    let ctx = Ctx {
        cache: Cache::new(Some(dir.path().to_path_buf())),
        _dir: dir,
    };
    let mut failed = 0;
    for (n, title, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let verdict = run(&ctx).unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        let status = if verdict.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} criterion {n:>2} ({title}) [{:.0}s]: {}",
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
        failed += usize::from(!verdict.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
