use super::model::{loss_and_grad, AutoencoderModel};
use crate::error::Result;
use crate::image::ImageTensor;

/// Initial step of the central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Smallest step tried when a perturbation straddles a kink.
const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-6)`.
    pub max_relative_error: f64,
    pub parameters_checked: usize,
    pub all_finite: bool,
}

/// Compares the analytic gradient of the model's loss on one
/// `(anonymized, clear)` pair with central finite differences, for every
/// weight.
///
/// LeakyReLU and max-pooling make the loss piecewise smooth. A central
/// difference whose step straddles a kink mixes two slopes, and a bias
/// moves every activation of its channel, so such straddles are common.
/// Each numeric derivative is therefore taken at steps `h` and `h / 4`,
/// and `h` shrinks until the two agree, which happens once both
/// perturbations stay inside one smooth piece.
pub fn ae_gradient_check(
    model: &AutoencoderModel,
    anonymized: &ImageTensor,
    clear: &ImageTensor,
) -> Result<GradientCheck> {
    let x = model.pack(&[anonymized])?;
    let t = model.pack(&[clear])?;
    let (h, w, loss) = (model.height, model.width, model.hyper.loss);
    let cache = model.forward_cached(&x);
    let (_, d_out) = loss_and_grad(loss, &cache.output, &t, h, w);
    let grads = model.backward(&cache, &d_out);

    let mut probe = model.clone();
    let eval = |m: &AutoencoderModel| loss_and_grad(loss, &m.forward_cached(&x).output, &t, h, w).0;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut all_finite = true;
    let count = grads.tensors().len();
    for k in 0..count {
        for i in 0..grads.tensors()[k].len() {
            let original = probe.weights.tensors()[k][i];
            let mut central = |step: f64| {
                probe.weights.tensors_mut()[k][i] = original + step;
                let up = eval(&probe);
                probe.weights.tensors_mut()[k][i] = original - step;
                let down = eval(&probe);
                probe.weights.tensors_mut()[k][i] = original;
                (up - down) / (2.0 * step)
            };
            let mut step = GRADCHECK_STEP;
            let mut numeric = central(step);
            while step / 4.0 >= MIN_STEP {
                let finer = central(step / 4.0);
                let agree = (finer - numeric).abs() <= 1e-3 * finer.abs().max(numeric.abs()).max(1e-6);
                numeric = finer;
                step /= 4.0;
                if agree {
                    break;
                }
            }
            let analytic = grads.tensors()[k][i];
            all_finite &= numeric.is_finite() && analytic.is_finite();
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters_checked: checked,
        all_finite,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ae_init, AeHyperparams, Loss};
    use rand::{Rng, SeedableRng};

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut img = || {
            ImageTensor::from_fn(8, 8, |_, _, _| rng.random::<f64>())
                .unwrap()
                .quantized()
        };
        for seed in 0..4 {
            for (loss, bound) in [(Loss::Mse, 1e-4), (Loss::Ssim, 1e-3)] {
                for with_linear_layer in [true, false] {
                    let hyper = AeHyperparams {
                        features: 2,
                        loss,
                        with_linear_layer,
                        seed,
                        ..AeHyperparams::default()
                    };
                    let model = ae_init(&hyper, 8, 8).unwrap();
                    let check = ae_gradient_check(&model, &img(), &img()).unwrap();
                    assert!(check.all_finite);
                    assert_eq!(check.parameters_checked, model.parameter_count());
                    assert!(
                        check.max_relative_error <= bound,
                        "{loss:?}, linear {with_linear_layer}: {}",
                        check.max_relative_error
                    );
                }
            }
        }
    }
}
