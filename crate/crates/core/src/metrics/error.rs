use crate::error::Result;
use crate::image::ImageTensor;

/// Mean squared error over every pixel and channel.
pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// Mean absolute error over every pixel and channel.
pub fn mae(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn basic_values() {
        let zero = ImageTensor::filled(8, 8, 0.0).unwrap();
        let one = ImageTensor::filled(8, 8, 1.0).unwrap();
        assert_eq!(mse(&zero, &zero).unwrap(), 0.0);
        assert_eq!(mse(&zero, &one).unwrap(), 1.0);
        assert_eq!(mae(&zero, &one).unwrap(), 1.0);
        let other = ImageTensor::filled(12, 8, 0.0).unwrap();
        assert!(mse(&zero, &other).is_err());
    }

    #[test]
    fn agrees_with_scalar_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = ImageTensor::from_fn(16, 12, |_, _, _| rng.random()).unwrap();
        let b = ImageTensor::from_fn(16, 12, |_, _, _| rng.random()).unwrap();
        let (mut se, mut ae, mut n) = (0.0, 0.0, 0.0);
        for y in 0..16 {
            for x in 0..12 {
                for c in 0..3 {
                    let d = a.get(y, x, c) - b.get(y, x, c);
                    se += d * d;
                    ae += d.abs();
                    n += 1.0;
                }
            }
        }
        assert!((mse(&a, &b).unwrap() - se / n).abs() < 1e-12);
        assert!((mae(&a, &b).unwrap() - ae / n).abs() < 1e-12);
    }
}
