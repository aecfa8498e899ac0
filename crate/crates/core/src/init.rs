//! Weight initialization.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Normalized-uniform (Glorot) initialization: uniform on [-L, L] with
/// `L = sqrt(6 / (fan_in + fan_out))`. For convolution kernels
/// `[c_out, c_in, k]` the fans include the kernel extent; a 2-D shape is
/// treated as a dense `[n_out, n_in]` matrix.
pub fn glorot_uniform<S: Scalar>(shape: &[usize], rng: &mut impl Rng) -> Tensor<S> {
    let (fan_in, fan_out) = match shape {
        [n_out, n_in] => (*n_in as f64, *n_out as f64),
        [c_out, c_in, k] => ((c_in * k) as f64, (c_out * k) as f64),
        _ => {
            let n: usize = shape.iter().product();
            (n as f64, n as f64)
        }
    };
    let limit = (6.0 / (fan_in + fan_out)).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = S::c(rng.gen_range(-limit..=limit));
    }
    t
}

/// The bound L used by [`glorot_uniform`] for a given shape.
pub fn glorot_limit(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n_out, n_in] => (*n_in as f64, *n_out as f64),
        [c_out, c_in, k] => ((c_in * k) as f64, (c_out * k) as f64),
        _ => {
            let n: usize = shape.iter().product();
            (n as f64, n as f64)
        }
    };
    (6.0 / (fan_in + fan_out)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn values_stay_within_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let shape = [16usize, 8, 3];
        let limit = glorot_limit(&shape);
        let t: Tensor<f64> = glorot_uniform(&shape, &mut rng);
        assert!(t.data().iter().all(|&x| x.abs() <= limit));
    }

    #[test]
    fn empirical_variance_matches_uniform_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shape = [1000usize, 100];
        let limit = glorot_limit(&shape);
        let t: Tensor<f64> = glorot_uniform(&shape, &mut rng);
        let n = t.len() as f64;
        let mean: f64 = t.data().iter().sum::<f64>() / n;
        let var: f64 = t.data().iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let expect = limit * limit / 3.0;
        assert!(
            (var - expect).abs() / expect < 0.03,
            "var {} vs {}",
            var,
            expect
        );
    }

    #[test]
    fn fixed_seed_reproduces_initialization() {
        let a: Tensor<f64> = glorot_uniform(&[4, 4, 3], &mut ChaCha8Rng::seed_from_u64(9));
        let b: Tensor<f64> = glorot_uniform(&[4, 4, 3], &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a.data(), b.data());
    }
}
