//! Property tests over the layer engine's structural invariants.

use proptest::prelude::*;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use socnn_core::ops::{self, Mode};
use socnn_core::tensor::Tensor;
use socnn_core::train::clip_gradients;

fn finite_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0..50.0f64, n)
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        data in finite_vec(2 * 3 * 7),
        shift in -10.0..10.0f64,
    ) {
        let x = Tensor::from_vec(&[2, 3, 7], data.clone()).unwrap();
        let y = ops::row_softmax_forward(&x).unwrap();
        for b in 0..2 {
            for r in 0..3 {
                let total: f64 = y.row3(b, r).iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
        let shifted = Tensor::from_vec(&[2, 3, 7], data.iter().map(|v| v + shift).collect())
            .unwrap();
        let y2 = ops::row_softmax_forward(&shifted).unwrap();
        for (a, b) in y.data().iter().zip(y2.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// A length-1 kernel makes the convolution an independent per-timestep
    /// affine map, so it must match the dense op applied at each timestep.
    #[test]
    fn conv_k1_equals_timestep_dense(
        input in finite_vec(2 * 3 * 5),
        weight in finite_vec(4 * 3),
        bias in finite_vec(4),
    ) {
        let x = Tensor::from_vec(&[2, 3, 5], input.clone()).unwrap();
        let kernel = Tensor::from_vec(&[4, 3, 1], weight.clone()).unwrap();
        let b = Tensor::from_vec(&[4], bias.clone()).unwrap();
        let conv = ops::conv1d_forward(&x, &kernel, &b).unwrap();

        let w = Tensor::from_vec(&[4, 3], weight).unwrap();
        for t in 0..5 {
            let step: Vec<f64> = (0..2)
                .flat_map(|bb| (0..3).map(move |c| (bb, c)))
                .map(|(bb, c)| x.at3(bb, c, t))
                .collect();
            let step = Tensor::from_vec(&[2, 3], step).unwrap();
            let dense = ops::dense_forward(&step, &w, &b).unwrap();
            for bb in 0..2 {
                for o in 0..4 {
                    prop_assert!((conv.at3(bb, o, t) - dense.at2(bb, o)).abs() < 1e-9);
                }
            }
        }
    }

    /// Ops are pure: the same inputs and seed give bit-identical outputs.
    #[test]
    fn dropout_is_deterministic_per_seed(data in finite_vec(32), seed in any::<u64>()) {
        let x = Tensor::from_vec(&[32], data).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ops::dropout_forward(&x, 0.3, Mode::Train, &mut rng).unwrap().0
        };
        let a = run(seed);
        let b = run(seed);
        prop_assert_eq!(a.data(), b.data());
    }

    /// Post-clip norm never exceeds the threshold (plus rounding).
    #[test]
    fn clipped_norm_is_bounded(data in finite_vec(24), threshold in 0.01..10.0f64) {
        let mut t = Tensor::from_vec(&[24], data).unwrap();
        let pre = clip_gradients(&mut [&mut t], threshold);
        let post: f64 = t.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(post <= pre.min(threshold) + 1e-12);
    }

    /// Leaky ReLU forward matches its definition pointwise.
    #[test]
    fn leaky_relu_pointwise(data in finite_vec(16), leak in 0.0..0.99f64) {
        let x = Tensor::from_vec(&[16], data.clone()).unwrap();
        let y = ops::leaky_relu_forward(&x, leak).unwrap();
        for (&xi, &yi) in data.iter().zip(y.data()) {
            let expect = if xi >= 0.0 { xi } else { leak * xi };
            prop_assert_eq!(yi, expect);
        }
    }
}
