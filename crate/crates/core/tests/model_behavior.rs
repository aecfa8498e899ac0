//! Behavioural contracts of the assembled models: degenerate-configuration
//! identities, loss arithmetic, structural invariants, and checkpoint
//! round-trips.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use socnn_core::models::{
    num_params, socnn_loss, Cnn, CnnConfig, Model, Socnn, SocnnConfig,
};
use socnn_core::ops::Mode;
use socnn_core::tensor::Tensor;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn zero_all_network_params(model: &mut Socnn<f64>) {
    // zero every parameter, then restore the mixing weights
    let mix = model.mix.clone();
    model.visit_params(&mut |p, _| p.fill(0.0));
    model.mix = mix;
}

#[test]
fn window_of_length_one_reduces_to_weighted_regressor() {
    // softmax over a single column is 1, so y = mix * (off(x) + anchor)
    let cfg = SocnnConfig {
        significance_depth: 2,
        significance_filters: 3,
        anchor_cols: Some(vec![0]),
        ..SocnnConfig::new(3, 1, 1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    let windows = Tensor::from_vec(&[4, 3, 1], rand_vec(&mut rng, 12)).unwrap();
    let out = model
        .forward(&windows, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    for b in 0..4 {
        assert_eq!(out.significance.at3(b, 0, 0), 1.0);
        let expect = model.mix.at2(0, 0) * out.offsets.at3(b, 0, 0);
        assert!((out.prediction.at2(b, 0) - expect).abs() < 1e-15);
    }
}

#[test]
fn zeroed_networks_reduce_to_linear_ar_predictor() {
    // With all sub-network parameters at zero the significance is uniform
    // 1/M and the regressors are the anchor values, so the model equals a
    // hand-coded linear autoregression with weights mix / M.
    let m = 12;
    let cfg = SocnnConfig {
        significance_depth: 3,
        significance_filters: 4,
        offset_depth: 1,
        anchor_cols: Some(vec![2]),
        ..SocnnConfig::new(5, 1, m)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    zero_all_network_params(&mut model);

    let batch = 6;
    let windows = Tensor::from_vec(&[batch, 5, m], rand_vec(&mut rng, batch * 5 * m)).unwrap();
    let out = model
        .forward(&windows, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();

    for b in 0..batch {
        // independently coded AR(M) evaluator over the anchor channel
        let mut expect = 0.0;
        for t in 0..m {
            expect += model.mix.at2(0, t) / m as f64 * windows.at3(b, 2, t);
        }
        let got = out.prediction.at2(b, 0);
        assert!(
            (got - expect).abs() < 1e-12,
            "sample {}: {} vs {}",
            b,
            got,
            expect
        );
    }
}

#[test]
fn significance_rows_sum_to_one_at_the_model_boundary() {
    let cfg = SocnnConfig {
        significance_depth: 4,
        significance_filters: 6,
        anchor_cols: Some(vec![0, 1]),
        ..SocnnConfig::new(4, 2, 10)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    let windows = Tensor::from_vec(&[5, 4, 10], rand_vec(&mut rng, 200)).unwrap();
    let out = model
        .forward(&windows, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();
    for b in 0..5 {
        for i in 0..2 {
            let total: f64 = out.significance.row3(b, i).iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "row sum {}", total);
        }
    }
}

#[test]
fn depth_one_offset_stack_is_affine() {
    // superposition: off(x + y) + off(0) == off(x) + off(y)
    let cfg = SocnnConfig {
        significance_depth: 2,
        significance_filters: 3,
        offset_depth: 1,
        anchor_cols: None,
        ..SocnnConfig::new(3, 2, 6)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    let eval = |model: &mut Socnn<f64>, w: &Tensor<f64>| {
        model
            .forward(w, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .offsets
    };
    let x = Tensor::from_vec(&[1, 3, 6], rand_vec(&mut rng, 18)).unwrap();
    let y = Tensor::from_vec(&[1, 3, 6], rand_vec(&mut rng, 18)).unwrap();
    let mut xy = x.clone();
    for (a, &b) in xy.data_mut().iter_mut().zip(y.data()) {
        *a += b;
    }
    let zero = Tensor::zeros(&[1, 3, 6]);

    let off_xy = eval(&mut model, &xy);
    let off_zero = eval(&mut model, &zero);
    let off_x = eval(&mut model, &x);
    let off_y = eval(&mut model, &y);
    for i in 0..off_xy.len() {
        let lhs = off_xy.data()[i] + off_zero.data()[i];
        let rhs = off_x.data()[i] + off_y.data()[i];
        assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }
}

#[test]
fn loss_bundle_matches_hand_arithmetic() {
    // single sample, M = 2, one output: regressors target+1 and target-1
    let t = 0.7f64;
    let pred = Tensor::from_vec(&[1, 1], vec![t]).unwrap();
    let offsets = Tensor::from_vec(&[1, 1, 2], vec![t + 1.0, t - 1.0]).unwrap();
    let targets = Tensor::from_vec(&[1, 1], vec![t]).unwrap();
    for alpha in [0.0, 0.01, 0.1] {
        let bundle = socnn_loss(&pred, &offsets, &targets, alpha).unwrap();
        assert_eq!(bundle.l2, 0.0);
        assert!((bundle.aux - 1.0).abs() < 1e-15);
        assert!((bundle.total - alpha).abs() < 1e-15);
    }
}

#[test]
fn perfect_regressors_give_zero_bundle() {
    let targets = Tensor::from_vec(&[2, 1], vec![0.3, -0.4]).unwrap();
    let pred = targets.clone();
    let offsets = Tensor::from_vec(&[2, 1, 3], vec![0.3; 3].into_iter().chain([-0.4; 3]).collect())
        .unwrap();
    let bundle = socnn_loss(&pred, &offsets, &targets, 0.1).unwrap();
    assert_eq!(bundle.l2, 0.0);
    assert_eq!(bundle.aux, 0.0);
    assert_eq!(bundle.total, 0.0);
}

#[test]
fn total_loss_dominates_l2_for_positive_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let pred = Tensor::from_vec(&[3, 2], rand_vec(&mut rng, 6)).unwrap();
        let offsets = Tensor::from_vec(&[3, 2, 4], rand_vec(&mut rng, 24)).unwrap();
        let targets = Tensor::from_vec(&[3, 2], rand_vec(&mut rng, 6)).unwrap();
        let bundle = socnn_loss(&pred, &offsets, &targets, 0.05).unwrap();
        assert!(bundle.total >= bundle.l2);
        assert!(bundle.l2 >= 0.0 && bundle.aux >= 0.0);
    }
}

#[test]
fn duplicating_the_batch_leaves_eval_losses_unchanged() {
    let cfg = SocnnConfig {
        significance_depth: 3,
        significance_filters: 4,
        anchor_cols: Some(vec![1]),
        alpha: 0.1,
        ..SocnnConfig::new(3, 1, 8)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    let n = 4;
    let w = rand_vec(&mut rng, n * 3 * 8);
    let t = rand_vec(&mut rng, n);
    let windows = Tensor::from_vec(&[n, 3, 8], w.clone()).unwrap();
    let targets = Tensor::from_vec(&[n, 1], t.clone()).unwrap();
    let doubled_w = Tensor::from_vec(&[2 * n, 3, 8], [w.clone(), w].concat()).unwrap();
    let doubled_t = Tensor::from_vec(&[2 * n, 1], [t.clone(), t].concat()).unwrap();

    let mut rng0 = ChaCha8Rng::seed_from_u64(0);
    let single = model
        .loss_forward(&windows, &targets, Mode::Eval, &mut rng0)
        .unwrap();
    let double = model
        .loss_forward(&doubled_w, &doubled_t, Mode::Eval, &mut rng0)
        .unwrap();
    assert!((single.l2 - double.l2).abs() < 1e-12);
    assert!((single.aux - double.aux).abs() < 1e-12);
}

#[test]
fn cnn_with_zero_parameters_predicts_its_top_bias() {
    let cfg = CnnConfig {
        filters: 4,
        ..CnnConfig::new(3, 2, 16)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model = Cnn::new(cfg, &mut rng).unwrap();
    model.visit_params(&mut |p, _| p.fill(0.0));
    // set only the top bias; it is the last parameter tensor
    let mut tensors = 0;
    model.visit_params(&mut |_, _| tensors += 1);
    let mut at = 0;
    model.visit_params(&mut |p, _| {
        at += 1;
        if at == tensors {
            p.fill(2.5);
        }
    });
    let windows = Tensor::from_vec(&[3, 3, 16], rand_vec(&mut rng, 3 * 3 * 16)).unwrap();
    let pred = model.predict(&windows).unwrap();
    assert!(pred.data().iter().all(|&x| x == 2.5));
}

#[test]
fn cnn_window_too_short_for_poolings_is_rejected() {
    let cfg = CnnConfig::new(3, 1, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    assert!(Cnn::<f64>::new(cfg, &mut rng).is_err());
    assert!(Cnn::<f64>::new(CnnConfig::new(3, 1, 8), &mut rng).is_ok());
}

#[test]
fn parameter_counts_are_comparable_across_models() {
    // reported for inspection, not asserted as a hard bound
    let socnn_cfg = SocnnConfig {
        significance_filters: 8,
        ..SocnnConfig::new(18, 1, 60)
    };
    let cnn_cfg = CnnConfig {
        filters: 16,
        ..CnnConfig::new(18, 1, 60)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut socnn = Socnn::<f64>::new(socnn_cfg, &mut rng).unwrap();
    let mut cnn = Cnn::<f64>::new(cnn_cfg, &mut rng).unwrap();
    let (ns, nc) = (num_params(&mut socnn), num_params(&mut cnn));
    println!("params: socnn {} cnn {}", ns, nc);
    assert_eq!(ns, socnn.num_params());
    assert_eq!(nc, cnn.num_params());
    let ratio = ns.max(nc) as f64 / ns.min(nc) as f64;
    assert!(ratio < 10.0, "parameter counts {} vs {}", ns, nc);
}

// --- checkpoints --------------------------------------------------------

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = SocnnConfig {
        significance_depth: 3,
        significance_filters: 4,
        anchor_cols: Some(vec![0]),
        ..SocnnConfig::new(3, 1, 8)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut model = Socnn::new(cfg, &mut rng).unwrap();
    // give the running stats non-default values via one train-mode pass
    let windows = Tensor::from_vec(&[4, 3, 8], rand_vec(&mut rng, 96)).unwrap();
    let targets = Tensor::from_vec(&[4, 1], rand_vec(&mut rng, 4)).unwrap();
    model
        .loss_forward(&windows, &targets, Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let mut loaded = Socnn::<f64>::load(&path).unwrap();

    let mut orig = Vec::new();
    model.visit_state(&mut |name, t| orig.push((name.to_string(), t.clone())));
    let mut back = Vec::new();
    loaded.visit_state(&mut |name, t| back.push((name.to_string(), t.clone())));
    assert_eq!(orig.len(), back.len());
    for ((n1, t1), (n2, t2)) in orig.iter().zip(&back) {
        assert_eq!(n1, n2);
        assert_eq!(t1.data(), t2.data(), "tensor {}", n1);
    }

    // eval-mode forward is bit-identical after the round trip
    let before = model.predict(&windows).unwrap();
    let after = loaded.predict(&windows).unwrap();
    assert_eq!(before.data(), after.data());
}

#[test]
fn checkpoint_with_mismatched_config_is_a_shape_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SocnnConfig {
        significance_depth: 2,
        significance_filters: 4,
        anchor_cols: Some(vec![0]),
        ..SocnnConfig::new(3, 1, 8)
    };
    let mut model = Socnn::<f64>::new(cfg.clone(), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();

    let wrong = SocnnConfig {
        significance_filters: 8,
        ..cfg
    };
    let err = Socnn::<f64>::load_with_config(&path, wrong);
    assert!(err.is_err());
    let msg = format!("{}", err.err().unwrap());
    assert!(msg.contains("shape"), "unexpected message: {}", msg);
}

#[test]
fn generic_scalar_instantiation_runs_in_f32() {
    let cfg = SocnnConfig {
        significance_depth: 2,
        significance_filters: 3,
        anchor_cols: Some(vec![0]),
        ..SocnnConfig::new(2, 1, 4)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = Socnn::<f32>::new(cfg, &mut rng).unwrap();
    let windows =
        socnn_core::tensor::Tensor::<f32>::from_vec(&[2, 2, 4], vec![0.5f32; 16]).unwrap();
    let targets = socnn_core::tensor::Tensor::<f32>::from_vec(&[2, 1], vec![0.1f32; 2]).unwrap();
    let mut rng0 = ChaCha8Rng::seed_from_u64(0);
    let bundle = model
        .loss_forward(&windows, &targets, Mode::Train, &mut rng0)
        .unwrap();
    assert!(bundle.total.is_finite());
    model.loss_backward().unwrap();
}
