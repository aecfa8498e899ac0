//! Training protocol: Adam over shuffled mini-batches with global-norm
//! gradient clipping and the two-stage early-stopping schedule, all
//! deterministic in the config seed.

mod adam;
mod schedule;

pub use adam::{clip_gradients, clip_model_gradients, global_norm, AdamConfig, AdamState};
pub use schedule::{EarlyStopping, ScheduleStep};

pub use crate::init::glorot_uniform as glorot_init;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{restore, snapshot, Model};
use crate::ops::{self, Mode};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::windows::{Split, WindowSet};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip: Option<f64>,
    pub patience: usize,
    pub max_reductions: usize,
    pub reduction_factor: f64,
    /// Safety cap; the schedule normally stops training well before.
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip: Some(1.0),
            patience: 10,
            max_reductions: 2,
            reduction_factor: 10.0,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch size, patience and max epochs must be positive".into(),
            ));
        }
        if self.lr <= 0.0 || self.reduction_factor <= 1.0 {
            return Err(Error::Config(
                "learning rate must be positive, reduction factor > 1".into(),
            ));
        }
        if let Some(c) = self.clip {
            if c <= 0.0 {
                return Err(Error::Config("clip threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Mini-batch access used by the training loop. Positions are indices into
/// a split, so the loop can shuffle without knowing the storage.
pub trait BatchSource<S: Scalar> {
    fn split_len(&self, split: Split) -> usize;
    fn batch_of(&self, split: Split, positions: &[usize]) -> (Tensor<S>, Tensor<S>);
}

impl<S: Scalar> BatchSource<S> for WindowSet<S> {
    fn split_len(&self, split: Split) -> usize {
        self.indices(split).len()
    }

    fn batch_of(&self, split: Split, positions: &[usize]) -> (Tensor<S>, Tensor<S>) {
        let idx = self.indices(split);
        let sel: Vec<usize> = positions.iter().map(|&p| idx[p]).collect();
        self.batch(&sel)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation squared-error loss: the stopping criterion.
    pub val_l2: f64,
    /// Validation total loss (with the auxiliary term), logged alongside.
    pub val_total: f64,
    pub lr: f64,
}

/// Serializable record of one training run. Wall-clock time lives in the
/// CLI run manifest, keeping this file byte-identical across reruns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_l2: f64,
    pub final_test_mse: Option<f64>,
    pub stop_reason: String,
    pub checkpoint: Option<String>,
}

const EVAL_CHUNK: usize = 512;

/// Evaluates the mean loss bundle over a split in eval mode.
pub fn eval_split<S: Scalar>(
    model: &mut dyn Model<S>,
    data: &dyn BatchSource<S>,
    split: Split,
) -> Result<(f64, f64)> {
    let n = data.split_len(split);
    if n == 0 {
        return Err(Error::Empty("empty evaluation split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0); // eval mode draws nothing
    let mut l2 = 0.0;
    let mut total = 0.0;
    let positions: Vec<usize> = (0..n).collect();
    for chunk in positions.chunks(EVAL_CHUNK) {
        let (w, t) = data.batch_of(split, chunk);
        let lb = model.loss_forward(&w, &t, Mode::Eval, &mut rng)?;
        let frac = chunk.len() as f64 / n as f64;
        l2 += lb.l2.f64() * frac;
        total += lb.total.f64() * frac;
    }
    Ok((l2, total))
}

/// Eval-mode mean squared error of the model's predictions over a split.
pub fn predict_mse<S: Scalar>(
    model: &mut dyn Model<S>,
    data: &dyn BatchSource<S>,
    split: Split,
) -> Result<f64> {
    let n = data.split_len(split);
    if n == 0 {
        return Err(Error::Empty("empty split"));
    }
    let positions: Vec<usize> = (0..n).collect();
    let mut acc = 0.0;
    for chunk in positions.chunks(EVAL_CHUNK) {
        let (w, t) = data.batch_of(split, chunk);
        let pred = model.predict(&w)?;
        let m = ops::mse(&pred, &t)?;
        acc += m.f64() * chunk.len() as f64 / n as f64;
    }
    Ok(acc)
}

/// Runs the full protocol: per epoch, shuffle the training samples, iterate
/// mini-batches (forward, loss, backward, clip, Adam), evaluate the
/// validation loss in eval mode, and apply the early-stopping schedule.
/// On termination the best weights are restored and the test MSE reported.
///
/// A non-finite loss or gradient restores the best weights and halves the
/// learning rate once; a recurrence aborts with a diagnostic.
pub fn run_training<S: Scalar>(
    model: &mut dyn Model<S>,
    data: &dyn BatchSource<S>,
    config: &TrainConfig,
) -> Result<RunReport> {
    config.validate()?;
    let n_train = data.split_len(Split::Train);
    if n_train == 0 || data.split_len(Split::Val) == 0 {
        return Err(Error::Empty("training needs non-empty train and val splits"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(
        model,
        AdamConfig {
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
        },
    );
    let mut sched = EarlyStopping::new(config.patience, config.max_reductions);
    let mut lr = config.lr;
    let mut best = snapshot(model);
    let mut best_epoch = 0usize;
    let mut nan_retried = false;
    let mut epochs: Vec<EpochLog> = Vec::new();
    let mut stop_reason = "max_epochs".to_string();

    let mut positions: Vec<usize> = (0..n_train).collect();
    'training: for epoch in 1..=config.max_epochs {
        positions.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in positions.chunks(config.batch_size) {
            let (w, t) = data.batch_of(Split::Train, chunk);
            model.zero_grads();
            let total = match model.loss_forward(&w, &t, Mode::Train, &mut rng) {
                Ok(lb) if lb.total.is_finite() => lb.total.f64(),
                Ok(_) | Err(Error::NonFinite(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            let mut diverged = total.is_nan();
            if !diverged {
                model.loss_backward()?;
                let (pre, _) = clip_model_gradients(model, config.clip);
                if pre.is_finite() {
                    adam.step(model, lr)?;
                } else {
                    diverged = true;
                }
            }
            if diverged {
                if nan_retried {
                    return Err(Error::Diverged(format!(
                        "non-finite loss or gradient recurred at epoch {}",
                        epoch
                    )));
                }
                eprintln!(
                    "train: non-finite loss or gradient at epoch {}; restoring best weights and halving lr",
                    epoch
                );
                restore(model, &best);
                lr *= 0.5;
                nan_retried = true;
                continue 'training;
            }
            train_loss += total * chunk.len() as f64 / n_train as f64;
        }

        let (val_l2, val_total) = eval_split(model, data, Split::Val)?;
        if !val_l2.is_finite() {
            if nan_retried {
                return Err(Error::Diverged(format!(
                    "non-finite validation loss recurred at epoch {}",
                    epoch
                )));
            }
            restore(model, &best);
            lr *= 0.5;
            nan_retried = true;
            continue 'training;
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            val_l2,
            val_total,
            lr,
        });
        match sched.observe(val_l2) {
            ScheduleStep::Improved => {
                best = snapshot(model);
                best_epoch = epoch;
            }
            ScheduleStep::Wait => {}
            ScheduleStep::ReduceLr => {
                lr /= config.reduction_factor;
                restore(model, &best);
            }
            ScheduleStep::Stop => {
                stop_reason = "early_stop".into();
                break 'training;
            }
        }
    }

    restore(model, &best);
    let final_test_mse = if data.split_len(Split::Test) > 0 {
        Some(predict_mse(model, data, Split::Test)?)
    } else {
        None
    };
    Ok(RunReport {
        model: String::new(),
        config: serde_json::to_value(config)?,
        seed: config.seed,
        epochs,
        best_epoch,
        best_val_l2: sched.best().unwrap_or(f64::INFINITY),
        final_test_mse,
        stop_reason,
        checkpoint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{ParamVisitor, StateVisitor};
    use crate::models::LossBundle;
    use std::cell::RefCell;

    #[test]
    fn adam_with_zero_gradients_leaves_parameters_unchanged() {
        let mut model = StubModel::constant_val(vec![1.0; 5]);
        let mut adam = AdamState::new(&mut model, AdamConfig::default());
        let before = model.param.clone();
        for _ in 0..3 {
            model.grad.fill(0.0);
            adam.step(&mut model, 0.1).unwrap();
        }
        assert_eq!(model.param.data(), before.data());
    }

    #[test]
    fn first_adam_update_magnitude_is_lr() {
        for g in [1e-4, 1.0, 1e4] {
            let mut model = StubModel::constant_val(vec![1.0]);
            let mut adam = AdamState::new(&mut model, AdamConfig::default());
            model.grad.fill(g);
            let before = model.param.data()[0];
            adam.step(&mut model, 0.05).unwrap();
            let delta = (model.param.data()[0] - before).abs();
            assert!(
                (delta - 0.05).abs() < 0.05 * 1e-3,
                "g {}: delta {}",
                g,
                delta
            );
        }
    }

    #[test]
    fn adam_descends_a_quadratic_bowl() {
        // f(w) = w^2, gradient 2w, from w = 1 with lr 0.05.
        let mut model = StubModel::constant_val(vec![1.0]);
        model.param.fill(1.0);
        let mut adam = AdamState::new(&mut model, AdamConfig::default());
        for _ in 0..500 {
            let w = model.param.data()[0];
            model.grad.fill(2.0 * w);
            adam.step(&mut model, 0.05).unwrap();
        }
        assert!(model.param.data()[0].abs() < 1e-3);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut model = StubModel::constant_val(vec![1.0]);
        let mut adam = AdamState::new(&mut model, AdamConfig::default());
        model.grad.fill(f64::NAN);
        assert!(matches!(
            adam.step(&mut model, 0.1),
            Err(Error::NonFinite(_))
        ));
    }

    /// Scripted model: one parameter tensor; val losses come from a script,
    /// train batches record the first target they see and bump the
    /// parameter at each epoch start so snapshots identify epochs.
    struct StubModel {
        val_script: Vec<f64>,
        val_calls: RefCell<usize>,
        /// 1-based train-call indices that return a NaN loss.
        nan_at_train_calls: Vec<usize>,
        train_calls: usize,
        param: Tensor<f64>,
        grad: Tensor<f64>,
        epochs_started: usize,
        last_was_eval: bool,
        batch_heads: RefCell<Vec<Vec<f64>>>,
    }

    impl StubModel {
        fn constant_val(script: Vec<f64>) -> Self {
            Self {
                val_script: script,
                val_calls: RefCell::new(0),
                nan_at_train_calls: vec![],
                train_calls: 0,
                param: Tensor::zeros(&[1]),
                grad: Tensor::zeros(&[1]),
                epochs_started: 0,
                last_was_eval: true,
                batch_heads: RefCell::new(vec![]),
            }
        }
    }

    impl Model<f64> for StubModel {
        fn loss_forward(
            &mut self,
            _w: &Tensor<f64>,
            t: &Tensor<f64>,
            mode: Mode,
            _rng: &mut ChaCha8Rng,
        ) -> Result<LossBundle<f64>> {
            match mode {
                Mode::Train => {
                    self.train_calls += 1;
                    if self.last_was_eval {
                        self.epochs_started += 1;
                        self.param.fill(self.epochs_started as f64);
                        self.batch_heads.borrow_mut().push(vec![]);
                        self.last_was_eval = false;
                    }
                    self.batch_heads
                        .borrow_mut()
                        .last_mut()
                        .unwrap()
                        .push(t.data()[0]);
                    let total = if self.nan_at_train_calls.contains(&self.train_calls) {
                        f64::NAN
                    } else {
                        1.0
                    };
                    Ok(LossBundle {
                        l2: total,
                        aux: 0.0,
                        total,
                    })
                }
                Mode::Eval => {
                    self.last_was_eval = true;
                    let mut calls = self.val_calls.borrow_mut();
                    let v = *self
                        .val_script
                        .get(*calls)
                        .unwrap_or(self.val_script.last().unwrap());
                    *calls += 1;
                    Ok(LossBundle {
                        l2: v,
                        aux: 0.0,
                        total: v,
                    })
                }
            }
        }

        fn loss_backward(&mut self) -> Result<()> {
            Ok(())
        }

        fn predict(&mut self, w: &Tensor<f64>) -> Result<Tensor<f64>> {
            Ok(Tensor::zeros(&[w.dim(0), 1]))
        }

        fn zero_grads(&mut self) {
            self.grad.fill(0.0);
        }

        fn visit_params(&mut self, f: &mut ParamVisitor<'_, f64>) {
            f(&mut self.param, &mut self.grad);
        }

        fn visit_state(&mut self, f: &mut StateVisitor<'_, f64>) {
            f("param", &mut self.param);
        }
    }

    /// Tiny dataset: targets enumerate the samples so batch order is
    /// observable through the stub.
    struct StubData {
        n_train: usize,
    }

    impl BatchSource<f64> for StubData {
        fn split_len(&self, split: Split) -> usize {
            match split {
                Split::Train => self.n_train,
                Split::Val => 4,
                Split::Test => 0,
            }
        }

        fn batch_of(&self, _split: Split, positions: &[usize]) -> (Tensor<f64>, Tensor<f64>) {
            let w = Tensor::zeros(&[positions.len(), 1, 1]);
            let t = Tensor::from_vec(
                &[positions.len(), 1],
                positions.iter().map(|&p| p as f64).collect(),
            )
            .unwrap();
            (w, t)
        }
    }

    fn quick_config(max_epochs: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_trace_reduces_at_epoch_twelve() {
        let mut script = vec![5.0, 4.0];
        script.extend(std::iter::repeat(4.0).take(40));
        let mut model = StubModel::constant_val(script);
        let report = run_training(&mut model, &StubData { n_train: 32 }, &quick_config(60)).unwrap();
        // lr drops for epoch 13 and again at 22; stop after epoch 32
        assert_eq!(report.epochs[11].lr, 1e-3);
        assert!((report.epochs[12].lr - 1e-4).abs() < 1e-12);
        assert!((report.epochs[21].lr - 1e-4).abs() < 1e-12);
        assert!((report.epochs[22].lr - 1e-5).abs() < 1e-12);
        assert_eq!(report.epochs.len(), 32);
        assert_eq!(report.stop_reason, "early_stop");
        assert_eq!(report.best_epoch, 2);
    }

    #[test]
    fn weights_restore_to_the_best_epoch_bit_exactly() {
        let mut script = vec![5.0, 4.0];
        script.extend(std::iter::repeat(4.0).take(40));
        let mut model = StubModel::constant_val(script);
        run_training(&mut model, &StubData { n_train: 16 }, &quick_config(60)).unwrap();
        // the stub wrote the epoch number into its parameter; best was epoch 2
        assert_eq!(model.param.data()[0], 2.0);
    }

    #[test]
    fn best_val_is_the_minimum_of_the_log() {
        let script = vec![5.0, 3.0, 4.0, 2.5, 6.0, 2.6, 2.6, 2.6];
        let mut model = StubModel::constant_val(script);
        let mut cfg = quick_config(8);
        cfg.patience = 20;
        let report = run_training(&mut model, &StubData { n_train: 16 }, &cfg).unwrap();
        let min = report
            .epochs
            .iter()
            .map(|e| e.val_l2)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_l2, min);
        assert_eq!(report.best_epoch, 4);
    }

    #[test]
    fn shuffle_reorders_batches_between_epochs() {
        let mut model = StubModel::constant_val(vec![5.0, 4.0, 3.0]);
        run_training(&mut model, &StubData { n_train: 64 }, &quick_config(3)).unwrap();
        let heads = model.batch_heads.borrow();
        assert!(heads.len() >= 2);
        assert_ne!(heads[0], heads[1]);
    }

    #[test]
    fn nan_loss_restores_halves_lr_then_aborts_on_recurrence() {
        // One batch per epoch: NaN at epochs 2 and 3; the first occurrence
        // recovers, the second aborts.
        let mut model = StubModel::constant_val(vec![5.0; 10]);
        model.nan_at_train_calls = vec![2, 3];
        let err = run_training(&mut model, &StubData { n_train: 8 }, &quick_config(10));
        assert!(matches!(err, Err(Error::Diverged(_))));

        let mut model = StubModel::constant_val(vec![5.0, 4.0, 3.0, 2.0, 1.9, 1.8]);
        model.nan_at_train_calls = vec![2];
        let report =
            run_training(&mut model, &StubData { n_train: 8 }, &quick_config(5)).unwrap();
        // epoch 2 aborted: one log entry fewer, and lr halved afterwards
        assert_eq!(report.epochs.len(), 4);
        assert!((report.epochs.last().unwrap().lr - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let mut model = StubModel::constant_val(vec![1.0]);
        let data = StubData { n_train: 0 };
        assert!(matches!(
            run_training(&mut model, &data, &quick_config(1)),
            Err(Error::Empty(_))
        ));
    }
}
