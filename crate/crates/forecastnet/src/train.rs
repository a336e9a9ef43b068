//! ADAM training loop with seeded shuffling, early stopping, and
//! learning-rate grid search.
//!
//! Training is fully deterministic for a fixed (model seed, data,
//! config): mini-batch order comes from an epoch-indexed seeded
//! generator and every reduction is sequential. Wall-clock epoch times
//! are recorded but never feed back into the computation.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;

/// Optimization hyperparameters. The learning-rate grid spans
/// 10^-2 .. 10^-6; ADAM moment coefficients are the standard defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a `min_delta` validation improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_grid: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
            max_epochs: 1000,
            batch_size: 32,
            patience: 5,
            min_delta: 1e-5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|&lr| lr <= 0.0) {
            return Err(Error::Argument("lr grid must be non-empty and positive".into()));
        }
        if self.patience < 1 {
            return Err(Error::Argument("patience must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-parameter first/second moment estimates and the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl AdamState {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Self {
        AdamState {
            m: model.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: model.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected ADAM update from the accumulated gradients; the
/// gradients are zeroed afterwards.
pub fn adam_step(state: &mut AdamState, model: &mut Model, lr: f64) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::Argument(format!("learning rate must be > 0, got {}", lr)));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for p in model.params_mut().iter_mut() {
        let idx = p.id.0;
        let m = state.m[idx].data_mut();
        let v = state.v[idx].data_mut();
        let theta = p.value.data_mut();
        let grad = p.grad.data_mut();
        for i in 0..theta.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
            grad[i] = 0.0;
        }
    }
    Ok(())
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean |gradient| of the first hidden layer's weights, averaged
    /// over the epoch's optimizer steps.
    pub grad_first: f64,
    /// Same for the last hidden layer.
    pub grad_last: f64,
    pub seconds: f64,
}

/// Per-epoch log of one training run.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub diverged: bool,
}

impl TrainHistory {
    fn new() -> Self {
        TrainHistory {
            epochs: Vec::new(),
            best_epoch: None,
            best_val_loss: f64::INFINITY,
            diverged: false,
        }
    }

    /// CSV export: epoch, train_loss, val_loss, grad_first, grad_last, seconds.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "epoch,train_loss,val_loss,grad_first,grad_last,seconds")?;
        for e in &self.epochs {
            writeln!(
                file,
                "{},{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.grad_first, e.grad_last, e.seconds
            )?;
        }
        file.flush()?;
        Ok(())
    }
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over the combined value; decorrelates per-epoch shuffles.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mean_abs_grad(model: &Model, id: crate::graph::ParamId) -> f64 {
    model.params().get(id).grad.mean_abs()
}

/// Mean absolute gradient of tagged layers. Recognized tags are
/// `first_hidden` and `last_hidden`; anything else is an argument error.
pub fn grad_log(model: &Model, tags: &[&str]) -> Result<Vec<f64>> {
    tags.iter()
        .map(|tag| match *tag {
            "first_hidden" => Ok(mean_abs_grad(model, model.first_hidden_weight())),
            "last_hidden" => Ok(mean_abs_grad(model, model.last_hidden_weight())),
            other => Err(Error::Argument(format!("unknown layer tag '{}'", other))),
        })
        .collect()
}

/// Trains in place at one learning rate.
///
/// The chronologically last 10% of windows are held out for validation;
/// each epoch shuffles the training windows with an epoch-indexed seeded
/// generator and applies one ADAM step per mini-batch. Stops when the
/// validation loss has not improved by `min_delta` for `patience`
/// consecutive epochs and restores the best-validation parameters.
pub fn train(model: &mut Model, samples: &[WindowSample], cfg: &TrainConfig, lr: f64) -> Result<TrainHistory> {
    cfg.validate()?;
    if lr <= 0.0 {
        return Err(Error::Argument(format!("learning rate must be > 0, got {}", lr)));
    }
    if samples.len() < 2 {
        return Err(Error::Argument(format!(
            "training needs at least 2 window samples, got {}",
            samples.len()
        )));
    }

    let n_val = ((samples.len() as f64) * 0.10).round().max(1.0) as usize;
    let n_train = samples.len() - n_val;
    let (train_set, val_set) = samples.split_at(n_train);

    let mut history = TrainHistory::new();
    if cfg.max_epochs == 0 {
        return Ok(history);
    }

    let mut adam = AdamState::new(model, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_params: Option<Vec<Tensor>> = None;
    let mut stall_reference = f64::INFINITY;
    let mut stalled_epochs = 0usize;

    model.params_mut().zero_grads();
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut grad_first_sum = 0.0;
        let mut grad_last_sum = 0.0;
        let mut steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            for &idx in batch {
                let sample = &train_set[idx];
                let mut pass = model.forward_train(&sample.input, &sample.target)?;
                loss_sum += pass.loss_value;
                let grads = pass.graph.backward(pass.loss)?;
                pass.graph.accumulate_param_grads(&grads, model.params_mut());
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f64);
            grad_first_sum += mean_abs_grad(model, model.first_hidden_weight());
            grad_last_sum += mean_abs_grad(model, model.last_hidden_weight());
            steps += 1;
            adam_step(&mut adam, model, lr)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let mut val_sum = 0.0;
        for sample in val_set {
            val_sum += model.forward_train(&sample.input, &sample.target)?.loss_value;
        }
        let val_loss = val_sum / val_set.len() as f64;

        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            grad_first: grad_first_sum / steps as f64,
            grad_last: grad_last_sum / steps as f64,
            seconds: started.elapsed().as_secs_f64(),
        });

        if !train_loss.is_finite() || !val_loss.is_finite() {
            history.diverged = true;
            break;
        }

        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = Some(epoch);
            best_params = Some(model.params().iter().map(|p| p.value.clone()).collect());
        }
        // Early stopping counts only improvements of at least min_delta.
        if val_loss < stall_reference - cfg.min_delta {
            stall_reference = val_loss;
            stalled_epochs = 0;
        } else {
            stalled_epochs += 1;
            if stalled_epochs >= cfg.patience {
                break;
            }
        }
    }

    if let Some(best) = best_params {
        for (p, value) in model.params_mut().iter_mut().zip(best) {
            p.value = value;
        }
    }
    model.params_mut().zero_grads();
    Ok(history)
}

/// Outcome of one grid entry during the learning-rate search.
#[derive(Debug, Clone)]
pub struct LrOutcome {
    pub lr: f64,
    pub val_loss: f64,
    pub diverged: bool,
}

/// Result of the learning-rate search: the winning model and its run.
pub struct LrSearchResult {
    pub best_lr: f64,
    pub model: Model,
    pub history: TrainHistory,
    pub outcomes: Vec<LrOutcome>,
}

/// Trains one freshly initialized model per grid learning rate and keeps
/// the run with the lowest validation loss; ties break toward the larger
/// learning rate. `build` receives a seed derived from the config seed
/// and the grid index.
pub fn lr_search(
    build: impl Fn(u64) -> Result<Model>,
    samples: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<LrSearchResult> {
    cfg.validate()?;
    let mut best: Option<LrSearchResult> = None;
    let mut outcomes = Vec::with_capacity(cfg.lr_grid.len());
    for (i, &lr) in cfg.lr_grid.iter().enumerate() {
        let mut model = build(mix_seed(cfg.seed, 0x9000 + i as u64))?;
        let history = train(&mut model, samples, cfg, lr)?;
        let val_loss = if history.diverged {
            f64::INFINITY
        } else {
            history.best_val_loss
        };
        outcomes.push(LrOutcome {
            lr,
            val_loss,
            diverged: history.diverged,
        });
        let better = match &best {
            None => val_loss.is_finite(),
            // Ties break toward the larger learning rate.
            Some(b) => {
                val_loss.is_finite()
                    && (val_loss < b.history.best_val_loss
                        || (val_loss == b.history.best_val_loss && lr > b.best_lr))
            }
        };
        if better {
            best = Some(LrSearchResult {
                best_lr: lr,
                model,
                history,
                outcomes: Vec::new(),
            });
        }
    }
    match best {
        Some(mut b) => {
            b.outcomes = outcomes;
            Ok(b)
        }
        None => Err(Error::Search(format!(
            "every learning rate diverged: {:?}",
            outcomes
                .iter()
                .map(|o| format!("lr {} -> {}", o.lr, if o.diverged { "diverged" } else { "nan" }))
                .collect::<Vec<_>>()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, Variant};
    use crate::synth::gen_baseline;

    fn tiny_samples(n: usize, tau: usize) -> Vec<WindowSample> {
        let mut series = gen_baseline(3 * tau + n - 1);
        series.tau = tau;
        crate::data::window(&series).unwrap()
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut m = Model::build(&ModelSpec::new(Variant::Fn2, 2).with_seed(1)).unwrap();
        let before: Vec<f64> = m.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(&m, &cfg);
        adam_step(&mut adam, &mut m, 0.1).unwrap();
        let after: Vec<f64> = m.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // Scalar parameter, unit gradient: bias-corrected m/sqrt(v) = 1,
        // so the first step moves by lr / (1 + eps) ~ lr.
        let mut m = Model::build(&ModelSpec::new(Variant::Fn2, 2).with_seed(1)).unwrap();
        for p in m.params_mut().iter_mut() {
            p.value.fill_zero();
            for g in p.grad.data_mut() {
                *g = 1.0;
            }
        }
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(&m, &cfg);
        adam_step(&mut adam, &mut m, 0.1).unwrap();
        for p in m.params().iter() {
            for &v in p.value.data() {
                assert!((v + 0.1).abs() < 1e-7, "first step {} vs -0.1", v);
            }
            assert!(p.grad.data().iter().all(|&g| g == 0.0), "grads must be zeroed");
        }
    }

    #[test]
    fn adam_rejects_nonpositive_lr() {
        let mut m = Model::build(&ModelSpec::new(Variant::Fn2, 2)).unwrap();
        let cfg = TrainConfig::default();
        let mut adam = AdamState::new(&m, &cfg);
        assert!(adam_step(&mut adam, &mut m, 0.0).is_err());
        assert!(adam_step(&mut adam, &mut m, -1.0).is_err());
    }

    #[test]
    fn train_zero_epochs_returns_initial_model() {
        let spec = ModelSpec::new(Variant::Fn2, 4).with_seed(3);
        let mut m = Model::build(&spec).unwrap();
        let reference = Model::build(&spec).unwrap();
        let samples = tiny_samples(20, 4);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let history = train(&mut m, &samples, &cfg, 1e-3).unwrap();
        assert!(history.epochs.is_empty());
        let a: Vec<f64> = m.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        let b: Vec<f64> = reference.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn train_requires_two_samples() {
        let mut m = Model::build(&ModelSpec::new(Variant::Fn2, 4)).unwrap();
        let samples = tiny_samples(1, 4);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut m, &samples, &cfg, 1e-3),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn train_is_deterministic() {
        let run = || {
            let spec = ModelSpec::new(Variant::Fn2, 4).with_seed(7);
            let mut m = Model::build(&spec).unwrap();
            let samples = tiny_samples(60, 4);
            let cfg = TrainConfig {
                max_epochs: 5,
                seed: 11,
                ..TrainConfig::default()
            };
            let history = train(&mut m, &samples, &cfg, 1e-3).unwrap();
            let params: Vec<f64> = m.params().iter().flat_map(|p| p.value.data().to_vec()).collect();
            let losses: Vec<(f64, f64)> = history.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect();
            (params, losses)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2, "parameter trajectories must be bit-identical");
        assert_eq!(l1, l2);
    }

    #[test]
    fn returned_model_has_best_validation_loss() {
        let spec = ModelSpec::new(Variant::Fn2, 4).with_seed(5);
        let mut m = Model::build(&spec).unwrap();
        let samples = tiny_samples(80, 4);
        let cfg = TrainConfig {
            max_epochs: 30,
            seed: 2,
            ..TrainConfig::default()
        };
        let history = train(&mut m, &samples, &cfg, 1e-2).unwrap();
        let min_val = history
            .epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(history.best_val_loss, min_val);

        // Re-evaluating the returned parameters reproduces the best loss.
        let n_val = ((samples.len() as f64) * 0.10).round().max(1.0) as usize;
        let val = &samples[samples.len() - n_val..];
        let reval: f64 = val
            .iter()
            .map(|s| m.forward_train(&s.input, &s.target).unwrap().loss_value)
            .sum::<f64>()
            / val.len() as f64;
        assert!((reval - history.best_val_loss).abs() < 1e-12);
    }

    #[test]
    fn best_so_far_validation_is_monotone() {
        let spec = ModelSpec::new(Variant::Fn2, 4).with_seed(9);
        let mut m = Model::build(&spec).unwrap();
        let samples = tiny_samples(60, 4);
        let cfg = TrainConfig {
            max_epochs: 15,
            ..TrainConfig::default()
        };
        let history = train(&mut m, &samples, &cfg, 1e-3).unwrap();
        let mut best = f64::INFINITY;
        for e in &history.epochs {
            let new_best = best.min(e.val_loss);
            assert!(new_best <= best);
            best = new_best;
        }
    }

    #[test]
    fn grad_log_cases() {
        let mut m = Model::build(&ModelSpec::new(Variant::Fn2, 3).with_seed(1)).unwrap();
        // Zero grads -> 0.
        assert_eq!(grad_log(&m, &["first_hidden", "last_hidden"]).unwrap(), vec![0.0, 0.0]);
        // Hand value: fill first-layer grad with -2 -> mean |g| = 2.
        let first = m.first_hidden_weight();
        for g in m.params_mut().get_mut(first).grad.data_mut() {
            *g = -2.0;
        }
        assert_eq!(grad_log(&m, &["first_hidden"]).unwrap(), vec![2.0]);
        // Hand mean: four nonzero entries over the whole tensor.
        m.params_mut().get_mut(first).grad.fill_zero();
        let grads = [1.0, -3.0, 0.5, 2.5];
        for (g, v) in m
            .params_mut()
            .get_mut(first)
            .grad
            .data_mut()
            .iter_mut()
            .zip(grads)
        {
            *g = v;
        }
        let got = grad_log(&m, &["first_hidden"]).unwrap()[0];
        // Only the first four entries are set; the rest are zero.
        let n = m.params().get(first).grad.len() as f64;
        assert!((got - (1.0 + 3.0 + 0.5 + 2.5) / n).abs() < 1e-12);
        // Unknown tag.
        assert!(matches!(grad_log(&m, &["middle"]), Err(Error::Argument(_))));
    }

    #[test]
    fn lr_search_single_grid_value() {
        let samples = tiny_samples(40, 4);
        let cfg = TrainConfig {
            lr_grid: vec![1e-3],
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let result = lr_search(
            |seed| Model::build(&ModelSpec::new(Variant::Fn2, 4).with_seed(seed)),
            &samples,
            &cfg,
        )
        .unwrap();
        assert_eq!(result.best_lr, 1e-3);
        assert_eq!(result.outcomes.len(), 1);
    }

    #[test]
    fn lr_search_degenerate_rate_cannot_win() {
        let samples = tiny_samples(120, 4);
        let cfg = TrainConfig {
            lr_grid: vec![1e-3, 1e-30],
            max_epochs: 20,
            ..TrainConfig::default()
        };
        let result = lr_search(
            |seed| Model::build(&ModelSpec::new(Variant::Fn2, 4).with_seed(seed)),
            &samples,
            &cfg,
        )
        .unwrap();
        assert_eq!(result.best_lr, 1e-3, "a vanishing learning rate must not win");
    }

    #[test]
    fn lr_search_deterministic_winner() {
        let samples = tiny_samples(60, 4);
        let cfg = TrainConfig {
            lr_grid: vec![1e-2, 1e-3],
            max_epochs: 5,
            seed: 21,
            ..TrainConfig::default()
        };
        let run = || {
            lr_search(
                |seed| Model::build(&ModelSpec::new(Variant::Fn2, 4).with_seed(seed)),
                &samples,
                &cfg,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.best_lr, b.best_lr);
        assert_eq!(a.history.best_val_loss, b.history.best_val_loss);
    }

    #[test]
    fn history_csv_round_trip_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let mut history = TrainHistory::new();
        history.epochs.push(EpochStats {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.6,
            grad_first: 0.01,
            grad_last: 0.02,
            seconds: 0.1,
        });
        history.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,train_loss,val_loss,grad_first,grad_last,seconds"
        );
        assert!(lines.next().unwrap().starts_with("1,0.5,0.6,"));
    }
}
