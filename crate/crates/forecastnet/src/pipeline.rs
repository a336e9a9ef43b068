//! End-to-end orchestration: scale, window, split, train, evaluate.
//!
//! The protocol is: chronological 90/10 train/test split of the raw
//! series; min-max scaler fitted on the training segment only; stride-1
//! windows of length 3 tau; training (optionally with a learning-rate
//! grid search) on the scaled training windows; evaluation on the test
//! windows with forecasts mapped back to original units.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_mlp, seasonal_naive};
use crate::data::{split, window, ScaleParams, Series, WindowSample};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Model, ModelSpec, PredictMode, Variant};
use crate::train::{lr_search, train, LrOutcome, TrainConfig, TrainHistory};

/// Trainable model families addressable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Fn,
    Cfn,
    Fn2,
    Cfn2,
    Mlp,
}

impl ModelChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fn" => Ok(ModelChoice::Fn),
            "cfn" => Ok(ModelChoice::Cfn),
            "fn2" => Ok(ModelChoice::Fn2),
            "cfn2" => Ok(ModelChoice::Cfn2),
            "mlp" => Ok(ModelChoice::Mlp),
            other => Err(Error::Argument(format!(
                "unknown model '{}', expected fn|cfn|fn2|cfn2|mlp",
                other
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Fn => "fn",
            ModelChoice::Cfn => "cfn",
            ModelChoice::Fn2 => "fn2",
            ModelChoice::Cfn2 => "cfn2",
            ModelChoice::Mlp => "mlp",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ModelChoice::Fn => Some(Variant::Fn),
            ModelChoice::Cfn => Some(Variant::Cfn),
            ModelChoice::Fn2 => Some(Variant::Fn2),
            ModelChoice::Cfn2 => Some(Variant::Cfn2),
            ModelChoice::Mlp => None,
        }
    }

    pub fn build(self, tau: usize, hidden: usize, seed: u64) -> Result<Model> {
        match self.variant() {
            Some(v) => Model::build(&ModelSpec::new(v, tau).with_hidden(hidden).with_seed(seed)),
            None => build_mlp(tau, seed),
        }
    }
}

/// Fixed learning rate or a grid search per the training protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrChoice {
    Fixed(f64),
    Search,
}

/// Everything produced by one training pipeline run.
pub struct TrainedPipeline {
    pub model: Model,
    pub history: TrainHistory,
    pub lr: f64,
    pub scaler: ScaleParams,
    pub train_series: Series,
    pub test_series: Series,
    pub lr_outcomes: Vec<LrOutcome>,
}

/// Splits, scales, windows, and trains one model on a raw series.
pub fn train_on_series(
    series: &Series,
    choice: ModelChoice,
    hidden: usize,
    cfg: &TrainConfig,
    lr: LrChoice,
) -> Result<TrainedPipeline> {
    let (train_series, test_series) = split(series, 0.10)?;
    let scaler = ScaleParams::fit(&train_series.values)?;
    let scaled_train = train_series.with_values(scaler.apply_slice(&train_series.values));
    let samples = window(&scaled_train)?;

    let tau = series.tau;
    match lr {
        LrChoice::Fixed(rate) => {
            let mut model = choice.build(tau, hidden, cfg.seed)?;
            let history = train(&mut model, &samples, cfg, rate)?;
            Ok(TrainedPipeline {
                model,
                history,
                lr: rate,
                scaler,
                train_series,
                test_series,
                lr_outcomes: Vec::new(),
            })
        }
        LrChoice::Search => {
            let result = lr_search(|seed| choice.build(tau, hidden, seed), &samples, cfg)?;
            Ok(TrainedPipeline {
                model: result.model,
                history: result.history,
                lr: result.best_lr,
                scaler,
                train_series,
                test_series,
                lr_outcomes: result.outcomes,
            })
        }
    }
}

/// One evaluated forecast in original units.
#[derive(Debug, Clone)]
pub struct EvaluatedForecast {
    /// Offset of the window within the test segment.
    pub start: usize,
    pub forecast: Vec<f64>,
    pub target: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

/// Runs the model over every test window, returning forecasts in
/// original units.
pub fn forecast_test_windows(
    model: &Model,
    scaler: &ScaleParams,
    test_series: &Series,
    mode: PredictMode,
    seed: u64,
) -> Result<Vec<EvaluatedForecast>> {
    let windows = window(test_series)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        out.push(evaluate_window(model, scaler, w, i, mode, &mut rng)?);
    }
    Ok(out)
}

fn evaluate_window(
    model: &Model,
    scaler: &ScaleParams,
    w: &WindowSample,
    start: usize,
    mode: PredictMode,
    rng: &mut ChaCha8Rng,
) -> Result<EvaluatedForecast> {
    let scaled_input = crate::tensor::Tensor::from_vec(scaler.apply_slice(w.input.data()));
    let result = model.forward_predict(&scaled_input, mode, rng)?;
    Ok(EvaluatedForecast {
        start,
        forecast: scaler.invert_slice(result.point.data()),
        target: w.target.data().to_vec(),
        sigma: result
            .sigma
            .map(|s| s.data().iter().map(|v| v * scaler.span()).collect()),
    })
}

/// Test-set accuracy of a model on an explicit split; MASE uses the
/// training series as the in-sample reference, all in original units.
pub fn evaluate_on_split(
    model: &Model,
    scaler: &ScaleParams,
    train_series: &Series,
    test_series: &Series,
    model_name: &str,
    mode: PredictMode,
    seed: u64,
) -> Result<MetricsReport> {
    let forecasts = forecast_test_windows(model, scaler, test_series, mode, seed)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = forecasts
        .into_iter()
        .map(|f| (f.forecast, f.target))
        .collect();
    MetricsReport::from_forecasts(model_name, &test_series.name, &pairs, &train_series.values)
}

/// [`evaluate_on_split`] over a training pipeline's own split.
pub fn evaluate_on_test(
    pipeline: &TrainedPipeline,
    model_name: &str,
    mode: PredictMode,
    seed: u64,
) -> Result<MetricsReport> {
    evaluate_on_split(
        &pipeline.model,
        &pipeline.scaler,
        &pipeline.train_series,
        &pipeline.test_series,
        model_name,
        mode,
        seed,
    )
}

/// Test-set accuracy of the seasonal-naive reference on the same split.
pub fn evaluate_seasonal_naive(train_series: &Series, test_series: &Series) -> Result<MetricsReport> {
    let windows = window(test_series)?;
    let tau = test_series.tau;
    let pairs: Result<Vec<(Vec<f64>, Vec<f64>)>> = windows
        .iter()
        .map(|w| Ok((seasonal_naive(w.input.data(), tau)?, w.target.data().to_vec())))
        .collect();
    MetricsReport::from_forecasts("naive", &test_series.name, &pairs?, &train_series.values)
}
