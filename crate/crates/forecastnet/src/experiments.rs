//! Scripted experiment runners, each writing CSV/JSON artifacts plus a
//! `config.json` with the exact resolved configuration.
//!
//! All runs are deterministic for a fixed seed; wall-clock timings are
//! confined to clearly labeled columns.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{split, window, ScaleParams, Series};
use crate::error::{Error, Result};
use crate::graph::Activation;
use crate::cells::InitScheme;
use crate::metrics::borda;
use crate::model::{CellPlan, HeadPlan, Model, NetPlan, PredictMode, Topology};
use crate::pipeline::{
    evaluate_on_test, evaluate_seasonal_naive, forecast_test_windows, train_on_series, LrChoice,
    ModelChoice,
};
use crate::synth::{gen_baseline, gen_modulated};
use crate::train::{train, TrainConfig, TrainHistory};

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_config<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Vanishing-gradient comparison
// ---------------------------------------------------------------------------

/// A 20-hidden-layer sigmoid MLP against an interleaved model of the
/// same depth (one sigmoid hidden layer per cell, a linear output after
/// each cell). Both read 40 inputs and emit 20 outputs; both use Xavier
/// normal initialization and train for a fixed number of epochs at a
/// small learning rate while the first and last hidden layers' mean
/// absolute gradients are logged.
#[derive(Debug, Clone, Serialize)]
pub struct VanishingGradientConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: usize,
    pub hidden: usize,
    pub depth: usize,
    pub series_len: usize,
    pub batch_size: usize,
}

impl Default for VanishingGradientConfig {
    fn default() -> Self {
        VanishingGradientConfig {
            seed: 0,
            epochs: 10,
            learning_rate: 1e-4,
            tau: 20,
            hidden: 24,
            depth: 20,
            series_len: 4320,
            batch_size: 32,
        }
    }
}

#[derive(Debug)]
pub struct VanishingGradientReport {
    pub deep_mlp: TrainHistory,
    pub interleaved: TrainHistory,
}

pub fn run_vanishing_gradient(
    out_dir: &Path,
    cfg: &VanishingGradientConfig,
) -> Result<VanishingGradientReport> {
    ensure_dir(out_dir)?;
    write_config(out_dir, cfg)?;

    let series = gen_baseline(cfg.series_len);
    let (train_series, _) = split(&series, 0.10)?;
    let scaler = ScaleParams::fit(&train_series.values)?;
    let scaled = train_series.with_values(scaler.apply_slice(&train_series.values));
    let mut windows_series = scaled;
    windows_series.tau = cfg.tau;
    let samples = window(&windows_series)?;

    let deep_mlp_plan = NetPlan {
        name: "deep-mlp".to_string(),
        topology: Topology::Terminal,
        cell: CellPlan::Dense {
            widths: vec![cfg.hidden; cfg.depth],
            activation: Activation::Sigmoid,
            init: InitScheme::XavierNormal,
        },
        head: HeadPlan::Linear,
        n_inputs: 2 * cfg.tau,
        n_outputs: cfg.depth,
        seed: cfg.seed,
    };
    let interleaved_plan = NetPlan {
        name: "interleaved".to_string(),
        topology: Topology::Interleaved,
        cell: CellPlan::Dense {
            widths: vec![cfg.hidden],
            activation: Activation::Sigmoid,
            init: InitScheme::XavierNormal,
        },
        head: HeadPlan::Linear,
        n_inputs: 2 * cfg.tau,
        n_outputs: cfg.depth,
        seed: cfg.seed,
    };

    // Patience spans the whole run so both models train every epoch.
    let train_cfg = TrainConfig {
        max_epochs: cfg.epochs,
        patience: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        ..TrainConfig::default()
    };

    let mut deep_mlp = Model::from_plan(deep_mlp_plan)?;
    let mlp_history = train(&mut deep_mlp, &samples, &train_cfg, cfg.learning_rate)?;
    mlp_history.write_csv(&out_dir.join("history_deep-mlp.csv"))?;

    let mut interleaved = Model::from_plan(interleaved_plan)?;
    let il_history = train(&mut interleaved, &samples, &train_cfg, cfg.learning_rate)?;
    il_history.write_csv(&out_dir.join("history_interleaved.csv"))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join("gradients.csv"))?);
    writeln!(file, "model,epoch,grad_first,grad_last,train_loss")?;
    for (name, history) in [("deep-mlp", &mlp_history), ("interleaved", &il_history)] {
        for e in &history.epochs {
            writeln!(
                file,
                "{},{},{},{},{}",
                name, e.epoch, e.grad_first, e.grad_last, e.train_loss
            )?;
        }
    }
    file.flush()?;

    Ok(VanishingGradientReport {
        deep_mlp: mlp_history,
        interleaved: il_history,
    })
}

// ---------------------------------------------------------------------------
// Time-variance demonstration
// ---------------------------------------------------------------------------

/// Trains the linear-output variants and the MLP baseline on the
/// amplitude-modulated series, then emits forecasts from four fixed test
/// offsets and aggregate test MASE per model (plus the seasonal-naive
/// reference).
#[derive(Debug, Clone, Serialize)]
pub struct TimeVarianceConfig {
    pub seed: u64,
    pub series_len: usize,
    pub tau: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub dense_epochs: usize,
    pub conv_epochs: usize,
    pub start_indices: Vec<usize>,
}

impl Default for TimeVarianceConfig {
    fn default() -> Self {
        TimeVarianceConfig {
            seed: 0,
            series_len: 4320,
            tau: 20,
            hidden: 24,
            learning_rate: 1e-3,
            dense_epochs: 60,
            conv_epochs: 20,
            start_indices: vec![0, 50, 150, 200],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelMase {
    pub model: String,
    pub mase: f64,
}

/// Forecast values per model, in original units.
pub type ModelForecasts = Vec<(String, Vec<f64>)>;

#[derive(Debug)]
pub struct TimeVarianceReport {
    pub mase_by_model: Vec<ModelMase>,
    pub naive_mase: f64,
    /// One entry per start index.
    pub forecasts: Vec<(usize, ModelForecasts)>,
}

pub fn run_time_variance(out_dir: &Path, cfg: &TimeVarianceConfig) -> Result<TimeVarianceReport> {
    ensure_dir(out_dir)?;
    write_config(out_dir, cfg)?;

    let mut series = gen_modulated(cfg.series_len);
    series.tau = cfg.tau;

    let roster = [ModelChoice::Fn2, ModelChoice::Cfn2, ModelChoice::Mlp];
    let mut mase_by_model = Vec::new();
    let mut model_forecasts: Vec<(ModelChoice, Vec<crate::pipeline::EvaluatedForecast>)> =
        Vec::new();
    for (i, &choice) in roster.iter().enumerate() {
        let epochs = match choice {
            ModelChoice::Cfn | ModelChoice::Cfn2 => cfg.conv_epochs,
            _ => cfg.dense_epochs,
        };
        let train_cfg = TrainConfig {
            max_epochs: epochs,
            seed: cfg.seed.wrapping_add(i as u64),
            ..TrainConfig::default()
        };
        let pipeline = train_on_series(
            &series,
            choice,
            cfg.hidden,
            &train_cfg,
            LrChoice::Fixed(cfg.learning_rate),
        )?;
        pipeline
            .history
            .write_csv(&out_dir.join(format!("history_{}.csv", choice.name())))?;
        let all = forecast_test_windows(
            &pipeline.model,
            &pipeline.scaler,
            &pipeline.test_series,
            PredictMode::Mean,
            cfg.seed,
        )?;
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = all
            .iter()
            .map(|f| (f.forecast.clone(), f.target.clone()))
            .collect();
        let report = crate::metrics::MetricsReport::from_forecasts(
            choice.name(),
            &pipeline.test_series.name,
            &pairs,
            &pipeline.train_series.values,
        )?;
        mase_by_model.push(ModelMase {
            model: choice.name().to_string(),
            mase: report.mean_mase,
        });
        model_forecasts.push((choice, all));
    }

    let (train_series, test_series) = split(&series, 0.10)?;
    let naive_report = evaluate_seasonal_naive(&train_series, &test_series)?;

    // Forecast tables for the fixed start offsets within the test segment.
    let mut forecasts = Vec::new();
    for &idx in &cfg.start_indices {
        if idx + 3 * cfg.tau > test_series.len() {
            return Err(Error::Argument(format!(
                "start index {} leaves no full window in the test segment",
                idx
            )));
        }
        let mut per_model = Vec::new();
        for (choice, all) in &model_forecasts {
            let f = all
                .iter()
                .find(|f| f.start == idx)
                .expect("start index checked above");
            per_model.push((choice.name().to_string(), f.forecast.clone()));
        }
        let naive_input = &test_series.values[idx..idx + 2 * cfg.tau];
        per_model.push((
            "naive".to_string(),
            crate::baselines::seasonal_naive(naive_input, cfg.tau)?,
        ));
        let target = &test_series.values[idx + 2 * cfg.tau..idx + 3 * cfg.tau];

        let mut file = std::io::BufWriter::new(std::fs::File::create(
            out_dir.join(format!("forecasts_{}.csv", idx)),
        )?);
        let names: Vec<&str> = per_model.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(file, "step,target,{}", names.join(","))?;
        for h in 0..cfg.tau {
            let row: Vec<String> = per_model.iter().map(|(_, f)| f[h].to_string()).collect();
            writeln!(file, "{},{},{}", h + 1, target[h], row.join(","))?;
        }
        file.flush()?;
        forecasts.push((idx, per_model));
    }

    let mut json_models = mase_by_model.clone();
    json_models.push(ModelMase {
        model: "naive".to_string(),
        mase: naive_report.mean_mase,
    });
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_vec_pretty(&json_models)?,
    )?;

    Ok(TimeVarianceReport {
        mase_by_model,
        naive_mase: naive_report.mean_mase,
        forecasts,
    })
}

// ---------------------------------------------------------------------------
// Epoch-timing benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TimingConfig {
    pub seed: u64,
    pub roster: Vec<ModelChoice>,
    pub epochs: usize,
    pub series_len: usize,
    pub tau: usize,
    pub hidden: usize,
    pub learning_rate: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            seed: 0,
            roster: vec![
                ModelChoice::Fn,
                ModelChoice::Cfn,
                ModelChoice::Fn2,
                ModelChoice::Cfn2,
                ModelChoice::Mlp,
            ],
            epochs: 10,
            series_len: 4320,
            tau: 20,
            hidden: 24,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub model: String,
    pub mean_epoch_seconds: f64,
    /// Mean epoch time divided by the MLP's mean epoch time.
    pub ratio_to_mlp: f64,
}

#[derive(Debug)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

pub fn run_timing(out_dir: &Path, cfg: &TimingConfig) -> Result<TimingReport> {
    if !cfg.roster.contains(&ModelChoice::Mlp) {
        return Err(Error::Argument(
            "timing roster must include the mlp reference".into(),
        ));
    }
    ensure_dir(out_dir)?;
    write_config(out_dir, cfg)?;

    let series = {
        let mut s = gen_baseline(cfg.series_len);
        s.tau = cfg.tau;
        s
    };
    let train_cfg = TrainConfig {
        max_epochs: cfg.epochs,
        patience: cfg.epochs,
        seed: cfg.seed,
        ..TrainConfig::default()
    };

    let mut means = Vec::new();
    for &choice in &cfg.roster {
        let pipeline = train_on_series(
            &series,
            choice,
            cfg.hidden,
            &train_cfg,
            LrChoice::Fixed(cfg.learning_rate),
        )?;
        let mean = pipeline.history.epochs.iter().map(|e| e.seconds).sum::<f64>()
            / pipeline.history.epochs.len() as f64;
        means.push((choice.name().to_string(), mean));
    }
    let mlp_mean = means
        .iter()
        .find(|(n, _)| n == "mlp")
        .map(|(_, m)| *m)
        .expect("roster contains mlp");

    let rows: Vec<TimingRow> = means
        .into_iter()
        .map(|(model, mean)| TimingRow {
            ratio_to_mlp: mean / mlp_mean,
            model,
            mean_epoch_seconds: mean,
        })
        .collect();

    let mut file = std::io::BufWriter::new(std::fs::File::create(out_dir.join("timing.csv"))?);
    writeln!(file, "model,mean_epoch_seconds,ratio_to_mlp")?;
    for row in &rows {
        writeln!(file, "{},{},{}", row.model, row.mean_epoch_seconds, row.ratio_to_mlp)?;
    }
    file.flush()?;

    Ok(TimingReport { rows })
}

// ---------------------------------------------------------------------------
// Multi-model accuracy table
// ---------------------------------------------------------------------------

/// Full training protocol (learning-rate search included) for every
/// (model, dataset) pair, summarized as MASE/SMAPE tables and Borda
/// counts.
#[derive(Debug, Clone, Serialize)]
pub struct AccuracyTableConfig {
    pub seed: u64,
    pub roster: Vec<ModelChoice>,
    pub hidden: usize,
    pub max_epochs: usize,
    pub lr_grid: Vec<f64>,
}

impl Default for AccuracyTableConfig {
    fn default() -> Self {
        AccuracyTableConfig {
            seed: 0,
            roster: vec![ModelChoice::Fn, ModelChoice::Fn2, ModelChoice::Mlp],
            hidden: 24,
            max_epochs: 100,
            lr_grid: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyTableReport {
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    /// Mean MASE, indexed [dataset][model].
    pub mase: Vec<Vec<f64>>,
    /// Mean SMAPE in percent, indexed [dataset][model].
    pub smape: Vec<Vec<f64>>,
    pub borda: Vec<f64>,
}

pub fn run_accuracy_table(
    out_dir: &Path,
    cfg: &AccuracyTableConfig,
    datasets: &[Series],
) -> Result<AccuracyTableReport> {
    if datasets.is_empty() {
        return Err(Error::Argument("accuracy table needs at least one dataset".into()));
    }
    ensure_dir(out_dir)?;
    write_config(out_dir, cfg)?;

    let mut mase_matrix = Vec::with_capacity(datasets.len());
    let mut smape_matrix = Vec::with_capacity(datasets.len());
    for series in datasets {
        let mut mase_row = Vec::with_capacity(cfg.roster.len());
        let mut smape_row = Vec::with_capacity(cfg.roster.len());
        for &choice in &cfg.roster {
            let train_cfg = TrainConfig {
                max_epochs: cfg.max_epochs,
                lr_grid: cfg.lr_grid.clone(),
                seed: cfg.seed,
                ..TrainConfig::default()
            };
            let pipeline =
                train_on_series(series, choice, cfg.hidden, &train_cfg, LrChoice::Search)
                    .map_err(|e| {
                        Error::Argument(format!(
                            "({}, {}): {}",
                            choice.name(),
                            series.name,
                            e
                        ))
                    })?;
            pipeline.history.write_csv(
                &out_dir.join(format!("history_{}_{}.csv", choice.name(), series.name)),
            )?;
            let report = evaluate_on_test(&pipeline, choice.name(), PredictMode::Mean, cfg.seed)?;
            report.write_csv(&out_dir.join(format!(
                "forecast_metrics_{}_{}.csv",
                choice.name(),
                series.name
            )))?;
            mase_row.push(report.mean_mase);
            smape_row.push(report.mean_smape);
        }
        mase_matrix.push(mase_row);
        smape_matrix.push(smape_row);
    }

    let borda_counts = borda(&mase_matrix)?;
    let report = AccuracyTableReport {
        datasets: datasets.iter().map(|s| s.name.clone()).collect(),
        models: cfg.roster.iter().map(|c| c.name().to_string()).collect(),
        mase: mase_matrix,
        smape: smape_matrix,
        borda: borda_counts,
    };
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    Ok(report)
}

/// Default artifact directory for an experiment run.
pub fn default_out_dir(base: &Path, experiment: &str, seed: u64) -> PathBuf {
    base.join(format!("{}_seed{}", experiment, seed))
}
