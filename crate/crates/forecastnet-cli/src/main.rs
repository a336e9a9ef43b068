//! Command-line front end: dataset generation, training, evaluation,
//! forecasting, gradient checking, and the scripted experiments.
//!
//! Every run directory receives a `config.json` with the resolved
//! configuration; seeds default to 0 and are always printed. No entropy
//! source is consulted unless `--seed random` is passed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use forecastnet::data::{load_series, sidecar_path, write_csv, ScaleParams, SeriesMeta};
use forecastnet::experiments::{
    run_accuracy_table, run_time_variance, run_timing, run_vanishing_gradient,
    AccuracyTableConfig, TimeVarianceConfig, TimingConfig, VanishingGradientConfig,
};
use forecastnet::gradcheck::{check_chain_equivalence, check_model_variants, check_primitives};
use forecastnet::model::{Model, PredictMode};
use forecastnet::pipeline::{
    evaluate_on_test, train_on_series, LrChoice, ModelChoice, TrainedPipeline,
};
use forecastnet::synth::{generate, SynthConfig, SynthVariant, DEFAULT_FREQUENCY};
use forecastnet::train::TrainConfig;

#[derive(Parser)]
#[command(name = "forecastnet", version, about = "Time-variant feed-forward forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Seed argument: a number, or `random` to draw one from the OS.
fn parse_seed(s: &str) -> Result<u64, String> {
    if s == "random" {
        Ok(rand::random())
    } else {
        s.parse::<u64>().map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV plus a JSON sidecar.
    GenData(GenDataArgs),
    /// Train a model on a CSV series and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a CSV series (MASE/SMAPE on the test split).
    Evaluate(EvaluateArgs),
    /// Produce one forecast from the last window of an input CSV.
    Forecast(ForecastArgs),
    /// Run the gradient-oracle suites; exits nonzero on any failure.
    Gradcheck(GradcheckArgs),
    /// Scripted experiment runners.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct GenDataArgs {
    /// baseline | modulated
    #[arg(long, default_value = "baseline")]
    variant: String,
    #[arg(long, default_value_t = 4320)]
    length: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input CSV (header `value`, one value per line).
    #[arg(long)]
    data: PathBuf,
    /// Seasonal period; defaults to the dataset sidecar's value.
    #[arg(long)]
    tau: Option<usize>,
    /// fn | cfn | fn2 | cfn2 | mlp
    #[arg(long)]
    model: String,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
    /// Run directory for checkpoint, history, and config.
    #[arg(long)]
    out: PathBuf,
    /// Fixed learning rate; omit to search the grid 1e-2 .. 1e-6.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 24)]
    hidden: usize,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 1e-5)]
    min_delta: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// mean | sample
    #[arg(long, default_value = "mean")]
    mode: String,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
    /// Output directory; defaults to the model file's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForecastArgs {
    #[arg(long)]
    model_file: PathBuf,
    /// CSV whose last 2 tau values form the input window.
    #[arg(long)]
    input_csv: PathBuf,
    /// mean | sample
    #[arg(long, default_value = "mean")]
    mode: String,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Deepest interleaved chain to verify.
    #[arg(long, default_value_t = 40)]
    depth: usize,
    /// Randomized trials per suite.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Deep-MLP vs interleaved-output gradient comparison.
    VanishingGradient(ExperimentArgs),
    /// Forecasts on the amplitude-modulated series at fixed offsets.
    TimeVariance(ExperimentArgs),
    /// Epoch-time ratios against the MLP baseline.
    Timing(ExperimentArgs),
    /// MASE/SMAPE/Borda table over datasets and models.
    Table3(Table3Args),
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
}

#[derive(Args)]
struct Table3Args {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_seed, default_value = "0")]
    seed: u64,
    /// Extra dataset CSVs (synthetic baseline is always included).
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Roster of models to compare.
    #[arg(long, default_values_t = ["fn".to_string(), "fn2".to_string(), "mlp".to_string()])]
    models: Vec<String>,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {:#}", e);
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => train_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Forecast(args) => forecast_cmd(args),
        Command::Gradcheck(args) => gradcheck_cmd(args),
        Command::Experiment(cmd) => experiment_cmd(cmd),
    }
}

fn write_config<T: Serialize>(dir: &Path, cfg: &T) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> anyhow::Result<()> {
    let variant = SynthVariant::parse(&args.variant)?;
    let cfg = SynthConfig {
        length: args.length,
        frequency: DEFAULT_FREQUENCY,
        variant,
    };
    let series = generate(&cfg)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_csv(&args.out, &series.values)?;
    SeriesMeta {
        name: series.name.clone(),
        resolution: series.resolution.clone(),
        tau: series.tau,
    }
    .save_for(&args.out)?;

    #[derive(Serialize)]
    struct GenDataConfig<'a> {
        command: &'a str,
        variant: &'a str,
        length: usize,
        frequency: f64,
        tau: usize,
        out: &'a Path,
    }
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            write_config(
                dir,
                &GenDataConfig {
                    command: "gen-data",
                    variant: &args.variant,
                    length: args.length,
                    frequency: cfg.frequency,
                    tau: series.tau,
                    out: &args.out,
                },
            )?;
        }
    }
    println!(
        "wrote {} values to {} (tau {}, sidecar {})",
        series.len(),
        args.out.display(),
        series.tau,
        sidecar_path(&args.out).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainRunConfig {
    command: String,
    data: PathBuf,
    model: String,
    tau: usize,
    hidden: usize,
    seed: u64,
    lr: Option<f64>,
    lr_grid: Vec<f64>,
    max_epochs: usize,
    batch_size: usize,
    patience: usize,
    min_delta: f64,
    selected_lr: f64,
    best_val_loss: f64,
    epochs_run: usize,
}

fn train_cmd(args: TrainArgs) -> anyhow::Result<()> {
    println!("seed: {}", args.seed);
    let choice = ModelChoice::parse(&args.model)?;
    let series = load_series(&args.data, args.tau)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let cfg = TrainConfig {
        max_epochs: args.max_epochs,
        batch_size: args.batch_size,
        patience: args.patience,
        min_delta: args.min_delta,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let lr = match args.lr {
        Some(rate) => LrChoice::Fixed(rate),
        None => LrChoice::Search,
    };
    let pipeline = train_on_series(&series, choice, args.hidden, &cfg, lr)?;

    std::fs::create_dir_all(&args.out)?;
    let model_path = args.out.join("model.fnet");
    pipeline.model.save(&model_path)?;
    std::fs::write(
        args.out.join("scaler.json"),
        serde_json::to_vec_pretty(&pipeline.scaler)?,
    )?;
    pipeline.history.write_csv(&args.out.join("history.csv"))?;
    write_config(
        &args.out,
        &TrainRunConfig {
            command: "train".into(),
            data: args.data.clone(),
            model: choice.name().into(),
            tau: series.tau,
            hidden: args.hidden,
            seed: args.seed,
            lr: args.lr,
            lr_grid: cfg.lr_grid.clone(),
            max_epochs: cfg.max_epochs,
            batch_size: cfg.batch_size,
            patience: cfg.patience,
            min_delta: cfg.min_delta,
            selected_lr: pipeline.lr,
            best_val_loss: pipeline.history.best_val_loss,
            epochs_run: pipeline.history.epochs.len(),
        },
    )?;
    println!(
        "trained {} on {} ({} epochs, lr {}, best val loss {:.6e})",
        choice.name(),
        series.name,
        pipeline.history.epochs.len(),
        pipeline.lr,
        pipeline.history.best_val_loss
    );
    println!("checkpoint: {}", model_path.display());
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> anyhow::Result<()> {
    println!("seed: {}", args.seed);
    let mode = PredictMode::parse(&args.mode)?;
    let model = Model::load(&args.model_file)
        .with_context(|| format!("loading {}", args.model_file.display()))?;
    let tau = model.n_outputs();
    let series = load_series(&args.data, Some(tau))?;
    if series.len() < 1 {
        bail!("empty series");
    }
    // Re-derive the protocol split and scaler from the data file, exactly
    // as training did.
    let (train_series, test_series) = forecastnet::data::split(&series, 0.10)?;
    let scaler = ScaleParams::fit(&train_series.values)?;
    let report = forecastnet::pipeline::evaluate_on_split(
        &model,
        &scaler,
        &train_series,
        &test_series,
        "model",
        mode,
        args.seed,
    )?;

    let out_dir = args
        .out
        .clone()
        .or_else(|| args.model_file.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    report.write_json(&out_dir.join("metrics.json"))?;
    report.write_csv(&out_dir.join("forecast_metrics.csv"))?;

    #[derive(Serialize)]
    struct EvalConfig {
        command: String,
        model_file: PathBuf,
        data: PathBuf,
        mode: String,
        seed: u64,
        tau: usize,
    }
    write_config(
        &out_dir,
        &EvalConfig {
            command: "evaluate".into(),
            model_file: args.model_file.clone(),
            data: args.data.clone(),
            mode: args.mode.clone(),
            seed: args.seed,
            tau,
        },
    )?;
    println!(
        "test MASE {:.4}, SMAPE {:.3}% over {} forecasts -> {}",
        report.mean_mase,
        report.mean_smape,
        report.per_forecast_mase.len(),
        out_dir.join("metrics.json").display()
    );
    Ok(())
}

fn forecast_cmd(args: ForecastArgs) -> anyhow::Result<()> {
    println!("seed: {}", args.seed);
    let mode = PredictMode::parse(&args.mode)?;
    let model = Model::load(&args.model_file)?;
    let n_in = model.n_inputs();
    let values = forecastnet::data::load_csv(&args.input_csv)?;
    if values.len() < n_in {
        bail!(
            "input CSV has {} values; the model needs at least {}",
            values.len(),
            n_in
        );
    }
    // Use the training scaler stored next to the checkpoint when present.
    let scaler_path = args
        .model_file
        .parent()
        .map(|p| p.join("scaler.json"))
        .filter(|p| p.exists());
    let scaler: Option<ScaleParams> = match &scaler_path {
        Some(p) => Some(serde_json::from_slice(&std::fs::read(p)?)?),
        None => {
            eprintln!("note: no scaler.json next to the checkpoint; treating inputs as already scaled");
            None
        }
    };
    let window = &values[values.len() - n_in..];
    let scaled: Vec<f64> = match &scaler {
        Some(s) => s.apply_slice(window),
        None => window.to_vec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let result = model.forward_predict(&forecastnet::Tensor::from_vec(scaled), mode, &mut rng)?;
    let point: Vec<f64> = match &scaler {
        Some(s) => s.invert_slice(result.point.data()),
        None => result.point.data().to_vec(),
    };
    let sigma: Option<Vec<f64>> = result.sigma.as_ref().map(|sig| match &scaler {
        Some(s) => sig.data().iter().map(|v| v * s.span()).collect(),
        None => sig.data().to_vec(),
    });

    let mut lines = String::from(if sigma.is_some() { "step,forecast,sigma\n" } else { "step,forecast\n" });
    for (i, v) in point.iter().enumerate() {
        match &sigma {
            Some(s) => lines.push_str(&format!("{},{},{}\n", i + 1, v, s[i])),
            None => lines.push_str(&format!("{},{}\n", i + 1, v)),
        }
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, lines)?;
            println!("forecast written to {}", path.display());
        }
        None => print!("{}", lines),
    }
    Ok(())
}

fn gradcheck_cmd(args: GradcheckArgs) -> anyhow::Result<()> {
    println!("seed: {}", args.seed);
    let mut all_ok = true;
    let primitives = check_primitives(args.seed, args.trials);
    println!(
        "primitives: {} trials, max rel err {:.3e} (tolerance {:.0e}) -> {}",
        primitives.trials,
        primitives.max_rel_error,
        primitives.tolerance,
        if primitives.passed() { "ok" } else { "FAIL" }
    );
    all_ok &= primitives.passed();

    let per_variant = (args.trials / 4).max(1);
    let models = check_model_variants(args.seed, per_variant)?;
    println!(
        "model variants: {} trials, max rel err {:.3e} (tolerance {:.0e}) -> {}",
        models.trials,
        models.max_rel_error,
        models.tolerance,
        if models.passed() { "ok" } else { "FAIL" }
    );
    all_ok &= models.passed();

    let chains = check_chain_equivalence(2..=args.depth, args.seed)?;
    println!(
        "interleaved chains (depth 2..={}): max rel err {:.3e} (tolerance {:.0e}) -> {}",
        args.depth,
        chains.max_rel_error,
        chains.tolerance,
        if chains.passed() { "ok" } else { "FAIL" }
    );
    all_ok &= chains.passed();

    if !all_ok {
        bail!("gradient checks failed");
    }
    Ok(())
}

fn experiment_cmd(cmd: ExperimentCommand) -> anyhow::Result<()> {
    match cmd {
        ExperimentCommand::VanishingGradient(args) => {
            println!("seed: {}", args.seed);
            let cfg = VanishingGradientConfig {
                seed: args.seed,
                ..VanishingGradientConfig::default()
            };
            let report = run_vanishing_gradient(&args.out, &cfg)?;
            let mlp_last = report.deep_mlp.epochs.last().expect("epochs");
            let il_last = report.interleaved.epochs.last().expect("epochs");
            println!(
                "deep MLP:    first-layer mean |grad| {:.3e}, final loss {:.6}",
                mlp_last.grad_first, mlp_last.train_loss
            );
            println!(
                "interleaved: first-layer mean |grad| {:.3e}, final loss {:.6}",
                il_last.grad_first, il_last.train_loss
            );
            println!("artifacts in {}", args.out.display());
        }
        ExperimentCommand::TimeVariance(args) => {
            println!("seed: {}", args.seed);
            let cfg = TimeVarianceConfig {
                seed: args.seed,
                ..TimeVarianceConfig::default()
            };
            let report = run_time_variance(&args.out, &cfg)?;
            for m in &report.mase_by_model {
                println!("{:>6} test MASE {:.4}", m.model, m.mase);
            }
            println!("{:>6} test MASE {:.4}", "naive", report.naive_mase);
            println!("artifacts in {}", args.out.display());
        }
        ExperimentCommand::Timing(args) => {
            println!("seed: {}", args.seed);
            let cfg = TimingConfig {
                seed: args.seed,
                ..TimingConfig::default()
            };
            let report = run_timing(&args.out, &cfg)?;
            for row in &report.rows {
                println!(
                    "{:>6}: {:.3} s/epoch  ({:.2}x mlp)",
                    row.model, row.mean_epoch_seconds, row.ratio_to_mlp
                );
            }
            println!("artifacts in {}", args.out.display());
        }
        ExperimentCommand::Table3(args) => {
            println!("seed: {}", args.seed);
            let mut datasets = vec![forecastnet::synth::gen_baseline(4320)];
            for path in &args.data {
                datasets.push(load_series(path, None)?);
            }
            let roster: Vec<ModelChoice> = args
                .models
                .iter()
                .map(|m| ModelChoice::parse(m))
                .collect::<Result<_, _>>()?;
            let cfg = AccuracyTableConfig {
                seed: args.seed,
                roster,
                max_epochs: args.max_epochs,
                ..AccuracyTableConfig::default()
            };
            let report = run_accuracy_table(&args.out, &cfg, &datasets)?;
            println!("model   borda   per-dataset MASE");
            for (i, model) in report.models.iter().enumerate() {
                let row: Vec<String> = report
                    .mase
                    .iter()
                    .map(|r| format!("{:.3}", r[i]))
                    .collect();
                println!("{:>6}  {:>5}   {}", model, report.borda[i], row.join("  "));
            }
            println!("artifacts in {}", args.out.display());
        }
    }
    Ok(())
}
