use forecastnet::pipeline::{train_on_series, LrChoice, ModelChoice, evaluate_on_test};
use forecastnet::model::PredictMode;
use forecastnet::synth::gen_baseline;
use forecastnet::train::TrainConfig;
use std::time::Instant;

fn main() {
    let series = gen_baseline(4320);
    // MLP quality probe: does the simple baseline reach low SMAPE?
    for lr in [1e-2, 1e-3, 1e-4] {
        let cfg = TrainConfig { max_epochs: 400, min_delta: 1e-8, patience: 20, seed: 0, ..TrainConfig::default() };
        let t0 = Instant::now();
        let p = train_on_series(&series, ModelChoice::Mlp, 24, &cfg, LrChoice::Fixed(lr)).unwrap();
        let report = evaluate_on_test(&p, "mlp", PredictMode::Mean, 0).unwrap();
        println!("MLP lr {:.0e}: {} epochs in {:.0}s, best val {:.3e}, MASE {:.4}, SMAPE {:.3}%",
                 lr, p.history.epochs.len(), t0.elapsed().as_secs_f64(), p.history.best_val_loss, report.mean_mase, report.mean_smape);
    }
    // FN2 deep run at lr 1e-5 with generous patience.
    let cfg = TrainConfig { max_epochs: 1200, min_delta: 1e-8, patience: 20, seed: 0, ..TrainConfig::default() };
    let t0 = Instant::now();
    let p = train_on_series(&series, ModelChoice::Fn2, 24, &cfg, LrChoice::Fixed(1e-5)).unwrap();
    let report = evaluate_on_test(&p, "fn2", PredictMode::Mean, 0).unwrap();
    println!("FN2 lr 1e-5 deep: {} epochs in {:.0}s, best val {:.3e}, MASE {:.4}, SMAPE {:.3}%",
             p.history.epochs.len(), t0.elapsed().as_secs_f64(), p.history.best_val_loss, report.mean_mase, report.mean_smape);
}
