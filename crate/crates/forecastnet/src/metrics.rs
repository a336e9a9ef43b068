//! Forecast accuracy metrics: MASE, SMAPE, Borda counts, and box-plot
//! summaries.
//!
//! MASE scales the forecast's mean absolute error by the mean absolute
//! one-step naive error over the in-sample (training) series, so values
//! are comparable across datasets of different scales. SMAPE is reported
//! in percent, bounded by [0, 200]. Borda counts aggregate per-dataset
//! rankings across models: the lowest error earns M points, the highest
//! earns 1, and ties share the mean of the tied ranks' points.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Mean absolute scaled error of a multi-step forecast.
///
/// All three inputs must be in the same (original, unscaled) units.
/// The denominator is the mean absolute one-step difference of the
/// in-sample series.
pub fn mase(forecast: &[f64], target: &[f64], insample: &[f64]) -> Result<f64> {
    if forecast.len() != target.len() || forecast.is_empty() {
        return Err(Error::Dimension(format!(
            "mase needs equal non-empty forecast/target lengths, got {} and {}",
            forecast.len(),
            target.len()
        )));
    }
    if insample.len() < 2 {
        return Err(Error::Metric("mase needs an in-sample series of length >= 2".into()));
    }
    let naive: f64 = insample.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
        / (insample.len() - 1) as f64;
    if naive <= 0.0 {
        return Err(Error::Metric(
            "mase undefined: in-sample series is constant (zero naive error)".into(),
        ));
    }
    let mae: f64 = forecast
        .iter()
        .zip(target)
        .map(|(f, a)| (a - f).abs())
        .sum::<f64>()
        / forecast.len() as f64;
    Ok(mae / naive)
}

/// Symmetric mean absolute percentage error in percent.
///
/// Terms where both the forecast and the target are zero are defined as
/// zero; the count of such degenerate terms is reported alongside.
pub fn smape(forecast: &[f64], target: &[f64]) -> Result<(f64, usize)> {
    if forecast.len() != target.len() || forecast.is_empty() {
        return Err(Error::Dimension(format!(
            "smape needs equal non-empty forecast/target lengths, got {} and {}",
            forecast.len(),
            target.len()
        )));
    }
    let mut zero_terms = 0usize;
    let sum: f64 = forecast
        .iter()
        .zip(target)
        .map(|(f, a)| {
            let denom = a.abs() + f.abs();
            if denom == 0.0 {
                zero_terms += 1;
                0.0
            } else {
                2.0 * (f - a).abs() / denom
            }
        })
        .sum();
    Ok((100.0 * sum / forecast.len() as f64, zero_terms))
}

/// Borda counts over an error matrix with one row per dataset and one
/// column per model. Lower error is better: per row the best model earns
/// M points and the worst earns 1; tied models share the mean of the
/// tied ranks' points. Row counts always sum to M (M + 1) / 2.
pub fn borda(error_by_dataset_and_model: &[Vec<f64>]) -> Result<Vec<f64>> {
    if error_by_dataset_and_model.is_empty() || error_by_dataset_and_model[0].is_empty() {
        return Err(Error::Argument("borda needs a non-empty matrix".into()));
    }
    let m = error_by_dataset_and_model[0].len();
    for row in error_by_dataset_and_model {
        if row.len() != m {
            return Err(Error::Argument("borda rows must have equal length".into()));
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Argument("borda matrix contains NaN".into()));
        }
    }
    let mut counts = vec![0.0; m];
    for row in error_by_dataset_and_model {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).expect("no NaN"));
        let mut i = 0;
        while i < m {
            let mut j = i;
            while j + 1 < m && row[order[j + 1]] == row[order[i]] {
                j += 1;
            }
            // Ranks i..=j (0-based, ascending error); rank r earns m - r.
            let points = (i..=j).map(|r| (m - r) as f64).sum::<f64>() / (j - i + 1) as f64;
            for &col in &order[i..=j] {
                counts[col] += points;
            }
            i = j + 1;
        }
    }
    Ok(counts)
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation over the sorted values at position
/// (n - 1) q.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn boxplot_stats(values: &[f64]) -> Result<FiveNumber> {
    if values.is_empty() {
        return Err(Error::Argument("boxplot of an empty list".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in metric values"));
    Ok(FiveNumber {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Per-forecast and aggregate accuracy of one model on one test set.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub per_forecast_mase: Vec<f64>,
    pub per_forecast_smape: Vec<f64>,
    pub mean_mase: f64,
    pub mean_smape: f64,
    pub mase_summary: FiveNumber,
    /// Count of 0/0 SMAPE terms that were defined as zero.
    pub smape_zero_terms: usize,
}

impl MetricsReport {
    pub fn from_forecasts(
        model: &str,
        dataset: &str,
        forecasts: &[(Vec<f64>, Vec<f64>)],
        insample: &[f64],
    ) -> Result<MetricsReport> {
        if forecasts.is_empty() {
            return Err(Error::Argument("metrics need at least one forecast".into()));
        }
        let mut per_mase = Vec::with_capacity(forecasts.len());
        let mut per_smape = Vec::with_capacity(forecasts.len());
        let mut zero_terms = 0usize;
        for (forecast, target) in forecasts {
            per_mase.push(mase(forecast, target, insample)?);
            let (s, z) = smape(forecast, target)?;
            per_smape.push(s);
            zero_terms += z;
        }
        let mean_mase = per_mase.iter().sum::<f64>() / per_mase.len() as f64;
        let mean_smape = per_smape.iter().sum::<f64>() / per_smape.len() as f64;
        let mase_summary = boxplot_stats(&per_mase)?;
        Ok(MetricsReport {
            model: model.to_string(),
            dataset: dataset.to_string(),
            per_forecast_mase: per_mase,
            per_forecast_smape: per_smape,
            mean_mase,
            mean_smape,
            mase_summary,
            smape_zero_terms: zero_terms,
        })
    }

    /// CSV export of the per-forecast rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "forecast,mase,smape")?;
        for (i, (m, s)) in self
            .per_forecast_mase
            .iter()
            .zip(&self.per_forecast_smape)
            .enumerate()
        {
            writeln!(file, "{},{},{}", i, m, s)?;
        }
        file.flush()?;
        Ok(())
    }

    /// JSON export of the aggregates (per-forecast lists included).
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}
