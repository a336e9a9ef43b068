//! Series ingestion, scaling, windowing, splitting, and statistics.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A univariate time series with its seasonal period.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub values: Vec<f64>,
    pub name: String,
    pub resolution: String,
    /// Seasonal period in steps; models read 2 tau values and forecast tau.
    pub tau: usize,
}

impl Series {
    pub fn new(values: Vec<f64>, name: &str, resolution: &str, tau: usize) -> Result<Self> {
        if tau < 1 {
            return Err(Error::Argument("tau must be >= 1".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "series contains a non-finite value at index {}",
                pos
            )));
        }
        Ok(Series {
            values,
            name: name.to_string(),
            resolution: resolution.to_string(),
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with the same metadata over a different value vector.
    pub fn with_values(&self, values: Vec<f64>) -> Series {
        Series {
            values,
            name: self.name.clone(),
            resolution: self.resolution.clone(),
            tau: self.tau,
        }
    }
}

/// Sidecar metadata stored next to a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub resolution: String,
    pub tau: usize,
}

/// Path of the JSON sidecar for a CSV file: `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    csv_path.with_file_name(format!("{}.meta.json", stem))
}

impl SeriesMeta {
    pub fn save_for(&self, csv_path: &Path) -> Result<()> {
        let path = sidecar_path(csv_path);
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load_for(csv_path: &Path) -> Result<Option<SeriesMeta>> {
        let path = sidecar_path(csv_path);
        if !path.exists() {
            return Ok(None);
        }
        let bytes = std::fs::read(path)?;
        Ok(Some(serde_json::from_slice(&bytes)?))
    }
}

/// Reads the single-column CSV format: a `value` header line, then one
/// double per line. Blank or unparsable lines are ingestion errors with
/// a 1-based line number.
pub fn load_csv(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut values = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header.trim() == "value" => {}
        Some((_, Ok(other))) => {
            return Err(Error::Ingestion {
                line: 1,
                msg: format!("expected header 'value', got '{}'", other.trim()),
            })
        }
        Some((_, Err(e))) => {
            return Err(Error::Ingestion {
                line: 1,
                msg: e.to_string(),
            })
        }
        None => {
            return Err(Error::Ingestion {
                line: 1,
                msg: "empty file".into(),
            })
        }
    }
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Ingestion {
            line: line_no,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(Error::Ingestion {
                line: line_no,
                msg: "blank line".into(),
            });
        }
        let v: f64 = trimmed.parse().map_err(|_| Error::Ingestion {
            line: line_no,
            msg: format!("cannot parse '{}' as a number", trimmed),
        })?;
        if !v.is_finite() {
            return Err(Error::Ingestion {
                line: line_no,
                msg: format!("non-finite value {}", v),
            });
        }
        values.push(v);
    }
    Ok(values)
}

/// Writes the single-column CSV format. Values round-trip bit-exactly
/// through [`load_csv`] (shortest round-trip float formatting).
pub fn write_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "value")?;
    for v in values {
        writeln!(file, "{}", v)?;
    }
    file.flush()?;
    Ok(())
}

/// Loads a series plus its sidecar; `tau` must come from the sidecar or
/// the `tau_override` argument.
pub fn load_series(path: &Path, tau_override: Option<usize>) -> Result<Series> {
    let values = load_csv(path)?;
    let meta = SeriesMeta::load_for(path)?;
    let tau = tau_override
        .or(meta.as_ref().map(|m| m.tau))
        .ok_or_else(|| Error::Argument("tau not given and no sidecar metadata found".into()))?;
    let (name, resolution) = match meta {
        Some(m) => (m.name, m.resolution),
        None => (
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "series".into()),
            "-".to_string(),
        ),
    };
    Series::new(values, &name, &resolution, tau)
}

/// Min-max scaling parameters fitted on a training segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub min: f64,
    pub max: f64,
}

impl ScaleParams {
    /// Fits on the given values; a constant segment cannot be scaled.
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Scaling("cannot fit a scaler on an empty segment".into()));
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max <= min {
            return Err(Error::Scaling(format!(
                "constant segment (min = max = {}), scaling undefined",
                min
            )));
        }
        Ok(ScaleParams { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// (x - min) / (max - min). Values outside the fitted range map
    /// outside [0, 1] and are preserved (no clipping).
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.span()
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.span() + self.min
    }

    pub fn apply_slice(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_slice(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.invert(y)).collect()
    }
}

/// One training pair cut by the sliding window: 2 tau input values and
/// tau target values. `origin` is the source index of the last input
/// value, so input covers [origin - 2 tau + 1, origin] and the target
/// covers [origin + 1, origin + tau].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub input: Tensor,
    pub target: Tensor,
    pub origin: usize,
}

/// Cuts stride-1 sliding windows of length 3 tau: count = len - 3 tau + 1.
pub fn window(series: &Series) -> Result<Vec<WindowSample>> {
    let tau = series.tau;
    let need = 3 * tau;
    if series.len() < need {
        return Err(Error::Dimension(format!(
            "series of length {} is shorter than one window (3 tau = {})",
            series.len(),
            need
        )));
    }
    let mut samples = Vec::with_capacity(series.len() - need + 1);
    for start in 0..=(series.len() - need) {
        let input = Tensor::from_vec(series.values[start..start + 2 * tau].to_vec());
        let target = Tensor::from_vec(series.values[start + 2 * tau..start + need].to_vec());
        samples.push(WindowSample {
            input,
            target,
            origin: start + 2 * tau - 1,
        });
    }
    Ok(samples)
}

/// Chronological split; the last `test_fraction` of values form the test
/// segment. Both segments must still fit at least one window.
pub fn split(series: &Series, test_fraction: f64) -> Result<(Series, Series)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::Argument(format!(
            "test_fraction must be in (0, 1), got {}",
            test_fraction
        )));
    }
    let n = series.len();
    let test_len = (n as f64 * test_fraction).round() as usize;
    let train_len = n - test_len;
    let need = 3 * series.tau;
    if train_len < need || test_len < need {
        return Err(Error::Dimension(format!(
            "split {}/{} leaves a segment shorter than one window (3 tau = {})",
            train_len, test_len, need
        )));
    }
    Ok((
        series.with_values(series.values[..train_len].to_vec()),
        series.with_values(series.values[train_len..].to_vec()),
    ))
}

/// Basic descriptive statistics with the population (N) std deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub len: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn series_stats(values: &[f64]) -> Result<SeriesStats> {
    if values.is_empty() {
        return Err(Error::Argument("stats of an empty series".into()));
    }
    let n = values.len() as f64;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(SeriesStats {
        len: values.len(),
        min,
        max,
        mean,
        std: var.sqrt(),
    })
}

/// Rounds to two decimals, the precision used in dataset summaries.
pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>, tau: usize) -> Series {
        Series::new(values, "test", "-", tau).unwrap()
    }

    #[test]
    fn load_csv_basic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "value\n1.0\n2.0\n3.0\n").unwrap();
        assert_eq!(load_csv(&path).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn load_csv_blank_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "value\n1.0\n\n3.0\n").unwrap();
        match load_csv(&path) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected ingestion error, got {:?}", other),
        }
    }

    #[test]
    fn load_csv_rejects_nan_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, "value\nNaN\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Ingestion { line: 2, .. })));
        std::fs::write(&path, "value\nhello\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Ingestion { line: 2, .. })));
        std::fs::write(&path, "wrong_header\n1.0\n").unwrap();
        assert!(matches!(load_csv(&path), Err(Error::Ingestion { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let values = vec![0.1, -2.5e-17, 3.0, std::f64::consts::PI, 1.0 / 3.0];
        write_csv(&path, &values).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(values, back);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&path, &[1.0; 100]).unwrap();
        let meta = SeriesMeta {
            name: "synthetic".into(),
            resolution: "-".into(),
            tau: 20,
        };
        meta.save_for(&path).unwrap();
        assert_eq!(SeriesMeta::load_for(&path).unwrap(), Some(meta));
    }

    #[test]
    fn scaler_basics() {
        let s = ScaleParams::fit(&[0.0, 10.0]).unwrap();
        assert_eq!(s.apply(5.0), 0.5);
        assert_eq!(s.apply(0.0), 0.0);
        assert_eq!(s.apply(10.0), 1.0);
        // Out-of-range values are preserved, not clipped.
        assert_eq!(s.apply(20.0), 2.0);
        assert_eq!(s.apply(-10.0), -1.0);
    }

    #[test]
    fn scaler_invert_is_inverse() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 12.0 + 3.0).collect();
        let s = ScaleParams::fit(&values).unwrap();
        for &v in &values {
            assert!((s.invert(s.apply(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_rejects_constant_segment() {
        assert!(matches!(
            ScaleParams::fit(&[3.0, 3.0, 3.0]),
            Err(Error::Scaling(_))
        ));
    }

    #[test]
    fn scaler_maps_training_segment_into_unit_interval() {
        let values: Vec<f64> = (0..100).map(|i| ((i * 7919) % 83) as f64 - 41.0).collect();
        let s = ScaleParams::fit(&values).unwrap();
        let scaled = s.apply_slice(&values);
        let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn window_count_arithmetic() {
        let s = series((0..100).map(|i| i as f64).collect(), 10);
        let samples = window(&s).unwrap();
        assert_eq!(samples.len(), 71);
    }

    #[test]
    fn window_boundary_single_sample() {
        let s = series((0..30).map(|i| i as f64).collect(), 10);
        let samples = window(&s).unwrap();
        assert_eq!(samples.len(), 1);
        let short = series((0..29).map(|i| i as f64).collect(), 10);
        assert!(window(&short).is_err());
    }

    #[test]
    fn window_first_sample_layout() {
        let s = series((0..100).map(|i| i as f64).collect(), 10);
        let samples = window(&s).unwrap();
        let first = &samples[0];
        assert_eq!(first.input.data(), (0..20).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(first.target.data(), (20..30).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(first.origin, 19);
    }

    #[test]
    fn window_coverage_bookkeeping() {
        // Every source value appears in the samples at the right offsets.
        let s = series((0..40).map(|i| i as f64 * 1.5).collect(), 5);
        let samples = window(&s).unwrap();
        for (k, sample) in samples.iter().enumerate() {
            for (j, v) in sample.input.data().iter().enumerate() {
                assert_eq!(*v, s.values[k + j]);
            }
            for (j, v) in sample.target.data().iter().enumerate() {
                assert_eq!(*v, s.values[k + 10 + j]);
            }
        }
    }

    #[test]
    fn split_lengths() {
        let s = series(vec![0.0; 1000], 10);
        let (train, test) = split(&s, 0.10).unwrap();
        assert_eq!(train.len(), 900);
        assert_eq!(test.len(), 100);
        // Adjacency: no gap and no overlap.
        let s2 = series((0..1000).map(|i| i as f64).collect(), 10);
        let (train, test) = split(&s2, 0.10).unwrap();
        assert_eq!(train.values.last().cloned(), Some(899.0));
        assert_eq!(test.values.first().cloned(), Some(900.0));
    }

    #[test]
    fn split_synthetic_length() {
        let s = series(vec![0.0; 4320], 20);
        let (train, test) = split(&s, 0.10).unwrap();
        assert_eq!(train.len(), 3888);
        assert_eq!(test.len(), 432);
    }

    #[test]
    fn split_concat_round_trip() {
        let s = series((0..200).map(|i| (i as f64).cos()).collect(), 5);
        let (train, test) = split(&s, 0.10).unwrap();
        let mut joined = train.values.clone();
        joined.extend_from_slice(&test.values);
        assert_eq!(joined, s.values);
    }

    #[test]
    fn split_too_short_rejected() {
        let s = series(vec![0.0; 100], 10);
        // Test segment of 10 < 3 tau = 30.
        assert!(matches!(split(&s, 0.10), Err(Error::Dimension(_))));
    }

    #[test]
    fn stats_basics() {
        let st = series_stats(&[1.0, 3.0]).unwrap();
        assert_eq!(st.mean, 2.0);
        assert_eq!(st.std, 1.0);
        let st = series_stats(&[5.0; 7]).unwrap();
        assert_eq!((st.len, st.min, st.max, st.mean, st.std), (7, 5.0, 5.0, 5.0, 0.0));
        assert!(series_stats(&[]).is_err());
    }
}
