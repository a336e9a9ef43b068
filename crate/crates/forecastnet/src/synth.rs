//! Deterministic synthetic dataset generators.
//!
//! Two noiseless series over integer time steps with frequency f = 1/20
//! (seasonal period 20) by default:
//!
//! * baseline: `2 sin(2 pi f t) + (1/3) sin(2 pi f t / 5)` — a seasonal
//!   cycle riding on a slow trend; exactly periodic every 100 steps.
//! * modulated: `(1/2) sin(2 pi f t / 6) * ((3/5) sin(2 pi f t) +
//!   (1/5) sin(2 pi f t / 5))` — the same structure under an amplitude
//!   envelope that repeats every six seasonal cycles; the full signal
//!   period is 600 steps.

use std::f64::consts::PI;

use crate::data::Series;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthVariant {
    Baseline,
    Modulated,
}

impl SynthVariant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SynthVariant::Baseline),
            "modulated" => Ok(SynthVariant::Modulated),
            other => Err(Error::Argument(format!(
                "unknown synthetic variant '{}', expected baseline|modulated",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub length: usize,
    pub frequency: f64,
    pub variant: SynthVariant,
}

pub const DEFAULT_LENGTH: usize = 4320;
pub const DEFAULT_FREQUENCY: f64 = 1.0 / 20.0;

impl SynthConfig {
    pub fn new(variant: SynthVariant) -> Self {
        SynthConfig {
            length: DEFAULT_LENGTH,
            frequency: DEFAULT_FREQUENCY,
            variant,
        }
    }

    /// Seasonal period implied by the frequency.
    pub fn period(&self) -> usize {
        (1.0 / self.frequency).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::Argument("length must be >= 1".into()));
        }
        if self.frequency <= 0.0 || self.frequency.is_nan() {
            return Err(Error::Argument("frequency must be > 0".into()));
        }
        Ok(())
    }
}

/// Evaluates the configured formula at t = 0 .. length-1.
pub fn generate(cfg: &SynthConfig) -> Result<Series> {
    cfg.validate()?;
    let f = cfg.frequency;
    let values: Vec<f64> = (0..cfg.length)
        .map(|t| {
            let t = t as f64;
            match cfg.variant {
                SynthVariant::Baseline => {
                    2.0 * (2.0 * PI * f * t).sin() + (1.0 / 3.0) * (2.0 * PI * f * t / 5.0).sin()
                }
                SynthVariant::Modulated => {
                    0.5 * (2.0 * PI * f * t / 6.0).sin()
                        * ((3.0 / 5.0) * (2.0 * PI * f * t).sin()
                            + (1.0 / 5.0) * (2.0 * PI * f * t / 5.0).sin())
                }
            }
        })
        .collect();
    let name = match cfg.variant {
        SynthVariant::Baseline => "synthetic-baseline",
        SynthVariant::Modulated => "synthetic-modulated",
    };
    Series::new(values, name, "-", cfg.period())
}

/// Baseline series at the default frequency.
pub fn gen_baseline(length: usize) -> Series {
    let cfg = SynthConfig {
        length,
        ..SynthConfig::new(SynthVariant::Baseline)
    };
    generate(&cfg).expect("default config is valid")
}

/// Amplitude-modulated series at the default frequency.
pub fn gen_modulated(length: usize) -> Series {
    let cfg = SynthConfig {
        length,
        ..SynthConfig::new(SynthVariant::Modulated)
    };
    generate(&cfg).expect("default config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{round2, series_stats};

    #[test]
    fn baseline_reference_points() {
        let s = gen_baseline(10);
        assert_eq!(s.values[0], 0.0);
        // t = 5: 2 sin(pi/2) + (1/3) sin(pi/10)
        assert!((s.values[5] - 2.1030056647916493).abs() < 1e-12);
        assert_eq!(s.tau, 20);
    }

    #[test]
    fn baseline_summary_statistics() {
        let s = gen_baseline(4320);
        let st = series_stats(&s.values).unwrap();
        assert_eq!(round2(st.min), -2.33);
        assert_eq!(round2(st.max), 2.33);
        assert!(st.mean.abs() < 0.005, "mean {} should round to 0.00", st.mean);
        assert_eq!(round2(st.std), 1.43);
    }

    #[test]
    fn baseline_amplitude_bound() {
        let s = gen_baseline(4320);
        let bound = 2.0 + 1.0 / 3.0;
        assert!(s.values.iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn baseline_periodic_every_100_steps() {
        let s = gen_baseline(1000);
        for t in 0..900 {
            assert!(
                (s.values[t] - s.values[t + 100]).abs() < 1e-9,
                "baseline not 100-periodic at t = {}",
                t
            );
        }
    }

    #[test]
    fn modulated_reference_points_and_bound() {
        let s = gen_modulated(4320);
        assert_eq!(s.values[0], 0.0);
        // |envelope| <= 1/2, |inner| <= 3/5 + 1/5.
        assert!(s.values.iter().all(|v| v.abs() <= 0.4));
    }

    #[test]
    fn modulated_full_period_600() {
        let s = gen_modulated(1400);
        for t in 0..800 {
            assert!(
                (s.values[t] - s.values[t + 600]).abs() < 1e-9,
                "modulated not 600-periodic at t = {}",
                t
            );
        }
        // The envelope alone (period 120) does not repeat the signal.
        let mismatch = (0..800).any(|t| (s.values[t] - s.values[t + 120]).abs() > 1e-3);
        assert!(mismatch, "signal should not repeat every 120 steps");
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_baseline(500).values, gen_baseline(500).values);
        assert_eq!(gen_modulated(500).values, gen_modulated(500).values);
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = SynthConfig {
            length: 0,
            ..SynthConfig::new(SynthVariant::Baseline)
        };
        assert!(generate(&bad).is_err());
        let bad = SynthConfig {
            frequency: 0.0,
            ..SynthConfig::new(SynthVariant::Baseline)
        };
        assert!(generate(&bad).is_err());
    }
}
