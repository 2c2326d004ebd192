//! Carbon-intensity forecast views: perfect, or perturbed with i.i.d.
//! Gaussian noise scaled to the signal's yearly mean.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmodel::CarbonSignal;

/// Forecast error model consumed by schedulers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecastModel {
    /// The forecast equals the true signal.
    Perfect,
    /// Per-slot noise with std = `relative_sigma` times the signal's yearly
    /// mean, independent of forecast length, clamped at zero from below.
    GaussianNoise { relative_sigma: f64, seed: u64 },
}

impl ForecastModel {
    pub fn gaussian(relative_sigma: f64, seed: u64) -> Self {
        ForecastModel::GaussianNoise {
            relative_sigma,
            seed,
        }
    }

    pub fn is_perfect(&self) -> bool {
        matches!(self, ForecastModel::Perfect)
    }

    pub fn validate(&self) -> Result<()> {
        if let ForecastModel::GaussianNoise { relative_sigma, .. } = self {
            if !relative_sigma.is_finite() || *relative_sigma < 0.0 {
                return Err(Error::Config(format!(
                    "relative_sigma must be non-negative, got {relative_sigma}"
                )));
            }
        }
        Ok(())
    }

    /// Forecast view over `horizon`. Noise is deterministic given
    /// (seed, horizon start, repetition): one realization per scheduling
    /// decision, shared by all strategies looking at the same window.
    pub fn forecast(
        &self,
        signal: &CarbonSignal,
        horizon: Range<usize>,
        repetition: u64,
    ) -> Result<Vec<f64>> {
        self.validate()?;
        if horizon.start > horizon.end || horizon.end > signal.len() {
            return Err(Error::OutOfBounds {
                start: horizon.start,
                end: horizon.end,
                len: signal.len(),
            });
        }
        let truth = &signal.values[horizon.clone()];
        match self {
            ForecastModel::Perfect => Ok(truth.to_vec()),
            ForecastModel::GaussianNoise {
                relative_sigma,
                seed,
            } => {
                let sigma = relative_sigma * signal.yearly_mean;
                if sigma == 0.0 {
                    return Ok(truth.to_vec());
                }
                let mut rng =
                    ChaCha8Rng::seed_from_u64(stream_seed(*seed, horizon.start as u64, repetition));
                let normal = Normal::new(0.0, sigma)
                    .map_err(|e| Error::Config(format!("noise model: {e}")))?;
                Ok(truth
                    .iter()
                    .map(|v| (v + normal.sample(&mut rng)).max(0.0))
                    .collect())
            }
        }
    }
}

/// Mixes (seed, horizon start, repetition) into one RNG seed.
fn stream_seed(seed: u64, start: u64, repetition: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ start) ^ repetition)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timegrid::{SlotGrid, TzTable};
    use chrono::NaiveDate;

    fn signal(values: Vec<f64>) -> CarbonSignal {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc();
        let grid = SlotGrid::new(start, 30, values.len(), TzTable::utc()).unwrap();
        CarbonSignal::new("test", grid, values).unwrap()
    }

    #[test]
    fn perfect_forecast_is_identity() {
        let s = signal(vec![100.0, 200.0, 300.0, 150.0]);
        let fc = ForecastModel::Perfect.forecast(&s, 1..3, 0).unwrap();
        assert_eq!(fc, vec![200.0, 300.0]);
    }

    #[test]
    fn out_of_bounds_horizon_rejected() {
        let s = signal(vec![100.0; 4]);
        assert!(matches!(
            ForecastModel::Perfect.forecast(&s, 2..5, 0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn noise_std_tracks_relative_sigma() {
        // Yearly mean 200, relative sigma 0.05 -> per-slot std 10.
        let n = 100_000;
        let s = signal(vec![200.0; n]);
        let model = ForecastModel::gaussian(0.05, 42);
        let fc = model.forecast(&s, 0..n, 0).unwrap();
        let errors: Vec<f64> = fc.iter().map(|v| v - 200.0).collect();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let std = var.sqrt();
        assert!((std - 10.0).abs() / 10.0 < 0.02, "std {std}");
        assert!(mean.abs() < 0.005 * 200.0, "mean {mean}");
    }

    #[test]
    fn same_seed_and_horizon_reproduce_bit_identical_output() {
        let s = signal((0..500).map(|i| 150.0 + (i % 7) as f64).collect());
        let model = ForecastModel::gaussian(0.1, 7);
        let a = model.forecast(&s, 10..200, 3).unwrap();
        let b = model.forecast(&s, 10..200, 3).unwrap();
        assert_eq!(a, b);
        let c = model.forecast(&s, 10..200, 4).unwrap();
        assert_ne!(a, c);
        let d = model.forecast(&s, 11..200, 3).unwrap();
        assert_ne!(a[1..], d[..a.len() - 1]);
    }

    #[test]
    fn zero_sigma_equals_perfect() {
        let s = signal(vec![120.0, 90.0, 210.0]);
        let noisy = ForecastModel::gaussian(0.0, 99).forecast(&s, 0..3, 0).unwrap();
        let perfect = ForecastModel::Perfect.forecast(&s, 0..3, 0).unwrap();
        assert_eq!(noisy, perfect);
    }

    #[test]
    fn forecast_values_clamped_at_zero() {
        let s = signal(vec![1.0; 2000]);
        let model = ForecastModel::gaussian(5.0, 3);
        let fc = model.forecast(&s, 0..2000, 0).unwrap();
        assert!(fc.iter().all(|v| *v >= 0.0));
        assert!(fc.contains(&0.0));
    }

    #[test]
    fn negative_relative_sigma_rejected() {
        let s = signal(vec![100.0; 4]);
        assert!(ForecastModel::gaussian(-0.1, 0).forecast(&s, 0..2, 0).is_err());
    }
}
