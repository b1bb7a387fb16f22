//! Error, convergence-time and spike-rate metrics.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// Mean squared error over samples × channels, averaging channels
/// uniformly.
pub fn mse(z: &Matrix, f: &Matrix) -> Result<f64> {
    check_dim("mse samples", f.rows(), z.rows())?;
    check_dim("mse channels", f.cols(), z.cols())?;
    mse_slices(z.as_slice(), f.as_slice())
}

/// Mean squared difference of two equally long flat sequences.
pub fn mse_slices(z: &[f64], f: &[f64]) -> Result<f64> {
    check_dim("mse length", f.len(), z.len())?;
    if z.is_empty() {
        return Err(Error::numeric("mse of an empty trace"));
    }
    let sum: f64 = z.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / z.len() as f64)
}

/// Epochs (1-based) needed to reach `threshold`, linearly interpolated
/// between the last epoch above and the first at or below it. Returns
/// `None` if the threshold is never reached.
pub fn time_to_converge(per_epoch_mse: &[f64], threshold: f64, interpolate: bool) -> Result<Option<f64>> {
    if per_epoch_mse.is_empty() {
        return Err(Error::numeric("time_to_converge needs at least one epoch"));
    }
    if !(threshold > 0.0) {
        return Err(Error::config(format!("convergence threshold must be positive, got {threshold}")));
    }
    let Some(k) = per_epoch_mse.iter().position(|m| *m <= threshold) else {
        return Ok(None);
    };
    if k == 0 || !interpolate {
        return Ok(Some((k + 1) as f64));
    }
    let (prev, cur) = (per_epoch_mse[k - 1], per_epoch_mse[k]);
    let frac = (prev - threshold) / (prev - cur);
    Ok(Some(k as f64 + frac))
}

/// Spikes per neuron per second.
pub fn avg_spike_rate(spike_counts: &[u64], n_neurons: usize, duration: f64) -> Result<f64> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::numeric(format!("spike-rate duration must be positive, got {duration}")));
    }
    if n_neurons == 0 {
        return Err(Error::numeric("spike rate of an empty population"));
    }
    let total: u64 = spike_counts.iter().sum();
    Ok(total as f64 / (n_neurons as f64 * duration))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub mse: f64,
    /// `None` when the convergence threshold was never reached.
    pub ttc_epochs: Option<f64>,
    /// Hz per neuron.
    pub avg_spike_rate: f64,
    pub fingerprint: String,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        let f = Matrix::from_fn(100, 2, |i, c| (i as f64 * 0.1 + c as f64).sin());
        assert_eq!(mse(&f, &f).unwrap(), 0.0);
        let shifted = Matrix::from_fn(100, 2, |i, c| f.get(i, c) + 0.1);
        assert!((mse(&shifted, &f).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mse_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..10_000).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f: Vec<f64> = (0..10_000).map(|_| rng.random_range(-2.0..2.0)).collect();
        // first pass: squared residuals; second pass: compensated sum
        let sq: Vec<f64> = z.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).collect();
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for v in sq {
            let y = v - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        let oracle = sum / 10_000.0;
        assert!(((mse_slices(&z, &f).unwrap() - oracle) / oracle).abs() < 1e-12);
    }

    #[test]
    fn mse_errors() {
        assert!(mse_slices(&[], &[]).is_err());
        assert!(mse_slices(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&Matrix::zeros(3, 1), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn ttc_examples() {
        assert_eq!(time_to_converge(&[0.2, 0.1], 0.25, true).unwrap(), Some(1.0));
        assert_eq!(time_to_converge(&[0.5, 0.5, 0.5], 0.25, true).unwrap(), None);
        assert_eq!(time_to_converge(&[0.4, 0.1], 0.25, true).unwrap(), Some(1.5));
        assert_eq!(time_to_converge(&[0.4, 0.1], 0.25, false).unwrap(), Some(2.0));
        assert!(time_to_converge(&[], 0.25, true).is_err());
        assert!(time_to_converge(&[0.1], 0.0, true).is_err());
    }

    #[test]
    fn spike_rate_examples() {
        assert_eq!(avg_spike_rate(&[0; 10], 10, 5.0).unwrap(), 0.0);
        assert_eq!(avg_spike_rate(&[250_000], 1000, 5.0).unwrap(), 50.0);
        // 100 ms windows over 5 s: 50 windows, one spike per neuron each
        let counts = vec![50u64; 200];
        assert_eq!(avg_spike_rate(&counts, 200, 5.0).unwrap(), 10.0);
        assert!(avg_spike_rate(&counts, 200, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn mse_is_translation_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..200),
            c in -100.0f64..100.0,
        ) {
            let (z, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let zc: Vec<f64> = z.iter().map(|v| v + c).collect();
            let fc: Vec<f64> = f.iter().map(|v| v + c).collect();
            let a = mse_slices(&z, &f).unwrap();
            let b = mse_slices(&zc, &fc).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn ttc_is_monotone_in_threshold(
            curve in prop::collection::vec(0.0f64..1.0, 1..60),
            t1 in 0.01f64..1.0,
            t2 in 0.01f64..1.0,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = time_to_converge(&curve, lo, true).unwrap();
            let b = time_to_converge(&curve, hi, true).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => prop_assert!(b <= a + 1e-12),
                (Some(_), None) => prop_assert!(false, "larger threshold never reached"),
                _ => {}
            }
        }
    }
}
