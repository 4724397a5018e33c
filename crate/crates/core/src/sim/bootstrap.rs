//! Percentile bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_RESAMPLES: u32 = 10_000;

/// Percentile interval for the mean of `values`.
pub fn bootstrap_interval(values: &[f64], level: f64, resamples: u32, seed: u64) -> Result<(f64, f64)> {
    bootstrap_interval_with(values, level, resamples, seed, |xs| {
        xs.iter().sum::<f64>() / xs.len() as f64
    })
}

/// Percentile interval for an arbitrary statistic. Each resample draws
/// `values.len()` indices with replacement from a ChaCha8 stream seeded with
/// `seed`; quantiles interpolate linearly between order statistics.
pub fn bootstrap_interval_with<F>(
    values: &[f64],
    level: f64,
    resamples: u32,
    seed: u64,
    statistic: F,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if values.len() < 2 {
        return Err(Error::domain(format!(
            "bootstrap needs at least two values, got {}",
            values.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if resamples == 0 {
        return Err(Error::domain("need at least one bootstrap resample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("bootstrap input contains non-finite values".into()));
    }

    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = values[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);

    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&stats, tail), quantile(&stats, 1.0 - tail)))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sample() {
        let (lo, hi) = bootstrap_interval(&[2.5; 40], 0.95, 500, 1).unwrap();
        assert_eq!((lo, hi), (2.5, 2.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(bootstrap_interval(&[1.0], 0.95, 100, 1).is_err());
        assert!(bootstrap_interval(&[1.0, 2.0], 1.0, 100, 1).is_err());
        assert!(bootstrap_interval(&[1.0, 2.0], 0.0, 100, 1).is_err());
        assert!(bootstrap_interval(&[1.0, 2.0], 0.9, 0, 1).is_err());
        assert!(bootstrap_interval(&[1.0, f64::NAN], 0.9, 10, 1).is_err());
    }

    #[test]
    fn seeded_and_ordered() {
        let xs: Vec<f64> = (0..50).map(|i| f64::from(i % 7) * 0.3).collect();
        let a = bootstrap_interval(&xs, 0.9, 2_000, 42).unwrap();
        let b = bootstrap_interval(&xs, 0.9, 2_000, 42).unwrap();
        assert_eq!(a, b);
        let mean = xs.iter().sum::<f64>() / 50.0;
        assert!(a.0 < mean && mean < a.1);
        let wide = bootstrap_interval(&xs, 0.99, 2_000, 42).unwrap();
        assert!(wide.0 <= a.0 && wide.1 >= a.1);
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 3.0);
        assert_eq!(quantile(&s, 0.5), 1.5);
    }
}
