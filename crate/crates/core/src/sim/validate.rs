//! Comparison of simulated time averages with the analytic approximations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_interval, bootstrap_interval_with, DEFAULT_RESAMPLES};
use super::{simulate_time_averages, SimConfig};
use crate::error::{Error, Result};
use crate::estimator::queue_length_asymptotic_variance;
use crate::fluid::approx_queue_length;
use crate::queueing::{stationary_distribution, ModelParams, SystemSize};

/// Replication summary with a percentile bootstrap interval for the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub mean: f64,
    /// Unbiased sample variance across replications.
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub replications: usize,
}

pub fn summarize(values: &[f64], level: f64, resamples: u32, seed: u64) -> Result<SimSummary> {
    let (lo, hi) = bootstrap_interval(values, level, resamples, seed)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Floating-point summation order can put the mean a hair outside the
    // percentile range on near-degenerate samples.
    Ok(SimSummary {
        mean,
        variance: sample_variance(values),
        ci_low: lo.min(mean),
        ci_high: hi.max(mean),
        level,
        replications: values.len(),
    })
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub time: f64,
    /// Time-averaged queue length across replications.
    pub sim: SimSummary,
    /// Bootstrap interval for the variance across replications.
    pub variance_ci: (f64, f64),
    /// Stationary mean queue length.
    pub clt_mean: f64,
    /// Asymptotic variance divided by the checkpoint time.
    pub clt_variance: f64,
    /// `N z*` from the fluid limit.
    pub fluid_mean: f64,
    pub clt_mean_covered: bool,
    pub clt_variance_covered: bool,
    pub fluid_mean_covered: bool,
    /// `(t * simulated variance - asymptotic variance) / asymptotic variance`.
    pub scaled_variance_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub params: ModelParams,
    pub size: SystemSize,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn all_means_covered(&self) -> bool {
        self.rows.iter().all(|r| r.clt_mean_covered)
    }
}

/// Simulates `config.replications` paths of `size` and compares the time
/// averages at each checkpoint with the stationary mean, the asymptotic
/// variance and the fluid estimate, using 95% bootstrap intervals.
pub fn validate_against_clt(
    params: &ModelParams,
    size: SystemSize,
    config: &SimConfig,
) -> Result<ValidationReport> {
    validate_against_clt_with(params, size, config, 0.95, DEFAULT_RESAMPLES)
}

pub fn validate_against_clt_with(
    params: &ModelParams,
    size: SystemSize,
    config: &SimConfig,
    level: f64,
    resamples: u32,
) -> Result<ValidationReport> {
    if config.replications < 2 {
        return Err(Error::domain("validation needs at least two replications"));
    }
    let per_rep = simulate_time_averages(params, size, config)?;
    let dist = stationary_distribution(params, size);
    let clt_mean = dist.mean();
    let asy_var = queue_length_asymptotic_variance(&dist);
    let fluid_mean = approx_queue_length(params, size);

    // Checkpoints carry their own bootstrap seeds, so they can be summarized
    // in parallel without changing the result.
    let rows = config
        .checkpoint_times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let values: Vec<f64> = per_rep.iter().map(|rep| rep[k]).collect();
            let seed = bootstrap_seed(config.seed, k as u64);
            let sim = summarize(&values, level, resamples, seed)?;
            let variance_ci = bootstrap_interval_with(&values, level, resamples, seed ^ 1, sample_variance)?;
            let clt_variance = asy_var / t;
            let covers = |lo: f64, hi: f64, x: f64| lo <= x && x <= hi;
            Ok(ValidationRow {
                time: t,
                sim,
                variance_ci,
                clt_mean,
                clt_variance,
                fluid_mean,
                clt_mean_covered: covers(sim.ci_low, sim.ci_high, clt_mean),
                clt_variance_covered: covers(variance_ci.0, variance_ci.1, clt_variance),
                fluid_mean_covered: covers(sim.ci_low, sim.ci_high, fluid_mean),
                scaled_variance_error: if asy_var > 0.0 {
                    (t * sim.variance - asy_var) / asy_var
                } else {
                    0.0
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport {
        params: *params,
        size,
        rows,
    })
}

fn bootstrap_seed(seed: u64, checkpoint: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(checkpoint << 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_contains_mean() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let s = summarize(&xs, 0.9, 1_000, 5).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
        assert_eq!(s.replications, 4);
    }

    #[test]
    fn report_shape() {
        let p = ModelParams::new(0.4, 0.35, 3.0, 0.1).unwrap();
        let size = SystemSize::new(2, 6).unwrap();
        let cfg = SimConfig::new(3, 40.0, 40)
            .unwrap()
            .with_checkpoints(vec![10.0, 40.0])
            .unwrap();
        let rep = validate_against_clt_with(&p, size, &cfg, 0.95, 500).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!((rep.rows[1].clt_variance * 4.0 - rep.rows[0].clt_variance).abs() < 1e-12);
        let one = SimConfig::new(3, 40.0, 1).unwrap();
        assert!(validate_against_clt(&p, size, &one).is_err());
    }
}
