//! Stochastic simulation of the treatment and control systems.
//!
//! Paths are simulated event by event on the aggregate birth–death chain: from
//! queue length `i` the holding time is exponential with rate
//! `up(i) + down(i)` (inverse transform), and the jump is up with probability
//! `up(i) / (up(i) + down(i))`.
//!
//! # Random streams
//!
//! Every replication owns independent ChaCha8 streams. The generator is seeded
//! with `SimConfig::seed` and the stream id is
//!
//! ```text
//! stream = (replication_index << 32) | substream
//! ```
//!
//! where substream 0 drives the treatment system and substream `k >= 1` drives
//! control user `k`. Results therefore do not depend on thread count or on the
//! order in which replications are scheduled.

mod bootstrap;
mod validate;

pub use bootstrap::{bootstrap_interval, bootstrap_interval_with, DEFAULT_RESAMPLES};
pub use validate::{
    summarize, validate_against_clt, validate_against_clt_with, SimSummary, ValidationReport, ValidationRow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queueing::{
    down_unchecked, stationary_distribution, up_unchecked, ModelParams, StationaryDistribution,
    SystemSize,
};

/// How each replication chooses its starting queue length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialState {
    /// Start with exactly this many users in the undesired state.
    Fixed(u32),
    /// Draw the starting queue length from the stationary distribution.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon: f64,
    pub replications: u32,
    pub initial: InitialState,
    /// Ascending times in `(0, horizon]` at which time averages are reported.
    pub checkpoint_times: Vec<f64>,
}

impl SimConfig {
    /// Empty initial queue with a single checkpoint at the horizon.
    pub fn new(seed: u64, horizon: f64, replications: u32) -> Result<Self> {
        let cfg = Self {
            seed,
            horizon,
            replications,
            initial: InitialState::Fixed(0),
            checkpoint_times: vec![horizon],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_initial(mut self, initial: InitialState) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_checkpoints(mut self, times: Vec<f64>) -> Result<Self> {
        self.checkpoint_times = times;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.replications == 0 {
            return Err(Error::domain("need at least one replication"));
        }
        if self.checkpoint_times.is_empty() {
            return Err(Error::domain("need at least one checkpoint"));
        }
        let mut prev = 0.0;
        for &t in &self.checkpoint_times {
            if !(t > prev) {
                return Err(Error::domain(format!(
                    "checkpoints must be positive and strictly ascending, got {t} after {prev}"
                )));
            }
            prev = t;
        }
        if prev > self.horizon {
            return Err(Error::domain(format!(
                "last checkpoint {prev} exceeds horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_initial(&self, size: SystemSize) -> Result<()> {
        if let InitialState::Fixed(k) = self.initial {
            if k > size.users() {
                return Err(Error::domain(format!(
                    "initial queue {k} exceeds the {} users",
                    size.users()
                )));
            }
        }
        Ok(())
    }
}

/// Generator for one (replication, substream) pair.
pub fn stream_rng(seed: u64, replication_index: u32, substream: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(replication_index) << 32) | u64::from(substream));
    rng
}

/// Piecewise-constant queue-length trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    /// `times[0] = 0`; `times[k]` is the time of the `k`-th jump.
    times: Vec<f64>,
    /// `states[k]` is the queue length on `[times[k], times[k+1])`.
    states: Vec<u32>,
    horizon: f64,
    users: u32,
}

impl SamplePath {
    /// Builds a path from jump times and the states entered at them.
    pub fn from_parts(times: Vec<f64>, states: Vec<u32>, horizon: f64, users: u32) -> Result<Self> {
        if times.is_empty() || times.len() != states.len() || times[0] != 0.0 {
            return Err(Error::domain("a path needs matching times and states starting at t = 0"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) || *times.last().unwrap() > horizon {
            return Err(Error::domain("jump times must be ascending and within the horizon"));
        }
        if states.iter().any(|&s| s > users) {
            return Err(Error::domain("queue length exceeds the number of users"));
        }
        Ok(Self {
            times,
            states,
            horizon,
            users,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn users(&self) -> u32 {
        self.users
    }

    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::domain(format!(
                "time {t} outside the simulated window (0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Total time spent in each queue length over `[0, t]`, divided by `t`.
    pub fn occupancy(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut occ = vec![0.0; self.users as usize + 1];
        for (k, &start) in self.times.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = self.times.get(k + 1).copied().unwrap_or(self.horizon).min(t);
            occ[self.states[k] as usize] += end - start;
        }
        for x in &mut occ {
            *x /= t;
        }
        Ok(occ)
    }

    /// Time averages at several ascending times in one pass over the path.
    pub fn time_averages(&self, checkpoints: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut area = 0.0;
        let mut k = 0;
        for &t in checkpoints {
            self.check_time(t)?;
            // Whole segments that end by t.
            while k + 1 < self.times.len() && self.times[k + 1] <= t {
                area += f64::from(self.states[k]) * (self.times[k + 1] - self.times[k]);
                k += 1;
            }
            let partial = f64::from(self.states[k]) * (t - self.times[k]);
            out.push((area + partial) / t);
        }
        Ok(out)
    }
}

/// `(1/t) ∫_0^t X(s) ds`, exact for the piecewise-constant path.
pub fn time_average_queue(path: &SamplePath, t: f64) -> Result<f64> {
    Ok(path.time_averages(&[t])?[0])
}

fn draw_stationary(dist: &StationaryDistribution, rng: &mut impl Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &pj) in dist.probs().iter().enumerate() {
        acc += pj;
        if u < acc {
            return j as u32;
        }
    }
    // Rounding left u above the total mass; take the last state with mass.
    dist.probs().iter().rposition(|&pj| pj > 0.0).unwrap_or(0) as u32
}

fn run_chain(
    params: &ModelParams,
    size: SystemSize,
    start: u32,
    horizon: f64,
    rng: &mut impl Rng,
) -> SamplePath {
    let mut times = vec![0.0];
    let mut states = vec![start];
    let mut t = 0.0;
    let mut i = start;
    loop {
        let up = up_unchecked(i, params, size);
        let down = down_unchecked(i, params, size);
        let total = up + down;
        if total <= 0.0 {
            break;
        }
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / total;
        if t > horizon {
            break;
        }
        let v: f64 = rng.random();
        i = if v * total < up { i + 1 } else { i - 1 };
        times.push(t);
        states.push(i);
    }
    SamplePath {
        times,
        states,
        horizon,
        users: size.users(),
    }
}

fn start_state(
    initial: InitialState,
    dist: Option<&StationaryDistribution>,
    rng: &mut impl Rng,
) -> u32 {
    match (initial, dist) {
        (InitialState::Fixed(k), _) => k,
        (InitialState::Stationary, Some(d)) => draw_stationary(d, rng),
        (InitialState::Stationary, None) => unreachable!("stationary start needs a distribution"),
    }
}

/// One replication of the system `size` on `[0, config.horizon]`.
pub fn simulate_path(
    params: &ModelParams,
    size: SystemSize,
    config: &SimConfig,
    replication_index: u32,
) -> Result<SamplePath> {
    config.validate()?;
    config.check_initial(size)?;
    let dist = matches!(config.initial, InitialState::Stationary).then(|| stationary_distribution(params, size));
    Ok(simulate_with(params, size, config, replication_index, 0, dist.as_ref()))
}

fn simulate_with(
    params: &ModelParams,
    size: SystemSize,
    config: &SimConfig,
    replication_index: u32,
    substream: u32,
    dist: Option<&StationaryDistribution>,
) -> SamplePath {
    let mut rng = stream_rng(config.seed, replication_index, substream);
    let start = start_state(config.initial, dist, &mut rng);
    run_chain(params, size, start, config.horizon, &mut rng)
}

/// Time-averaged queue length of every replication at every checkpoint;
/// `result[rep][k]` belongs to `config.checkpoint_times[k]`.
pub fn simulate_time_averages(
    params: &ModelParams,
    size: SystemSize,
    config: &SimConfig,
) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    config.check_initial(size)?;
    let dist = matches!(config.initial, InitialState::Stationary).then(|| stationary_distribution(params, size));
    (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            simulate_with(params, size, config, rep, 0, dist.as_ref()).time_averages(&config.checkpoint_times)
        })
        .collect()
}

/// Per-replication values of the time-average estimator at `config.horizon`:
///
/// ```text
/// [1 - (1/T) ∫ X_treat / n1] - [1 - mean over control users of their undesired-time fraction]
/// ```
///
/// A fixed initial queue `k` starts `round(k n0 / n1)` control users in the
/// undesired state so both arms start from the same fraction.
pub fn simulate_estimator(
    params: &ModelParams,
    m1: u32,
    n1: u32,
    n0: u32,
    config: &SimConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if n0 == 0 {
        return Err(Error::domain("control group needs at least one user"));
    }
    let treat = SystemSize::new(m1, n1)?;
    config.check_initial(treat)?;
    let single = SystemSize::control(1)?;
    let (treat_dist, control_dist) = match config.initial {
        InitialState::Stationary => (
            Some(stationary_distribution(params, treat)),
            Some(stationary_distribution(params, single)),
        ),
        InitialState::Fixed(_) => (None, None),
    };
    let control_undesired_at_start = match config.initial {
        InitialState::Fixed(k) => ((f64::from(k) * f64::from(n0)) / f64::from(n1)).round() as u32,
        InitialState::Stationary => 0,
    };
    let horizon = config.horizon;

    (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(config.seed, rep, 0);
            let start = start_state(config.initial, treat_dist.as_ref(), &mut rng);
            let path = run_chain(params, treat, start, horizon, &mut rng);
            let treat_avg = time_average_queue(&path, horizon)? / f64::from(n1);

            let mut control_sum = 0.0;
            for user in 0..n0 {
                let mut rng = stream_rng(config.seed, rep, user + 1);
                let start = match config.initial {
                    InitialState::Fixed(_) => u32::from(user < control_undesired_at_start),
                    InitialState::Stationary => draw_stationary(control_dist.as_ref().unwrap(), &mut rng),
                };
                let path = run_chain(params, single, start, horizon, &mut rng);
                control_sum += time_average_queue(&path, horizon)?;
            }
            let control_avg = control_sum / f64::from(n0);
            Ok((1.0 - treat_avg) - (1.0 - control_avg))
        })
        .collect()
}
