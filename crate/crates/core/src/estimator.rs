//! Moments of the difference-in-means estimator.
//!
//! The treatment group is the closed queue with `M1` servers and `N1` users;
//! the control group is `N0` independent unserved two-state users. Group
//! outcomes are long-run fractions of time in the desired state, and
//! `asy_variance` is the limit of `T * Var` of the group's time average.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluid::{fluid_effect, ServerRatio};
use crate::queueing::{
    down_unchecked, stationary_distribution, up_unchecked, ModelParams, StationaryDistribution,
    SystemSize,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMoments {
    /// Steady-state fraction of time in the desired state.
    pub mean: f64,
    /// `lim T * Var(group time average)`, before dividing by the horizon.
    pub asy_variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMoments {
    /// Steady-state treatment effect `theta_ss(M1, N1)`.
    pub effect: f64,
    /// Approximate variance of the estimator at the horizon, `(s1 + s0) / T`.
    pub variance_at_t: f64,
    pub horizon: f64,
    pub treatment: GroupMoments,
    pub control: GroupMoments,
}

/// Asymptotic variance `lim T * Var((1/T) ∫ X dt)` of the time-averaged queue
/// length, by the birth–death formula
///
/// ```text
/// 2 * sum_{j<N} [ sum_{i<=j} (i - K̄) pi(i) ]^2 / (up(j) pi(j))
/// ```
///
/// The bracket is a partial sum of a zero-mean sequence, so it is tracked as a
/// ratio to `pi(j)`: left of the mode from the bottom of the chain, right of
/// the mode from the top. Both recursions only multiply by ratios of rates that
/// are below one on their side of the mode, which keeps the deep tails free of
/// cancellation and underflow.
pub fn queue_length_asymptotic_variance(dist: &StationaryDistribution) -> f64 {
    let params = dist.params();
    let size = dist.size();
    let n = size.users();
    let probs = dist.probs();
    if down_unchecked(1, params, size) == 0.0 {
        // Absorbed at N: the time average is eventually constant.
        return 0.0;
    }
    let k_bar = dist.mean();
    let mode = (dist.mode() as u32).min(n - 1);

    let mut total = 0.0;

    // a_j = c_j / pi(j), c_j = sum_{i<=j} (i - K̄) pi(i)
    let mut a = 0.0;
    for j in 0..mode {
        if j > 0 {
            a *= down_unchecked(j, params, size) / up_unchecked(j - 1, params, size);
        }
        a += f64::from(j) - k_bar;
        total += a * a * probs[j as usize] / up_unchecked(j, params, size);
    }

    // b_j = c_j / pi(j) = -sum_{i>j} (i - K̄) pi(i) / pi(j)
    let mut b = 0.0;
    for j in (mode..n).rev() {
        b = (b - (f64::from(j + 1) - k_bar)) * up_unchecked(j, params, size)
            / down_unchecked(j + 1, params, size);
        total += b * b * probs[j as usize] / up_unchecked(j, params, size);
    }

    2.0 * total
}

/// Control group of `n0` independent unserved users.
pub fn control_moments(params: &ModelParams, n0: u32) -> Result<GroupMoments> {
    if n0 == 0 {
        return Err(Error::domain("control group needs at least one user"));
    }
    let (l, t) = (params.lambda(), params.tau());
    let s = l + t;
    Ok(GroupMoments {
        mean: t / s,
        asy_variance: 2.0 * l * t / (s * s * s) / f64::from(n0),
    })
}

/// Treatment group of `n1` users sharing `m1` servers.
pub fn treatment_moments(params: &ModelParams, m1: u32, n1: u32) -> Result<GroupMoments> {
    let size = SystemSize::new(m1, n1)?;
    let dist = stationary_distribution(params, size);
    Ok(treatment_moments_from(&dist))
}

pub(crate) fn treatment_moments_from(dist: &StationaryDistribution) -> GroupMoments {
    let n = f64::from(dist.size().users());
    GroupMoments {
        mean: 1.0 - dist.mean() / n,
        asy_variance: queue_length_asymptotic_variance(dist) / (n * n),
    }
}

/// `theta_ss(M1, N1) = [1 - K̄_{M1,N1} / N1] - tau / (lambda + tau)`.
pub fn steady_state_effect(params: &ModelParams, m1: u32, n1: u32) -> Result<f64> {
    let size = SystemSize::new(m1, n1)?;
    let dist = stationary_distribution(params, size);
    let treated = 1.0 - dist.mean() / f64::from(n1);
    Ok(treated - params.tau() / (params.lambda() + params.tau()))
}

pub fn estimator_moments(
    params: &ModelParams,
    m1: u32,
    n1: u32,
    n0: u32,
    horizon: f64,
) -> Result<EstimatorMoments> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    let treatment = treatment_moments(params, m1, n1)?;
    let control = control_moments(params, n0)?;
    Ok(EstimatorMoments {
        effect: treatment.mean - control.mean,
        variance_at_t: (treatment.asy_variance + control.asy_variance) / horizon,
        horizon,
        treatment,
        control,
    })
}

/// Large-system bias `theta*(experiment) - theta*(deployment)` of an effect
/// measured at one servers-per-user ratio and deployed at another.
///
/// Positive values mean the experiment overstates the deployed effect. The
/// bias vanishes when both ratios are at or above the critical ratio, where
/// the fluid effect has reached its plateau.
pub fn scale_up_bias(
    params: &ModelParams,
    experiment_ratio: f64,
    deployment_ratio: f64,
) -> Result<f64> {
    let at_experiment = fluid_effect(ServerRatio::new(experiment_ratio)?, params);
    let at_deployment = fluid_effect(ServerRatio::new(deployment_ratio)?, params);
    Ok(at_experiment - at_deployment)
}
