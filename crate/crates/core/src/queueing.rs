//! Exact analytics for the closed birth–death queue.
//!
//! `N` users alternate between a desired state and an undesired state. A user
//! in the undesired state joins a first-come-first-served queue attended by
//! `M` servers; service succeeds with probability `p`, and users also recover
//! on their own at rate `tau`. The queue length `X(t)` (users currently in the
//! undesired state) is a birth–death chain on `0..=N` with
//!
//! ```text
//! up(i)   = (N - i) * lambda
//! down(i) = min(i, M) * mu * p + i * tau
//! ```
//!
//! `M = 0` is a valid system: it describes the control group, where nobody is
//! served and every user is an independent two-state chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width constant of the QED band used by [`classify_regime`]; the band is
/// `REGIME_GAMMA * sqrt(N)` servers around the offered load.
pub const REGIME_GAMMA: f64 = 0.5;

/// Behavioral rates of a single user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    lambda: f64,
    tau: f64,
    mu: f64,
    p: f64,
}

impl ModelParams {
    /// * `lambda` - rate of leaving the desired state, `> 0`
    /// * `tau` - unassisted recovery rate, `>= 0`
    /// * `mu` - per-server service rate, `> 0`
    /// * `p` - probability that a completed service restores the user, in `[0, 1]`
    pub fn new(lambda: f64, tau: f64, mu: f64, p: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain(format!("lambda must be finite and > 0, got {lambda}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::domain(format!("tau must be finite and >= 0, got {tau}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::domain(format!("mu must be finite and > 0, got {mu}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self { lambda, tau, mu, p })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Effective per-server restoration rate `mu * p`.
    pub fn effective_service(&self) -> f64 {
        self.mu * self.p
    }

    /// Long-run fraction of time an unserved user spends in the undesired
    /// state, `lambda / (lambda + tau)`.
    pub fn unserved_undesired_fraction(&self) -> f64 {
        self.lambda / (self.lambda + self.tau)
    }

    /// Same parameters with one rate replaced; used by parameter sweeps.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.tau, self.mu, self.p)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.lambda, tau, self.mu, self.p)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.lambda, self.tau, mu, self.p)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.lambda, self.tau, self.mu, p)
    }
}

/// A closed system with `servers` servers and `users` users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemSize {
    servers: u32,
    users: u32,
}

impl SystemSize {
    pub fn new(servers: u32, users: u32) -> Result<Self> {
        if users == 0 {
            return Err(Error::domain("a system needs at least one user"));
        }
        Ok(Self { servers, users })
    }

    /// The unserved system with `users` independent users.
    pub fn control(users: u32) -> Result<Self> {
        Self::new(0, users)
    }

    pub fn servers(&self) -> u32 {
        self.servers
    }

    pub fn users(&self) -> u32 {
        self.users
    }

    /// Servers per user, `M / N`.
    pub fn ratio(&self) -> f64 {
        f64::from(self.servers) / f64::from(self.users)
    }
}

fn check_state(i: u32, size: SystemSize) -> Result<()> {
    if i > size.users {
        return Err(Error::domain(format!(
            "queue length {i} outside 0..={}",
            size.users
        )));
    }
    Ok(())
}

// Rate helpers used once the state has been range-checked.
pub(crate) fn up_unchecked(i: u32, params: &ModelParams, size: SystemSize) -> f64 {
    f64::from(size.users - i) * params.lambda
}

pub(crate) fn down_unchecked(i: u32, params: &ModelParams, size: SystemSize) -> f64 {
    let busy = i.min(size.servers);
    f64::from(busy) * params.effective_service() + f64::from(i) * params.tau
}

/// Rate at which the queue grows from length `i`: `(N - i) * lambda`.
pub fn rate_up(i: u32, params: &ModelParams, size: SystemSize) -> Result<f64> {
    check_state(i, size)?;
    Ok(up_unchecked(i, params, size))
}

/// Rate at which the queue shrinks from length `i`:
/// `i*mu*p + i*tau` while every waiting user has a server, `M*mu*p + i*tau` otherwise.
pub fn rate_down(i: u32, params: &ModelParams, size: SystemSize) -> Result<f64> {
    check_state(i, size)?;
    Ok(down_unchecked(i, params, size))
}

/// Steady-state law of the queue length over `0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
    params: ModelParams,
    size: SystemSize,
}

impl StationaryDistribution {
    /// `probs()[j]` is the stationary probability of queue length `j`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn size(&self) -> SystemSize {
        self.size
    }

    /// Expected queue length `sum_j j * pi(j)`.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| j as f64 * pj)
            .sum()
    }

    /// Index of the most likely queue length (the first one on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (j, &pj) in self.probs.iter().enumerate() {
            if pj > self.probs[best] {
                best = j;
            }
        }
        best
    }

    /// Largest relative violation of `pi(j) up(j) = pi(j+1) down(j+1)` over all `j`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.size.users {
            let lhs = self.probs[j as usize] * up_unchecked(j, &self.params, self.size);
            let rhs = self.probs[j as usize + 1] * down_unchecked(j + 1, &self.params, self.size);
            let scale = lhs.abs().max(rhs.abs());
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).abs() / scale);
            }
        }
        worst
    }
}

/// Builds `pi` from the ratio recursion `pi(j) = pi(j-1) up(j-1) / down(j)`.
///
/// The recursion runs on logarithms and is normalized after subtracting the
/// running maximum, so systems with tens of thousands of users neither
/// overflow nor lose the bulk of the mass to underflow.
pub fn stationary_distribution(params: &ModelParams, size: SystemSize) -> StationaryDistribution {
    let n = size.users as usize;
    let mut probs = vec![0.0; n + 1];

    // Without any way down the chain is absorbed at N.
    if down_unchecked(1, params, size) == 0.0 {
        probs[n] = 1.0;
        return StationaryDistribution {
            probs,
            params: *params,
            size,
        };
    }

    let mut log_w = Vec::with_capacity(n + 1);
    log_w.push(0.0_f64);
    for j in 1..=size.users {
        let prev = log_w[j as usize - 1];
        let step = up_unchecked(j - 1, params, size).ln() - down_unchecked(j, params, size).ln();
        log_w.push(prev + step);
    }
    let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (slot, lw) in probs.iter_mut().zip(&log_w) {
        *slot = (lw - peak).exp();
        total += *slot;
    }
    for slot in &mut probs {
        *slot /= total;
    }
    StationaryDistribution {
        probs,
        params: *params,
        size,
    }
}

/// Steady-state expected queue length `K̄_{M,N}`.
pub fn mean_queue_length(dist: &StationaryDistribution) -> f64 {
    dist.mean()
}

/// `r = lambda / (lambda + tau + mu p)`: the servers-per-user ratio separating
/// congested from uncongested large systems.
pub fn critical_ratio(params: &ModelParams) -> f64 {
    params.lambda / (params.lambda + params.tau + params.effective_service())
}

/// Expected number of users in the undesired state with unlimited servers, `r N`.
pub fn offered_load(params: &ModelParams, users: u32) -> Result<f64> {
    if users == 0 {
        return Err(Error::domain("offered load needs at least one user"));
    }
    Ok(critical_ratio(params) * f64::from(users))
}

/// `ceil(r N + gamma sqrt(N))`, with a small absolute slack so that values that
/// are integers up to rounding error are not bumped to the next integer.
pub(crate) fn staffing_level(r: f64, users: u32, gamma: f64) -> u32 {
    let n = f64::from(users);
    let target = r * n + gamma * n.sqrt();
    (target - 1e-9).ceil().max(0.0) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    EfficiencyDriven,
    QualityDriven,
    QualityEfficiencyDriven,
}

impl RegimeLabel {
    pub fn short_name(&self) -> &'static str {
        match self {
            RegimeLabel::EfficiencyDriven => "ED",
            RegimeLabel::QualityDriven => "QD",
            RegimeLabel::QualityEfficiencyDriven => "QED",
        }
    }

    /// Large-system label from the servers-per-user ratio alone: above the
    /// critical ratio the fluid model never queues, below it the servers
    /// saturate.
    pub fn from_ratio(ratio: f64, critical_ratio: f64) -> Self {
        if ratio > critical_ratio {
            RegimeLabel::QualityDriven
        } else if ratio < critical_ratio {
            RegimeLabel::EfficiencyDriven
        } else {
            RegimeLabel::QualityEfficiencyDriven
        }
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Finite-system regime with the default band constant [`REGIME_GAMMA`].
pub fn classify_regime(params: &ModelParams, size: SystemSize) -> RegimeLabel {
    classify_regime_with(params, size, REGIME_GAMMA)
}

/// QED covers `rN - gamma sqrt(N) <= M <= ceil(rN + gamma sqrt(N))`; fewer
/// servers is ED, more is QD. The upper edge is the square-root staffing level
/// itself, so a system staffed by that rule is always QED.
pub fn classify_regime_with(params: &ModelParams, size: SystemSize, gamma: f64) -> RegimeLabel {
    let r = critical_ratio(params);
    let n = f64::from(size.users);
    let m = size.servers;
    let lower = r * n - gamma * n.sqrt();
    if m > staffing_level(r, size.users, gamma) {
        RegimeLabel::QualityDriven
    } else if f64::from(m) < lower {
        RegimeLabel::EfficiencyDriven
    } else {
        RegimeLabel::QualityEfficiencyDriven
    }
}
