//! Power of the one-sided z-test and the three pilot-to-trial design policies.
//!
//! Every policy searches for the smallest balanced design `N1 = N0` whose
//! power, as the policy believes it to be, reaches the target. The returned
//! [`DesignTriple`] always reports the power computed from the exact
//! steady-state effect and CLT variances, whatever the policy assumed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{control_moments, estimator_moments, treatment_moments};
use crate::queueing::{critical_ratio, staffing_level, ModelParams};

/// Staffing buffer constant of the square-root rule.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Largest `N1` any policy will consider.
pub const DEFAULT_SEARCH_CAP: u32 = 10_000;
/// Grid spacing used by the square-root policy when anchored at a pilot.
pub const DEFAULT_SQRT_STEP: u32 = 4;

fn std_normal() -> Normal {
    Normal::standard()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    alpha: f64,
    beta: f64,
    horizon: f64,
}

impl TestConfig {
    /// Significance `alpha`, target power `beta` (`0 < alpha < beta < 1`) and
    /// trial length `horizon`.
    pub fn new(alpha: f64, beta: f64, horizon: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < beta && beta < 1.0) {
            return Err(Error::domain(format!(
                "need 0 < alpha < beta < 1, got alpha = {alpha}, beta = {beta}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { alpha, beta, horizon })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// `1 - Phi(z_{1-alpha} - mde / sqrt(v_t + v_c))` for estimator variances
/// `v_t`, `v_c` (already divided by the horizon).
pub fn power_at_mde(variance_treat: f64, variance_control: f64, mde: f64, alpha: f64) -> Result<f64> {
    if !(variance_treat >= 0.0 && variance_control >= 0.0) {
        return Err(Error::domain("variances must be nonnegative"));
    }
    let total = variance_treat + variance_control;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::domain(format!("total variance must be positive and finite, got {total}")));
    }
    if !(mde.is_finite() && mde >= 0.0) {
        return Err(Error::domain(format!("mde must be >= 0, got {mde}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = std_normal();
    let critical = z.inverse_cdf(1.0 - alpha);
    Ok(z.cdf(mde / total.sqrt() - critical))
}

/// Power to detect the design's own steady-state effect.
pub fn power_at_true_effect(
    params: &ModelParams,
    m1: u32,
    n1: u32,
    n0: u32,
    config: &TestConfig,
) -> Result<f64> {
    let moments = estimator_moments(params, m1, n1, n0, config.horizon)?;
    let t = config.horizon;
    power_at_mde(
        moments.treatment.asy_variance / t,
        moments.control.asy_variance / t,
        moments.effect.max(0.0),
        config.alpha,
    )
}

/// A pilot trial together with oracle knowledge of its effect and CLT variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotStudy {
    params: ModelParams,
    m1: u32,
    n1: u32,
    n0: u32,
    effect: f64,
    treat_variance: f64,
    control_variance: f64,
}

impl PilotStudy {
    pub fn new(params: ModelParams, m1: u32, n1: u32, n0: u32) -> Result<Self> {
        let treatment = treatment_moments(&params, m1, n1)?;
        let control = control_moments(&params, n0)?;
        Ok(Self {
            params,
            m1,
            n1,
            n0,
            effect: treatment.mean - control.mean,
            treat_variance: treatment.asy_variance,
            control_variance: control.asy_variance,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn m1(&self) -> u32 {
        self.m1
    }

    pub fn n1(&self) -> u32 {
        self.n1
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    /// Oracle steady-state effect of the pilot.
    pub fn effect(&self) -> f64 {
        self.effect
    }

    /// Oracle treatment-group asymptotic variance (not divided by the horizon).
    pub fn treat_variance(&self) -> f64 {
        self.treat_variance
    }

    /// Oracle control-group asymptotic variance (not divided by the horizon).
    pub fn control_variance(&self) -> f64 {
        self.control_variance
    }

    /// Power of the pilot itself at its own effect.
    pub fn power(&self, config: &TestConfig) -> Result<f64> {
        let t = config.horizon;
        power_at_mde(
            self.treat_variance / t,
            self.control_variance / t,
            self.effect.max(0.0),
            config.alpha,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyTag {
    NaiveNoScaleUp,
    NaiveProportional,
    SqrtStaffing,
}

impl PolicyTag {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyTag::NaiveNoScaleUp => "NaiveNoScaleUp",
            PolicyTag::NaiveProportional => "NaiveProportional",
            PolicyTag::SqrtStaffing => "SqrtStaffing",
        }
    }
}

impl std::fmt::Display for PolicyTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A balanced full-trial design and its honestly evaluated power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignTriple {
    pub m1: u32,
    pub n1: u32,
    pub n0: u32,
    pub achieved_power: f64,
    pub policy: PolicyTag,
}

impl DesignTriple {
    fn evaluate(params: &ModelParams, m1: u32, n: u32, config: &TestConfig, policy: PolicyTag) -> Result<Self> {
        Ok(Self {
            m1,
            n1: n,
            n0: n,
            achieved_power: power_at_true_effect(params, m1, n, n, config)?,
            policy,
        })
    }
}

/// Candidate group sizes `start, start + step, ...` up to `cap` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub start: u32,
    pub step: u32,
    pub cap: u32,
}

impl SearchGrid {
    pub fn new(start: u32, step: u32, cap: u32) -> Result<Self> {
        if start == 0 || step == 0 {
            return Err(Error::domain("search grid needs start >= 1 and step >= 1"));
        }
        if cap < start {
            return Err(Error::domain(format!("search cap {cap} is below the start {start}")));
        }
        Ok(Self { start, step, cap })
    }

    /// Every integer from the pilot's treatment-group size upward.
    pub fn from_pilot(pilot: &PilotStudy) -> Self {
        Self {
            start: pilot.n1,
            step: 1,
            cap: DEFAULT_SEARCH_CAP.max(pilot.n1),
        }
    }

    /// The square-root policy's default grid: anchored at the pilot's
    /// treatment-group size with spacing [`DEFAULT_SQRT_STEP`].
    pub fn sqrt_default(pilot: &PilotStudy) -> Self {
        Self {
            start: pilot.n1,
            step: DEFAULT_SQRT_STEP,
            cap: DEFAULT_SEARCH_CAP.max(pilot.n1),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> {
        (self.start..=self.cap).step_by(self.step as usize)
    }

    fn first_feasible(&self, target: f64, mut power: impl FnMut(u32) -> Result<f64>) -> Result<u32> {
        for n in self.iter() {
            if power(n)? >= target {
                return Ok(n);
            }
        }
        Err(Error::SearchExhausted {
            cap: self.cap,
            target,
        })
    }
}

/// Group size the naive experimenter settles on: the pilot effect is taken as
/// fixed and both group variances are assumed to shrink like `1 / N`.
fn naive_group_size(pilot: &PilotStudy, config: &TestConfig, grid: SearchGrid) -> Result<u32> {
    let t = config.horizon;
    let mde = pilot.effect.max(0.0);
    grid.first_feasible(config.beta, |n| {
        let n = f64::from(n);
        let f = pilot.treat_variance * f64::from(pilot.n1) / (n * t);
        let g = pilot.control_variance * f64::from(pilot.n0) / (n * t);
        power_at_mde(f, g, mde, config.alpha)
    })
}

/// Keeps the pilot's servers and scales users under the naive assumptions.
pub fn naive_no_scaleup(pilot: &PilotStudy, config: &TestConfig) -> Result<DesignTriple> {
    naive_no_scaleup_on(pilot, config, SearchGrid::from_pilot(pilot))
}

pub fn naive_no_scaleup_on(pilot: &PilotStudy, config: &TestConfig, grid: SearchGrid) -> Result<DesignTriple> {
    let n = naive_group_size(pilot, config, grid)?;
    DesignTriple::evaluate(&pilot.params, pilot.m1, n, config, PolicyTag::NaiveNoScaleUp)
}

/// Same group size as [`naive_no_scaleup`], with servers scaled in proportion:
/// `ceil(M1p * N1 / N1p)`.
pub fn naive_proportional(pilot: &PilotStudy, config: &TestConfig) -> Result<DesignTriple> {
    naive_proportional_on(pilot, config, SearchGrid::from_pilot(pilot))
}

pub fn naive_proportional_on(pilot: &PilotStudy, config: &TestConfig, grid: SearchGrid) -> Result<DesignTriple> {
    let n = naive_group_size(pilot, config, grid)?;
    let scaled = (u64::from(pilot.m1) * u64::from(n)).div_ceil(u64::from(pilot.n1));
    let m1 = u32::try_from(scaled).map_err(|_| Error::Numeric(format!("server count {scaled} overflows")))?;
    DesignTriple::evaluate(&pilot.params, m1, n, config, PolicyTag::NaiveProportional)
}

/// Square-root staffing level `ceil(r N1 + gamma sqrt(N1))`.
pub fn sqrt_staffing(n1: u32, params: &ModelParams, gamma: f64) -> Result<u32> {
    if n1 == 0 {
        return Err(Error::domain("staffing needs at least one user"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::domain(format!("gamma must be >= 0, got {gamma}")));
    }
    Ok(staffing_level(critical_ratio(params), n1, gamma))
}

/// Queueing-informed policy on the default grid for `pilot`.
pub fn sqrt_policy(pilot: &PilotStudy, config: &TestConfig, gamma: f64) -> Result<DesignTriple> {
    sqrt_policy_on(&pilot.params, config, gamma, SearchGrid::sqrt_default(pilot))
}

/// First `N1` on `grid` whose square-root staffed design reaches the target
/// power under the exact effect and CLT variances.
pub fn sqrt_policy_on(
    params: &ModelParams,
    config: &TestConfig,
    gamma: f64,
    grid: SearchGrid,
) -> Result<DesignTriple> {
    let n = grid.first_feasible(config.beta, |n| {
        let m1 = sqrt_staffing(n, params, gamma)?;
        power_at_true_effect(params, m1, n, n, config)
    })?;
    let m1 = sqrt_staffing(n, params, gamma)?;
    DesignTriple::evaluate(params, m1, n, config, PolicyTag::SqrtStaffing)
}

/// Even total sizes `min, min + step, ..., <= max` with `N1 = N0 = N / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvenRange {
    pub min: u32,
    pub max: u32,
    pub step: u32,
}

impl EvenRange {
    pub fn new(min: u32, max: u32, step: u32) -> Result<Self> {
        if min < 2 || !min.is_multiple_of(2) {
            return Err(Error::domain(format!("sweep start must be an even N >= 2, got {min}")));
        }
        if step == 0 || !step.is_multiple_of(2) {
            return Err(Error::domain(format!("sweep step must be a positive even number, got {step}")));
        }
        if max < min {
            return Err(Error::domain(format!("empty sweep range {min}..={max}")));
        }
        Ok(Self { min, max, step })
    }

    pub fn values(&self) -> Vec<u32> {
        (self.min..=self.max).step_by(self.step as usize).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    /// Total users `N = N1 + N0`.
    pub n: u32,
    pub n1: u32,
    pub effect: f64,
    /// Treatment and control variance contributions at the horizon.
    pub var_treat: f64,
    pub var_control: f64,
    pub power: f64,
}

impl PowerPoint {
    /// Effect divided by the estimator's standard error.
    pub fn normalized_effect(&self) -> f64 {
        self.effect / (self.var_treat + self.var_control).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub m1: u32,
    pub points: Vec<PowerPoint>,
    /// Index into `points` of the (first) power maximizer.
    pub argmax: usize,
}

impl PowerSweep {
    pub fn best(&self) -> &PowerPoint {
        &self.points[self.argmax]
    }

    /// Whether the maximum power strictly exceeds the power at both ends.
    pub fn has_interior_max(&self) -> bool {
        let best = self.best().power;
        let first = self.points.first().map_or(best, |p| p.power);
        let last = self.points.last().map_or(best, |p| p.power);
        best > first && best > last
    }
}

/// Power at the true effect across balanced designs with `m1` fixed servers.
/// Points are evaluated in parallel and returned in `N` order.
pub fn optimal_n_sweep(
    m1: u32,
    params: &ModelParams,
    config: &TestConfig,
    range: EvenRange,
) -> Result<PowerSweep> {
    let t = config.horizon;
    let points = range
        .values()
        .into_par_iter()
        .map(|n| {
            let n1 = n / 2;
            let m = estimator_moments(params, m1, n1, n1, t)?;
            let var_treat = m.treatment.asy_variance / t;
            let var_control = m.control.asy_variance / t;
            Ok(PowerPoint {
                n,
                n1,
                effect: m.effect,
                var_treat,
                var_control,
                power: power_at_mde(var_treat, var_control, m.effect.max(0.0), config.alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmax = 0;
    for (i, pt) in points.iter().enumerate() {
        if pt.power > points[argmax].power {
            argmax = i;
        }
    }
    Ok(PowerSweep { m1, points, argmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn staffed() -> ModelParams {
        ModelParams::new(0.4, 0.35, 3.0, 0.1).unwrap()
    }

    fn cfg() -> TestConfig {
        TestConfig::new(0.05, 0.8, 10.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TestConfig::new(0.05, 0.8, 10.0).is_ok());
        assert!(TestConfig::new(0.8, 0.05, 10.0).is_err());
        assert!(TestConfig::new(0.0, 0.8, 10.0).is_err());
        assert!(TestConfig::new(0.05, 1.0, 10.0).is_err());
        assert!(TestConfig::new(0.05, 0.8, 0.0).is_err());
    }

    #[test]
    fn power_boundaries() {
        for alpha in [0.01, 0.05, 0.1] {
            assert!((power_at_mde(0.3, 0.2, 0.0, alpha).unwrap() - alpha).abs() < 1e-9);
        }
        assert!(power_at_mde(0.01, 0.01, 50.0, 0.05).unwrap() > 1.0 - 1e-12);
        let v: f64 = 0.02 + 0.03;
        let mde = Normal::standard().inverse_cdf(0.95) * v.sqrt();
        assert_relative_eq!(power_at_mde(0.02, 0.03, mde, 0.05).unwrap(), 0.5, epsilon = 1e-12);
        assert!(power_at_mde(0.0, 0.0, 0.1, 0.05).is_err());
        assert!(power_at_mde(-0.1, 0.2, 0.1, 0.05).is_err());
        assert!(power_at_mde(0.1, 0.2, -0.1, 0.05).is_err());
    }

    #[test]
    fn no_servers_gives_test_size() {
        let p = power_at_true_effect(&staffed(), 0, 20, 20, &cfg()).unwrap();
        assert!((p - 0.05).abs() < 1e-9);
    }

    #[test]
    fn staffing_examples() {
        let p = staffed();
        assert_eq!(sqrt_staffing(34, &p, 0.5).unwrap(), 16);
        assert_eq!(sqrt_staffing(33, &p, 0.5).unwrap(), 16);
        assert_eq!(sqrt_staffing(32, &p, 0.5).unwrap(), 16);
        assert_eq!(sqrt_staffing(31, &p, 0.5).unwrap(), 15);
        // r = 0.25 exactly: 0.25 * 8 = 2 must not round up.
        let q = ModelParams::new(0.25, 0.25, 1.0, 0.5).unwrap();
        assert_eq!(critical_ratio(&q), 0.25);
        assert_eq!(sqrt_staffing(8, &q, 0.0).unwrap(), 2);
        assert_eq!(sqrt_staffing(9, &q, 0.0).unwrap(), 3);
        assert!(sqrt_staffing(0, &p, 0.5).is_err());
        assert!(sqrt_staffing(5, &p, -0.5).is_err());
    }

    #[test]
    fn pilot_meeting_target_is_not_shrunk() {
        // A large, well-staffed pilot already exceeds 80% power.
        let pilot = PilotStudy::new(staffed(), 60, 120, 120).unwrap();
        assert!(pilot.power(&cfg()).unwrap() > 0.8);
        let d = naive_no_scaleup(&pilot, &cfg()).unwrap();
        assert_eq!((d.m1, d.n1, d.n0), (60, 120, 120));
        let d = naive_proportional(&pilot, &cfg()).unwrap();
        assert_eq!((d.m1, d.n1, d.n0), (60, 120, 120));
    }

    #[test]
    fn pilot_without_effect_exhausts_search() {
        let pilot = PilotStudy::new(staffed(), 0, 10, 10).unwrap();
        let grid = SearchGrid::new(10, 1, 200).unwrap();
        match naive_no_scaleup_on(&pilot, &cfg(), grid) {
            Err(Error::SearchExhausted { cap, .. }) => assert_eq!(cap, 200),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn vanishing_power_bar_accepts_smallest_design() {
        let config = TestConfig::new(0.05, 0.05 + 1e-9, 10.0).unwrap();
        let grid = SearchGrid::new(1, 1, 100).unwrap();
        let d = sqrt_policy_on(&staffed(), &config, 0.5, grid).unwrap();
        assert_eq!(d.n1, 1);
        assert_eq!(d.m1, sqrt_staffing(1, &staffed(), 0.5).unwrap());
    }

    #[test]
    fn grid_validation() {
        assert!(SearchGrid::new(0, 1, 10).is_err());
        assert!(SearchGrid::new(1, 0, 10).is_err());
        assert!(SearchGrid::new(11, 1, 10).is_err());
        let g = SearchGrid::new(10, 4, 30).unwrap();
        assert_eq!(g.iter().collect::<Vec<_>>(), vec![10, 14, 18, 22, 26, 30]);
    }

    #[test]
    fn even_range_validation() {
        assert!(EvenRange::new(1, 10, 2).is_err());
        assert!(EvenRange::new(2, 10, 3).is_err());
        assert!(EvenRange::new(12, 10, 2).is_err());
        assert_eq!(EvenRange::new(2, 9, 2).unwrap().values(), vec![2, 4, 6, 8]);
    }
}
