//! Analytics for randomized trials of a service that is rationed by a fixed
//! number of servers.
//!
//! Users alternate between a desired and an undesired state. Treated users in
//! the undesired state queue for one of `M` servers; control users never
//! receive service. The crate provides the stationary law of the treated
//! system's closed birth–death queue, moments of the difference-in-means
//! estimator, the fluid limit, power-based design policies, and an exact
//! event simulator for checking the approximations.

pub mod error;
pub mod estimator;
pub mod fluid;
pub mod power;
pub mod queueing;
pub mod sim;

pub use error::{Error, Result};
pub use estimator::{
    control_moments, estimator_moments, queue_length_asymptotic_variance, scale_up_bias,
    steady_state_effect, treatment_moments, EstimatorMoments, GroupMoments,
};
pub use fluid::{
    approx_queue_length, fluid_derivative, fluid_effect, fluid_steady_state, integrate_fluid,
    FluidState, ServerRatio,
};
pub use power::{
    naive_no_scaleup, naive_proportional, optimal_n_sweep, power_at_mde, power_at_true_effect,
    sqrt_policy, sqrt_staffing, DesignTriple, EvenRange, PilotStudy, PolicyTag, PowerSweep,
    SearchGrid, TestConfig,
};
pub use queueing::{
    classify_regime, critical_ratio, mean_queue_length, offered_load, rate_down, rate_up,
    stationary_distribution, ModelParams, RegimeLabel, StationaryDistribution, SystemSize,
};
pub use sim::{
    bootstrap_interval, simulate_estimator, simulate_path, time_average_queue,
    validate_against_clt, InitialState, SamplePath, SimConfig, SimSummary,
};
