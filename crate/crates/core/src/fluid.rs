//! Fluid (large-system) limit of the closed queue.
//!
//! With `M/N -> mbar` the fraction `z(t)` of users in the undesired state
//! follows the deterministic ODE
//!
//! ```text
//! dz/dt = lambda (1 - z) - min(z, mbar) mu p - tau z
//! ```
//!
//! whose unique equilibrium has a kink at the critical ratio `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queueing::{critical_ratio, ModelParams, SystemSize};

/// Default step for [`integrate_fluid`], in model time units.
pub const DEFAULT_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    /// Fraction of users in the undesired state.
    pub z: f64,
    pub time: f64,
}

impl FluidState {
    pub fn new(z: f64, time: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::domain(format!("fluid state must lie in [0, 1], got {z}")));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::domain(format!("fluid time must be >= 0, got {time}")));
        }
        Ok(Self { z, time })
    }
}

/// Limiting servers-per-user ratio.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ServerRatio(f64);

impl ServerRatio {
    pub fn new(mbar: f64) -> Result<Self> {
        if !(mbar.is_finite() && mbar >= 0.0) {
            return Err(Error::domain(format!("server ratio must be finite and >= 0, got {mbar}")));
        }
        Ok(Self(mbar))
    }

    pub fn of(size: SystemSize) -> Self {
        Self(size.ratio())
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

fn field(z: f64, mbar: f64, params: &ModelParams) -> f64 {
    let served = if z < mbar { z } else { mbar };
    params.lambda() * (1.0 - z) - served * params.effective_service() - z * params.tau()
}

/// Right-hand side of the fluid ODE at `state`.
pub fn fluid_derivative(state: FluidState, ratio: ServerRatio, params: &ModelParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&state.z) {
        return Err(Error::domain(format!("fluid state must lie in [0, 1], got {}", state.z)));
    }
    Ok(field(state.z, ratio.0, params))
}

/// Equilibrium `z*`: `(lambda - mbar mu p) / (lambda + tau)` up to the critical
/// ratio, `r` beyond it.
pub fn fluid_steady_state(ratio: ServerRatio, params: &ModelParams) -> f64 {
    let r = critical_ratio(params);
    if ratio.0 <= r {
        (params.lambda() - ratio.0 * params.effective_service()) / (params.lambda() + params.tau())
    } else {
        r
    }
}

/// Fluid treatment effect `z*(0) - z*(mbar)`: linear in `mbar` below the
/// critical ratio and flat above it.
pub fn fluid_effect(ratio: ServerRatio, params: &ModelParams) -> f64 {
    let r = critical_ratio(params);
    let s = params.lambda() + params.tau();
    let mu_p = params.effective_service();
    if ratio.0 <= r {
        ratio.0 * mu_p / s
    } else {
        params.lambda() * mu_p / (s * (s + mu_p))
    }
}

/// Fixed-step classical Runge–Kutta integration of the fluid ODE from `z0`
/// over `horizon` time units. The returned trajectory starts with `z0` and
/// ends exactly at `z0.time + horizon` (the last step is shortened if needed).
///
/// The field is continuous across `z = mbar`, so each stage simply evaluates
/// the branch that applies at its own point.
pub fn integrate_fluid(
    z0: FluidState,
    ratio: ServerRatio,
    params: &ModelParams,
    horizon: f64,
    step: f64,
) -> Result<Vec<FluidState>> {
    let z0 = FluidState::new(z0.z, z0.time)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    if step > horizon {
        return Err(Error::domain(format!("step {step} exceeds horizon {horizon}")));
    }
    let mbar = ratio.0;
    let f = |z: f64| field(z, mbar, params);

    let steps = (horizon / step).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z0);
    let mut z = z0.z;
    for k in 0..steps {
        let t0 = step * k as f64;
        let h = (horizon - t0).min(step);
        let k1 = f(z);
        let k2 = f(z + 0.5 * h * k1);
        let k3 = f(z + 0.5 * h * k2);
        let k4 = f(z + h * k3);
        z = (z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, 1.0);
        out.push(FluidState {
            z,
            time: z0.time + t0 + h,
        });
    }
    Ok(out)
}

/// `N z*(M/N)`: fluid estimate of the mean queue length of a finite system.
pub fn approx_queue_length(params: &ModelParams, size: SystemSize) -> f64 {
    f64::from(size.users()) * fluid_steady_state(ServerRatio::of(size), params)
}
