//! GPU temperature simulation via Newton's law of cooling.
//!
//! Temperature relaxes exponentially toward the ambient value; the rate is
//! set by the device's cooling coefficient. Six canonical ambient/workload
//! scenarios cover every heating and cooling transition between the
//! device's minimum, nominal, and maximum operating temperatures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Thermal and frequency constants of one GPU model.
///
/// Loaded from a JSON profile file; `profiles/rtx4090d.json` ships as the
/// default device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuProfile {
    /// Cooling coefficient in 1/s. Larger values equilibrate faster.
    pub k: f64,
    /// Minimum supported temperature, °C.
    pub t_min: f64,
    /// Maximum supported temperature, °C.
    pub t_max: f64,
    /// Optimal operating temperature, °C.
    pub t_nominal: f64,
    /// Baseline frequency at the nominal temperature, MHz.
    pub f_base_mhz: f64,
    /// High-temperature throttling coefficient, dimensionless.
    pub alpha: f64,
    /// Low-temperature scaling coefficient, dimensionless.
    pub gamma: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ThermalError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("step dt must be positive, got {0}")]
    NonPositiveStep(f64),
}

impl GpuProfile {
    /// Checks the physical constraints of the profile constants.
    pub fn validate(&self) -> Result<(), ThermalError> {
        let fail = |msg: &str| Err(ThermalError::InvalidProfile(msg.to_string()));
        if !(self.k > 0.0) {
            return fail("k must be > 0");
        }
        if !(self.f_base_mhz > 0.0) {
            return fail("f_base_mhz must be > 0");
        }
        if !(self.t_min < self.t_nominal && self.t_nominal < self.t_max) {
            return fail("requires t_min < t_nominal < t_max");
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return fail("alpha must be in [0, 1)");
        }
        if !(self.gamma >= 0.0) {
            return fail("gamma must be >= 0");
        }
        Ok(())
    }

    /// The RTX 4090D constants used as the shipped default profile.
    pub fn rtx4090d() -> Self {
        Self {
            k: 0.015,
            t_min: -40.0,
            t_max: 90.0,
            t_nominal: 40.0,
            f_base_mhz: 2520.0,
            alpha: 0.15,
            gamma: 0.05,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ThermalError> {
        let profile: Self = serde_json::from_str(text)
            .map_err(|e| ThermalError::InvalidProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// One ambient/workload scenario: where the GPU temperature starts and the
/// ambient value it relaxes toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalScenario {
    pub id: u8,
    pub name: String,
    pub t_initial: f64,
    pub t_env: f64,
}

impl ThermalScenario {
    pub fn new(id: u8, name: &str, t_initial: f64, t_env: f64) -> Self {
        Self {
            id,
            name: name.to_string(),
            t_initial,
            t_env,
        }
    }
}

/// Point on a scenario's temperature trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Elapsed seconds since the scenario started.
    pub t: f64,
    /// Temperature at that instant, °C.
    pub temperature: f64,
}

impl ThermalState {
    /// State at the start of a scenario.
    pub fn initial(scenario: &ThermalScenario) -> Self {
        Self {
            t: 0.0,
            temperature: scenario.t_initial,
        }
    }
}

/// Closed-form temperature after `t` seconds of a scenario:
/// `T(t) = t_env + (t_initial - t_env) * exp(-k t)`.
pub fn temperature_at(
    profile: &GpuProfile,
    scenario: &ThermalScenario,
    t: f64,
) -> Result<f64, ThermalError> {
    if !(t >= 0.0) {
        return Err(ThermalError::NegativeTime(t));
    }
    Ok(scenario.t_env + (scenario.t_initial - scenario.t_env) * (-profile.k * t).exp())
}

/// Advances a thermal state by `dt` seconds using the incremental form
/// `T' = t_env + (T - t_env) * exp(-k dt)`.
///
/// Composing steps reproduces the closed form: stepping `dt1` then `dt2`
/// matches `temperature_at(dt1 + dt2)` up to floating roundoff.
pub fn step(
    state: ThermalState,
    scenario: &ThermalScenario,
    profile: &GpuProfile,
    dt: f64,
) -> Result<ThermalState, ThermalError> {
    if !(dt > 0.0) {
        return Err(ThermalError::NonPositiveStep(dt));
    }
    Ok(ThermalState {
        t: state.t + dt,
        temperature: scenario.t_env + (state.temperature - scenario.t_env) * (-profile.k * dt).exp(),
    })
}

/// The six canonical scenarios, in fixed order: three heating transitions
/// followed by three cooling transitions between the profile's bounds.
pub fn standard_scenarios(profile: &GpuProfile) -> Vec<ThermalScenario> {
    let (lo, mid, hi) = (profile.t_min, profile.t_nominal, profile.t_max);
    vec![
        ThermalScenario::new(1, "Computing in Cold Environment with Heavy Workloads", lo, hi),
        ThermalScenario::new(2, "Computing in Cold Environment with Nominal Workloads", lo, mid),
        ThermalScenario::new(3, "Computing in Nominal Environment with Heavy Workloads", mid, hi),
        ThermalScenario::new(4, "Cooling in Cold Environment after Heavy Workloads", hi, lo),
        ThermalScenario::new(5, "Cooling in Cold Environment after Nominal Workloads", mid, lo),
        ThermalScenario::new(6, "Cooling in Nominal Environment after Heavy Workloads", hi, mid),
    ]
}
