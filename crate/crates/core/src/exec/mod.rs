//! Dual interpreters over [`ModelGraph`]: an ideal reference executor and
//! a thermally degraded executor whose faults are deterministic functions
//! of the simulated frequency timeline.
//!
//! [`ModelGraph`]: crate::graph::ModelGraph

mod degraded;
mod ops;
mod reference;
mod weights;

pub use degraded::{run_degraded, run_degraded_from, run_degraded_with};
pub use reference::{run_reference, run_reference_with};
pub use weights::{PinnedWeights, SeededWeights, WeightSource};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, OperatorKind};
use crate::tensor::Tensor;

/// Thresholds and cost parameters of the degraded executor's fault model.
///
/// The model stands in for physical GPU misbehavior: latency scales with
/// the inverse frequency ratio, elevated-precision operators lose mantissa
/// bits when the ratio drops below `r_crit`, and time-series operators
/// skip state updates with a probability growing as the ratio falls below
/// `r_jitter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultConfig {
    /// Simulated seconds a single case may consume before it is killed.
    pub timeout_budget_s: f64,
    /// Frequency ratio below which fp32/mixed results lose mantissa bits.
    pub r_crit: f64,
    /// Frequency ratio below which recurrent state updates may be skipped.
    pub r_jitter: f64,
    /// Skip probability per unit of ratio deficit below `r_jitter`.
    pub jitter_gain: f64,
    /// Base cost of compute-intensive and recurrent operators, seconds.
    pub op_cost_heavy_s: f64,
    /// Base cost of everything else, seconds.
    pub op_cost_light_s: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            timeout_budget_s: 10.0,
            r_crit: 0.95,
            r_jitter: 0.92,
            jitter_gain: 2.0,
            op_cost_heavy_s: 0.05,
            op_cost_light_s: 0.005,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FaultConfigError {
    #[error("invalid fault config: {0}")]
    Invalid(String),
}

impl FaultConfig {
    pub fn validate(&self) -> Result<(), FaultConfigError> {
        let fail = |m: &str| Err(FaultConfigError::Invalid(m.to_string()));
        if !(self.timeout_budget_s > 0.0) {
            return fail("timeout_budget_s must be > 0");
        }
        if !(self.r_crit > 0.0 && self.r_crit <= 1.0) {
            return fail("r_crit must be in (0, 1]");
        }
        if !(self.r_jitter > 0.0 && self.r_jitter <= 1.0) {
            return fail("r_jitter must be in (0, 1]");
        }
        if !(self.jitter_gain >= 0.0) {
            return fail("jitter_gain must be >= 0");
        }
        if !(self.op_cost_heavy_s > 0.0 && self.op_cost_light_s > 0.0) {
            return fail("operator costs must be > 0");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, FaultConfigError> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| FaultConfigError::Invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Per-operator base cost; convolutions routed through the GEMM path,
    /// matrix products, and recurrent operators pay the heavy tier.
    pub fn op_cost(&self, kind: &OperatorKind) -> f64 {
        let heavy = matches!(kind, OperatorKind::GemmConv { gemm: true, .. })
            || matches!(kind, OperatorKind::MatMul { .. })
            || kind.is_recurrent();
        if heavy {
            self.op_cost_heavy_s
        } else {
            self.op_cost_light_s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Crash(String),
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Exec,
    MantissaTruncate,
    JitterSkip,
    Timeout,
    InternalError,
}

impl LogEvent {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Exec => "exec",
            Self::MantissaTruncate => "mantissa_truncate",
            Self::JitterSkip => "jitter_skip",
            Self::Timeout => "timeout",
            Self::InternalError => "internal_error",
        }
    }

    /// Events that represent fault-model activity rather than plain
    /// execution progress.
    pub fn is_fault(&self) -> bool {
        !matches!(self, Self::Exec)
    }
}

/// One structured execution log line. Thermal fields are absent on the
/// reference side, which has no thermal coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub op: EdgeId,
    pub kind: String,
    pub event: LogEvent,
    pub t_sim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

/// Outcome of one executor run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub status: ExecStatus,
    /// Present iff status is `Ok`, matching the graph's output spec.
    pub outputs: Vec<Tensor>,
    /// Simulated seconds the run consumed (zero on the reference side).
    pub sim_wall_time: f64,
    pub log: Vec<LogLine>,
}

impl ExecutionTrace {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, ExecStatus::Ok)
    }

    pub fn outputs_contain_nan(&self) -> bool {
        self.outputs.iter().any(Tensor::contains_nan)
    }

    pub fn fault_events(&self) -> usize {
        self.log.iter().filter(|l| l.event.is_fault()).count()
    }
}

/// Rounds an f32 to `bits` explicit mantissa bits by truncating the low
/// mantissa bits; idempotent at a fixed width. Zero bits means the value
/// is unrepresentable and collapses to NaN.
pub fn truncate_mantissa(value: f32, bits: u32) -> f32 {
    if bits == 0 {
        return f32::NAN;
    }
    if bits >= 23 || !value.is_finite() {
        return value;
    }
    let mask = !((1u32 << (23 - bits)) - 1);
    f32::from_bits(value.to_bits() & mask)
}
