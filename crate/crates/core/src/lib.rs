//! Thermal-aware differential fuzzing for compute-graph runtimes.
//!
//! The harness simulates GPU temperature with Newton's law of cooling,
//! derives clock frequency from temperature through a DVFS governor,
//! mutates DAG models toward temperature-sensitive operators, and
//! differentially tests an ideal reference interpreter against a
//! frequency-degraded interpreter to surface crashes, NaNs, and heavy
//! output inconsistencies.

pub mod campaign;
pub mod dvfs;
pub mod exec;
pub mod graph;
pub mod mutate;
pub mod oracle;
pub mod rng;
pub mod schedule;
pub mod starter;
pub mod tensor;
pub mod thermal;

pub use graph::{Category, ModelGraph, OperatorKind, TensorSpec};
pub use thermal::{GpuProfile, ThermalScenario, ThermalState};
