//! Differential test oracle.
//!
//! Compares the reference and degraded traces of one case and classifies
//! the outcome: a degraded-side crash or timeout is a crash finding (with
//! cosine-similarity dedup over normalized logs), degraded-only NaN output
//! is a NaN finding, and an output MAE above the threshold is a heavy
//! inconsistency. Cases where the reference side itself fails are invalid
//! and excluded from counting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{ExecutionTrace, LogLine};
use crate::tensor::Tensor;

/// Outputs differing by more than this mean absolute error are heavy
/// inconsistencies; the comparison is strict.
pub const HEAVY_INCONSISTENCY_THRESHOLD: f32 = 0.15;

/// Two normalized crash logs with cosine similarity at or above this value
/// are the same finding.
pub const DUPLICATE_SIMILARITY: f64 = 1.0 - 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("mae requires identical shapes, got {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
}

/// Oracle outcome for one valid case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass { mae: f32 },
    Crash { normalized_log: Vec<String>, duplicate: bool },
    NaN,
    HeavyInconsistency { mae: f32 },
}

impl Verdict {
    pub fn is_fault(&self) -> bool {
        !matches!(self, Verdict::Pass { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Verdict::Pass { .. } => "pass",
            Verdict::Crash { .. } => "crash",
            Verdict::NaN => "nan",
            Verdict::HeavyInconsistency { .. } => "heavy_inconsistency",
        }
    }

    pub fn mae(&self) -> Option<f32> {
        match self {
            Verdict::Pass { mae } | Verdict::HeavyInconsistency { mae } => Some(*mae),
            _ => None,
        }
    }
}

/// Mean absolute elementwise difference. Accumulates in f64 and returns
/// the f32 rounding, so single-element comparisons are exact.
pub fn mae(x: &Tensor, y: &Tensor) -> Result<f32, OracleError> {
    if x.spec.shape != y.spec.shape {
        return Err(OracleError::ShapeMismatch(
            x.spec.shape.clone(),
            y.spec.shape.clone(),
        ));
    }
    let n = x.data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = x
        .data
        .iter()
        .zip(&y.data)
        .map(|(&a, &b)| ((a - b).abs()) as f64)
        .sum();
    Ok((sum / n as f64) as f32)
}

/// MAE over the concatenation of all output tensors of a trace pair.
pub fn mae_concat(xs: &[Tensor], ys: &[Tensor]) -> Result<f32, OracleError> {
    if xs.len() != ys.len() {
        return Err(OracleError::ShapeMismatch(vec![xs.len()], vec![ys.len()]));
    }
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        if x.spec.shape != y.spec.shape {
            return Err(OracleError::ShapeMismatch(
                x.spec.shape.clone(),
                y.spec.shape.clone(),
            ));
        }
        sum += x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&a, &b)| ((a - b).abs()) as f64)
            .sum::<f64>();
        n += x.data.len();
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok((sum / n as f64) as f32)
}

/// Canonical token sequence of an execution log: volatile fields
/// (sim time, temperature, ratio, op ids) are dropped; what remains is
/// the ordered `(operator kind, event)` fingerprint of the run.
pub fn normalize_log(log: &[LogLine]) -> Vec<String> {
    log.iter()
        .map(|line| format!("{}:{}", line.kind, line.event.tag()))
        .collect()
}

/// Cosine similarity between the token-frequency vectors of two normalized
/// logs. Two empty logs are identical; empty versus non-empty is 0.
pub fn cosine_similarity(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    fn count(tokens: &[String]) -> BTreeMap<&str, f64> {
        let mut map = BTreeMap::new();
        for t in tokens {
            *map.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
        map
    }
    let fa = count(a);
    let fb = count(b);
    let dot: f64 = fa
        .iter()
        .filter_map(|(k, va)| fb.get(k).map(|vb| va * vb))
        .sum();
    let na: f64 = fa.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = fb.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Where a crash was first seen, for the archive metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CaseRef {
    pub scenario: u8,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub tokens: Vec<String>,
    pub first_seen: CaseRef,
}

/// Archive of unique normalized crash logs. Mutated only by the campaign
/// loop; duplicate checks never remove entries.
#[derive(Debug, Clone, Default)]
pub struct CrashArchive {
    entries: Vec<ArchiveEntry>,
}

impl CrashArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn is_duplicate(&self, tokens: &[String]) -> bool {
        self.entries
            .iter()
            .any(|e| cosine_similarity(&e.tokens, tokens) >= DUPLICATE_SIMILARITY)
    }

    /// Returns whether the log duplicates an archived one; new logs are
    /// appended with their first-seen case.
    pub fn check_and_insert(&mut self, tokens: Vec<String>, first_seen: CaseRef) -> bool {
        if self.is_duplicate(&tokens) {
            return true;
        }
        self.entries.push(ArchiveEntry { tokens, first_seen });
        false
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("archive entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut entries = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            entries.push(serde_json::from_str(line)?);
        }
        Ok(Self { entries })
    }
}

/// Classifies one case. `None` means the case is invalid (the reference
/// side failed or produced NaN) and must be excluded from counting.
pub fn detect(
    reference: &ExecutionTrace,
    degraded: &ExecutionTrace,
    archive: &mut CrashArchive,
    case: CaseRef,
) -> Option<Verdict> {
    if !reference.is_ok() || reference.outputs_contain_nan() {
        return None;
    }
    if !degraded.is_ok() {
        let tokens = normalize_log(&degraded.log);
        let duplicate = archive.check_and_insert(tokens.clone(), case);
        return Some(Verdict::Crash {
            normalized_log: tokens,
            duplicate,
        });
    }
    if degraded.outputs_contain_nan() {
        return Some(Verdict::NaN);
    }
    let mae = mae_concat(&reference.outputs, &degraded.outputs).ok()?;
    if mae > HEAVY_INCONSISTENCY_THRESHOLD {
        Some(Verdict::HeavyInconsistency { mae })
    } else {
        Some(Verdict::Pass { mae })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::{ExecStatus, LogEvent};
    use crate::graph::TensorSpec;

    fn t(data: Vec<f32>) -> Tensor {
        let n = data.len();
        Tensor::new(TensorSpec::fp32(&[n]), data).unwrap()
    }

    fn ok_trace(outputs: Vec<Tensor>) -> ExecutionTrace {
        ExecutionTrace {
            status: ExecStatus::Ok,
            outputs,
            sim_wall_time: 0.0,
            log: Vec::new(),
        }
    }

    fn line(kind: &str, event: LogEvent, t_sim: f64, temp: f64) -> LogLine {
        LogLine {
            op: crate::graph::EdgeId(3),
            kind: kind.to_string(),
            event,
            t_sim,
            temperature: Some(temp),
            ratio: Some(0.9),
        }
    }

    #[test]
    fn mae_identity_and_hand_arithmetic() {
        let x = t(vec![1.0, 2.0, 3.0]);
        assert_eq!(mae(&x, &x).unwrap(), 0.0);
        let y = t(vec![1.1, 1.9, 3.3]);
        let m = mae(&x, &y).unwrap();
        assert!((m - 0.5 / 3.0).abs() < 1e-7);
        assert!(m > HEAVY_INCONSISTENCY_THRESHOLD);
    }

    #[test]
    fn threshold_is_strictly_greater_than() {
        let x = t(vec![0.0]);
        let y = t(vec![0.15]);
        let m = mae(&x, &y).unwrap();
        assert_eq!(m, 0.15f32);
        // Exactly at the boundary classifies as Pass.
        let verdict = detect(
            &ok_trace(vec![x]),
            &ok_trace(vec![y]),
            &mut CrashArchive::new(),
            CaseRef::default(),
        )
        .unwrap();
        assert_eq!(verdict, Verdict::Pass { mae: 0.15 });
    }

    #[test]
    fn mae_rejects_shape_mismatch_and_is_symmetric() {
        let x = t(vec![1.0, 2.0]);
        let y = t(vec![1.0, 2.0, 3.0]);
        assert!(mae(&x, &y).is_err());
        let a = t(vec![0.5, -1.0, 2.0, 0.0]);
        let b = t(vec![1.5, 1.0, -2.0, 0.25]);
        assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
    }

    #[test]
    fn normalize_drops_volatile_fields() {
        let a = vec![
            line("lstm", LogEvent::Exec, 0.5, 80.0),
            line("lstm", LogEvent::JitterSkip, 0.5, 80.0),
        ];
        let b = vec![
            line("lstm", LogEvent::Exec, 3.25, -12.0),
            line("lstm", LogEvent::JitterSkip, 3.25, -12.0),
        ];
        assert_eq!(normalize_log(&a), normalize_log(&b));
        assert_eq!(normalize_log(&a), vec!["lstm:exec", "lstm:jitter_skip"]);
        assert!(normalize_log(&[]).is_empty());
    }

    #[test]
    fn cosine_similarity_hand_values() {
        let s = |names: &[&str]| -> Vec<String> { names.iter().map(|n| n.to_string()).collect() };
        // Frequency vectors [1,1,0] vs [1,1,1]: 2/sqrt(6).
        let a = s(&["x", "y"]);
        let b = s(&["x", "y", "z"]);
        let sim = cosine_similarity(&a, &b);
        assert!((sim - 0.816496580927726).abs() < 1e-12);
        // Disjoint tokens are orthogonal.
        assert_eq!(cosine_similarity(&s(&["x"]), &s(&["q"])), 0.0);
        // Identical multisets in any order are similarity 1.
        let c = s(&["y", "x"]);
        assert!(cosine_similarity(&a, &c) >= DUPLICATE_SIMILARITY);
    }

    #[test]
    fn archive_dedups_identical_and_keeps_distinct() {
        let mut archive = CrashArchive::new();
        let a: Vec<String> = vec!["dense:exec".into(), "lstm:timeout".into()];
        let first = archive.check_and_insert(a.clone(), CaseRef { scenario: 1, iteration: 7 });
        assert!(!first);
        let second = archive.check_and_insert(a.clone(), CaseRef { scenario: 2, iteration: 9 });
        assert!(second);
        assert_eq!(archive.len(), 1);
        assert_eq!(archive.entries()[0].first_seen.iteration, 7);

        let b: Vec<String> =
            vec!["dense:exec".into(), "dense:exec".into(), "lstm:timeout".into()];
        let dup = archive.check_and_insert(b, CaseRef { scenario: 1, iteration: 8 });
        assert!(!dup, "cosine below 1 - 1e-9 is a new finding");
        assert_eq!(archive.len(), 2);

        let jsonl = archive.to_jsonl();
        let back = CrashArchive::from_jsonl(&jsonl).unwrap();
        assert_eq!(back.entries(), archive.entries());
    }

    #[test]
    fn verdict_precedence() {
        let mut archive = CrashArchive::new();
        let case = CaseRef::default();
        let x = t(vec![1.0, 2.0]);

        // Reference failure: invalid case.
        let failed_ref = ExecutionTrace {
            status: ExecStatus::Crash("reference-internal".into()),
            outputs: vec![],
            sim_wall_time: 0.0,
            log: vec![],
        };
        assert_eq!(
            detect(&failed_ref, &ok_trace(vec![x.clone()]), &mut archive, case),
            None
        );

        // Degraded timeout: crash verdict.
        let timeout = ExecutionTrace {
            status: ExecStatus::Timeout,
            outputs: vec![],
            sim_wall_time: 11.0,
            log: vec![line("matmul", LogEvent::Timeout, 10.5, 88.0)],
        };
        let v = detect(&ok_trace(vec![x.clone()]), &timeout, &mut archive, case).unwrap();
        assert!(matches!(v, Verdict::Crash { duplicate: false, .. }));

        // Degraded-only NaN.
        let nan_out = ok_trace(vec![t(vec![f32::NAN, 1.0])]);
        let v = detect(&ok_trace(vec![x.clone()]), &nan_out, &mut archive, case).unwrap();
        assert_eq!(v, Verdict::NaN);

        // Heavy inconsistency and pass.
        let far = ok_trace(vec![t(vec![2.0, 3.0])]);
        let v = detect(&ok_trace(vec![x.clone()]), &far, &mut archive, case).unwrap();
        assert!(matches!(v, Verdict::HeavyInconsistency { .. }));
        let near = ok_trace(vec![t(vec![1.0, 2.01])]);
        let v = detect(&ok_trace(vec![x.clone()]), &near, &mut archive, case).unwrap();
        assert!(matches!(v, Verdict::Pass { .. }));

        // Reference NaN is pathological: excluded, not a NaN finding.
        let ref_nan = ok_trace(vec![t(vec![f32::NAN])]);
        let deg = ok_trace(vec![t(vec![1.0])]);
        assert_eq!(detect(&ref_nan, &deg, &mut archive, case), None);
    }

    #[test]
    fn resubmission_keeps_unique_count_invariant() {
        let mut archive = CrashArchive::new();
        let tokens: Vec<String> = vec!["gemm_conv:timeout".into()];
        assert!(!archive.check_and_insert(tokens.clone(), CaseRef::default()));
        for _ in 0..5 {
            assert!(archive.check_and_insert(tokens.clone(), CaseRef::default()));
        }
        assert_eq!(archive.len(), 1);
    }
}
