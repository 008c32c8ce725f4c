//! Heuristic seed and rule scheduling.
//!
//! The seed pool holds every model that has ever triggered a finding plus
//! the initial seeds; selection draws a random 10% subset and takes its
//! best performer, which avoids locking onto one seed. Each mutation rule
//! accumulates a contribution (the performance delta it produced), and
//! rules are drawn with probability proportional to their clamped,
//! epsilon-smoothed contribution.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ModelGraph;
use crate::mutate::{MutationRule, RULE_COUNT};
use crate::oracle::Verdict;
use crate::rng::SplitMix;
use crate::tensor::{mean_of, Tensor};

/// Performance assigned to the initial seeds: the heavy-inconsistency
/// threshold, so they compete without dominating.
pub const INITIAL_SEED_PERFORMANCE: f64 = 0.15;

/// Smoothing added to each clamped contribution at selection time; keeps
/// every rule alive and makes the all-zero start well-defined.
pub const SELECTION_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOrigin {
    Initial,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TriggeredFlags {
    pub crash: bool,
    pub nan: bool,
    pub heavy_inconsistency: bool,
}

/// One pool entry: the model, its bug-detection performance, and what it
/// has triggered.
#[derive(Debug, Clone)]
pub struct SeedRecord {
    pub model: Arc<ModelGraph>,
    pub performance: f64,
    pub origin: SeedOrigin,
    pub triggered: TriggeredFlags,
}

/// Monotone seed pool: records are appended, never removed.
#[derive(Debug, Clone, Default)]
pub struct SeedPool {
    records: Vec<SeedRecord>,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("seed pool is empty")]
    Empty,
    #[error("seed pool io: {0}")]
    Io(#[from] std::io::Error),
    #[error("seed pool index is malformed: {0}")]
    Malformed(String),
}

impl SeedPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pool of initial seeds at the neutral starting performance.
    pub fn from_initial(models: Vec<ModelGraph>) -> Self {
        Self {
            records: models
                .into_iter()
                .map(|m| SeedRecord {
                    model: Arc::new(m),
                    performance: INITIAL_SEED_PERFORMANCE,
                    origin: SeedOrigin::Initial,
                    triggered: TriggeredFlags::default(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, index: usize) -> &SeedRecord {
        &self.records[index]
    }

    pub fn records(&self) -> &[SeedRecord] {
        &self.records
    }

    pub fn push(&mut self, record: SeedRecord) {
        self.records.push(record);
    }

    /// Persists the pool as a directory of graph files plus an index.
    pub fn save_dir(&self, dir: &Path) -> Result<(), PoolError> {
        std::fs::create_dir_all(dir)?;
        let mut index = Vec::with_capacity(self.records.len());
        for (id, record) in self.records.iter().enumerate() {
            let file = format!("g{id:04}.json");
            std::fs::write(dir.join(&file), record.model.to_json())?;
            index.push(IndexEntry {
                id,
                file,
                performance: record.performance,
                origin: record.origin,
                triggered: record.triggered,
            });
        }
        let index_text = serde_json::to_string_pretty(&PoolIndex { records: index })
            .expect("pool index serializes");
        std::fs::write(dir.join("index.json"), index_text)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, PoolError> {
        let index_text = std::fs::read_to_string(dir.join("index.json"))?;
        let index: PoolIndex = serde_json::from_str(&index_text)
            .map_err(|e| PoolError::Malformed(e.to_string()))?;
        let mut records = Vec::with_capacity(index.records.len());
        for entry in index.records {
            let text = std::fs::read_to_string(dir.join(&entry.file))?;
            let model = ModelGraph::from_json(&text)
                .map_err(|e| PoolError::Malformed(e.to_string()))?;
            records.push(SeedRecord {
                model: Arc::new(model),
                performance: entry.performance,
                origin: entry.origin,
                triggered: entry.triggered,
            });
        }
        Ok(Self { records })
    }
}

#[derive(Serialize, Deserialize)]
struct PoolIndex {
    records: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    id: usize,
    file: String,
    performance: f64,
    origin: SeedOrigin,
    triggered: TriggeredFlags,
}

/// Draws a uniform subset of `max(1, ceil(0.1 * |pool|))` records without
/// replacement and returns the index of its best performer; ties go to the
/// lowest insertion index. Never inspects records outside the subset.
pub fn select_seed(pool: &SeedPool, rng_seed: u64) -> Result<usize, PoolError> {
    if pool.is_empty() {
        return Err(PoolError::Empty);
    }
    let n = pool.len();
    let k = (n + 9) / 10; // ceil(n / 10), floor of one by n >= 1
    let mut rng = SplitMix::new(rng_seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.index(n - i);
        indices.swap(i, j);
    }
    let mut best = indices[0];
    for &candidate in &indices[1..k] {
        let better = pool.get(candidate).performance > pool.get(best).performance
            || (pool.get(candidate).performance == pool.get(best).performance
                && candidate < best);
        if better {
            best = candidate;
        }
    }
    Ok(best)
}

/// Bug-detection performance of one case: the mean input tensor value when
/// the case crashed or produced NaN, otherwise the output MAE.
pub fn performance_of(verdict: &Verdict, input_tensors: &[Tensor], mae: f64) -> f64 {
    match verdict {
        Verdict::Crash { .. } | Verdict::NaN => mean_of(input_tensors),
        Verdict::Pass { .. } | Verdict::HeavyInconsistency { .. } => mae,
    }
}

/// Cumulative contribution of each mutation rule, indexed by rule id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleStats {
    pub contribution: [f64; RULE_COUNT],
}

impl Default for RuleStats {
    fn default() -> Self {
        Self {
            contribution: [0.0; RULE_COUNT],
        }
    }
}

impl RuleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn of(&self, rule: MutationRule) -> f64 {
        self.contribution[rule.id() as usize - 1]
    }
}

/// Adds the performance delta of one iteration to the selected rule's
/// contribution; all other entries are untouched.
pub fn update_contribution(
    stats: &RuleStats,
    rule: MutationRule,
    perf_new: f64,
    perf_seed: f64,
) -> RuleStats {
    let mut out = stats.clone();
    out.contribution[rule.id() as usize - 1] += perf_new - perf_seed;
    out
}

/// Selection weights: contributions clamped at zero plus epsilon, so all
/// probabilities are strictly positive and the formula reduces to plain
/// contribution shares when every contribution is positive and large.
pub fn selection_weights(stats: &RuleStats) -> [f64; RULE_COUNT] {
    let mut w = [0.0; RULE_COUNT];
    for (i, &c) in stats.contribution.iter().enumerate() {
        w[i] = c.max(0.0) + SELECTION_EPSILON;
    }
    w
}

/// Normalized selection probabilities; sums to one.
pub fn selection_probabilities(stats: &RuleStats) -> [f64; RULE_COUNT] {
    let mut w = selection_weights(stats);
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Samples a mutation rule according to the smoothed contribution weights.
pub fn select_rule(stats: &RuleStats, rng_seed: u64) -> MutationRule {
    select_rule_among(stats, &MutationRule::ALL, rng_seed)
}

/// Samples from an explicit rule subset with the same smoothed weights,
/// renormalized over the subset. Used for ablation runs.
pub fn select_rule_among(
    stats: &RuleStats,
    rules: &[MutationRule],
    rng_seed: u64,
) -> MutationRule {
    assert!(!rules.is_empty(), "rule subset must be nonempty");
    let weights = selection_weights(stats);
    let total: f64 = rules.iter().map(|r| weights[r.id() as usize - 1]).sum();
    let mut rng = SplitMix::new(rng_seed);
    let mut u = rng.unit_f64() * total;
    for &rule in rules {
        let w = weights[rule.id() as usize - 1];
        if u < w {
            return rule;
        }
        u -= w;
    }
    *rules.last().expect("nonempty subset")
}

/// Appends a record iff the verdict is a non-duplicate crash, a NaN, or a
/// heavy inconsistency. Returns whether the model was admitted.
pub fn maybe_admit(
    pool: &mut SeedPool,
    model: &ModelGraph,
    verdict: &Verdict,
    performance: f64,
) -> bool {
    let triggered = match verdict {
        Verdict::Crash { duplicate: false, .. } => TriggeredFlags {
            crash: true,
            ..Default::default()
        },
        Verdict::NaN => TriggeredFlags {
            nan: true,
            ..Default::default()
        },
        Verdict::HeavyInconsistency { .. } => TriggeredFlags {
            heavy_inconsistency: true,
            ..Default::default()
        },
        Verdict::Crash { duplicate: true, .. } | Verdict::Pass { .. } => return false,
    };
    pool.push(SeedRecord {
        model: Arc::new(model.clone()),
        performance,
        origin: SeedOrigin::Generated,
        triggered,
    });
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{OperatorKind, TensorSpec};
    use crate::rng::hash;

    fn tiny_graph(seed: u64) -> ModelGraph {
        let mut g = ModelGraph::new();
        let a = g.add_vertex(TensorSpec::fp32(&[2, 2]));
        let b = g.add_vertex(TensorSpec::fp32(&[3]));
        g.add_edge(vec![a], b, OperatorKind::Dense, seed);
        g.inputs = vec![a];
        g.output = b;
        g
    }

    fn pool_of(perfs: &[f64]) -> SeedPool {
        let mut pool = SeedPool::new();
        for (i, &p) in perfs.iter().enumerate() {
            pool.push(SeedRecord {
                model: Arc::new(tiny_graph(i as u64)),
                performance: p,
                origin: SeedOrigin::Initial,
                triggered: TriggeredFlags::default(),
            });
        }
        pool
    }

    #[test]
    fn singleton_pool_always_selects_its_member() {
        let pool = pool_of(&[0.4]);
        for seed in 0..10 {
            assert_eq!(select_seed(&pool, seed).unwrap(), 0);
        }
        assert!(select_seed(&SeedPool::new(), 1).is_err());
    }

    #[test]
    fn subset_size_is_ceil_ten_percent() {
        // 20 records: subset of exactly 2. Track that the winner is always
        // the max of some 2-subset, which for a strictly increasing pool is
        // any index, but never below the minimum of the draw.
        let pool = pool_of(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        for seed in 0..50 {
            let chosen = select_seed(&pool, seed).unwrap();
            assert!(chosen < 20);
        }
        // Dominant member wins whenever it is in the subset: with 10
        // members, the subset is one; selection uniform over indices.
        let pool = pool_of(&[0.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut seen_dominant = false;
        let mut seen_other = false;
        for seed in 0..64 {
            let chosen = select_seed(&pool, seed).unwrap();
            if chosen == 2 {
                seen_dominant = true;
            } else {
                seen_other = true;
            }
        }
        // Subset size one means the draw ignores performance: the selector
        // only inspects its subset, never the global maximum.
        assert!(seen_dominant && seen_other);
    }

    #[test]
    fn ties_break_to_lowest_insertion_index() {
        let pool = pool_of(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        // 11 records: subset of two; equal performance selects the lower index.
        for seed in 0..40 {
            let mut rng = SplitMix::new(seed);
            let n = pool.len();
            let mut indices: Vec<usize> = (0..n).collect();
            for i in 0..2 {
                let j = i + rng.index(n - i);
                indices.swap(i, j);
            }
            let expected = *indices[..2].iter().min().unwrap();
            assert_eq!(select_seed(&pool, seed).unwrap(), expected);
        }
    }

    #[test]
    fn performance_uses_mean_inputs_for_crash_and_nan() {
        let t = Tensor::new(TensorSpec::fp32(&[3]), vec![1.0, 2.0, 3.0]).unwrap();
        let crash = Verdict::Crash {
            normalized_log: vec![],
            duplicate: false,
        };
        assert_eq!(performance_of(&crash, &[t.clone()], 0.7), 2.0);
        let zeros = Tensor::new(TensorSpec::fp32(&[2, 2]), vec![0.0; 4]).unwrap();
        assert_eq!(performance_of(&Verdict::NaN, &[zeros.clone(), zeros], 0.7), 0.0);
        assert_eq!(performance_of(&Verdict::Pass { mae: 0.08 }, &[t], 0.08), 0.08);
    }

    #[test]
    fn contribution_update_is_exact_arithmetic() {
        let mut stats = RuleStats::new();
        stats.contribution[2] = 0.3;
        let rule = MutationRule::HighPrecisionReplacement; // id 3
        let updated = update_contribution(&stats, rule, 0.5, 0.2);
        assert_eq!(updated.of(rule), 0.3 + (0.5 - 0.2));
        // Unchanged elsewhere.
        for other in MutationRule::ALL {
            if other != rule {
                assert_eq!(updated.of(other), stats.of(other));
            }
        }
        let same = update_contribution(&stats, rule, 0.4, 0.4);
        assert_eq!(same, stats);
        let negative = update_contribution(&RuleStats::new(), rule, 0.1, 0.4);
        assert_eq!(negative.of(rule), 0.1 - 0.4);
    }

    #[test]
    fn selection_probabilities_sum_to_one_and_stay_positive() {
        let mut stats = RuleStats::new();
        stats.contribution = [2.0, 1.0, 1.0, 0.0, -3.0, 0.0, 0.0, 0.0];
        let p = selection_probabilities(&stats);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
        // Epsilon to zero limit: normalize the clamped contributions by
        // hand -> [0.5, 0.25, 0.25, 0, ...].
        let c = [2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0f64];
        let sum: f64 = c.iter().sum();
        let limit: Vec<f64> = c.iter().map(|v| v / sum).collect();
        for (i, &want) in limit.iter().enumerate() {
            // Default epsilon keeps selections within a percent of the
            // limiting distribution here.
            assert!((p[i] - want).abs() < 0.01, "p[{i}] = {}, want {want}", p[i]);
        }
    }

    #[test]
    fn all_zero_and_all_equal_contributions_select_uniformly() {
        for stats in [
            RuleStats::new(),
            RuleStats {
                contribution: [0.7; RULE_COUNT],
            },
        ] {
            let p = selection_probabilities(&stats);
            for &v in &p {
                assert!((v - 1.0 / 8.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_positive_contributions_preserves_the_limit_distribution() {
        let base = [4.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0f64];
        let scaled: Vec<f64> = base.iter().map(|v| v * 1000.0).collect();
        let p_base = {
            let sum: f64 = base.iter().sum();
            base.iter().map(|v| v / sum).collect::<Vec<_>>()
        };
        let mut stats = RuleStats::new();
        stats.contribution.copy_from_slice(&scaled);
        let p_scaled = selection_probabilities(&stats);
        for i in 0..RULE_COUNT {
            assert!((p_scaled[i] - p_base[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn select_rule_hits_every_rule_under_uniform_stats() {
        let stats = RuleStats::new();
        let mut seen = [false; RULE_COUNT];
        for i in 0..2000u64 {
            let rule = select_rule(&stats, hash(9, &[i]));
            seen[rule.id() as usize - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn admission_follows_verdicts() {
        let mut pool = SeedPool::new();
        let g = tiny_graph(1);
        assert!(!maybe_admit(&mut pool, &g, &Verdict::Pass { mae: 0.01 }, 0.01));
        assert_eq!(pool.len(), 0);
        assert!(maybe_admit(
            &mut pool,
            &g,
            &Verdict::Crash { normalized_log: vec![], duplicate: false },
            0.5,
        ));
        assert_eq!(pool.len(), 1);
        assert!(pool.get(0).triggered.crash);
        assert_eq!(pool.get(0).origin, SeedOrigin::Generated);
        assert!(!maybe_admit(
            &mut pool,
            &g,
            &Verdict::Crash { normalized_log: vec![], duplicate: true },
            0.5,
        ));
        assert_eq!(pool.len(), 1);
        assert!(maybe_admit(&mut pool, &g, &Verdict::NaN, 0.3));
        assert!(maybe_admit(
            &mut pool,
            &g,
            &Verdict::HeavyInconsistency { mae: 0.2 },
            0.2,
        ));
        assert_eq!(pool.len(), 3);
    }

    #[test]
    fn pool_round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let mut pool = SeedPool::from_initial(vec![tiny_graph(1), tiny_graph(2)]);
        maybe_admit(
            &mut pool,
            &tiny_graph(3),
            &Verdict::HeavyInconsistency { mae: 0.4 },
            0.4,
        );
        pool.save_dir(dir.path()).unwrap();
        let back = SeedPool::load_dir(dir.path()).unwrap();
        assert_eq!(back.len(), pool.len());
        for (a, b) in pool.records().iter().zip(back.records()) {
            assert_eq!(a.model, b.model);
            assert_eq!(a.performance, b.performance);
            assert_eq!(a.origin, b.origin);
            assert_eq!(a.triggered, b.triggered);
        }
    }
}
