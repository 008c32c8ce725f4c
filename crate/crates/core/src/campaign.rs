//! Campaign orchestration.
//!
//! One iteration of the loop: select a seed and a mutation rule, mutate,
//! generate inputs, execute both interpreters under the scenario's thermal
//! clock, classify the outcome, update the heuristics, and admit finding
//! models back into the pool. Scenarios run sequentially with equal
//! iteration budgets; the per-scenario clock advances one simulated second
//! per iteration, so a scenario's temperature trajectory unfolds across
//! its whole budget.
//!
//! All randomness derives from `(master seed, scenario id, iteration)`,
//! and every case is replayable from the event log alone.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{
    run_degraded_from, run_reference, ExecutionTrace, FaultConfig, LogLine,
};
use crate::graph::{Category, CoverageSet};
use crate::mutate::{apply_rule, MutationError, MutationRule};
use crate::oracle::{detect, CaseRef, CrashArchive, Verdict};
use crate::rng::hash;
use crate::schedule::{
    maybe_admit, performance_of, select_rule_among, select_seed, update_contribution, RuleStats,
    SeedPool,
};
use crate::starter::starter_pool;
use crate::tensor::gen_inputs;
use crate::thermal::{standard_scenarios, GpuProfile};

/// Simulated seconds the scenario clock advances per iteration.
pub const SCENARIO_TICK_S: f64 = 1.0;

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "THERMOFUZZ_OUT";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error("campaign io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pool(#[from] crate::schedule::PoolError),
    #[error("unknown case id {0}")]
    UnknownCase(String),
    #[error("event record checksum mismatch for case {0}: the log was modified")]
    ChecksumMismatch(String),
    #[error("replay integrity failure: {0}")]
    Integrity(String),
    #[error("malformed campaign artifact: {0}")]
    Malformed(String),
}

/// File-level campaign configuration, as read from `run --config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// GPU profile JSON; the bundled RTX 4090D profile when absent.
    #[serde(default)]
    pub profile_path: Option<PathBuf>,
    /// Fault config JSON; built-in defaults when absent.
    #[serde(default)]
    pub fault_config_path: Option<PathBuf>,
    /// Scenario ids to run, in order. Defaults to all six.
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<u8>,
    #[serde(default = "default_iterations")]
    pub iterations_per_scenario: u32,
    #[serde(default)]
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Existing seed pool directory; the bundled starters when absent.
    #[serde(default)]
    pub seed_pool_dir: Option<PathBuf>,
    /// Mutation rule ids the scheduler may draw. Defaults to all eight;
    /// restricting to rule 8 reproduces the mutation-ablation setup.
    #[serde(default = "default_rules")]
    pub rules: Vec<u8>,
}

fn default_scenarios() -> Vec<u8> {
    vec![1, 2, 3, 4, 5, 6]
}

fn default_iterations() -> u32 {
    500
}

fn default_rules() -> Vec<u8> {
    vec![1, 2, 3, 4, 5, 6, 7, 8]
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, CampaignError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CampaignError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.iterations_per_scenario < 1 {
            return Err(CampaignError::Config(
                "iterations_per_scenario must be >= 1".into(),
            ));
        }
        if self.scenarios.is_empty() {
            return Err(CampaignError::Config("scenarios must be nonempty".into()));
        }
        if self.scenarios.iter().any(|&s| !(1..=6).contains(&s)) {
            return Err(CampaignError::Config("scenario ids must be in 1..=6".into()));
        }
        if self.rules.is_empty() {
            return Err(CampaignError::Config("rules must be nonempty".into()));
        }
        if self.rules.iter().any(|&r| MutationRule::from_id(r).is_none()) {
            return Err(CampaignError::Config("rule ids must be in 1..=8".into()));
        }
        Ok(())
    }
}

/// Resolved campaign parameters, independent of the filesystem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignSettings {
    pub profile: GpuProfile,
    pub faults: FaultConfig,
    pub scenarios: Vec<u8>,
    pub iterations_per_scenario: u32,
    pub master_seed: u64,
    pub rules: Vec<u8>,
}

impl CampaignSettings {
    pub fn default_with_seed(master_seed: u64) -> Self {
        Self {
            profile: GpuProfile::rtx4090d(),
            faults: FaultConfig::default(),
            scenarios: default_scenarios(),
            iterations_per_scenario: default_iterations(),
            master_seed,
            rules: default_rules(),
        }
    }

    fn rule_set(&self) -> Vec<MutationRule> {
        self.rules
            .iter()
            .filter_map(|&r| MutationRule::from_id(r))
            .collect()
    }
}

/// Outcome of one case, as recorded in the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CaseOutcome {
    /// The drawn rule had no eligible site; a no-op iteration.
    NoEligibleSite,
    /// The reference side failed; excluded from counting.
    InvalidCase,
    Tested {
        verdict: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        mae: Option<f32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        duplicate: Option<bool>,
        /// Normalized crash log; present for crash verdicts so reports can
        /// be re-rendered without re-executing.
        #[serde(skip_serializing_if = "Option::is_none")]
        normalized_log: Option<Vec<String>>,
    },
}

/// One line of `events.jsonl`: everything needed to replay the case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvent {
    pub case_id: String,
    pub scenario: u8,
    pub iteration: u32,
    pub scenario_time: f64,
    pub seed_index: usize,
    pub rule: u8,
    pub mutation_seed: u64,
    pub input_seed: u64,
    pub degraded_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mutant_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perf_seed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perf_new: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub admitted_index: Option<usize>,
    #[serde(flatten)]
    pub outcome: CaseOutcome,
    #[serde(default)]
    pub checksum: String,
}

impl CaseEvent {
    /// Checksum over the canonical encoding with the checksum field blank.
    fn compute_checksum(&self) -> String {
        let mut blank = self.clone();
        blank.checksum = String::new();
        let text = serde_json::to_string(&blank).expect("event serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            use std::fmt::Write;
            write!(out, "{b:02x}").unwrap();
        }
        out
    }

    fn seal(mut self) -> Self {
        self.checksum = self.compute_checksum();
        self
    }

    pub fn checksum_valid(&self) -> bool {
        self.checksum == self.compute_checksum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub crashes_unique: u32,
    pub nans_unique: u32,
    pub heavy_inconsistencies: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub id: u8,
    pub name: String,
    pub iterations: u32,
    /// Unique within this scenario (crash logs deduplicated by cosine
    /// similarity, NaNs by model hash).
    pub crashes_unique: u32,
    pub nans_unique: u32,
    /// Raw count; heavy inconsistencies are per-case findings.
    pub heavy_inconsistencies: u32,
    /// All non-pass verdicts, duplicates included.
    pub fault_verdicts: u32,
    pub passes: u32,
    pub invalid_cases: u32,
    pub no_eligible_site: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub operator: f64,
    pub temperature_sensitive: f64,
    pub universe_size: usize,
    pub sensitive_size: usize,
    pub covered: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleContribution {
    pub id: u8,
    pub name: String,
    pub contribution: f64,
}

/// Final campaign report, mirroring the per-scenario findings tables,
/// cross-scenario totals, coverage, and rule contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub master_seed: u64,
    pub scenarios: Vec<ScenarioReport>,
    pub totals: Totals,
    pub coverage: CoverageReport,
    pub rule_contributions: Vec<RuleContribution>,
    pub pool_size: usize,
}

impl CampaignReport {
    pub fn to_json(&self) -> String {
        let mut text =
            serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Everything a campaign produces, before any of it touches disk.
#[derive(Debug)]
pub struct CampaignOutcome {
    pub report: CampaignReport,
    pub events: Vec<CaseEvent>,
    pub pool: SeedPool,
    pub archive: CrashArchive,
    /// Degraded-side logs of crash cases, for bug reports.
    pub crash_logs: Vec<(String, Vec<LogLine>)>,
}

struct ScenarioTally {
    crash_archive: CrashArchive,
    nan_models: BTreeSet<String>,
    heavy: u32,
    faults: u32,
    passes: u32,
    invalid: u32,
    no_site: u32,
}

impl ScenarioTally {
    fn new() -> Self {
        Self {
            crash_archive: CrashArchive::new(),
            nan_models: BTreeSet::new(),
            heavy: 0,
            faults: 0,
            passes: 0,
            invalid: 0,
            no_site: 0,
        }
    }
}

/// Runs a campaign entirely in memory. The filesystem wrapper and the
/// browser demo both build on this.
pub fn run_campaign_mem(
    settings: &CampaignSettings,
    initial_pool: SeedPool,
) -> Result<CampaignOutcome, CampaignError> {
    settings
        .profile
        .validate()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    settings
        .faults
        .validate()
        .map_err(|e| CampaignError::Config(e.to_string()))?;
    if initial_pool.is_empty() {
        return Err(CampaignError::Config("initial seed pool is empty".into()));
    }
    let rules = settings.rule_set();
    if rules.is_empty() {
        return Err(CampaignError::Config("rules must be nonempty".into()));
    }

    let all_scenarios = standard_scenarios(&settings.profile);
    let mut pool = initial_pool;
    let mut stats = RuleStats::new();
    let mut archive = CrashArchive::new();
    let mut coverage = CoverageSet::new();
    let mut global_nan_models: BTreeSet<String> = BTreeSet::new();
    let mut events = Vec::new();
    let mut crash_logs = Vec::new();
    let mut scenario_reports = Vec::new();
    let mut heavy_total = 0u32;

    for &sid in &settings.scenarios {
        let scenario = all_scenarios[(sid - 1) as usize].clone();
        let mut tally = ScenarioTally::new();

        for iteration in 0..settings.iterations_per_scenario {
            let scenario_time = iteration as f64 * SCENARIO_TICK_S;
            let case_id = format!("s{sid}-i{iteration}");
            let base = hash(settings.master_seed, &[sid as u64, iteration as u64]);
            let select_seed_seed = hash(base, &[1]);
            let rule_seed = hash(base, &[2]);
            let mutation_seed = hash(base, &[3]);
            let input_seed = hash(base, &[4]);
            let degraded_seed = hash(base, &[5]);

            let seed_index = select_seed(&pool, select_seed_seed)?;
            let rule = select_rule_among(&stats, &rules, rule_seed);

            let template = CaseEvent {
                case_id: case_id.clone(),
                scenario: sid,
                iteration,
                scenario_time,
                seed_index,
                rule: rule.id(),
                mutation_seed,
                input_seed,
                degraded_seed,
                mutant_hash: None,
                perf_seed: None,
                perf_new: None,
                admitted_index: None,
                outcome: CaseOutcome::NoEligibleSite,
                checksum: String::new(),
            };

            let seed_model = pool.get(seed_index).model.clone();
            let mutant = match apply_rule(&seed_model, rule, mutation_seed) {
                Ok(m) => m,
                Err(MutationError::NoEligibleSite) => {
                    tally.no_site += 1;
                    events.push(template.seal());
                    continue;
                }
            };
            coverage.add_graph(&mutant);
            let mutant_hash = mutant.content_hash();

            let inputs = gen_inputs(&mutant, input_seed);
            let reference = run_reference(&mutant, &inputs);
            let degraded = run_degraded_from(
                &mutant,
                &inputs,
                &scenario,
                scenario_time,
                &settings.profile,
                &settings.faults,
                degraded_seed,
            );

            let case_ref = CaseRef {
                scenario: sid,
                iteration,
            };
            let verdict = match detect(&reference, &degraded, &mut archive, case_ref) {
                Some(v) => v,
                None => {
                    tally.invalid += 1;
                    events.push(
                        CaseEvent {
                            mutant_hash: Some(mutant_hash),
                            outcome: CaseOutcome::InvalidCase,
                            ..template
                        }
                        .seal(),
                    );
                    continue;
                }
            };

            let perf_seed = pool.get(seed_index).performance;
            let mae = verdict.mae().unwrap_or(0.0) as f64;
            let perf_new = performance_of(&verdict, &inputs, mae);
            stats = update_contribution(&stats, rule, perf_new, perf_seed);
            let admitted = maybe_admit(&mut pool, &mutant, &verdict, perf_new);
            let admitted_index = admitted.then(|| pool.len() - 1);

            match &verdict {
                Verdict::Pass { .. } => tally.passes += 1,
                Verdict::Crash { normalized_log, .. } => {
                    tally.faults += 1;
                    if !tally
                        .crash_archive
                        .check_and_insert(normalized_log.clone(), case_ref)
                    {
                        // first sighting within this scenario
                    }
                    crash_logs.push((case_id.clone(), degraded.log.clone()));
                }
                Verdict::NaN => {
                    tally.faults += 1;
                    tally.nan_models.insert(mutant_hash.clone());
                    global_nan_models.insert(mutant_hash.clone());
                }
                Verdict::HeavyInconsistency { .. } => {
                    tally.faults += 1;
                    tally.heavy += 1;
                    heavy_total += 1;
                }
            }

            let (duplicate, normalized_log) = match &verdict {
                Verdict::Crash {
                    duplicate,
                    normalized_log,
                } => (Some(*duplicate), Some(normalized_log.clone())),
                _ => (None, None),
            };
            events.push(
                CaseEvent {
                    mutant_hash: Some(mutant_hash),
                    perf_seed: Some(perf_seed),
                    perf_new: Some(perf_new),
                    admitted_index,
                    outcome: CaseOutcome::Tested {
                        verdict: verdict.tag().to_string(),
                        mae: verdict.mae(),
                        duplicate,
                        normalized_log,
                    },
                    ..template
                }
                .seal(),
            );
        }

        scenario_reports.push(ScenarioReport {
            id: sid,
            name: scenario.name.clone(),
            iterations: settings.iterations_per_scenario,
            crashes_unique: tally.crash_archive.len() as u32,
            nans_unique: tally.nan_models.len() as u32,
            heavy_inconsistencies: tally.heavy,
            fault_verdicts: tally.faults,
            passes: tally.passes,
            invalid_cases: tally.invalid,
            no_eligible_site: tally.no_site,
        });
    }

    let (operator, temperature_sensitive) = coverage.fractions(Category::universe());
    let report = CampaignReport {
        master_seed: settings.master_seed,
        scenarios: scenario_reports,
        totals: Totals {
            crashes_unique: archive.len() as u32,
            nans_unique: global_nan_models.len() as u32,
            heavy_inconsistencies: heavy_total,
        },
        coverage: CoverageReport {
            operator,
            temperature_sensitive,
            universe_size: Category::universe().len(),
            sensitive_size: Category::universe()
                .iter()
                .filter(|c| c.temperature_sensitive())
                .count(),
            covered: coverage.covered.iter().copied().collect(),
        },
        rule_contributions: MutationRule::ALL
            .iter()
            .map(|r| RuleContribution {
                id: r.id(),
                name: r.name().to_string(),
                contribution: stats.of(*r),
            })
            .collect(),
        pool_size: pool.len(),
    };

    Ok(CampaignOutcome {
        report,
        events,
        pool,
        archive,
        crash_logs,
    })
}

/// Resolves a file-level config into settings plus the initial pool.
pub fn resolve_config(
    config: &CampaignConfig,
) -> Result<(CampaignSettings, SeedPool, PathBuf), CampaignError> {
    config.validate()?;
    let profile = match &config.profile_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            GpuProfile::from_json(&text).map_err(|e| CampaignError::Config(e.to_string()))?
        }
        None => GpuProfile::rtx4090d(),
    };
    let faults = match &config.fault_config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            FaultConfig::from_json(&text).map_err(|e| CampaignError::Config(e.to_string()))?
        }
        None => FaultConfig::default(),
    };
    let pool = match &config.seed_pool_dir {
        Some(dir) => SeedPool::load_dir(dir)?,
        None => starter_pool(),
    };
    let out_dir = match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => config.out_dir.clone(),
    };
    let settings = CampaignSettings {
        profile,
        faults,
        scenarios: config.scenarios.clone(),
        iterations_per_scenario: config.iterations_per_scenario,
        master_seed: config.master_seed,
        rules: config.rules.clone(),
    };
    Ok((settings, pool, out_dir))
}

/// Runs a campaign from a file-level config and persists every artifact
/// under the output directory: `report.json`, `events.jsonl`,
/// `crash_archive.jsonl`, `case_logs.jsonl`, the final seed pool, and the
/// resolved settings snapshot used by `replay` and `report`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    let (settings, pool, out_dir) = resolve_config(config)?;
    let outcome = run_campaign_mem(&settings, pool)?;
    persist_outcome(&settings, &outcome, &out_dir)?;
    Ok(outcome.report)
}

pub fn persist_outcome(
    settings: &CampaignSettings,
    outcome: &CampaignOutcome,
    out_dir: &Path,
) -> Result<(), CampaignError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), outcome.report.to_json())?;

    let mut events_text = String::new();
    for event in &outcome.events {
        events_text.push_str(&serde_json::to_string(event).expect("event serializes"));
        events_text.push('\n');
    }
    std::fs::write(out_dir.join("events.jsonl"), events_text)?;
    std::fs::write(out_dir.join("crash_archive.jsonl"), outcome.archive.to_jsonl())?;

    let mut log_text = String::new();
    for (case_id, log) in &outcome.crash_logs {
        for line in log {
            #[derive(Serialize)]
            struct CaseLogLine<'a> {
                case: &'a str,
                #[serde(flatten)]
                line: &'a LogLine,
            }
            log_text.push_str(
                &serde_json::to_string(&CaseLogLine { case: case_id, line })
                    .expect("log line serializes"),
            );
            log_text.push('\n');
        }
    }
    std::fs::write(out_dir.join("case_logs.jsonl"), log_text)?;

    outcome.pool.save_dir(&out_dir.join("pool"))?;
    let meta = serde_json::to_string_pretty(settings).expect("settings serialize");
    std::fs::write(out_dir.join("campaign_meta.json"), meta)?;
    Ok(())
}

fn load_settings(out_dir: &Path) -> Result<CampaignSettings, CampaignError> {
    let text = std::fs::read_to_string(out_dir.join("campaign_meta.json"))?;
    serde_json::from_str(&text).map_err(|e| CampaignError::Malformed(e.to_string()))
}

fn load_events(out_dir: &Path) -> Result<Vec<CaseEvent>, CampaignError> {
    let text = std::fs::read_to_string(out_dir.join("events.jsonl"))?;
    let mut events = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        events.push(
            serde_json::from_str(line).map_err(|e| CampaignError::Malformed(e.to_string()))?,
        );
    }
    Ok(events)
}

/// Result of replaying one logged case.
#[derive(Debug)]
pub struct ReplayResult {
    pub reference: ExecutionTrace,
    pub degraded: ExecutionTrace,
    pub verdict: Verdict,
    pub event: CaseEvent,
}

/// Re-derives a logged case from its event record and reproduces both
/// traces and the verdict exactly. Tampered records are rejected by the
/// checksum; a mutant hash mismatch means the pool and log disagree.
pub fn replay(case_id: &str, out_dir: &Path) -> Result<ReplayResult, CampaignError> {
    let settings = load_settings(out_dir)?;
    let events = load_events(out_dir)?;
    let event = events
        .into_iter()
        .find(|e| e.case_id == case_id)
        .ok_or_else(|| CampaignError::UnknownCase(case_id.to_string()))?;
    if !event.checksum_valid() {
        return Err(CampaignError::ChecksumMismatch(case_id.to_string()));
    }
    let pool = SeedPool::load_dir(&out_dir.join("pool"))?;
    if event.seed_index >= pool.len() {
        return Err(CampaignError::Integrity(format!(
            "seed index {} outside pool of {}",
            event.seed_index,
            pool.len()
        )));
    }
    let rule = MutationRule::from_id(event.rule)
        .ok_or_else(|| CampaignError::Malformed(format!("rule id {}", event.rule)))?;
    let mutant = apply_rule(&pool.get(event.seed_index).model, rule, event.mutation_seed)
        .map_err(|_| {
            CampaignError::Integrity("logged case has no eligible site on replay".to_string())
        })?;
    if let Some(expected) = &event.mutant_hash {
        let got = mutant.content_hash();
        if got != *expected {
            return Err(CampaignError::Integrity(format!(
                "mutant hash mismatch: log says {expected}, replay derived {got}"
            )));
        }
    }

    let scenario = standard_scenarios(&settings.profile)
        .into_iter()
        .find(|s| s.id == event.scenario)
        .ok_or_else(|| CampaignError::Malformed(format!("scenario {}", event.scenario)))?;
    let inputs = gen_inputs(&mutant, event.input_seed);
    let reference = run_reference(&mutant, &inputs);
    let degraded = run_degraded_from(
        &mutant,
        &inputs,
        &scenario,
        event.scenario_time,
        &settings.profile,
        &settings.faults,
        event.degraded_seed,
    );
    let mut throwaway = CrashArchive::new();
    let case_ref = CaseRef {
        scenario: event.scenario,
        iteration: event.iteration,
    };
    let mut verdict = detect(&reference, &degraded, &mut throwaway, case_ref)
        .ok_or_else(|| CampaignError::Integrity("replayed case is invalid".to_string()))?;
    // The duplicate flag is archive-state dependent; restore the logged one.
    if let (
        Verdict::Crash { duplicate, .. },
        CaseOutcome::Tested {
            duplicate: Some(logged),
            ..
        },
    ) = (&mut verdict, &event.outcome)
    {
        *duplicate = *logged;
    }
    Ok(ReplayResult {
        reference,
        degraded,
        verdict,
        event,
    })
}

/// Re-renders the campaign report from the event log, the final pool, and
/// the settings snapshot, without re-executing any case. Byte-identical to
/// the report written by the original run.
pub fn rerender_report(out_dir: &Path) -> Result<CampaignReport, CampaignError> {
    let settings = load_settings(out_dir)?;
    let events = load_events(out_dir)?;
    let pool = SeedPool::load_dir(&out_dir.join("pool"))?;

    let all_scenarios = standard_scenarios(&settings.profile);
    let mut coverage = CoverageSet::new();
    let mut stats = RuleStats::new();
    let mut archive = CrashArchive::new();
    let mut global_nan: BTreeSet<String> = BTreeSet::new();
    let mut heavy_total = 0u32;
    let mut scenario_reports = Vec::new();
    let mut tally = ScenarioTally::new();
    let mut current_scenario: Option<u8> = None;

    let flush =
        |sid: u8, tally: &mut ScenarioTally, scenario_reports: &mut Vec<ScenarioReport>| {
            let scenario = &all_scenarios[(sid - 1) as usize];
            scenario_reports.push(ScenarioReport {
                id: sid,
                name: scenario.name.clone(),
                iterations: settings.iterations_per_scenario,
                crashes_unique: tally.crash_archive.len() as u32,
                nans_unique: tally.nan_models.len() as u32,
                heavy_inconsistencies: tally.heavy,
                fault_verdicts: tally.faults,
                passes: tally.passes,
                invalid_cases: tally.invalid,
                no_eligible_site: tally.no_site,
            });
            *tally = ScenarioTally::new();
        };

    for event in &events {
        if !event.checksum_valid() {
            return Err(CampaignError::ChecksumMismatch(event.case_id.clone()));
        }
        match current_scenario {
            Some(sid) if sid != event.scenario => {
                flush(sid, &mut tally, &mut scenario_reports);
                current_scenario = Some(event.scenario);
            }
            None => current_scenario = Some(event.scenario),
            _ => {}
        }
        let case_ref = CaseRef {
            scenario: event.scenario,
            iteration: event.iteration,
        };
        match &event.outcome {
            CaseOutcome::NoEligibleSite => {
                tally.no_site += 1;
                continue;
            }
            CaseOutcome::InvalidCase => {
                tally.invalid += 1;
            }
            CaseOutcome::Tested {
                verdict,
                normalized_log,
                ..
            } => {
                if let (Some(ps), Some(pn)) = (event.perf_seed, event.perf_new) {
                    let rule = MutationRule::from_id(event.rule)
                        .ok_or_else(|| CampaignError::Malformed("rule id".into()))?;
                    stats = update_contribution(&stats, rule, pn, ps);
                }
                match verdict.as_str() {
                    "pass" => tally.passes += 1,
                    "crash" => {
                        tally.faults += 1;
                        let log = normalized_log.clone().ok_or_else(|| {
                            CampaignError::Malformed("crash event without log".into())
                        })?;
                        tally.crash_archive.check_and_insert(log.clone(), case_ref);
                        archive.check_and_insert(log, case_ref);
                    }
                    "nan" => {
                        tally.faults += 1;
                        let h = event.mutant_hash.clone().ok_or_else(|| {
                            CampaignError::Malformed("nan event without hash".into())
                        })?;
                        tally.nan_models.insert(h.clone());
                        global_nan.insert(h);
                    }
                    "heavy_inconsistency" => {
                        tally.faults += 1;
                        tally.heavy += 1;
                        heavy_total += 1;
                    }
                    other => {
                        return Err(CampaignError::Malformed(format!("verdict {other}")));
                    }
                }
            }
        }
        // Coverage needs the mutant; re-derive it (mutation only, no
        // execution).
        if event.mutant_hash.is_some() {
            let rule = MutationRule::from_id(event.rule)
                .ok_or_else(|| CampaignError::Malformed("rule id".into()))?;
            if event.seed_index < pool.len() {
                if let Ok(mutant) =
                    apply_rule(&pool.get(event.seed_index).model, rule, event.mutation_seed)
                {
                    coverage.add_graph(&mutant);
                }
            }
        }
    }
    if let Some(sid) = current_scenario {
        flush(sid, &mut tally, &mut scenario_reports);
    }

    let (operator, temperature_sensitive) = coverage.fractions(Category::universe());
    Ok(CampaignReport {
        master_seed: settings.master_seed,
        scenarios: scenario_reports,
        totals: Totals {
            crashes_unique: archive.len() as u32,
            nans_unique: global_nan.len() as u32,
            heavy_inconsistencies: heavy_total,
        },
        coverage: CoverageReport {
            operator,
            temperature_sensitive,
            universe_size: Category::universe().len(),
            sensitive_size: Category::universe()
                .iter()
                .filter(|c| c.temperature_sensitive())
                .count(),
            covered: coverage.covered.iter().copied().collect(),
        },
        rule_contributions: MutationRule::ALL
            .iter()
            .map(|r| RuleContribution {
                id: r.id(),
                name: r.name().to_string(),
                contribution: stats.of(*r),
            })
            .collect(),
        pool_size: pool.len(),
    })
}

/// Convenience used by the thermal demo and smoke tests: a single-scenario
/// in-memory campaign over the bundled starters.
pub fn run_mini_campaign(
    scenario: u8,
    iterations: u32,
    master_seed: u64,
) -> Result<CampaignReport, CampaignError> {
    let settings = CampaignSettings {
        scenarios: vec![scenario],
        iterations_per_scenario: iterations,
        ..CampaignSettings::default_with_seed(master_seed)
    };
    Ok(run_campaign_mem(&settings, starter_pool())?.report)
}
