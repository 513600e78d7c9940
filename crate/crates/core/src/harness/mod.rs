//! Benchmark runs over models, parameter points and sector suites; the
//! feedback refinement loop; reporting.

mod report;
mod store;

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{benchmark_table, report, skill_scores, BenchmarkTable, ReportFiles, RANDOM_ROW};
pub use store::{BaselineRecord, BenchmarkCell, CellKey, CellStatus, Store, StoreRecord};

use crate::baseline::{estimate_madip_rand, estimate_muip_rand, Allocation};
use crate::llm::{prompt_hash, total_cost, ChatMessage, Client, CompletionRecord};
use crate::model::{Benchmark, BenchmarkParams, Scenario, SectorGraph};
use crate::prompting::{build_benchmark_prompt, build_feedback, requirement_met, PromptError, Templates};
use crate::rollout::{verify, RolloutConfig, Verification};
use crate::sectors::{generate_suite, GridSize, SectorGenError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("store {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("store is empty")]
    EmptyStore,
    #[error(transparent)]
    Sectors(#[from] SectorGenError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("report: {0}")]
    Report(String),
    #[error("max_rounds must be at least 1")]
    NoRounds,
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

/// Where the sectors for each parameter point come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub seed: u64,
    pub n_sectors: usize,
    pub grid: GridSize,
}

impl SuiteSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, n_sectors: 10, grid: GridSize::default() }
    }

    pub fn sectors(&self, params: &BenchmarkParams) -> Result<Vec<SectorGraph>, SectorGenError> {
        generate_suite(self.seed, self.n_sectors, params.n_routes, params.n_intersections, self.grid)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Parameter values to run; the full sweep when `None`.
    pub values: Option<Vec<u32>>,
    pub baseline: Allocation,
    pub rollout: RolloutConfig,
    /// Worker threads issuing cells.
    pub workers: usize,
    /// Stop after this many new cells (used to simulate interruption).
    pub cell_limit: Option<usize>,
    /// Re-issue cells stored as failed.
    pub retry_failed: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            values: None,
            baseline: Allocation::default(),
            rollout: RolloutConfig::default(),
            workers: 4,
            cell_limit: None,
            retry_failed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub baselines_computed: usize,
}

struct Job<'a> {
    client: &'a Client,
    params: BenchmarkParams,
    sector_index: u32,
    sector: &'a SectorGraph,
    prompt: String,
    key: CellKey,
}

fn score(params: &BenchmarkParams, pairs: usize) -> f64 {
    match params.target_pairs {
        Some(k) => (pairs as f64 - k as f64).abs(),
        None => pairs as f64,
    }
}

fn spend(history: &[CompletionRecord]) -> (Vec<u32>, u64, u64, Option<f64>) {
    (
        history.iter().map(|r| r.max_tokens).collect(),
        history.iter().map(|r| r.prompt_tokens).sum(),
        history.iter().map(|r| r.completion_tokens).sum(),
        total_cost(history),
    )
}

fn run_cell(job: &Job<'_>, rollout: &RolloutConfig) -> BenchmarkCell {
    let mut cell = BenchmarkCell {
        model: job.key.model.clone(),
        benchmark: job.params.benchmark,
        value: job.key.value,
        sector_index: job.sector_index,
        prompt_hash: job.key.prompt_hash.clone(),
        status: CellStatus::Failed,
        pair_count: None,
        score: None,
        pairs: Vec::new(),
        violations: Vec::new(),
        scenario: None,
        error: None,
        budgets: Vec::new(),
        prompt_tokens: 0,
        completion_tokens: 0,
        cost_usd: None,
        price_per_mtok: job.client.cfg.price_per_mtok,
    };
    match job.client.complete_with_escalation(&[ChatMessage::user(job.prompt.clone())]) {
        Ok(done) => {
            (cell.budgets, cell.prompt_tokens, cell.completion_tokens, cell.cost_usd) = spend(&done.history);
            let v = verify(&done.scenario, job.sector, Some(&job.params), rollout);
            cell.pair_count = Some(v.unique_pairs.len());
            cell.pairs = v.unique_pairs.clone();
            cell.violations = v.validation.violations.clone();
            if v.validation.violations.is_empty() {
                cell.status = CellStatus::Ok;
                cell.score = Some(score(&job.params, v.unique_pairs.len()));
            } else {
                cell.status = CellStatus::Invalid;
            }
            cell.scenario = Some(done.scenario);
        }
        Err(failure) => {
            (cell.budgets, cell.prompt_tokens, cell.completion_tokens, cell.cost_usd) = spend(&failure.history);
            cell.error = Some(failure.error.to_string());
        }
    }
    cell
}

/// Runs every (model, parameter point, sector) cell of `benchmark` that the
/// store does not already hold, computing missing random baselines first.
/// Cell failures are recorded; only store I/O errors abort. The store is
/// compacted at the end.
pub fn run_benchmark(
    benchmark: Benchmark,
    clients: &[Client],
    suite: &SuiteSpec,
    store: &mut Store,
    templates: &Templates,
    opts: &RunOptions,
) -> Result<RunSummary, HarnessError> {
    let values = opts.values.clone().unwrap_or_else(|| benchmark.sweep());
    let mut summary = RunSummary::default();
    let mut suites: HashMap<(u32, u32), Vec<SectorGraph>> = HashMap::new();
    for &value in &values {
        let params = benchmark.params(value);
        let key = (params.n_routes, params.n_intersections);
        if let Entry::Vacant(slot) = suites.entry(key) {
            slot.insert(suite.sectors(&params)?);
        }
        if store.baseline(benchmark, value).is_none() {
            let sectors = &suites[&key];
            let est = match params.target_pairs {
                Some(k) => estimate_madip_rand(sectors, params.n_aircraft, params.duration, k, opts.baseline, suite.seed),
                None => estimate_muip_rand(sectors, params.n_aircraft, params.duration, opts.baseline, suite.seed),
            };
            let record = BaselineRecord {
                benchmark,
                value,
                mean: est.mean,
                stderr: est.stderr,
                samples: est.samples,
                seed: suite.seed,
            };
            store.append(StoreRecord::Baseline(record)).map_err(|e| HarnessError::io(store.path(), e))?;
            summary.baselines_computed += 1;
        }
    }

    let mut jobs = Vec::new();
    for client in clients {
        for &value in &values {
            let params = benchmark.params(value);
            let sectors = &suites[&(params.n_routes, params.n_intersections)];
            for (i, sector) in sectors.iter().enumerate() {
                let prompt = build_benchmark_prompt(templates, sector, &params)?;
                let key = CellKey {
                    model: client.cfg.label().to_string(),
                    benchmark,
                    value,
                    sector_index: i as u32,
                    prompt_hash: prompt_hash(&prompt),
                };
                let retry = opts.retry_failed && store.cell(&key).is_some_and(|c| c.status == CellStatus::Failed);
                if store.cell(&key).is_some() && !retry {
                    summary.skipped += 1;
                    continue;
                }
                jobs.push(Job { client, params, sector_index: i as u32, sector, prompt, key });
            }
        }
    }
    if let Some(limit) = opts.cell_limit {
        jobs.truncate(limit);
    }
    info!("{benchmark}: {} cells to run, {} already stored", jobs.len(), summary.skipped);

    let store_path = store.path().to_path_buf();
    let writer = Mutex::new(&mut *store);
    let failed = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| HarnessError::Report(e.to_string()))?;
    pool.install(|| {
        jobs.par_iter().try_for_each(|job| {
            let cell = run_cell(job, &opts.rollout);
            if cell.status == CellStatus::Failed {
                warn!("{:?}: {}", job.key, cell.error.as_deref().unwrap_or("failed"));
                failed.fetch_add(1, Ordering::Relaxed);
            }
            writer
                .lock()
                .expect("store lock")
                .append(StoreRecord::Cell(cell))
                .map_err(|e| HarnessError::io(&store_path, e))
        })
    })?;
    summary.executed = jobs.len();
    summary.failed = failed.into_inner();
    store.compact().map_err(|e| HarnessError::io(&store_path, e))?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementStatus {
    Resolved,
    Unresolved,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRound {
    pub round: u32,
    pub pair_count: Option<usize>,
    pub requirement_met: bool,
    pub scenario: Option<Scenario>,
    pub verification: Option<Verification>,
    /// Feedback sent after this round, if another round followed.
    pub feedback: Option<String>,
    pub budgets: Vec<u32>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub model: String,
    pub params: BenchmarkParams,
    pub rounds: Vec<RefinementRound>,
    pub status: RefinementStatus,
}

impl RefinementTrace {
    pub fn pair_counts(&self) -> Vec<Option<usize>> {
        self.rounds.iter().map(|r| r.pair_count).collect()
    }
}

/// Round 0 is a normal benchmark generation. While the requirement is unmet
/// and rounds remain, the conversation is extended with the model's reply
/// and a feedback message, and the new scenario is verified again.
pub fn run_refinement(
    client: &Client,
    g: &SectorGraph,
    params: &BenchmarkParams,
    max_rounds: u32,
    templates: &Templates,
    rollout: &RolloutConfig,
) -> Result<RefinementTrace, HarnessError> {
    if max_rounds == 0 {
        return Err(HarnessError::NoRounds);
    }
    let mut messages = vec![ChatMessage::user(build_benchmark_prompt(templates, g, params)?)];
    let mut rounds: Vec<RefinementRound> = Vec::new();
    let mut status = RefinementStatus::Unresolved;
    for round in 0..=max_rounds {
        let (reply, mut entry) = match client.complete_with_escalation(&messages) {
            Ok(done) => {
                let v = verify(&done.scenario, g, Some(params), rollout);
                let met = requirement_met(&v, params);
                let reply = done.history.last().map(|r| r.text.clone()).unwrap_or_default();
                let entry = RefinementRound {
                    round,
                    pair_count: Some(v.unique_pairs.len()),
                    requirement_met: met,
                    scenario: Some(done.scenario),
                    verification: Some(v),
                    feedback: None,
                    budgets: done.history.iter().map(|r| r.max_tokens).collect(),
                    error: None,
                };
                (reply, entry)
            }
            Err(failure) => {
                rounds.push(RefinementRound {
                    round,
                    pair_count: None,
                    requirement_met: false,
                    scenario: None,
                    verification: None,
                    feedback: None,
                    budgets: failure.history.iter().map(|r| r.max_tokens).collect(),
                    error: Some(failure.error.to_string()),
                });
                status = RefinementStatus::Failed;
                break;
            }
        };
        if entry.requirement_met {
            rounds.push(entry);
            status = RefinementStatus::Resolved;
            break;
        }
        if round == max_rounds {
            rounds.push(entry);
            break;
        }
        let v = entry.verification.as_ref().expect("verified round");
        let feedback = build_feedback(templates, v, params, round + 1)?;
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(feedback.clone()));
        entry.feedback = Some(feedback);
        rounds.push(entry);
    }
    Ok(RefinementTrace { model: client.cfg.label().to_string(), params: *params, rounds, status })
}
