//! Baseline tracks (greedy, sampling, majority vote) and the
//! retrieve / generate / verify / select agent flow.

mod runner;
pub mod selector;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::context::{build_context, build_prompt, DdlOptions, SchemaContext};
use crate::corpus::{BenchmarkItem, DatabaseHandle, Difficulty};
use crate::executor::{
    compare_results, execute_sql, is_order_sensitive, result_signature, ExecStatus, ExecutionOutcome,
    ResultSignature, DEFAULT_TIMEOUT_SECONDS,
};
use crate::gateway::{BackendError, Candidate, Gateway, GenerationRequest, DEFAULT_MAX_NEW_TOKENS, SAMPLING_TEMPERATURE};

pub use runner::{run_items, RunEnv};
pub use selector::{plurality, CandidateSelector, ConsistencySelector, Vote};

pub const DEFAULT_VERIFIER_ITERS: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid pipeline configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub backend_params: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: SAMPLING_TEMPERATURE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            backend_params: Vec::new(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub use_retriever: bool,
    pub use_verifier: bool,
    pub use_selector: bool,
    pub k: usize,
    pub verifier_max_iters: usize,
    pub timeout_seconds: f64,
    pub sampling: Sampling,
    pub ddl: DdlOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            use_retriever: false,
            use_verifier: false,
            use_selector: false,
            k: 1,
            verifier_max_iters: DEFAULT_VERIFIER_ITERS,
            timeout_seconds: DEFAULT_TIMEOUT_SECONDS,
            sampling: Sampling::default(),
            ddl: DdlOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn greedy() -> Self {
        let mut c = PipelineConfig::default();
        c.sampling.temperature = 0.0;
        c
    }

    /// One sampled trajectory at the default sampling temperature.
    pub fn sample() -> Self {
        PipelineConfig::default()
    }

    pub fn majority(k: usize) -> Self {
        PipelineConfig {
            use_selector: true,
            k,
            ..PipelineConfig::default()
        }
    }

    pub fn sql_d1(use_retriever: bool, use_verifier: bool, use_selector: bool, k: usize) -> Self {
        PipelineConfig {
            use_retriever,
            use_verifier,
            use_selector,
            k,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        if self.k > 1 && !self.use_selector {
            return Err(ConfigError("k > 1 needs the selector to pick from the pool".into()));
        }
        if !(0.0..=2.0).contains(&self.sampling.temperature) {
            return Err(ConfigError(format!("temperature {} outside [0, 2]", self.sampling.temperature)));
        }
        if self.timeout_seconds.is_nan() || self.timeout_seconds <= 0.0 {
            return Err(ConfigError("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub detail: String,
}

/// One executed member of the candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub trajectory_id: usize,
    pub status: ExecStatus,
    pub signature: ResultSignature,
    pub has_sql: bool,
    pub correct: bool,
}

impl PoolEntry {
    pub fn vote(&self) -> Vote {
        Vote {
            trajectory_id: self.trajectory_id,
            signature: self.signature,
            has_sql: self.has_sql,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub db_id: String,
    pub difficulty: Difficulty,
    pub gold_sql: String,
    pub final_sql: Option<String>,
    pub candidates: Vec<Candidate>,
    pub pool: Vec<PoolEntry>,
    pub outcome: ExecutionOutcome,
    pub gold_outcome: ExecutionOutcome,
    /// False when the gold query itself did not execute.
    pub gold_valid: bool,
    pub correct: bool,
    pub per_stage_trace: Vec<TraceEntry>,
    pub total_latency_seconds: f64,
    pub total_tokens: u64,
    /// Set when the backend failed and the item could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_failure: Option<String>,
}

/// Everything one item evaluation needs, shared read-only across workers.
pub struct ItemEnv<'a> {
    pub gateway: &'a Gateway,
    pub db: &'a DatabaseHandle,
    /// Schema without retrieval matches or rendered DDL.
    pub schema: &'a SchemaContext,
}

struct Trace(Vec<TraceEntry>);

impl Trace {
    fn push(&mut self, stage: &str, detail: impl fmt::Display) {
        self.0.push(TraceEntry {
            stage: stage.into(),
            detail: detail.to_string(),
        });
    }
}

fn sha_prefix(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}

pub fn repair_prompt(original: &str, sql: &str, error: &str) -> String {
    format!(
        "{original}\n\nYour previous SQL query was:\n```sql\n{sql}\n```\nExecuting it produced the error: {error}. Fix the query. Output only the corrected SQL inside ```sql ``` tags."
    )
}

/// Retriever stage: builds the schema context for the item.
pub fn run_retriever(item: &BenchmarkItem, env: &ItemEnv<'_>, cfg: &PipelineConfig) -> SchemaContext {
    build_context(item, env.db, env.schema, cfg.use_retriever, &cfg.ddl)
}

fn log_candidates(trace: &mut Trace, stage: &str, cands: &[Candidate]) {
    for c in cands {
        let what = match (&c.failure, &c.extracted_sql) {
            (Some(f), _) => format!("failed ({f})"),
            (None, Some(_)) => "sql extracted".to_string(),
            (None, None) => "no sql found".to_string(),
        };
        trace.push(
            stage,
            format!(
                "trajectory {}: {what}; {} tokens, {:.3}s",
                c.trajectory_id, c.token_count, c.latency_seconds
            ),
        );
    }
}

/// Generator stage: `cfg.k` trajectories at the configured temperature.
pub fn run_generator(prompt: &str, env: &ItemEnv<'_>, cfg: &PipelineConfig) -> Result<Vec<Candidate>, BackendError> {
    let req = GenerationRequest {
        prompt: prompt.to_string(),
        temperature: cfg.sampling.temperature,
        max_new_tokens: cfg.sampling.max_new_tokens,
        num_candidates: cfg.k,
        backend_params: cfg.sampling.backend_params.clone(),
        seed: cfg.sampling.seed,
    };
    env.gateway.generate(&req)
}

/// Verifier stage: executes the candidate and, on failure, asks for a repair at
/// temperature 0, up to `cfg.verifier_max_iters` times. Latency and tokens of
/// the repair calls accumulate on the returned candidate.
pub fn run_verifier(
    candidate: Candidate,
    prompt: &str,
    env: &ItemEnv<'_>,
    cfg: &PipelineConfig,
) -> Result<(Candidate, Vec<TraceEntry>), BackendError> {
    let mut trace = Trace(Vec::new());
    let mut current = candidate;
    for iter in 0..cfg.verifier_max_iters {
        let out = execute_sql(env.db, current.extracted_sql.as_deref(), cfg.timeout_seconds);
        if out.is_ok() {
            break;
        }
        let error = out.error_message.unwrap_or_else(|| out.status.to_string());
        let sql = current.extracted_sql.clone().unwrap_or_default();
        let req = GenerationRequest {
            prompt: repair_prompt(prompt, &sql, &error),
            temperature: 0.0,
            max_new_tokens: cfg.sampling.max_new_tokens,
            num_candidates: 1,
            backend_params: cfg.sampling.backend_params.clone(),
            seed: cfg.sampling.seed,
        };
        let mut reply = env.gateway.generate_for(&req, current.trajectory_id)?;
        trace.push(
            "verifier",
            format!(
                "trajectory {} iteration {}: {} ({error}); repair call {} tokens",
                current.trajectory_id,
                iter + 1,
                out.status,
                reply.token_count
            ),
        );
        reply.latency_seconds += current.latency_seconds;
        reply.token_count += current.token_count;
        reply.tokens_approximate |= current.tokens_approximate;
        current = reply;
    }
    Ok((current, trace.0))
}

pub struct Selection {
    /// Index into the candidate list of the chosen candidate.
    pub chosen: Option<usize>,
    pub outcomes: Vec<ExecutionOutcome>,
    pub signatures: Vec<ResultSignature>,
}

/// Executes every candidate (in parallel) and applies `selector`.
pub fn run_selector(
    candidates: &[Candidate],
    db: &DatabaseHandle,
    order_sensitive: bool,
    cfg: &PipelineConfig,
    selector: &dyn CandidateSelector,
) -> Selection {
    let outcomes: Vec<ExecutionOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = candidates
            .iter()
            .map(|c| s.spawn(move || execute_sql(db, c.extracted_sql.as_deref(), cfg.timeout_seconds)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| ExecutionOutcome::failed(ExecStatus::SqlError, "executor panicked")))
            .collect()
    });
    let signatures: Vec<ResultSignature> = outcomes.iter().map(|o| result_signature(o, order_sensitive)).collect();
    let votes: Vec<Vote> = candidates
        .iter()
        .zip(&signatures)
        .map(|(c, s)| Vote {
            trajectory_id: c.trajectory_id,
            signature: *s,
            has_sql: c.extracted_sql.is_some(),
        })
        .collect();
    let chosen = if cfg.use_selector {
        selector
            .select(&votes)
            .and_then(|t| candidates.iter().position(|c| c.trajectory_id == t))
    } else {
        candidates.iter().position(|c| c.extracted_sql.is_some())
    };
    Selection {
        chosen,
        outcomes,
        signatures,
    }
}

/// Full flow: retriever (optional), generator, verifier (optional) per
/// candidate, selector (optional), then comparison with gold.
pub fn run_sql_d1(item: &BenchmarkItem, env: &ItemEnv<'_>, cfg: &PipelineConfig) -> EvalRecord {
    run_sql_d1_with(item, env, cfg, &ConsistencySelector)
}

pub fn run_sql_d1_with(
    item: &BenchmarkItem,
    env: &ItemEnv<'_>,
    cfg: &PipelineConfig,
    selector: &dyn CandidateSelector,
) -> EvalRecord {
    let mut trace = Trace(Vec::new());
    let gold_outcome = execute_sql(env.db, Some(&item.gold_sql), cfg.timeout_seconds);
    let gold_valid = gold_outcome.is_ok();
    if !gold_valid {
        trace.push(
            "gold",
            format!(
                "gold query failed: {}",
                gold_outcome.error_message.as_deref().unwrap_or(gold_outcome.status.as_str())
            ),
        );
    }
    let order_sensitive = is_order_sensitive(&item.gold_sql);

    let ctx = run_retriever(item, env, cfg);
    if cfg.use_retriever {
        let n: usize = ctx.matched_values.values().map(Vec::len).sum();
        trace.push(
            "retriever",
            format!("{n} values matched in {} columns", ctx.matched_values.len()),
        );
    }
    let prompt = build_prompt(item, &ctx);
    trace.push(
        "generator",
        format!(
            "prompt sha256 {}; k={} temperature={}",
            sha_prefix(&prompt),
            cfg.k,
            cfg.sampling.temperature
        ),
    );

    let mut record = EvalRecord {
        item_id: item.item_id.clone(),
        db_id: item.db_id.clone(),
        difficulty: item.difficulty,
        gold_sql: item.gold_sql.clone(),
        final_sql: None,
        candidates: Vec::new(),
        pool: Vec::new(),
        outcome: ExecutionOutcome::empty_prediction(),
        gold_outcome,
        gold_valid,
        correct: false,
        per_stage_trace: Vec::new(),
        total_latency_seconds: 0.0,
        total_tokens: 0,
        backend_failure: None,
    };

    let fail = |mut record: EvalRecord, mut trace: Trace, stage: &str, e: BackendError| {
        trace.push(stage, format!("backend failure: {e}"));
        record.backend_failure = Some(e.to_string());
        record.per_stage_trace = trace.0;
        record.total_latency_seconds = record.candidates.iter().map(|c| c.latency_seconds).sum();
        record.total_tokens = record.candidates.iter().map(|c| c.token_count).sum();
        record
    };

    let mut candidates = match run_generator(&prompt, env, cfg) {
        Ok(c) => c,
        Err(e) => return fail(record, trace, "generator", e),
    };
    log_candidates(&mut trace, "generator", &candidates);

    if cfg.use_verifier && cfg.verifier_max_iters > 0 {
        let mut repaired = Vec::with_capacity(candidates.len());
        for c in candidates {
            match run_verifier(c, &prompt, env, cfg) {
                Ok((c, t)) => {
                    trace.0.extend(t);
                    repaired.push(c);
                }
                Err(e) => {
                    record.candidates = repaired;
                    return fail(record, trace, "verifier", e);
                }
            }
        }
        candidates = repaired;
    }

    let selection = run_selector(&candidates, env.db, order_sensitive, cfg, selector);
    record.pool = candidates
        .iter()
        .zip(selection.outcomes.iter().zip(&selection.signatures))
        .map(|(c, (o, s))| PoolEntry {
            trajectory_id: c.trajectory_id,
            status: o.status,
            signature: *s,
            has_sql: c.extracted_sql.is_some(),
            correct: gold_valid && compare_results(o, &record.gold_outcome, order_sensitive),
        })
        .collect();
    match selection.chosen {
        Some(i) => {
            if cfg.use_selector {
                trace.push(
                    "selector",
                    format!(
                        "{} over {} candidates chose trajectory {}",
                        selector.name(),
                        candidates.len(),
                        candidates[i].trajectory_id
                    ),
                );
            }
            record.final_sql = candidates[i].extracted_sql.clone();
            record.outcome = selection.outcomes[i].clone();
            record.correct = record.pool[i].correct;
        }
        None => trace.push("selector", "no candidate produced SQL"),
    }
    trace.push("executor", format!("final status {}", record.outcome.status));
    record.total_latency_seconds = candidates.iter().map(|c| c.latency_seconds).sum();
    record.total_tokens = candidates.iter().map(|c| c.token_count).sum();
    record.candidates = candidates;
    record.per_stage_trace = trace.0;
    record
}

/// Single deterministic trajectory: temperature 0, one candidate, no agent stages.
pub fn run_greedy(item: &BenchmarkItem, env: &ItemEnv<'_>, cfg: &PipelineConfig) -> EvalRecord {
    let cfg = PipelineConfig {
        use_retriever: false,
        use_verifier: false,
        use_selector: false,
        k: 1,
        sampling: Sampling {
            temperature: 0.0,
            ..cfg.sampling.clone()
        },
        ..cfg.clone()
    };
    run_sql_d1(item, env, &cfg)
}
