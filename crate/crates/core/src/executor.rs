//! Executes one validated primitive call: schema repair, availability,
//! caching, retries, timeouts and failure classification.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::backend::{ToolBackend, ToolFault};
use crate::registry::{ToolKind, ToolSpec};
use crate::schema::{repair_args, validate_args, with_defaults, ValidationStatus};
use crate::value::{Record, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    SchemaError,
    MissingArgument,
    EmptyResult,
    UnavailableTool,
    BudgetViolation,
    InvalidOutput,
}

impl FailureKind {
    pub const ALL: [FailureKind; 6] = [
        FailureKind::SchemaError,
        FailureKind::MissingArgument,
        FailureKind::EmptyResult,
        FailureKind::UnavailableTool,
        FailureKind::BudgetViolation,
        FailureKind::InvalidOutput,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::SchemaError => "schema_error",
            FailureKind::MissingArgument => "missing_argument",
            FailureKind::EmptyResult => "empty_result",
            FailureKind::UnavailableTool => "unavailable_tool",
            FailureKind::BudgetViolation => "budget_violation",
            FailureKind::InvalidOutput => "invalid_output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub status: SignalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
    pub attempts: u32,
    /// Simulated seconds.
    pub elapsed: f64,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Signal {
    pub fn ok(attempts: u32, elapsed: f64, cached: bool) -> Self {
        Signal { status: SignalStatus::Ok, failure: None, attempts, elapsed, cached, detail: String::new() }
    }

    pub fn failed(kind: FailureKind, attempts: u32, elapsed: f64, detail: impl Into<String>) -> Self {
        Signal { status: SignalStatus::Failed, failure: Some(kind), attempts, elapsed, cached: false, detail: detail.into() }
    }

    pub fn is_ok(&self) -> bool {
        self.status == SignalStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub final_args: Record,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Tool,
    /// Informational; produced when a sub-planner message was demoted.
    ResolverNote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub call: ToolCall,
    pub evidence: Value,
    pub signal: Signal,
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<String>,
    pub kind: ObservationKind,
}

impl Observation {
    pub fn is_success(&self) -> bool {
        self.signal.is_ok()
    }

    pub fn failure(&self) -> Option<FailureKind> {
        self.signal.failure
    }

    /// One line for planner digests.
    pub fn summary(&self) -> String {
        let ptr = self.pointer.as_deref().unwrap_or("-");
        match self.signal.failure {
            None => format!("{} -> {} ok: {}", self.call.tool_name, ptr, clip(&self.evidence.canonical_string(), 160)),
            Some(f) => format!("{} -> {} failed {}: {}", self.call.tool_name, ptr, f.as_str(), self.signal.detail),
        }
    }
}

fn clip(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        return s.to_string();
    }
    let mut out: String = s.chars().take(n).collect();
    out.push_str("...");
    out
}

/// Cache key over tool name, canonical args and world.
pub fn cache_key(tool: &str, args: &Record, world_id: &str) -> String {
    format!("{tool}|{}|{world_id}", Value::Record(args.clone()).canonical_string())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolCache {
    entries: BTreeMap<String, Value>,
}

impl ToolCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn put(&mut self, key: String, value: Value) {
        self.entries.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Resources one call may consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allowance {
    /// Remaining simulated wall clock, seconds.
    pub clock: f64,
    /// Remaining tool-cost units; `None` is unlimited.
    pub cost: Option<u64>,
}

impl Allowance {
    pub fn unlimited() -> Self {
        Allowance { clock: f64::INFINITY, cost: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecOutcome {
    pub tool_name: String,
    pub final_args: Record,
    /// `Null` on failure.
    pub evidence: Value,
    pub signal: Signal,
    /// Cost units charged.
    pub cost: u32,
    /// Entry to commit to the cache once the batch finishes.
    pub cache_put: Option<(String, Value)>,
}

impl ExecOutcome {
    fn failed(spec: &ToolSpec, args: Record, signal: Signal, cost: u32) -> Self {
        ExecOutcome { tool_name: spec.name.clone(), final_args: args, evidence: Value::Null, signal, cost, cache_put: None }
    }

    pub fn into_observation(self, round: u32, pointer: Option<String>) -> Observation {
        Observation {
            call: ToolCall { tool_name: self.tool_name, final_args: self.final_args },
            evidence: self.evidence,
            signal: self.signal,
            round,
            pointer,
            kind: ObservationKind::Tool,
        }
    }
}

fn is_empty_value(v: &Value) -> bool {
    match v {
        Value::Null => true,
        Value::List(l) => l.is_empty(),
        Value::Record(r) => r.is_empty(),
        _ => false,
    }
}

enum Step {
    Done(Value),
    Retry(FailureKind, String),
    Stop(FailureKind, String),
}

/// Runs `spec` on `args` (pointers already resolved).
///
/// Order: validate, repair once, availability, cost, cache, then attempts.
/// Empty results from base tools are retried up to `max_retries` times;
/// an output that fails the output schema gets one retry; unavailability
/// and rejected arguments stop immediately. A single attempt slower than
/// the tool timeout, or a call exceeding the remaining clock, is a budget
/// violation. `attempts` is at least 1 even when nothing was invoked.
pub fn execute_action(
    spec: &ToolSpec,
    args: &Record,
    backend: &dyn ToolBackend,
    cache: &ToolCache,
    allowance: Allowance,
) -> ExecOutcome {
    let mut report = validate_args(&spec.input_schema, args);
    if report.status != ValidationStatus::Valid {
        report = repair_args(&spec.input_schema, args);
    }
    let final_args = with_defaults(&spec.input_schema, &report.effective_args(args));
    if !report.is_usable() {
        let (kind, detail) = if !report.missing.is_empty() {
            (FailureKind::MissingArgument, format!("missing {}", report.missing.join(", ")))
        } else {
            let mut bad = report.nonconforming.clone();
            bad.extend(report.unsupported.iter().cloned());
            (FailureKind::SchemaError, format!("invalid {}", bad.join(", ")))
        };
        return ExecOutcome::failed(spec, final_args, Signal::failed(kind, 1, 0.0, detail), 0);
    }

    if let Err(why) = backend.availability().check(&spec.availability) {
        return ExecOutcome::failed(spec, final_args, Signal::failed(FailureKind::UnavailableTool, 1, 0.0, why.to_string()), 0);
    }

    let cost = spec.constraints.budget_cost;
    if allowance.cost.is_some_and(|left| left < u64::from(cost)) {
        let s = Signal::failed(FailureKind::BudgetViolation, 1, 0.0, "tool cost budget exhausted");
        return ExecOutcome::failed(spec, final_args, s, 0);
    }

    let key = spec.constraints.deterministic.then(|| cache_key(&spec.name, &final_args, backend.world_id()));
    if let Some(hit) = key.as_ref().and_then(|k| cache.get(k)) {
        return ExecOutcome {
            tool_name: spec.name.clone(),
            final_args,
            evidence: hit.clone(),
            signal: Signal::ok(1, 0.0, true),
            cost: 0,
            cache_put: None,
        };
    }

    let max_retries = spec.constraints.max_retries;
    let mut elapsed = 0.0;
    let mut attempt = 0u32;
    let mut invalid_retried = false;
    loop {
        let inv = backend.invoke(spec, &final_args, attempt);
        attempt += 1;
        elapsed += inv.latency;
        if inv.latency > spec.constraints.timeout {
            let d = format!("attempt took {}s, timeout {}s", inv.latency, spec.constraints.timeout);
            return ExecOutcome::failed(spec, final_args, Signal::failed(FailureKind::BudgetViolation, attempt, elapsed, d), cost);
        }
        if elapsed > allowance.clock {
            let s = Signal::failed(FailureKind::BudgetViolation, attempt, elapsed, "wall clock exhausted");
            return ExecOutcome::failed(spec, final_args, s, cost);
        }
        let step = match inv.result {
            Ok(v) if !spec.output_schema.admits(&v) => {
                Step::Retry(FailureKind::InvalidOutput, format!("output is not {:?}", spec.output_schema.shape))
            }
            Ok(v) if spec.kind == ToolKind::Base && is_empty_value(&v) => {
                Step::Retry(FailureKind::EmptyResult, "no results".into())
            }
            Ok(v) => Step::Done(v),
            Err(ToolFault::Empty) => Step::Retry(FailureKind::EmptyResult, "no results".into()),
            Err(ToolFault::Invalid(d)) => Step::Retry(FailureKind::InvalidOutput, d),
            Err(ToolFault::Unavailable(d)) => Step::Stop(FailureKind::UnavailableTool, d),
            Err(ToolFault::BadArgs(d)) => Step::Stop(FailureKind::SchemaError, d),
            Err(ToolFault::MissingArg(d)) => Step::Stop(FailureKind::MissingArgument, format!("missing {d}")),
        };
        match step {
            Step::Done(v) => {
                let cache_put = key.map(|k| (k, v.clone()));
                return ExecOutcome {
                    tool_name: spec.name.clone(),
                    final_args,
                    evidence: v,
                    signal: Signal::ok(attempt, elapsed, false),
                    cost,
                    cache_put,
                };
            }
            Step::Retry(FailureKind::InvalidOutput, d) => {
                if invalid_retried || max_retries == 0 || attempt > max_retries {
                    let s = Signal::failed(FailureKind::InvalidOutput, attempt, elapsed, d);
                    return ExecOutcome::failed(spec, final_args, s, cost);
                }
                invalid_retried = true;
            }
            Step::Retry(kind, d) => {
                if attempt > max_retries {
                    return ExecOutcome::failed(spec, final_args, Signal::failed(kind, attempt, elapsed, d), cost);
                }
            }
            Step::Stop(kind, d) => {
                return ExecOutcome::failed(spec, final_args, Signal::failed(kind, attempt, elapsed, d), cost);
            }
        }
    }
}

pub type Job<'a> = Box<dyn FnOnce() -> ExecOutcome + Send + 'a>;

/// Runs a batch of independent calls, returning outcomes in job order.
pub trait BatchRunner {
    fn run_batch<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<ExecOutcome>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialRunner;

impl BatchRunner for SerialRunner {
    fn run_batch<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<ExecOutcome> {
        jobs.into_iter().map(|j| j()).collect()
    }
}

/// Simulated batch duration: jobs assigned greedily in order to the
/// earliest-free of `lanes` workers.
pub fn makespan(durations: &[f64], lanes: usize) -> f64 {
    let mut free = alloc::vec![0.0f64; lanes.max(1)];
    for &d in durations {
        let (i, _) = free.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap_or((0, &0.0));
        free[i] += d;
    }
    free.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FaultyBackend, SimBackend};
    use crate::config::RuntimeConfig;
    use crate::registry::ToolRegistry;
    use crate::simenv::SyntheticWorld;
    use crate::value::record;

    fn setup() -> (SyntheticWorld, ToolRegistry, RuntimeConfig) {
        let w = SyntheticWorld::new("w", 100.0).with_event("dog barking", 10.0, 20.0);
        (w, ToolRegistry::default_library(), RuntimeConfig::default())
    }

    #[test]
    fn success_and_cache() {
        let (w, reg, cfg) = setup();
        let b = SimBackend::new(&w, &reg, &cfg);
        let spec = reg.get("Inspect_Frame").unwrap();
        let args = record([("t", Value::Int(12))]);
        let mut cache = ToolCache::new();
        let out = execute_action(spec, &args, &b, &cache, Allowance::unlimited());
        assert!(out.signal.is_ok());
        assert_eq!(out.signal.attempts, 1);
        let (k, v) = out.cache_put.clone().unwrap();
        cache.put(k, v);
        let again = execute_action(spec, &args, &b, &cache, Allowance::unlimited());
        assert!(again.signal.cached);
        assert_eq!(again.evidence, out.evidence);
    }

    #[test]
    fn schema_failures() {
        let (w, reg, cfg) = setup();
        let b = SimBackend::new(&w, &reg, &cfg);
        let qa = reg.get("Video_Clip_QA").unwrap();
        let missing = execute_action(qa, &record([("t_start", Value::Int(0))]), &b, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(missing.signal.failure, Some(FailureKind::MissingArgument));
        assert_eq!(missing.signal.attempts, 1);
        let bad = record([("t_start", "soon".into()), ("t_end", Value::Int(3)), ("query", "x".into())]);
        let out = execute_action(qa, &bad, &b, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::SchemaError));
        let rejected = record([("t_start", Value::Int(50)), ("t_end", Value::Int(10)), ("query", "x".into())]);
        let out = execute_action(qa, &rejected, &b, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::SchemaError));
        // Repair coerces a numeric string.
        let fixable = record([("t_start", "0".into()), ("t_end", Value::Int(30)), ("query", "dog barking".into())]);
        let out = execute_action(qa, &fixable, &b, &ToolCache::new(), Allowance::unlimited());
        assert!(out.signal.is_ok());
        assert_eq!(out.final_args["t_start"], Value::Real(0.0));
    }

    #[test]
    fn empty_results_retry_then_fail() {
        let (w, reg, cfg) = setup();
        let b = SimBackend::new(&w, &reg, &cfg);
        let spec = reg.get("Temporal_Retrieval").unwrap();
        let out = execute_action(spec, &record([("query", "zebra".into())]), &b, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::EmptyResult));
        assert_eq!(out.signal.attempts, 1 + spec.constraints.max_retries);

        let flaky = FaultyBackend::new(SimBackend::new(&w, &reg, &cfg)).fail("Temporal_Retrieval", ToolFault::Empty, 1);
        let out = execute_action(spec, &record([("query", "dog".into())]), &flaky, &ToolCache::new(), Allowance::unlimited());
        assert!(out.signal.is_ok());
        assert_eq!(out.signal.attempts, 2);
    }

    #[test]
    fn meta_empty_is_fine() {
        let (w, reg, cfg) = setup();
        let b = SimBackend::new(&w, &reg, &cfg);
        let spec = reg.get("Sort_Time_Ranges").unwrap();
        let out = execute_action(spec, &record([("ranges", Value::List(Vec::new()))]), &b, &ToolCache::new(), Allowance::unlimited());
        assert!(out.signal.is_ok());
    }

    #[test]
    fn unavailable_and_budget() {
        let (w, reg, cfg) = setup();
        let b = SimBackend::new(&w, &reg, &cfg);
        let asr = reg.get("ASR_Transcript").unwrap();
        let args = record([("t_start", Value::Int(0)), ("t_end", Value::Int(10))]);
        let out = execute_action(asr, &args, &b, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::UnavailableTool));

        let spec = reg.get("Inspect_Frame").unwrap();
        let slow = FaultyBackend::new(SimBackend::new(&w, &reg, &cfg)).slow("Inspect_Frame", 31.0);
        let out = execute_action(spec, &record([("t", Value::Int(1))]), &slow, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::BudgetViolation));

        let tight = Allowance { clock: 0.5, cost: None };
        let out = execute_action(spec, &record([("t", Value::Int(1))]), &b, &ToolCache::new(), tight);
        assert_eq!(out.signal.failure, Some(FailureKind::BudgetViolation));

        let broke = Allowance { clock: 100.0, cost: Some(0) };
        let out = execute_action(spec, &record([("t", Value::Int(1))]), &b, &ToolCache::new(), broke);
        assert_eq!(out.signal.failure, Some(FailureKind::BudgetViolation));
    }

    #[test]
    fn invalid_output_retried_once() {
        let (w, reg, cfg) = setup();
        let spec = reg.get("Inspect_Frame").unwrap();
        let once = FaultyBackend::new(SimBackend::new(&w, &reg, &cfg)).fail("Inspect_Frame", ToolFault::Invalid("garbled".into()), 1);
        let out = execute_action(spec, &record([("t", Value::Int(1))]), &once, &ToolCache::new(), Allowance::unlimited());
        assert!(out.signal.is_ok());
        let always = FaultyBackend::new(SimBackend::new(&w, &reg, &cfg)).always_fail("Inspect_Frame", ToolFault::Invalid("garbled".into()));
        let out = execute_action(spec, &record([("t", Value::Int(1))]), &always, &ToolCache::new(), Allowance::unlimited());
        assert_eq!(out.signal.failure, Some(FailureKind::InvalidOutput));
        assert_eq!(out.signal.attempts, 2);
    }

    #[test]
    fn makespan_lanes() {
        assert_eq!(makespan(&[6.0, 6.0, 6.0, 6.0], 4), 6.0);
        assert_eq!(makespan(&[6.0; 5], 4), 12.0);
        assert_eq!(makespan(&[3.0, 1.0, 1.0, 1.0], 2), 3.0);
        assert_eq!(makespan(&[], 4), 0.0);
        assert_eq!(makespan(&[2.0, 2.0], 1), 4.0);
    }
}
