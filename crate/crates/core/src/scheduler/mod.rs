//! The root loop: one planner message per round, actions partitioned into
//! dependency-ordered batches, primitives run in parallel, abstract
//! actions handed to the resolver, results bound to pointers.

pub mod budget;
pub mod partition;
pub mod trajectory;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use budget::{BudgetEvent, BudgetState};
use partition::{partition_round, produced_pointers};
pub use trajectory::{
    ActionRecord, ActionSource, FinalAnswer, Outcome, StepRecord, TaskInfo, TokenRole, TokenSpan, Trajectory, Transcript,
    ViolationKind, ViolationRecord, TRACE_SCHEMA_VERSION,
};

use crate::backend::{SimBackend, ToolBackend};
use crate::config::RuntimeConfig;
use crate::executor::{
    execute_action, makespan, Allowance, BatchRunner, ExecOutcome, FailureKind, Job, Observation, ObservationKind,
    SerialRunner, Signal, ToolCache, ToolCall,
};
use crate::planner::{PlannerPolicy, PlannerPrompt};
use crate::protocol::{
    mint_pointer, parse_planner_message, resolve_with, validate_termination, ActionRequest, ResultStore,
};
use crate::registry::{AvailabilityContext, ToolRegistry, ToolSpec};
use crate::resolver::{resolve_action, ResolutionRequest, ResolverPolicy};
use crate::router::{classify_action, ActionKind};
use crate::simenv::{build_grounding_block, GroundingBlock, SyntheticWorld};
use crate::value::{Record, Value};

/// The question an episode answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

impl Objective {
    pub fn new(question: &str) -> Self {
        Objective { question: question.to_string(), options: None, gold_answer: None }
    }

    pub fn with_options(mut self, options: Vec<String>) -> Self {
        self.options = Some(options);
        self
    }

    pub fn with_gold(mut self, gold: &str) -> Self {
        self.gold_answer = Some(gold.to_string());
        self
    }

    pub fn render(&self) -> String {
        let mut out = self.question.clone();
        if let Some(opts) = &self.options {
            for (i, o) in opts.iter().enumerate() {
                let letter = char::from(b'A' + (i as u8 % 26));
                let _ = write!(out, "\n({letter}) {o}");
            }
        }
        out
    }
}

/// Read-only context shared by the scheduler and the resolver.
pub struct EpisodeEnv<'a> {
    pub registry: &'a ToolRegistry,
    pub backend: &'a dyn ToolBackend,
    pub runner: &'a dyn BatchRunner,
    pub config: &'a RuntimeConfig,
    pub availability: AvailabilityContext,
}

/// Mutable episode state threaded through every call.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLedger {
    pub budget: BudgetState,
    pub cache: ToolCache,
    pub transcript: Transcript,
    pub violations: Vec<ViolationRecord>,
    /// Current root round (1-based; 0 before the first).
    pub round: u32,
}

impl EpisodeLedger {
    pub fn new(config: &RuntimeConfig) -> Self {
        EpisodeLedger {
            budget: BudgetState::new(&config.budget),
            cache: ToolCache::new(),
            transcript: Transcript::default(),
            violations: Vec::new(),
            round: 0,
        }
    }

    fn budget_violation(&mut self, v: budget::BudgetViolation, detail: String) {
        self.violations.push(ViolationRecord { round: self.round, depth: None, kind: ViolationKind::Budget, detail, budget: Some(v) });
    }
}

/// Runs independent primitive calls as one batch against the current
/// allowance, charges the batch makespan to the clock and each call's cost
/// to the cost budget, and commits cache entries afterwards.
pub(crate) fn run_primitives(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    calls: Vec<(&ToolSpec, Record)>,
) -> Vec<ExecOutcome> {
    if calls.is_empty() {
        return Vec::new();
    }
    let allowance = Allowance { clock: ledger.budget.remaining_clock(), cost: ledger.budget.remaining_cost() };
    let outs = {
        let cache = &ledger.cache;
        let backend = env.backend;
        let jobs: Vec<Job<'_>> = calls
            .into_iter()
            .map(|(spec, args)| Box::new(move || execute_action(spec, &args, backend, cache, allowance)) as Job<'_>)
            .collect();
        env.runner.run_batch(jobs)
    };
    let durations: Vec<f64> = outs.iter().map(|o| o.signal.elapsed).collect();
    let span = makespan(&durations, env.config.max_parallel);
    if let Err(v) = ledger.budget.enforce(BudgetEvent::Tick { seconds: span }) {
        ledger.budget_violation(v, format!("batch of {} calls took {span}s", outs.len()));
    }
    outs.into_iter()
        .map(|mut o| {
            if o.cost > 0 {
                if let Err(v) = ledger.budget.enforce(BudgetEvent::ToolCall { cost: o.cost }) {
                    ledger.budget_violation(v, format!("{} exceeds the tool cost budget", o.tool_name));
                    if o.signal.is_ok() {
                        o.signal = Signal::failed(FailureKind::BudgetViolation, o.signal.attempts, o.signal.elapsed, "tool cost budget exhausted");
                        o.evidence = Value::Null;
                        o.cache_put = None;
                    }
                }
            }
            if let Some((k, v)) = o.cache_put.take() {
                ledger.cache.put(k, v);
            }
            o
        })
        .collect()
}

/// Everything one episode needs besides the two policies.
pub struct EpisodeInputs<'a> {
    pub objective: &'a Objective,
    pub registry: &'a ToolRegistry,
    pub backend: &'a dyn ToolBackend,
    pub runner: &'a dyn BatchRunner,
    pub config: &'a RuntimeConfig,
    pub seed: u64,
    pub grounding: Option<GroundingBlock>,
}

/// Runs one episode on a synthetic world with serial execution.
pub fn run_episode(
    objective: &Objective,
    planner: &mut dyn PlannerPolicy,
    resolver: &mut dyn ResolverPolicy,
    registry: &ToolRegistry,
    world: &SyntheticWorld,
    config: &RuntimeConfig,
    seed: u64,
) -> Trajectory {
    let backend = SimBackend::new(world, registry, config);
    let grounding = build_grounding_block(backend.segments(), &objective.question, &config.preprocess);
    let inputs = EpisodeInputs {
        objective,
        registry,
        backend: &backend,
        runner: &SerialRunner,
        config,
        seed,
        grounding: Some(grounding),
    };
    run_episode_with(inputs, planner, resolver)
}

fn failed_obs(action: &ActionRequest, args: Record, kind: FailureKind, detail: String, round: u32) -> Observation {
    Observation {
        call: ToolCall { tool_name: action.tool_name.clone(), final_args: args },
        evidence: Value::Null,
        signal: Signal::failed(kind, 1, 0.0, detail),
        round,
        pointer: action.output.clone(),
        kind: ObservationKind::Tool,
    }
}

fn budget_line(b: &BudgetState) -> String {
    let cost = match b.limits.max_tool_cost {
        Some(m) => format!("{}/{m}", b.tool_cost_used),
        None => format!("{}", b.tool_cost_used),
    };
    format!(
        "Budget: round {}/{}, clock {}/{}s, tool cost {cost}, resolver rounds {}/invocation, depth {}",
        b.root_rounds_used,
        b.limits.max_root_rounds,
        crate::value::canonical_number(b.wall_clock_used),
        crate::value::canonical_number(b.limits.max_wall_clock),
        b.limits.max_resolver_rounds,
        b.limits.max_depth,
    )
}

/// Compact history: the last round in full, older rounds one line each.
fn digest(steps: &[StepRecord], store: &ResultStore) -> String {
    let mut out = String::new();
    let n = steps.len();
    for (i, s) in steps.iter().enumerate() {
        if i + 1 < n {
            let ok = s.observations.iter().filter(|o| o.is_success()).count();
            let tools: BTreeSet<&str> = s.observations.iter().map(|o| o.call.tool_name.as_str()).collect();
            let tools: Vec<&str> = tools.into_iter().collect();
            let _ = writeln!(out, "round {}: {}/{} ok ({})", s.round, ok, s.observations.len(), tools.join(", "));
        } else {
            let _ = writeln!(out, "round {}:", s.round);
            for o in &s.observations {
                let _ = writeln!(out, "  {}", o.summary());
            }
        }
    }
    if !store.is_empty() {
        let names: Vec<&str> = store.names().collect();
        let _ = writeln!(out, "Bound pointers: {}", names.join(", "));
    }
    out
}

fn tool_list(registry: &ToolRegistry) -> String {
    let mut out = String::from("Tools:\n");
    for t in registry.iter().filter(|t| t.is_planner_visible()) {
        let fields: Vec<String> =
            t.input_schema.fields().map(|(n, f)| if f.required { n.to_string() } else { format!("{n}?") }).collect();
        let _ = writeln!(out, "- {}({}): {}", t.name, fields.join(", "), t.description);
    }
    out
}

fn render_prompt(p: &PlannerPrompt<'_>, tools: &str) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "Question: {}", p.objective.render());
    if !p.grounding.is_empty() {
        t.push_str(&p.grounding);
    }
    if !p.digest.is_empty() {
        let _ = write!(t, "History:\n{}", p.digest);
    }
    let _ = writeln!(t, "{}", p.budget);
    if let Some(f) = &p.feedback {
        let _ = writeln!(t, "Your previous reply was rejected: {f}. Reply again with one valid JSON object.");
    }
    t.push_str(tools);
    t.push_str("Reply with {\"Thought\", \"Plan\", \"Actions\": [...]} or {\"Thought\", \"Finish\": {\"chain_complete\": true, \"completion_basis\", \"answer\"}}.");
    t
}

/// Round-local pointer bindings, committed to the store at the round end.
#[derive(Default)]
struct Overlay {
    values: BTreeMap<String, (Value, String)>,
}

impl Overlay {
    fn lookup(&self, store: &ResultStore, p: &str) -> Option<Value> {
        self.values.get(p).map(|(v, _)| v.clone()).or_else(|| store.get(p).cloned())
    }
}

/// Runs one episode with any backend and batch runner.
pub fn run_episode_with(
    inputs: EpisodeInputs<'_>,
    planner: &mut dyn PlannerPolicy,
    resolver: &mut dyn ResolverPolicy,
) -> Trajectory {
    let config = inputs.config;
    let env = EpisodeEnv {
        registry: inputs.registry,
        backend: inputs.backend,
        runner: inputs.runner,
        config,
        availability: inputs.backend.availability(),
    };
    let tools = tool_list(inputs.registry);
    let mut ledger = EpisodeLedger::new(config);
    let mut store = ResultStore::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut pending: Vec<ActionRequest> = Vec::new();
    let mut final_answer = None;
    let grounding_text = inputs.grounding.as_ref().map(GroundingBlock::render).unwrap_or_default();

    let outcome = loop {
        if ledger.budget.root_rounds_used >= config.budget.max_root_rounds {
            break Outcome::MaxRounds;
        }
        if ledger.budget.clock_exhausted {
            break Outcome::BudgetExhausted;
        }
        if let Err(v) = ledger.budget.enforce(BudgetEvent::RootRound) {
            ledger.budget_violation(v, "root rounds exhausted".into());
            break Outcome::MaxRounds;
        }
        let round = ledger.budget.root_rounds_used;
        ledger.round = round;
        let state_digest = digest(&steps, &store);

        // Ask the planner, with reprompts for rejected replies. Every
        // rejection is a violation even when a reprompt recovers.
        let mut parse_failures = Vec::new();
        let mut feedback: Option<String> = None;
        let mut accepted = None;
        for _ in 0..=config.reprompts {
            let mut prompt = PlannerPrompt {
                objective: inputs.objective,
                round,
                seed: inputs.seed,
                grounding: if round == 1 { grounding_text.clone() } else { String::new() },
                digest: state_digest.clone(),
                budget: budget_line(&ledger.budget),
                feedback: feedback.clone(),
                bindings: &store,
                text: String::new(),
            };
            prompt.text = render_prompt(&prompt, &tools);
            ledger.transcript.push(TokenRole::Environment, &prompt.text);
            let reply = match planner.respond(&prompt) {
                Ok(r) => r,
                Err(e) => {
                    ledger.violations.push(ViolationRecord { round, depth: None, kind: ViolationKind::ParseFailure, detail: e.to_string(), budget: None });
                    feedback = Some(e.to_string());
                    continue;
                }
            };
            ledger.transcript.push(TokenRole::Planner, &reply);
            match parse_planner_message(&reply) {
                Ok(msg) => match validate_termination(&msg, true) {
                    Ok(()) => {
                        accepted = Some(msg);
                        break;
                    }
                    Err(v) => {
                        ledger.violations.push(ViolationRecord { round, depth: None, kind: ViolationKind::IncompleteFinish, detail: v.to_string(), budget: None });
                        feedback = Some(v.to_string());
                    }
                },
                Err(f) => {
                    ledger.violations.push(ViolationRecord { round, depth: None, kind: ViolationKind::ParseFailure, detail: f.to_string(), budget: None });
                    feedback = Some(f.to_string());
                    parse_failures.push(f);
                }
            }
        }

        let Some(msg) = accepted else {
            steps.push(StepRecord {
                round,
                state_digest,
                planner_message: None,
                parse_failures,
                round_plan: Vec::new(),
                actions: Vec::new(),
                observations: Vec::new(),
                budget_after: ledger.budget.clone(),
            });
            break Outcome::ProtocolFailure;
        };

        if let Some(f) = &msg.finish {
            final_answer = Some(FinalAnswer { answer: f.answer.clone(), basis: f.completion_basis.clone() });
            steps.push(StepRecord {
                round,
                state_digest,
                planner_message: Some(msg),
                parse_failures,
                round_plan: Vec::new(),
                actions: Vec::new(),
                observations: Vec::new(),
                budget_after: ledger.budget.clone(),
            });
            break Outcome::Finished;
        }

        let mut actions: Vec<(ActionRequest, ActionSource)> =
            core::mem::take(&mut pending).into_iter().map(|a| (a, ActionSource::Deferred)).collect();
        actions.extend(msg.actions.iter().cloned().map(|a| (a, ActionSource::Planner)));
        let step = run_round(&env, &mut ledger, resolver, &mut store, &mut pending, round, &actions);
        let (round_plan, records, observations) = step;

        let mut shown = String::new();
        for o in &observations {
            let _ = writeln!(shown, "{}", o.summary());
        }
        ledger.transcript.push(TokenRole::Observation, shown.trim_end());
        steps.push(StepRecord {
            round,
            state_digest,
            planner_message: Some(msg),
            parse_failures,
            round_plan,
            actions: records,
            observations,
            budget_after: ledger.budget.clone(),
        });
    };

    let o = inputs.objective;
    Trajectory {
        schema_version: TRACE_SCHEMA_VERSION,
        task: TaskInfo {
            world_id: inputs.backend.world_id().to_string(),
            question: o.question.clone(),
            options: o.options.clone(),
            gold_answer: o.gold_answer.clone(),
        },
        seed: inputs.seed,
        steps,
        final_answer,
        outcome,
        budget: ledger.budget,
        violations: ledger.violations,
        transcript: ledger.transcript.text,
        token_spans: ledger.transcript.spans,
        grounding: inputs.grounding,
    }
}

type RoundResult = (Vec<Vec<usize>>, Vec<ActionRecord>, Vec<Observation>);

fn run_round(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    resolver: &mut dyn ResolverPolicy,
    store: &mut ResultStore,
    next_pending: &mut Vec<ActionRequest>,
    round: u32,
    actions: &[(ActionRequest, ActionSource)],
) -> RoundResult {
    let plain: Vec<ActionRequest> = actions.iter().map(|(a, _)| a.clone()).collect();
    let mut records: Vec<ActionRecord> = actions
        .iter()
        .enumerate()
        .map(|(k, (a, src))| ActionRecord {
            index: k,
            action: a.clone(),
            source: *src,
            class: classify_action(env.registry, a, &env.availability).kind,
            pointers: produced_pointers(a, round, k),
            resolution: None,
        })
        .collect();

    let plan = match partition_round(&plain, store, round) {
        Ok(p) => p,
        Err(cycle) => {
            ledger.violations.push(ViolationRecord {
                round,
                depth: None,
                kind: ViolationKind::DependencyCycle,
                detail: cycle.to_string(),
                budget: None,
            });
            let obs = plain
                .iter()
                .map(|a| failed_obs(a, a.params.clone(), FailureKind::MissingArgument, cycle.to_string(), round))
                .collect();
            return (Vec::new(), records, obs);
        }
    };

    let mut producers: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in &records {
        for p in &r.pointers {
            producers.entry(p.clone()).or_default().push(r.index);
        }
    }
    let mut overlay = Overlay::default();
    let mut done = alloc::vec![false; plain.len()];
    let mut observed: Vec<(usize, Observation)> = Vec::new();

    for (b, batch) in plan.iter().enumerate() {
        let mut results: BTreeMap<usize, Value> = BTreeMap::new();
        let mut primitives: Vec<(usize, &ToolSpec, Record)> = Vec::new();
        let mut abstracts: Vec<usize> = Vec::new();
        for &k in batch {
            let a = &plain[k];
            let args = match resolve_with(&a.params, &|p: &str| overlay.lookup(store, p)) {
                Ok(args) => args,
                Err(u) => {
                    observed.push((b, failed_obs(a, a.params.clone(), FailureKind::MissingArgument, u.to_string(), round)));
                    continue;
                }
            };
            if let Some(spec) = env.registry.get(&a.tool_name).filter(|s| !s.is_planner_visible()) {
                ledger.violations.push(ViolationRecord {
                    round,
                    depth: None,
                    kind: ViolationKind::RuntimeInternalRequested,
                    detail: format!("{} is runtime-internal", spec.name),
                    budget: None,
                });
                let detail = format!("{} is not callable by the planner", spec.name);
                observed.push((b, failed_obs(a, args, FailureKind::UnavailableTool, detail, round)));
                continue;
            }
            let mut resolved = a.clone();
            resolved.params = args.clone();
            let class = classify_action(env.registry, &resolved, &env.availability);
            match class.matched {
                Some(spec) if class.kind == ActionKind::Primitive => primitives.push((k, spec, args)),
                _ => abstracts.push(k),
            }
        }

        let calls = primitives.iter().map(|(_, s, a)| (*s, a.clone())).collect();
        let outs = run_primitives(env, ledger, calls);
        for ((k, _, _), out) in primitives.iter().zip(outs) {
            let pointer = plain[*k].output.clone().or_else(|| Some(mint_pointer(&plain[*k].tool_name, round, *k)));
            let obs = out.into_observation(round, pointer);
            if obs.is_success() {
                results.insert(*k, obs.evidence.clone());
            }
            observed.push((b, obs));
        }

        for k in abstracts {
            let req = ResolutionRequest::root(&plain[k], BTreeSet::new());
            let outcome = {
                let scope = |p: &str| overlay.lookup(store, p);
                resolve_action(env, ledger, resolver, req, &scope)
            };
            for o in outcome.observations {
                observed.push((b, o));
            }
            for e in outcome.exports {
                overlay.values.insert(e.pointer, (e.value, e.tool_name));
            }
            next_pending.extend(outcome.deferred);
            if let Some(v) = outcome.result {
                results.insert(k, v);
            }
            records[k].resolution = Some(outcome.trace);
        }

        // Bind in action order; pointers with several producers collect a list.
        for &k in batch {
            done[k] = true;
            let Some(v) = results.get(&k) else { continue };
            for p in &records[k].pointers {
                let multi = producers.get(p).is_some_and(|ps| ps.len() > 1);
                let value = if multi {
                    let mut list = match overlay.values.remove(p) {
                        Some((Value::List(l), _)) => l,
                        _ => Vec::new(),
                    };
                    list.push(v.clone());
                    Value::List(list)
                } else {
                    v.clone()
                };
                overlay.values.insert(p.clone(), (value, plain[k].tool_name.clone()));
            }
        }
        for (p, ps) in &producers {
            if ps.len() > 1 && ps.iter().all(|&k| done[k]) && !overlay.values.contains_key(p) {
                overlay.values.insert(p.clone(), (Value::List(Vec::new()), plain[ps[0]].tool_name.clone()));
            }
        }
    }

    for (p, (v, tool)) in overlay.values {
        store.bind(&p, v, round, &tool);
    }
    observed.sort_by(|(ba, a), (bb, b)| {
        ba.cmp(bb)
            .then_with(|| a.call.tool_name.cmp(&b.call.tool_name))
            .then_with(|| Value::Record(a.call.final_args.clone()).canonical_string().cmp(&Value::Record(b.call.final_args.clone()).canonical_string()))
    });
    (plan, records, observed.into_iter().map(|(_, o)| o).collect())
}
