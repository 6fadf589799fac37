//! Grounds abstract actions into executable tool chains.
//!
//! Levels are tried strictly in order: L1 runs the named tool as is, L2
//! keeps the tool and rewrites its parameters, L3 substitutes a similar
//! tool, L4 decomposes into child actions (abstract children recurse one
//! level deeper). Each invocation gets its own policy-round budget; depth
//! is capped globally. A tool that comes back empty is banned for the
//! rest of the branch.

mod prompt;
mod rules;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use prompt::{CandidateInfo, PromptMode, ResolverPrompt};
pub use rules::{
    ChildTemplate, CompatibilityRule, DecompositionRule, FnResolver, MatchSpec, RuleTable, RuleTablePolicy,
    ScriptedResolver,
};

use crate::executor::{FailureKind, Observation, ObservationKind, Signal, ToolCall};
use crate::protocol::{parse_planner_message, resolve_with, validate_termination, ActionRequest, UnresolvedPointer};
use crate::registry::{Lookup, ToolSpec};
use crate::router::{classify_action, search_tools, ActionKind, LexicalScorer, RouteQuery};
use crate::scheduler::budget::BudgetEvent;
use crate::scheduler::trajectory::{TokenRole, ViolationKind, ViolationRecord};
use crate::scheduler::{run_primitives, EpisodeEnv, EpisodeLedger};
use crate::value::{Record, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("policy error: {0}")]
pub struct PolicyError(pub String);

/// A resolver policy answers one prompt with wire text (Thought/Plan/Actions).
pub trait ResolverPolicy {
    fn respond(&mut self, prompt: &ResolverPrompt) -> Result<String, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
    L4,
    #[serde(rename = "unresolved")]
    Unresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionRequest {
    pub action: ActionRequest,
    pub goal: String,
    pub parent_context: String,
    pub depth: u32,
    pub banned_tools: BTreeSet<String>,
}

impl ResolutionRequest {
    /// A root-delegated request: depth 0, goal from the description.
    pub fn root(action: &ActionRequest, banned_tools: BTreeSet<String>) -> Self {
        let goal = if action.description.is_empty() { action.tool_name.replace('_', " ") } else { action.description.clone() };
        ResolutionRequest { action: action.clone(), goal, parent_context: String::new(), depth: 0, banned_tools }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Skipped,
    Failed,
    Succeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelAttempt {
    pub level: Level,
    pub status: AttemptStatus,
    pub detail: String,
}

/// Serializable record of one resolver invocation and its nested children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionTrace {
    pub tool_name: String,
    pub depth: u32,
    pub level: Level,
    pub attempts: Vec<LevelAttempt>,
    pub rounds_used: u32,
    pub banned: Vec<String>,
    /// Children of the last decomposition round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decomposition: Vec<ActionRequest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nested: Vec<ResolutionTrace>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deferred: Vec<ActionRequest>,
    pub note: String,
}

impl ResolutionTrace {
    /// Every trace in this subtree, depth first.
    pub fn walk(&self) -> Vec<&ResolutionTrace> {
        let mut out = alloc::vec![self];
        for n in &self.nested {
            out.extend(n.walk());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    pub pointer: String,
    pub value: Value,
    pub tool_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionOutcome {
    pub level: Level,
    pub observations: Vec<Observation>,
    /// Children still waiting on pointers; the caller schedules them next round.
    pub deferred: Vec<ActionRequest>,
    pub note: String,
    /// Evidence standing for the abstract action as a whole.
    pub result: Option<Value>,
    /// Pointers declared by decomposition children.
    pub exports: Vec<Export>,
    /// Bans accumulated on this branch, including inherited ones.
    pub banned: BTreeSet<String>,
    pub trace: ResolutionTrace,
}

/// Pointer lookup that chains a local overlay over an outer scope.
pub type Scope<'s> = &'s dyn Fn(&str) -> Option<Value>;

struct Run {
    depth: u32,
    tool_name: String,
    rounds_used: u32,
    budget_stop: bool,
    banned: BTreeSet<String>,
    attempts: Vec<LevelAttempt>,
    observations: Vec<Observation>,
    feedback: Vec<String>,
    decomposition: Vec<ActionRequest>,
    nested: Vec<ResolutionTrace>,
    deferred: Vec<ActionRequest>,
    exports: Vec<Export>,
}

impl Run {
    fn attempt(&mut self, level: Level, status: AttemptStatus, detail: impl Into<String>) {
        let detail = detail.into();
        match self.attempts.iter_mut().find(|a| a.level == level) {
            Some(a) => {
                a.status = status;
                if !detail.is_empty() {
                    a.detail = if a.detail.is_empty() { detail } else { format!("{}; {detail}", a.detail) };
                }
            }
            None => self.attempts.push(LevelAttempt { level, status, detail }),
        }
    }

    fn absorb(&mut self, obs: Observation) -> bool {
        let ok = obs.is_success();
        if obs.signal.failure == Some(FailureKind::EmptyResult) {
            self.banned.insert(obs.call.tool_name.clone());
        }
        self.observations.push(obs);
        ok
    }

    fn finish(self, level: Level, result: Option<Value>, note: String) -> ResolutionOutcome {
        let trace = ResolutionTrace {
            tool_name: self.tool_name,
            depth: self.depth,
            level,
            attempts: self.attempts,
            rounds_used: self.rounds_used,
            banned: self.banned.iter().cloned().collect(),
            decomposition: self.decomposition,
            nested: self.nested,
            deferred: self.deferred.clone(),
            note: note.clone(),
        };
        ResolutionOutcome {
            level,
            observations: self.observations,
            deferred: self.deferred,
            note,
            result,
            exports: self.exports,
            banned: self.banned,
            trace,
        }
    }
}

fn failed_observation(tool: &str, args: Record, kind: FailureKind, detail: String, round: u32) -> Observation {
    Observation {
        call: ToolCall { tool_name: tool.to_string(), final_args: args },
        evidence: Value::Null,
        signal: Signal::failed(kind, 1, 0.0, detail),
        round,
        pointer: None,
        kind: ObservationKind::Tool,
    }
}

fn violation(ledger: &mut EpisodeLedger, depth: u32, kind: ViolationKind, detail: String) {
    ledger.violations.push(ViolationRecord { round: ledger.round, depth: Some(depth), kind, detail, budget: None });
}

/// Resolves one abstract action. Pointers in the action and its children
/// are looked up through `scope`.
pub fn resolve_action(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    policy: &mut dyn ResolverPolicy,
    req: ResolutionRequest,
    scope: Scope<'_>,
) -> ResolutionOutcome {
    let mut run = Run {
        depth: req.depth,
        tool_name: req.action.tool_name.clone(),
        rounds_used: 0,
        budget_stop: false,
        banned: req.banned_tools.clone(),
        attempts: Vec::new(),
        observations: Vec::new(),
        feedback: Vec::new(),
        decomposition: Vec::new(),
        nested: Vec::new(),
        deferred: Vec::new(),
        exports: Vec::new(),
    };
    let round = ledger.round;

    if let Err(v) = ledger.budget.enforce(BudgetEvent::Recursion { depth: req.depth }) {
        ledger.violations.push(ViolationRecord {
            round,
            depth: Some(req.depth),
            kind: ViolationKind::Budget,
            detail: format!("recursion depth {} refused", req.depth),
            budget: Some(v),
        });
        let obs = failed_observation(
            &req.action.tool_name,
            req.action.params.clone(),
            FailureKind::BudgetViolation,
            format!("depth limit {} reached", ledger.budget.limits.max_depth),
            round,
        );
        run.absorb(obs);
        run.attempt(Level::L1, AttemptStatus::Skipped, "depth exceeded");
        return run.finish(Level::Unresolved, None, "depth exceeded".into());
    }

    let params = match resolve_with(&req.action.params, scope) {
        Ok(p) => p,
        Err(UnresolvedPointer(ps)) => {
            let obs = failed_observation(
                &req.action.tool_name,
                req.action.params.clone(),
                FailureKind::MissingArgument,
                format!("unbound pointers {}", ps.join(", ")),
                round,
            );
            run.absorb(obs);
            run.attempt(Level::L1, AttemptStatus::Skipped, "unbound pointers");
            return run.finish(Level::Unresolved, None, "unbound pointers".into());
        }
    };
    let mut action = req.action.clone();
    action.params = params;

    // L1: the named tool, as is.
    let mut l2_target: Option<&ToolSpec> = None;
    match env.registry.lookup(&action.tool_name, &env.availability) {
        Lookup::Found(spec) if !spec.is_planner_visible() => {
            run.attempt(Level::L1, AttemptStatus::Skipped, "runtime-internal tool");
        }
        Lookup::Found(spec) if run.banned.contains(&spec.name) => {
            run.attempt(Level::L1, AttemptStatus::Skipped, "tool is invalid on this branch");
        }
        Lookup::Found(spec) => {
            let class = classify_action(env.registry, &action, &env.availability);
            if class.kind == ActionKind::Primitive {
                let out = run_primitives(env, ledger, alloc::vec![(spec, action.params.clone())]);
                let obs = out.into_iter().next().map(|o| o.into_observation(round, None));
                if let Some(obs) = obs {
                    let failure = obs.signal.failure;
                    let evidence = obs.evidence.clone();
                    if run.absorb(obs) {
                        run.attempt(Level::L1, AttemptStatus::Succeeded, "");
                        return run.finish(Level::L1, Some(evidence), format!("{} executed directly", spec.name));
                    }
                    run.attempt(Level::L1, AttemptStatus::Failed, failure.map_or("failed", |f| f.as_str()));
                    if matches!(failure, Some(FailureKind::SchemaError | FailureKind::MissingArgument)) {
                        l2_target = Some(spec);
                    }
                }
            } else {
                run.attempt(Level::L1, AttemptStatus::Failed, "parameters do not validate");
                l2_target = Some(spec);
            }
        }
        Lookup::Absent(why) => {
            let detail = match why {
                crate::registry::Absence::UnknownName => "no registered tool".to_string(),
                crate::registry::Absence::Unavailable(u) => u.to_string(),
            };
            run.attempt(Level::L1, AttemptStatus::Skipped, detail);
        }
    }

    // L2: same tool, rewritten parameters.
    match l2_target {
        Some(spec) if !run.banned.contains(&spec.name) => {
            let mut p = ResolverPrompt::new(PromptMode::Repair, &action, &req.goal, &req.parent_context, req.depth, banned_list(&run));
            p.target = Some(CandidateInfo::from_spec(spec, 1.0));
            p.feedback = run.feedback.clone();
            match ask(env, ledger, policy, &mut run, p.rendered()) {
                Some(acts) if acts.len() == 1 && acts[0].tool_name == spec.name => {
                    if let Some(evidence) = execute_single(env, ledger, &mut run, spec, &acts[0], scope) {
                        run.attempt(Level::L2, AttemptStatus::Succeeded, "");
                        return run.finish(Level::L2, Some(evidence), format!("{} executed with rewritten parameters", spec.name));
                    }
                    run.attempt(Level::L2, AttemptStatus::Failed, "rewritten call failed");
                }
                Some(_) => run.attempt(Level::L2, AttemptStatus::Failed, "rewrite must keep the target tool"),
                None => run.attempt(Level::L2, AttemptStatus::Failed, "no rewrite"),
            }
        }
        _ => run.attempt(Level::L2, AttemptStatus::Skipped, "no fixable target tool"),
    }

    // L3: a similar tool.
    if !run.budget_stop {
        let mut query = RouteQuery::from_action(&action);
        query.description = format!("{} {}", action.description, req.goal);
        let scorer = LexicalScorer { weights: env.config.routing.clone() };
        let candidates: Vec<CandidateInfo> = search_tools(env.registry, &query, env.config.routing.k + run.banned.len() + 1, &scorer)
            .into_iter()
            .filter(|c| c.tool.name != action.tool_name && !run.banned.contains(&c.tool.name))
            .filter(|c| env.availability.check(&c.tool.availability).is_ok())
            .take(env.config.routing.k)
            .map(|c| CandidateInfo::from_spec(c.tool, c.score))
            .collect();
        if candidates.is_empty() {
            run.attempt(Level::L3, AttemptStatus::Skipped, "no candidates");
        } else {
            let mut p = ResolverPrompt::new(PromptMode::Substitute, &action, &req.goal, &req.parent_context, req.depth, banned_list(&run));
            p.candidates = candidates.clone();
            p.feedback = run.feedback.clone();
            match ask(env, ledger, policy, &mut run, p.rendered()) {
                Some(acts) if acts.len() == 1 => {
                    let pick = &acts[0];
                    let listed = candidates.iter().any(|c| c.name == pick.tool_name);
                    match env.registry.get(&pick.tool_name) {
                        Some(spec) if listed => {
                            if let Some(evidence) = execute_single(env, ledger, &mut run, spec, pick, scope) {
                                run.attempt(Level::L3, AttemptStatus::Succeeded, format!("substituted {}", spec.name));
                                return run.finish(Level::L3, Some(evidence), format!("substituted {}", spec.name));
                            }
                            run.attempt(Level::L3, AttemptStatus::Failed, format!("{} failed", spec.name));
                        }
                        _ => run.attempt(Level::L3, AttemptStatus::Failed, format!("{} is not a listed candidate", pick.tool_name)),
                    }
                }
                Some(_) => run.attempt(Level::L3, AttemptStatus::Failed, "substitution must name exactly one tool"),
                None => run.attempt(Level::L3, AttemptStatus::Failed, "no substitute"),
            }
        }
    }

    // L4: decomposition, retried while rounds remain.
    loop {
        if ledger.budget.clock_exhausted {
            run.budget_stop = true;
        }
        if run.budget_stop || run.rounds_used >= ledger.budget.limits.max_resolver_rounds {
            break;
        }
        let mut p = ResolverPrompt::new(PromptMode::Decompose, &action, &req.goal, &req.parent_context, req.depth, banned_list(&run));
        p.feedback = run.feedback.clone();
        let Some(children) = ask(env, ledger, policy, &mut run, p.rendered()) else {
            run.attempt(Level::L4, AttemptStatus::Failed, "no decomposition");
            continue;
        };
        if children.len() < 2 {
            run.feedback.push(format!("EmptyDecomposition: {} children; at least two are required", children.len()));
            run.attempt(Level::L4, AttemptStatus::Failed, "empty decomposition");
            continue;
        }
        run.decomposition = children.clone();
        let (progress, result) = run_children(env, ledger, policy, &mut run, &req, &action, &children, scope);
        if progress {
            run.attempt(Level::L4, AttemptStatus::Succeeded, format!("{} children", children.len()));
            let note = format!("decomposed into {} children", children.len());
            return run.finish(Level::L4, result, note);
        }
        run.feedback.push("every child failed".into());
        run.attempt(Level::L4, AttemptStatus::Failed, "children failed");
    }
    if run.attempts.iter().all(|a| a.level != Level::L4) {
        run.attempt(Level::L4, AttemptStatus::Skipped, "no resolver rounds left");
    }

    let kind = if run.budget_stop { FailureKind::BudgetViolation } else { FailureKind::UnavailableTool };
    let why: Vec<String> = run.attempts.iter().map(|a| format!("{:?}: {}", a.level, a.detail)).collect();
    let obs = failed_observation(&action.tool_name, action.params.clone(), kind, format!("unresolved ({})", why.join("; ")), round);
    run.observations.push(obs);
    run.finish(Level::Unresolved, None, "could not ground the action".into())
}

fn banned_list(run: &Run) -> Vec<String> {
    run.banned.iter().cloned().collect()
}

/// One policy round. `None` when the budget is spent, the policy errs,
/// the reply does not parse, or it carries no actions.
fn ask(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    policy: &mut dyn ResolverPolicy,
    run: &mut Run,
    prompt: ResolverPrompt,
) -> Option<Vec<ActionRequest>> {
    let _ = env;
    if let Err(v) = ledger.budget.enforce(BudgetEvent::ResolverRound { used: run.rounds_used }) {
        run.budget_stop = true;
        ledger.violations.push(ViolationRecord {
            round: ledger.round,
            depth: Some(run.depth),
            kind: ViolationKind::Budget,
            detail: "resolver rounds exhausted".into(),
            budget: Some(v),
        });
        return None;
    }
    run.rounds_used += 1;
    ledger.transcript.push(TokenRole::Environment, &prompt.text);
    let text = match policy.respond(&prompt) {
        Ok(t) => t,
        Err(e) => {
            run.feedback.push(e.to_string());
            return None;
        }
    };
    ledger.transcript.push(TokenRole::Resolver, &text);
    let msg = match parse_planner_message(&text) {
        Ok(m) => m,
        Err(f) => {
            violation(ledger, run.depth, ViolationKind::ResolverParseFailure, f.to_string());
            run.feedback.push(format!("unparseable reply: {f}"));
            return None;
        }
    };
    if let Err(v) = validate_termination(&msg, false) {
        violation(ledger, run.depth, ViolationKind::ResolverFinish, v.to_string());
        let answer = msg.finish.as_ref().map(|f| f.answer.clone()).unwrap_or_default();
        run.observations.push(Observation {
            call: ToolCall { tool_name: "resolver_note".into(), final_args: Record::new() },
            evidence: Value::Str(answer),
            signal: Signal::ok(1, 0.0, false),
            round: ledger.round,
            pointer: None,
            kind: ObservationKind::ResolverNote,
        });
        run.feedback.push("Finish is reserved for the root planner".into());
        return None;
    }
    (!msg.actions.is_empty()).then_some(msg.actions)
}

/// Executes one rewritten or substituted call; `Some(evidence)` on success.
fn execute_single(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    run: &mut Run,
    spec: &ToolSpec,
    action: &ActionRequest,
    scope: Scope<'_>,
) -> Option<Value> {
    let round = ledger.round;
    if run.banned.contains(&spec.name) {
        run.feedback.push(format!("{} is invalid on this branch", spec.name));
        return None;
    }
    let args = match resolve_with(&action.params, scope) {
        Ok(a) => a,
        Err(UnresolvedPointer(ps)) => {
            let detail = format!("unbound pointers {}", ps.join(", "));
            run.feedback.push(detail.clone());
            run.absorb(failed_observation(&spec.name, action.params.clone(), FailureKind::MissingArgument, detail, round));
            return None;
        }
    };
    let out = run_primitives(env, ledger, alloc::vec![(spec, args)]);
    let obs = out.into_iter().next()?.into_observation(round, None);
    let evidence = obs.evidence.clone();
    if !obs.is_success() {
        run.feedback.push(obs.summary());
    }
    run.absorb(obs).then_some(evidence)
}

/// Runs decomposition children in dependency order against a local
/// overlay. Returns whether anything succeeded or was deferred, and the
/// terminal child's evidence.
#[allow(clippy::too_many_arguments)]
fn run_children(
    env: &EpisodeEnv<'_>,
    ledger: &mut EpisodeLedger,
    policy: &mut dyn ResolverPolicy,
    run: &mut Run,
    req: &ResolutionRequest,
    parent: &ActionRequest,
    children: &[ActionRequest],
    scope: Scope<'_>,
) -> (bool, Option<Value>) {
    let round = ledger.round;
    let n = children.len();
    let mut producers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in children.iter().enumerate() {
        if let Some(p) = &c.output {
            producers.entry(p.as_str()).or_default().push(i);
        }
    }
    let mut local: BTreeMap<String, Value> = BTreeMap::new();
    let mut results: Vec<Option<Value>> = alloc::vec![None; n];
    let mut pending: Vec<usize> = (0..n).collect();
    let mut progress = false;
    let obs_before = run.observations.len();

    while !pending.is_empty() {
        let mut ready = Vec::new();
        let mut defer = Vec::new();
        for &i in &pending {
            let refs = children[i].referenced_pointers();
            let waiting = refs.iter().any(|p| {
                producers.get(p.as_str()).is_some_and(|ps| ps.iter().any(|&j| j != i && pending.contains(&j)))
            });
            if waiting {
                continue;
            }
            let bound = |p: &String| local.contains_key(p) || scope(p).is_some();
            if refs.iter().all(bound) {
                ready.push(i);
            } else {
                defer.push(i);
            }
        }
        if ready.is_empty() && defer.is_empty() {
            // Only cycles remain.
            defer = pending.clone();
        }
        pending.retain(|i| !ready.contains(i) && !defer.contains(i));
        for &i in &defer {
            run.deferred.push(children[i].clone());
            progress = true;
        }
        if ready.is_empty() {
            continue;
        }

        let mut primitives: Vec<(usize, &ToolSpec, Record)> = Vec::new();
        let mut abstracts: Vec<usize> = Vec::new();
        for &i in &ready {
            let child = &children[i];
            let lookup = |p: &str| local.get(p).cloned().or_else(|| scope(p));
            let args = match resolve_with(&child.params, &lookup) {
                Ok(a) => a,
                Err(_) => {
                    run.deferred.push(child.clone());
                    progress = true;
                    continue;
                }
            };
            if run.banned.contains(&child.tool_name) {
                let detail = format!("{} is invalid on this branch", child.tool_name);
                run.absorb(failed_observation(&child.tool_name, args, FailureKind::UnavailableTool, detail, round));
                continue;
            }
            let mut resolved = child.clone();
            resolved.params = args.clone();
            let class = classify_action(env.registry, &resolved, &env.availability);
            match class.matched {
                Some(spec) if class.kind == ActionKind::Primitive => primitives.push((i, spec, args)),
                _ => abstracts.push(i),
            }
        }

        if !primitives.is_empty() {
            let calls = primitives.iter().map(|(_, s, a)| (*s, a.clone())).collect();
            let outs = run_primitives(env, ledger, calls);
            for ((i, _, _), out) in primitives.iter().zip(outs) {
                let obs = out.into_observation(round, children[*i].output.clone());
                let evidence = obs.evidence.clone();
                if run.absorb(obs) {
                    results[*i] = Some(evidence);
                }
            }
        }

        for i in abstracts {
            let child = &children[i];
            let goal = if child.description.is_empty() { child.tool_name.replace('_', " ") } else { child.description.clone() };
            let parent_context = if parent.description.is_empty() { req.goal.clone() } else { parent.description.clone() };
            let sub = ResolutionRequest {
                action: child.clone(),
                goal,
                parent_context,
                depth: req.depth + 1,
                banned_tools: run.banned.clone(),
            };
            let lookup = |p: &str| local.get(p).cloned().or_else(|| scope(p));
            let outcome = resolve_action(env, ledger, policy, sub, &lookup);
            run.banned.extend(outcome.banned.iter().cloned());
            run.observations.extend(outcome.observations);
            run.deferred.extend(outcome.deferred.iter().cloned());
            if !outcome.deferred.is_empty() {
                progress = true;
            }
            for e in outcome.exports {
                local.insert(e.pointer.clone(), e.value.clone());
                run.exports.push(e);
            }
            run.nested.push(outcome.trace);
            results[i] = outcome.result;
        }

        for &i in &ready {
            let (Some(p), Some(v)) = (&children[i].output, &results[i]) else { continue };
            let multi = producers.get(p.as_str()).is_some_and(|ps| ps.len() > 1);
            let value = if multi {
                let mut list = match local.remove(p) {
                    Some(Value::List(l)) => l,
                    _ => Vec::new(),
                };
                list.push(v.clone());
                Value::List(list)
            } else {
                v.clone()
            };
            local.insert(p.clone(), value);
        }
        // Multi-producer pointers start as an empty list so consumers
        // still resolve when every producer failed.
        for (p, ps) in &producers {
            if ps.len() > 1 && ps.iter().all(|j| !pending.contains(j)) && !local.contains_key(*p) {
                local.insert((*p).to_string(), Value::List(Vec::new()));
            }
        }
    }

    if run.observations[obs_before..].iter().any(|o| o.is_success() && o.kind == ObservationKind::Tool) {
        progress = true;
    }
    for (p, v) in &local {
        if run.exports.iter().any(|e| &e.pointer == p) {
            continue;
        }
        let tool = producers.get(p.as_str()).and_then(|ps| ps.first()).map_or("", |&i| children[i].tool_name.as_str());
        run.exports.push(Export { pointer: p.clone(), value: v.clone(), tool_name: tool.to_string() });
    }
    (progress, results[n - 1].clone())
}
