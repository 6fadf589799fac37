//! Tool backends: what actually answers a tool call.
//!
//! [`SimBackend`] answers from a [`SyntheticWorld`] through the oracles and
//! the meta-tool pack; [`FaultyBackend`] wraps any backend to inject
//! failures for testing the recovery paths.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::RuntimeConfig;
use crate::metatools::{run_meta, MetaError};
use crate::registry::{AvailabilityContext, ToolRegistry, ToolSpec};
use crate::router::{search_tools, LexicalScorer, RouteQuery};
use crate::simenv::oracles::{self, OracleError};
use crate::simenv::{segment_video, Segment};
use crate::simenv::SyntheticWorld;
use crate::value::{record, Record, Value};

/// Backend-side failure, before the executor maps it to a failure kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolFault {
    /// Ran fine but found nothing.
    Empty,
    /// Produced something that is not a valid result.
    Invalid(String),
    /// The underlying service or modality cannot be reached.
    Unavailable(String),
    /// Arguments were well-typed but semantically rejected.
    BadArgs(String),
    MissingArg(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub result: Result<Value, ToolFault>,
    /// Simulated seconds spent.
    pub latency: f64,
}

pub trait ToolBackend: Sync {
    fn world_id(&self) -> &str;

    fn availability(&self) -> AvailabilityContext;

    /// `attempt` counts from 0 within one executor call.
    fn invoke(&self, spec: &ToolSpec, args: &Record, attempt: u32) -> Invocation;
}

/// Simulated seconds per call, by binding.
pub fn simulated_latency(binding: &str) -> f64 {
    match binding {
        "sim.clip_qa" => 6.0,
        "sim.audio_qa" => 5.0,
        "sim.temporal_retrieval" | "sim.caption_search" | "sim.transcript_search" | "sim.graph" => 2.0,
        "sim.window_labels" | "sim.ocr" | "sim.scene_changes" | "sim.asr_window" | "sim.audio_events" => 3.0,
        "sim.inspect_frame" | "sim.segment_lookup" => 1.0,
        b if b.starts_with("svc.") => 5.0,
        b if b.starts_with("exec.") => 1.0,
        b if b.starts_with("engine.") => 0.5,
        _ => 0.0,
    }
}

impl From<OracleError> for ToolFault {
    fn from(e: OracleError) -> Self {
        ToolFault::BadArgs(e.to_string())
    }
}

impl From<MetaError> for ToolFault {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Empty => ToolFault::Empty,
            other => ToolFault::BadArgs(other.to_string()),
        }
    }
}

fn num(args: &Record, name: &str) -> Result<f64, ToolFault> {
    args.get(name).and_then(Value::as_f64).ok_or_else(|| ToolFault::MissingArg(name.to_string()))
}

fn text<'a>(args: &'a Record, name: &str) -> Result<&'a str, ToolFault> {
    args.get(name).and_then(Value::as_str).ok_or_else(|| ToolFault::MissingArg(name.to_string()))
}

fn count(args: &Record, name: &str, default: usize) -> usize {
    args.get(name).and_then(Value::as_i64).map_or(default, |k| k.max(0) as usize)
}

/// Deterministic backend over one synthetic world.
pub struct SimBackend<'a> {
    world: &'a SyntheticWorld,
    registry: &'a ToolRegistry,
    segments: Vec<Segment>,
    config: RuntimeConfig,
}

impl<'a> SimBackend<'a> {
    pub fn new(world: &'a SyntheticWorld, registry: &'a ToolRegistry, config: &RuntimeConfig) -> Self {
        SimBackend { world, registry, segments: segment_video(world, &config.preprocess), config: config.clone() }
    }

    pub fn world(&self) -> &SyntheticWorld {
        self.world
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn dispatch(&self, binding: &str, args: &Record) -> Result<Value, ToolFault> {
        let w = self.world;
        let window = || Ok::<_, ToolFault>((num(args, "t_start")?, num(args, "t_end")?));
        let query = || args.get("query").and_then(Value::as_str).unwrap_or("");
        Ok(match binding {
            "sim.clip_qa" => {
                let (s, e) = window()?;
                oracles::clip_qa(w, s, e, text(args, "query")?)?
            }
            "sim.temporal_retrieval" => {
                Value::List(oracles::temporal_retrieval(w, text(args, "query")?, count(args, "k", 5)))
            }
            "sim.inspect_frame" => oracles::inspect_frame(w, num(args, "t")?)?,
            "sim.caption_search" => {
                Value::List(oracles::caption_search(&self.segments, text(args, "query")?, count(args, "k", 5)))
            }
            "sim.transcript_search" => {
                Value::List(oracles::transcript_search(w, text(args, "query")?, count(args, "k", 5)))
            }
            "sim.segment_lookup" => oracles::segment_lookup(w, &self.segments, num(args, "t")?)?,
            "sim.graph" => Value::List(oracles::graph_neighbors(w, text(args, "entity")?)),
            "sim.window_labels" => {
                let (s, e) = window()?;
                oracles::window_labels(w, s, e)?
            }
            "sim.ocr" => {
                let (s, e) = window()?;
                oracles::ocr(w, s, e)?
            }
            "sim.scene_changes" => {
                let (s, e) = window()?;
                oracles::scene_changes(w, s, e)?
            }
            "sim.asr_window" => {
                let (s, e) = window()?;
                oracles::asr_window(w, s, e)?
            }
            "sim.audio_events" => {
                let (s, e) = window()?;
                oracles::audio_events(w, s, e, query())?
            }
            "sim.audio_qa" => {
                let (s, e) = window()?;
                oracles::audio_qa(w, s, e, query())?
            }
            b if b.starts_with("svc.") => {
                return Err(ToolFault::Unavailable(format!("no live `{}` service in simulation", &b[4..])))
            }
            "exec.expression" => Value::Real(eval_expression(text(args, "expression")?).map_err(ToolFault::BadArgs)?),
            "exec.json_path" => {
                let v = args.get("value").ok_or_else(|| ToolFault::MissingArg("value".into()))?;
                json_path(v, text(args, "path")?).cloned().ok_or(ToolFault::Empty)?
            }
            "engine.tool_search" => {
                let hits = search_tools(
                    self.registry,
                    &RouteQuery::describe(text(args, "query")?),
                    count(args, "k", self.config.routing.k),
                    &LexicalScorer { weights: self.config.routing.clone() },
                );
                Value::List(
                    hits.into_iter()
                        .map(|c| {
                            Value::Record(record([
                                ("name", Value::from(c.tool.name.as_str())),
                                ("score", Value::Real(c.score)),
                                ("description", Value::from(c.tool.description.as_str())),
                            ]))
                        })
                        .collect(),
                )
            }
            "engine.context_compress" => {
                let limit = count(args, "max_words", 64);
                let words: Vec<&str> = text(args, "text")?.split_whitespace().collect();
                let mut out = words[..words.len().min(limit)].join(" ");
                if words.len() > limit {
                    out.push_str(" ...");
                }
                Value::Str(out)
            }
            "engine.recovery" => {
                let failure = text(args, "failure")?;
                let advice = match failure {
                    "schema_error" | "missing_argument" => "repair_parameters",
                    "empty_result" | "unavailable_tool" => "substitute_tool",
                    "budget_violation" => "decompose",
                    _ => "retry",
                };
                Value::Record(record([("failure", Value::from(failure)), ("advice", Value::from(advice))]))
            }
            b if b.starts_with("meta.") => run_meta(b, args, self.config.merge_tolerance)
                .ok_or_else(|| ToolFault::Unavailable(format!("unknown meta binding `{b}`")))??,
            other => return Err(ToolFault::Unavailable(format!("unknown binding `{other}`"))),
        })
    }
}

impl ToolBackend for SimBackend<'_> {
    fn world_id(&self) -> &str {
        &self.world.world_id
    }

    fn availability(&self) -> AvailabilityContext {
        self.world.availability()
    }

    fn invoke(&self, spec: &ToolSpec, args: &Record, _attempt: u32) -> Invocation {
        Invocation { result: self.dispatch(&spec.binding, args), latency: simulated_latency(&spec.binding) }
    }
}

/// One injected failure pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    pub fault: ToolFault,
    /// Attempts (counted from 0 per call) that fail; later attempts pass
    /// through. `u32::MAX` fails every attempt.
    pub failing_attempts: u32,
}

/// Wraps a backend, injecting faults and latency overrides by tool name.
pub struct FaultyBackend<B> {
    inner: B,
    faults: BTreeMap<String, FaultPlan>,
    latency: BTreeMap<String, f64>,
    availability: Option<AvailabilityContext>,
}

impl<B: ToolBackend> FaultyBackend<B> {
    pub fn new(inner: B) -> Self {
        FaultyBackend { inner, faults: BTreeMap::new(), latency: BTreeMap::new(), availability: None }
    }

    pub fn fail(mut self, tool: &str, fault: ToolFault, failing_attempts: u32) -> Self {
        self.faults.insert(tool.to_string(), FaultPlan { fault, failing_attempts });
        self
    }

    pub fn always_fail(self, tool: &str, fault: ToolFault) -> Self {
        self.fail(tool, fault, u32::MAX)
    }

    pub fn slow(mut self, tool: &str, latency: f64) -> Self {
        self.latency.insert(tool.to_string(), latency);
        self
    }

    pub fn with_availability(mut self, ctx: AvailabilityContext) -> Self {
        self.availability = Some(ctx);
        self
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ToolBackend> ToolBackend for FaultyBackend<B> {
    fn world_id(&self) -> &str {
        self.inner.world_id()
    }

    fn availability(&self) -> AvailabilityContext {
        self.availability.clone().unwrap_or_else(|| self.inner.availability())
    }

    fn invoke(&self, spec: &ToolSpec, args: &Record, attempt: u32) -> Invocation {
        let mut inv = match self.faults.get(&spec.name) {
            Some(plan) if attempt < plan.failing_attempts => {
                Invocation { result: Err(plan.fault.clone()), latency: simulated_latency(&spec.binding) }
            }
            _ => self.inner.invoke(spec, args, attempt),
        };
        if let Some(&l) = self.latency.get(&spec.name) {
            inv.latency = l;
        }
        inv
    }
}

/// Dotted path into records and lists: `a.b.0.c`. The empty path is the
/// value itself.
pub fn json_path<'v>(v: &'v Value, path: &str) -> Option<&'v Value> {
    let mut cur = v;
    for step in path.split('.').filter(|s| !s.is_empty()) {
        cur = match cur {
            Value::Record(r) => r.get(step)?,
            Value::List(l) => l.get(step.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(cur)
}

/// Arithmetic over `+ - * / ^`, parentheses, unary minus and decimal
/// literals. `^` is right-associative and binds tighter than unary minus.
pub fn eval_expression(src: &str) -> Result<f64, String> {
    let mut p = ExprParser { s: src.as_bytes(), i: 0 };
    let v = p.sum()?;
    p.ws();
    if p.i != p.s.len() {
        return Err(format!("unexpected `{}` at {}", p.s[p.i] as char, p.i));
    }
    if !v.is_finite() {
        return Err("result is not finite".into());
    }
    Ok(v)
}

struct ExprParser<'s> {
    s: &'s [u8],
    i: usize,
}

impl ExprParser<'_> {
    fn ws(&mut self) {
        while self.s.get(self.i).is_some_and(u8::is_ascii_whitespace) {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.ws();
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<f64, String> {
        let mut v = self.product()?;
        loop {
            if self.eat(b'+') {
                v += self.product()?;
            } else if self.eat(b'-') {
                v -= self.product()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn product(&mut self) -> Result<f64, String> {
        let mut v = self.unary()?;
        loop {
            if self.eat(b'*') {
                v *= self.unary()?;
            } else if self.eat(b'/') {
                let d = self.unary()?;
                if d == 0.0 {
                    return Err("division by zero".into());
                }
                v /= d;
            } else {
                return Ok(v);
            }
        }
    }

    fn unary(&mut self) -> Result<f64, String> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        self.eat(b'+');
        self.power()
    }

    fn power(&mut self) -> Result<f64, String> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(libm::pow(base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<f64, String> {
        if self.eat(b'(') {
            let v = self.sum()?;
            if !self.eat(b')') {
                return Err("missing `)`".into());
            }
            return Ok(v);
        }
        self.ws();
        let start = self.i;
        while self.s.get(self.i).is_some_and(|c| c.is_ascii_digit() || *c == b'.') {
            self.i += 1;
        }
        if start == self.i {
            return Err(format!("expected a number at {start}"));
        }
        core::str::from_utf8(&self.s[start..self.i])
            .ok()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| format!("bad number at {start}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SyntheticWorld {
        SyntheticWorld::new("w", 100.0).with_event("dog barking", 10.0, 20.0)
    }

    #[test]
    fn expressions() {
        assert_eq!(eval_expression("1 + 2 * 3"), Ok(7.0));
        assert_eq!(eval_expression("(1 + 2) * 3"), Ok(9.0));
        assert_eq!(eval_expression("-2 ^ 2"), Ok(-4.0));
        assert_eq!(eval_expression("2 ^ 3 ^ 2"), Ok(512.0));
        assert_eq!(eval_expression("10 / 4 - .5"), Ok(2.0));
        assert!(eval_expression("1 / 0").is_err());
        assert!(eval_expression("1 +").is_err());
        assert!(eval_expression("2 3").is_err());
    }

    #[test]
    fn paths() {
        let v = Value::parse_json(r#"{"a":{"b":[10,{"c":"x"}]}}"#).unwrap();
        assert_eq!(json_path(&v, "a.b.1.c"), Some(&Value::from("x")));
        assert_eq!(json_path(&v, ""), Some(&v));
        assert_eq!(json_path(&v, "a.z"), None);
    }

    #[test]
    fn sim_dispatch() {
        let w = world();
        let reg = ToolRegistry::default_library();
        let cfg = RuntimeConfig::default();
        let b = SimBackend::new(&w, &reg, &cfg);
        let qa = reg.get("Video_Clip_QA").unwrap();
        let args = record([("t_start", Value::Int(0)), ("t_end", Value::Int(30)), ("query", "dog barking".into())]);
        let inv = b.invoke(qa, &args, 0);
        assert_eq!(inv.latency, 6.0);
        assert_eq!(inv.result.unwrap().get("verdict"), Some(&Value::from("yes")));

        let bad = record([("t_start", Value::Int(50)), ("t_end", Value::Int(40)), ("query", "x".into())]);
        assert!(matches!(b.invoke(qa, &bad, 0).result, Err(ToolFault::BadArgs(_))));

        let web = reg.get("Web_Search").unwrap();
        assert!(matches!(b.invoke(web, &record([("query", "x".into())]), 0).result, Err(ToolFault::Unavailable(_))));

        let ts = reg.get("Tool_Search").unwrap();
        let hits = b.invoke(ts, &record([("query", "merge adjacent time windows".into())]), 0).result.unwrap();
        assert_eq!(hits.as_list().unwrap()[0].get("name"), Some(&Value::from("Merge_Temporal_Segments")));
    }

    #[test]
    fn fault_injection() {
        let w = world();
        let reg = ToolRegistry::default_library();
        let cfg = RuntimeConfig::default();
        let b = FaultyBackend::new(SimBackend::new(&w, &reg, &cfg)).fail("Inspect_Frame", ToolFault::Empty, 1).slow(
            "Inspect_Frame",
            99.0,
        );
        let spec = reg.get("Inspect_Frame").unwrap();
        let args = record([("t", Value::Int(12))]);
        assert_eq!(b.invoke(spec, &args, 0).result, Err(ToolFault::Empty));
        let second = b.invoke(spec, &args, 1);
        assert!(second.result.is_ok());
        assert_eq!(second.latency, 99.0);
    }
}
