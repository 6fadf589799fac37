//! Planner/resolver wire messages, termination rules and result pointers.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize};

use crate::value::{is_pointer, Record, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Exact,
    Approximate,
    Missing,
}

/// Planner bookkeeping; carried verbatim, never interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceEntry {
    pub label: String,
    #[serde(default)]
    pub value: Value,
    #[serde(default)]
    pub citation: String,
    pub evidence_status: EvidenceStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRequest {
    #[serde(rename = "tool")]
    pub tool_name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Record,
    /// Pointer the caller wants the result bound to, in addition to the
    /// minted one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ActionRequest {
    pub fn new(tool: &str, params: Record) -> Self {
        ActionRequest { tool_name: tool.to_string(), params, ..Default::default() }
    }

    pub fn describe(mut self, description: &str) -> Self {
        self.description = description.to_string();
        self
    }

    pub fn bind_to(mut self, pointer: &str) -> Self {
        self.output = Some(pointer.to_string());
        self
    }

    /// Pointers referenced by the params, in first-appearance order.
    pub fn referenced_pointers(&self) -> Vec<String> {
        Value::Record(self.params.clone()).pointers()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinishDirective {
    pub chain_complete: bool,
    #[serde(default)]
    pub completion_basis: String,
    #[serde(deserialize_with = "string_or_number")]
    pub answer: String,
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match Value::deserialize(d)? {
        Value::Str(s) => Ok(s),
        v @ (Value::Int(_) | Value::Real(_)) => Ok(v.canonical_string()),
        other => Err(serde::de::Error::custom(format!("answer must be a string, got {}", other))),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerMessage {
    pub thought: String,
    pub plan: String,
    pub evidence: Vec<EvidenceEntry>,
    pub actions: Vec<ActionRequest>,
    pub finish: Option<FinishDirective>,
    pub raw_text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    #[serde(rename = "Thought", default)]
    thought: String,
    #[serde(rename = "Plan", default)]
    plan: String,
    #[serde(rename = "Evidence", default, skip_serializing_if = "Vec::is_empty")]
    evidence: Vec<EvidenceEntry>,
    #[serde(rename = "Actions", default)]
    actions: Vec<ActionRequest>,
    #[serde(rename = "Finish", default, skip_serializing_if = "Option::is_none")]
    finish: Option<FinishDirective>,
}

impl PlannerMessage {
    pub fn actions(thought: &str, actions: Vec<ActionRequest>) -> Self {
        PlannerMessage { thought: thought.into(), actions, ..Default::default() }
    }

    pub fn finish(answer: &str, basis: &str) -> Self {
        PlannerMessage {
            finish: Some(FinishDirective {
                chain_complete: true,
                completion_basis: basis.into(),
                answer: answer.into(),
            }),
            ..Default::default()
        }
    }

    /// Wire JSON (no think block). `raw_text` is not part of the wire form.
    pub fn to_wire(&self) -> String {
        let w = Wire {
            thought: self.thought.clone(),
            plan: self.plan.clone(),
            evidence: self.evidence.clone(),
            actions: self.actions.clone(),
            finish: self.finish.clone(),
        };
        // `<` only occurs inside strings; escaping it keeps a literal
        // `<think>` in a value from being stripped on the way back in.
        serde_json::to_string(&w).unwrap_or_default().replace('<', "\\u003c")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "failure", content = "detail", rename_all = "snake_case")]
pub enum ParseFailure {
    #[error("no JSON object found")]
    NoJson,
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

/// Removes `<think>...</think>` blocks. An unterminated block swallows the
/// rest of the text.
pub fn strip_think(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find("<think>") {
        out.push_str(&rest[..open]);
        match rest[open..].find("</think>") {
            Some(close) => rest = &rest[open + close + "</think>".len()..],
            None => return out,
        }
    }
    out.push_str(rest);
    out
}

/// Byte range of the last balanced top-level `{...}` in `text`. String
/// state is tracked only inside objects, so stray quotes in prose do not
/// confuse the scan. `Err(true)` means an object was opened but never closed.
fn last_object(text: &str) -> Result<(usize, usize), bool> {
    let mut last = None;
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut opened = false;
    for (i, c) in text.char_indices() {
        if depth == 0 {
            if c == '{' {
                depth = 1;
                start = i;
                opened = true;
            }
            continue;
        }
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    last = Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    last.ok_or(opened)
}

pub fn parse_planner_message(text: &str) -> Result<PlannerMessage, ParseFailure> {
    let body = strip_think(text);
    let (s, e) = match last_object(&body) {
        Ok(span) => span,
        Err(true) => return Err(ParseFailure::MalformedJson("unbalanced braces".into())),
        Err(false) => return Err(ParseFailure::NoJson),
    };
    let json: serde_json::Value =
        serde_json::from_str(&body[s..e]).map_err(|e| ParseFailure::MalformedJson(e.to_string()))?;
    let wire: Wire =
        serde_json::from_value(json).map_err(|e| ParseFailure::SchemaMismatch(e.to_string()))?;
    if !wire.actions.is_empty() && wire.finish.is_some() {
        return Err(ParseFailure::SchemaMismatch("exclusivity: Actions and Finish both present".into()));
    }
    for (i, a) in wire.actions.iter().enumerate() {
        if a.tool_name.trim().is_empty() {
            return Err(ParseFailure::SchemaMismatch(format!("action {i}: empty tool name")));
        }
        if let Some(p) = &a.output {
            if !is_pointer(p) {
                return Err(ParseFailure::SchemaMismatch(format!("action {i}: output `{p}` is not a pointer")));
            }
        }
    }
    Ok(PlannerMessage {
        thought: wire.thought,
        plan: wire.plan,
        evidence: wire.evidence,
        actions: wire.actions,
        finish: wire.finish,
        raw_text: text.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolViolation {
    #[error("Finish emitted outside the root planner")]
    ResolverFinish,
    #[error("Finish without a complete chain or answer")]
    IncompleteFinish,
}

pub fn validate_termination(msg: &PlannerMessage, is_root: bool) -> Result<(), ProtocolViolation> {
    let Some(f) = &msg.finish else { return Ok(()) };
    if !is_root {
        return Err(ProtocolViolation::ResolverFinish);
    }
    if !f.chain_complete || f.answer.trim().is_empty() {
        return Err(ProtocolViolation::IncompleteFinish);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub round: u32,
    pub tool_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unresolved pointers: {0:?}")]
pub struct UnresolvedPointer(pub Vec<String>);

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultStore {
    bindings: BTreeMap<String, Value>,
    provenance: BTreeMap<String, Provenance>,
}

impl ResultStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds (or rebinds) a pointer. Names must be valid pointers.
    pub fn bind(&mut self, name: &str, value: Value, round: u32, tool_name: &str) {
        assert!(is_pointer(name), "invalid pointer name {name}");
        self.bindings.insert(name.to_string(), value);
        self.provenance.insert(name.to_string(), Provenance { round, tool_name: tool_name.to_string() });
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn provenance(&self, name: &str) -> Option<&Provenance> {
        self.provenance.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

/// `$<tool>_r<round>_<k>`, with non-identifier characters mapped to `_`.
pub fn mint_pointer(tool_name: &str, round: u32, k: usize) -> String {
    let clean: String =
        tool_name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    let lead = if clean.starts_with(|c: char| c.is_ascii_digit()) || clean.is_empty() { "_" } else { "" };
    format!("${lead}{clean}_r{round}_{k}")
}

pub fn resolve_pointers(params: &Record, store: &ResultStore) -> Result<Record, UnresolvedPointer> {
    resolve_with(params, &|name| store.get(name).cloned())
}

/// Substitutes every whole-string pointer via `lookup`, recursively.
pub fn resolve_with(
    params: &Record,
    lookup: &dyn Fn(&str) -> Option<Value>,
) -> Result<Record, UnresolvedPointer> {
    let mut missing = Vec::new();
    let out = params.iter().map(|(k, v)| (k.clone(), substitute(v, lookup, &mut missing))).collect();
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(UnresolvedPointer(missing))
    }
}

fn substitute(v: &Value, lookup: &dyn Fn(&str) -> Option<Value>, missing: &mut Vec<String>) -> Value {
    match v {
        Value::Str(s) if is_pointer(s) => match lookup(s) {
            Some(bound) => bound,
            None => {
                if !missing.contains(s) {
                    missing.push(s.clone());
                }
                v.clone()
            }
        },
        Value::List(items) => Value::List(items.iter().map(|x| substitute(x, lookup, missing)).collect()),
        Value::Record(r) => {
            Value::Record(r.iter().map(|(k, x)| (k.clone(), substitute(x, lookup, missing))).collect())
        }
        other => other.clone(),
    }
}
