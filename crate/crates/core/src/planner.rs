//! Root planner policies. A policy sees the rendered prompt plus its
//! structured parts and answers with wire text.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::backend::json_path;
use crate::protocol::ResultStore;
use crate::resolver::PolicyError;
use crate::scheduler::Objective;
use crate::value::Value;

pub struct PlannerPrompt<'a> {
    pub objective: &'a Objective,
    /// 1-based.
    pub round: u32,
    pub seed: u64,
    /// Grounding block text; only present in the first round.
    pub grounding: String,
    pub digest: String,
    pub budget: String,
    /// Why the previous reply in this round was rejected.
    pub feedback: Option<String>,
    pub bindings: &'a ResultStore,
    pub text: String,
}

pub trait PlannerPolicy {
    fn respond(&mut self, prompt: &PlannerPrompt<'_>) -> Result<String, PolicyError>;
}

/// Replays a fixed list of replies, one per call (reprompts consume a
/// step too). Replies may contain `{{$ptr}}`, `{{$ptr.path}}` and
/// `{{len $ptr}}`, filled from the bound pointers and JSON-escaped.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPlanner {
    steps: Vec<String>,
    next: usize,
    repeat_last: bool,
}

impl ScriptedPlanner {
    pub fn new(steps: Vec<String>) -> Self {
        ScriptedPlanner { steps, next: 0, repeat_last: false }
    }

    /// Steps from a JSON array whose items are wire objects or raw strings.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let items: Vec<serde_json::Value> = serde_json::from_str(text)?;
        Ok(Self::new(items.into_iter().map(step_text).collect()))
    }

    /// Keep answering with the last step once the script runs out.
    pub fn repeat_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    pub fn is_repeating(&self) -> bool {
        self.repeat_last
    }
}

/// Raw strings are used verbatim; anything else is serialized.
pub fn step_text(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

impl PlannerPolicy for ScriptedPlanner {
    fn respond(&mut self, prompt: &PlannerPrompt<'_>) -> Result<String, PolicyError> {
        let i = if self.next < self.steps.len() {
            self.next += 1;
            self.next - 1
        } else if self.repeat_last && !self.steps.is_empty() {
            self.steps.len() - 1
        } else {
            return Err(PolicyError("script exhausted".into()));
        };
        Ok(fill_templates(&self.steps[i], prompt.bindings))
    }
}

fn template_value(expr: &str, store: &ResultStore) -> Option<String> {
    let expr = expr.trim();
    if let Some(p) = expr.strip_prefix("len ") {
        let v = store.get(p.trim())?;
        let n = match v {
            Value::List(l) => l.len(),
            Value::Record(r) => r.len(),
            Value::Str(s) => s.chars().count(),
            Value::Null => 0,
            _ => 1,
        };
        return Some(n.to_string());
    }
    let (ptr, path) = match expr.find('.') {
        Some(i) => (&expr[..i], &expr[i + 1..]),
        None => (expr, ""),
    };
    let v = json_path(store.get(ptr)?, path)?;
    Some(match v {
        Value::Str(s) => s.clone(),
        other => other.canonical_string(),
    })
}

/// Replaces `{{...}}` templates; unknown pointers render as empty.
pub fn fill_templates(text: &str, store: &ResultStore) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open..].find("}}") else { break };
        out.push_str(&rest[..open]);
        let expr = &rest[open + 2..open + close];
        let filled = template_value(expr, store).unwrap_or_default();
        let escaped = serde_json::to_string(&filled).unwrap_or_default();
        out.push_str(&escaped[1..escaped.len() - 1]);
        rest = &rest[open + close + 2..];
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::record;

    #[test]
    fn templates() {
        let mut s = ResultStore::new();
        s.bind("$events", Value::List(alloc::vec![Value::Int(1), Value::Int(2)]), 2, "Merge");
        s.bind("$r", Value::Record(record([("name", Value::from("say \"hi\""))])), 1, "X");
        assert_eq!(fill_templates("n={{len $events}}", &s), "n=2");
        assert_eq!(fill_templates("{{$events.1}}", &s), "2");
        assert_eq!(fill_templates("{{ $r.name }}", &s), "say \\\"hi\\\"");
        assert_eq!(fill_templates("{{$missing}}!", &s), "!");
        assert_eq!(fill_templates("open {{ only", &s), "open {{ only");
    }
}
