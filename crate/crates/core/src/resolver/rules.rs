//! Deterministic resolver policy driven by a JSON rule table, plus small
//! scripted policies for tests and adversarial scenarios.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::prompt::{CandidateInfo, PromptMode, ResolverPrompt};
use super::{PolicyError, ResolverPolicy};
use crate::protocol::{ActionRequest, PlannerMessage};
use crate::schema::{repair_args, validate_args, ParamSchema, ValidationStatus, ValueKind};
use crate::text::{is_stopword, tokenize};
use crate::value::{Record, Value};

const DEFAULT_RULES: &str = include_str!("../../data/default_rules.json");

/// Goal keywords restrict which tool categories a substitute may come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompatibilityRule {
    pub keywords: Vec<String>,
    #[serde(default)]
    pub allow_categories: Option<Vec<String>>,
    #[serde(default)]
    pub deny_categories: Vec<String>,
}

/// Conditions are conjunctive; an empty spec matches nothing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSpec {
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub keywords_all: Vec<String>,
    #[serde(default)]
    pub keywords_any: Vec<String>,
    /// Parameter names the action must carry.
    #[serde(default)]
    pub params_all: Vec<String>,
}

/// One child action pattern. String values starting with `@` are
/// templates: `@goal`, `@query`, `@param.NAME`, `@item`, `@item.NAME`,
/// with `|` separating fallbacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildTemplate {
    pub tool: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub params: Record,
    /// `@param.NAME` naming a list; one child per item.
    #[serde(default)]
    pub for_each: Option<String>,
    #[serde(default)]
    pub output: Option<String>,
    /// Keep the child only when the goal mentions one of these.
    #[serde(default)]
    pub when_keywords: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionRule {
    pub name: String,
    #[serde(rename = "match")]
    pub matcher: MatchSpec,
    pub children: Vec<ChildTemplate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    #[serde(rename = "$comment", default, skip_serializing)]
    pub comment: Option<String>,
    /// Alias parameter name -> schema name.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    /// Words dropped when deriving a query from goal text.
    #[serde(default)]
    pub intent_words: Vec<String>,
    #[serde(default)]
    pub compatibility: Vec<CompatibilityRule>,
    #[serde(default)]
    pub decompositions: Vec<DecompositionRule>,
}

fn stems(words: &[String]) -> BTreeSet<String> {
    words.iter().flat_map(|w| tokenize(w)).collect()
}

fn text_stems(parts: &[&str]) -> BTreeSet<String> {
    parts.iter().flat_map(|p| tokenize(p)).collect()
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The shipped table: aliases, compatibility and generic decompositions.
    pub fn default_table() -> Self {
        Self::from_json(DEFAULT_RULES).expect("shipped rule table is valid")
    }

    /// Merges `other` over `self`: aliases override, lists append (other's
    /// decompositions first, so they take priority).
    pub fn merged(mut self, other: RuleTable) -> Self {
        self.aliases.extend(other.aliases);
        self.intent_words.extend(other.intent_words);
        self.compatibility.extend(other.compatibility);
        let mut d = other.decompositions;
        d.extend(self.decompositions);
        self.decompositions = d;
        self
    }

    /// Ordered content words of `text` minus stopwords and intent words.
    pub fn query_words(&self, text: &str) -> String {
        let mut seen: Vec<String> = Vec::new();
        for w in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let w = w.to_lowercase();
            if is_stopword(&w) || self.intent_words.contains(&w) || seen.contains(&w) {
                continue;
            }
            seen.push(w);
        }
        seen.join(" ")
    }

    /// Rewrites `action` for `schema`: aliases renamed, unsupported fields
    /// dropped, defaults filled, scalars coerced, and a missing required
    /// text query derived from the description or goal. `None` when a
    /// required value is genuinely absent.
    pub fn repair_parameters(&self, action: &ActionRequest, tool: &str, schema: &ParamSchema, goal: &str) -> Option<ActionRequest> {
        if action.tool_name == tool && validate_args(schema, &action.params).status == ValidationStatus::Valid {
            return Some(action.clone());
        }
        let mut out = Record::new();
        for (k, v) in &action.params {
            if schema.field(k).is_some() {
                out.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in &action.params {
            if schema.field(k).is_some() {
                continue;
            }
            if let Some(target) = self.aliases.get(k).filter(|t| schema.field(t).is_some()) {
                out.entry(target.clone()).or_insert_with(|| v.clone());
            }
        }
        for (name, f) in schema.fields() {
            if !f.required || out.get(name).is_some_and(|v| !v.is_null()) || f.default.is_some() {
                continue;
            }
            if f.value_kind != ValueKind::String || !matches!(name, "query" | "text" | "entity") {
                return None;
            }
            let source = if action.description.is_empty() { goal } else { action.description.as_str() };
            let q = self.query_words(source);
            if q.is_empty() {
                return None;
            }
            out.insert(name.to_string(), Value::Str(q));
        }
        let report = repair_args(schema, &out);
        if !report.is_usable() {
            return None;
        }
        let mut fixed = action.clone();
        fixed.tool_name = tool.to_string();
        fixed.params = report.effective_args(&out);
        Some(fixed)
    }

    /// Whether a tool of `category` may serve `goal`.
    pub fn compatible(&self, goal: &str, category: &str) -> bool {
        let goal = text_stems(&[goal]);
        self.compatibility.iter().all(|r| {
            if stems(&r.keywords).is_disjoint(&goal) {
                return true;
            }
            let allowed = r.allow_categories.as_ref().is_none_or(|a| a.iter().any(|c| c == category));
            allowed && !r.deny_categories.iter().any(|c| c == category)
        })
    }

    /// First compatible, non-banned candidate whose parameters can be mapped.
    pub fn substitute(
        &self,
        action: &ActionRequest,
        candidates: &[CandidateInfo],
        banned: &[String],
        goal: &str,
    ) -> Option<ActionRequest> {
        let intent = if action.description.is_empty() { goal.to_string() } else { alloc::format!("{} {goal}", action.description) };
        candidates
            .iter()
            .filter(|c| !banned.contains(&c.name))
            .filter(|c| self.compatible(&intent, &c.category))
            .find_map(|c| self.repair_parameters(action, &c.name, &c.input_schema, goal))
    }

    pub fn matching_rule(&self, action: &ActionRequest, goal: &str) -> Option<&DecompositionRule> {
        let words = text_stems(&[&action.tool_name.replace('_', " "), &action.description, goal]);
        self.decompositions.iter().find(|r| {
            let m = &r.matcher;
            let any_condition = m.tool.is_some() || !m.keywords_all.is_empty() || !m.keywords_any.is_empty() || !m.params_all.is_empty();
            any_condition
                && m.tool.as_ref().is_none_or(|t| *t == action.tool_name)
                && stems(&m.keywords_all).is_subset(&words)
                && (m.keywords_any.is_empty() || !stems(&m.keywords_any).is_disjoint(&words))
                && m.params_all.iter().all(|p| action.params.get(p).is_some_and(|v| !v.is_null()))
        })
    }

    /// Children from the first matching rule; empty when none matches.
    pub fn decompose(&self, action: &ActionRequest, goal: &str) -> Vec<ActionRequest> {
        let Some(rule) = self.matching_rule(action, goal) else { return Vec::new() };
        let words = text_stems(&[&action.tool_name.replace('_', " "), &action.description, goal]);
        let query = self.query_words(if action.description.is_empty() { goal } else { &action.description });
        let mut out = Vec::new();
        for t in &rule.children {
            if let Some(k) = &t.when_keywords {
                if stems(k).is_disjoint(&words) {
                    continue;
                }
            }
            let ctx = Ctx { action, goal, query: &query, item: None };
            let items: Vec<Option<Value>> = match &t.for_each {
                Some(src) => match ctx.lookup(src) {
                    Some(Value::List(l)) => l.into_iter().map(Some).collect(),
                    _ => Vec::new(),
                },
                None => alloc::vec![None],
            };
            for item in &items {
                let ctx = Ctx { item: item.as_ref(), ..ctx };
                let mut params = Record::new();
                for (k, v) in &t.params {
                    if let Some(v) = ctx.fill(v) {
                        params.insert(k.clone(), v);
                    }
                }
                out.push(ActionRequest {
                    tool_name: t.tool.clone(),
                    description: t.description.clone(),
                    params,
                    output: t.output.clone(),
                });
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Ctx<'a> {
    action: &'a ActionRequest,
    goal: &'a str,
    query: &'a str,
    item: Option<&'a Value>,
}

impl Ctx<'_> {
    /// `a|b` tries `a`, then `b`.
    fn lookup(&self, template: &str) -> Option<Value> {
        template.split('|').find_map(|t| self.lookup_one(t.trim()))
    }

    fn lookup_one(&self, template: &str) -> Option<Value> {
        match template {
            "@goal" => Some(Value::from(self.goal)),
            "@query" => (!self.query.is_empty()).then(|| Value::from(self.query)),
            "@item" => self.item.cloned(),
            t => {
                if let Some(name) = t.strip_prefix("@param.") {
                    self.action.params.get(name).cloned()
                } else if let Some(name) = t.strip_prefix("@item.") {
                    self.item.and_then(|i| i.get(name)).cloned()
                } else {
                    None
                }
            }
        }
    }

    fn fill(&self, v: &Value) -> Option<Value> {
        match v {
            Value::Str(s) if s.starts_with('@') => self.lookup(s),
            other => Some(other.clone()),
        }
    }
}

fn reply(thought: &str, actions: Vec<ActionRequest>) -> String {
    PlannerMessage::actions(thought, actions).to_wire()
}

/// Resolver policy backed by a [`RuleTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTablePolicy {
    pub table: RuleTable,
}

impl Default for RuleTablePolicy {
    fn default() -> Self {
        RuleTablePolicy { table: RuleTable::default_table() }
    }
}

impl RuleTablePolicy {
    pub fn new(table: RuleTable) -> Self {
        RuleTablePolicy { table }
    }
}

impl ResolverPolicy for RuleTablePolicy {
    fn respond(&mut self, p: &ResolverPrompt) -> Result<String, PolicyError> {
        let t = &self.table;
        Ok(match p.mode {
            PromptMode::Repair => {
                let fixed = p.target.as_ref().and_then(|c| t.repair_parameters(&p.action, &c.name, &c.input_schema, &p.goal));
                match fixed {
                    Some(a) => reply("rewrite parameters for the same tool", alloc::vec![a]),
                    None => reply("a required value is absent; cannot repair", Vec::new()),
                }
            }
            PromptMode::Substitute => {
                if t.matching_rule(&p.action, &p.goal).is_some() {
                    reply("a single tool is insufficient; decompose instead", Vec::new())
                } else {
                    match t.substitute(&p.action, &p.candidates, &p.banned, &p.goal) {
                        Some(a) => reply("substitute a compatible tool", alloc::vec![a]),
                        None => reply("no compatible candidate", Vec::new()),
                    }
                }
            }
            PromptMode::Decompose => reply("decompose into child tools", t.decompose(&p.action, &p.goal)),
        })
    }
}

/// Replays canned replies in order; after the last one, repeats it or
/// fails depending on `repeat_last`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedResolver {
    replies: Vec<String>,
    next: usize,
    repeat_last: bool,
}

impl ScriptedResolver {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedResolver { replies, next: 0, repeat_last: false }
    }

    /// Replies from a JSON array of wire objects or raw strings.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let items: Vec<serde_json::Value> = serde_json::from_str(text)?;
        Ok(Self::new(items.into_iter().map(crate::planner::step_text).collect()))
    }

    pub fn repeat_last(mut self) -> Self {
        self.repeat_last = true;
        self
    }
}

impl ResolverPolicy for ScriptedResolver {
    fn respond(&mut self, _prompt: &ResolverPrompt) -> Result<String, PolicyError> {
        let i = if self.next < self.replies.len() {
            self.next += 1;
            self.next - 1
        } else if self.repeat_last && !self.replies.is_empty() {
            self.replies.len() - 1
        } else {
            return Err(PolicyError("script exhausted".into()));
        };
        Ok(self.replies[i].clone())
    }
}

/// Adapts a closure into a resolver policy.
pub struct FnResolver<'f>(pub Box<dyn FnMut(&ResolverPrompt) -> String + 'f>);

impl ResolverPolicy for FnResolver<'_> {
    fn respond(&mut self, prompt: &ResolverPrompt) -> Result<String, PolicyError> {
        Ok((self.0)(prompt))
    }
}
