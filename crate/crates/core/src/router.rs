//! Candidate retrieval over the registry and primitive/abstract classification.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::RoutingConfig;
use crate::protocol::ActionRequest;
use crate::registry::{Absence, AvailabilityContext, Lookup, ToolRegistry, ToolSpec};
use crate::schema::{repair_args, validate_args, ValidationReport, ValidationStatus};
use crate::text::{content_tokens, coverage, jaccard};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteQuery {
    pub name: Option<String>,
    pub description: String,
    pub tags: BTreeSet<String>,
}

impl RouteQuery {
    pub fn describe(description: &str) -> Self {
        RouteQuery { description: description.to_string(), ..Default::default() }
    }

    pub fn named(name: &str) -> Self {
        RouteQuery { name: Some(name.to_string()), ..Default::default() }
    }

    pub fn from_action(action: &ActionRequest) -> Self {
        RouteQuery {
            name: Some(action.tool_name.clone()),
            description: action.description.clone(),
            tags: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteReason {
    ExactName,
    TagOverlap(f64),
    TokenOverlap(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteCandidate<'a> {
    pub tool: &'a ToolSpec,
    pub score: f64,
    pub reasons: Vec<RouteReason>,
}

/// Pluggable relevance function; must return a score in `[0, 1]`.
pub trait Scorer {
    fn score(&self, query: &RouteQuery, spec: &ToolSpec) -> (f64, Vec<RouteReason>);
}

#[derive(Debug, Clone, Default)]
pub struct LexicalScorer {
    pub weights: RoutingConfig,
}

impl Scorer for LexicalScorer {
    fn score(&self, query: &RouteQuery, spec: &ToolSpec) -> (f64, Vec<RouteReason>) {
        let mut reasons = Vec::new();
        let exact = query.name.as_deref() == Some(spec.name.as_str());
        if exact {
            reasons.push(RouteReason::ExactName);
        }
        let q_tags: BTreeSet<String> = query.tags.iter().map(|t| t.to_lowercase()).collect();
        let s_tags: BTreeSet<String> = spec.tags.iter().map(|t| t.to_lowercase()).collect();
        let tag = jaccard(&q_tags, &s_tags);
        if tag > 0.0 {
            reasons.push(RouteReason::TagOverlap(tag));
        }
        let mut target = content_tokens(&spec.description);
        for t in &spec.tags {
            target.extend(content_tokens(t));
        }
        let desc = coverage(&content_tokens(&query.description), &target);
        if desc > 0.0 {
            reasons.push(RouteReason::TokenOverlap(desc));
        }
        let w = &self.weights;
        let s = w.w_name * f64::from(u8::from(exact)) + w.w_tags * tag + w.w_desc * desc;
        (s, reasons)
    }
}

/// Up to `k` planner-visible tools with positive score, best first, ties
/// by name.
pub fn search_tools<'a>(
    registry: &'a ToolRegistry,
    query: &RouteQuery,
    k: usize,
    scorer: &dyn Scorer,
) -> Vec<RouteCandidate<'a>> {
    let mut out: Vec<RouteCandidate<'a>> = registry
        .iter()
        .filter(|s| s.is_planner_visible())
        .filter_map(|tool| {
            let (score, reasons) = scorer.score(query, tool);
            (score > 0.0).then_some(RouteCandidate { tool, score, reasons })
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tool.name.cmp(&b.tool.name)));
    out.truncate(k);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Primitive,
    Abstract,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionClass<'a> {
    pub kind: ActionKind,
    pub matched: Option<&'a ToolSpec>,
    pub validation: Option<ValidationReport>,
    /// Why an exact name did not match, when it did not.
    pub absence: Option<Absence>,
}

/// Primitive iff the exact name is registered, planner-visible, available,
/// and its params validate (possibly after schema repair). Pointer-valued
/// params are accepted here and checked after resolution.
pub fn classify_action<'a>(
    registry: &'a ToolRegistry,
    action: &ActionRequest,
    ctx: &AvailabilityContext,
) -> ActionClass<'a> {
    let spec = match registry.lookup(&action.tool_name, ctx) {
        Lookup::Found(s) if s.is_planner_visible() => s,
        Lookup::Found(_) => {
            return ActionClass { kind: ActionKind::Abstract, matched: None, validation: None, absence: None }
        }
        Lookup::Absent(why) => {
            return ActionClass { kind: ActionKind::Abstract, matched: None, validation: None, absence: Some(why) }
        }
    };
    let mut report = validate_args(&spec.input_schema, &action.params);
    if report.status != ValidationStatus::Valid {
        report = repair_args(&spec.input_schema, &action.params);
    }
    let kind = if report.is_usable() { ActionKind::Primitive } else { ActionKind::Abstract };
    ActionClass { kind, matched: (kind == ActionKind::Primitive).then_some(spec), validation: Some(report), absence: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{record, Record, Value};

    fn names(c: &[RouteCandidate<'_>]) -> Vec<String> {
        c.iter().map(|c| c.tool.name.clone()).collect()
    }

    #[test]
    fn exact_name_dominates() {
        let reg = ToolRegistry::default_library();
        let c = search_tools(&reg, &RouteQuery::named("Merge_Temporal_Segments"), 5, &LexicalScorer::default());
        assert_eq!(c[0].tool.name, "Merge_Temporal_Segments");
        assert_eq!(c[0].reasons, [RouteReason::ExactName]);
    }

    #[test]
    fn description_routing_finds_merge() {
        let reg = ToolRegistry::default_library();
        let c = search_tools(&reg, &RouteQuery::describe("merge adjacent time windows"), 5, &LexicalScorer::default());
        assert_eq!(c[0].tool.name, "Merge_Temporal_Segments");
    }

    #[test]
    fn nothing_matches_empty_query() {
        let reg = ToolRegistry::default_library();
        assert!(search_tools(&reg, &RouteQuery::named("Nonexistent_Tool_X"), 5, &LexicalScorer::default()).is_empty());
    }

    #[test]
    fn runtime_internal_never_returned_and_prefix_property() {
        let reg = ToolRegistry::default_library();
        let q = RouteQuery::describe("search tools time windows text summary recovery compress");
        let all = search_tools(&reg, &q, 200, &LexicalScorer::default());
        assert!(all.iter().all(|c| c.tool.is_planner_visible()));
        for k in 1..all.len() {
            assert_eq!(names(&search_tools(&reg, &q, k, &LexicalScorer::default())), names(&all)[..k]);
        }
    }

    #[test]
    fn classification() {
        let reg = ToolRegistry::default_library();
        let ctx = AvailabilityContext::permissive();
        let frame = ActionRequest::new("Inspect_Frame", record([("t", Value::Int(5))]));
        let c = classify_action(&reg, &frame, &ctx);
        assert_eq!(c.kind, ActionKind::Primitive);
        assert_eq!(c.matched.unwrap().name, "Inspect_Frame");

        let invented = ActionRequest::new("Analyze_Cleaning_Events", Record::new());
        assert_eq!(classify_action(&reg, &invented, &ctx).kind, ActionKind::Abstract);

        let qa = ActionRequest::new("Video_Clip_QA", record([("t_start", Value::Int(1)), ("t_end", Value::Int(9))]));
        let c = classify_action(&reg, &qa, &ctx);
        assert_eq!(c.kind, ActionKind::Abstract);
        assert_eq!(c.validation.unwrap().missing, ["query"]);

        let internal = ActionRequest::new("Tool_Search", record([("query", Value::from("x"))]));
        assert_eq!(classify_action(&reg, &internal, &ctx).kind, ActionKind::Abstract);
    }
}
