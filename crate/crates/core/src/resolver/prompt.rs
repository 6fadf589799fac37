use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::protocol::ActionRequest;
use crate::registry::ToolSpec;
use crate::schema::ParamSchema;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// L2: keep the tool, rewrite the parameters.
    Repair,
    /// L3: pick one listed candidate.
    Substitute,
    /// L4: emit two or more child actions.
    Decompose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub name: String,
    pub description: String,
    pub category: String,
    pub score: f64,
    pub input_schema: ParamSchema,
}

impl CandidateInfo {
    pub fn from_spec(spec: &ToolSpec, score: f64) -> Self {
        CandidateInfo {
            name: spec.name.clone(),
            description: spec.description.clone(),
            category: spec.category.clone(),
            score,
            input_schema: spec.input_schema.clone(),
        }
    }
}

/// Everything a resolver policy sees for one round. `text` is the
/// rendered form for text-only policies; the other fields carry the same
/// content in structured form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolverPrompt {
    pub mode: PromptMode,
    pub action: ActionRequest,
    pub goal: String,
    pub parent_context: String,
    pub depth: u32,
    pub banned: Vec<String>,
    pub candidates: Vec<CandidateInfo>,
    pub target: Option<CandidateInfo>,
    /// Results of earlier rounds of this invocation.
    pub feedback: Vec<String>,
    pub text: String,
}

impl ResolverPrompt {
    pub fn new(
        mode: PromptMode,
        action: &ActionRequest,
        goal: &str,
        parent_context: &str,
        depth: u32,
        banned: Vec<String>,
    ) -> Self {
        ResolverPrompt {
            mode,
            action: action.clone(),
            goal: goal.into(),
            parent_context: parent_context.into(),
            depth,
            banned,
            candidates: Vec::new(),
            target: None,
            feedback: Vec::new(),
            text: String::new(),
        }
    }

    pub fn rendered(mut self) -> Self {
        self.text = render(&self);
        self
    }
}

fn schema_line(schema: &ParamSchema) -> String {
    let mut out = String::new();
    for (i, (name, f)) in schema.fields().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let req = if f.required { "" } else { "?" };
        let _ = write!(out, "{name}{req}: {:?}", f.value_kind);
    }
    out
}

fn render(p: &ResolverPrompt) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "You are the tool resolver. Only the root planner may finish; never emit Finish.");
    let instruction = match p.mode {
        PromptMode::Repair => "Keep the target tool fixed. Rewrite aliases to the schema names and remove unsupported fields. Do not emit old aliases.",
        PromptMode::Substitute => "Choose one similar executable tool from the candidates. Reject candidates that are semantically incompatible with the goal.",
        PromptMode::Decompose => "Decompose into two or more child tools. Prefer concrete tools in one parallel batch. Bind results with \"output\" pointers and reference them as \"$name\".",
    };
    let _ = writeln!(t, "Mode: {:?}. {instruction}", p.mode);
    let _ = writeln!(t, "Goal: {}", p.goal);
    if !p.parent_context.is_empty() {
        let _ = writeln!(t, "Parent context: {}", p.parent_context);
    }
    let _ = writeln!(t, "Depth: {}", p.depth);
    let _ = writeln!(
        t,
        "Action: {} {}",
        p.action.tool_name,
        Value::Record(p.action.params.clone()).canonical_string()
    );
    if !p.action.description.is_empty() {
        let _ = writeln!(t, "Action description: {}", p.action.description);
    }
    if !p.banned.is_empty() {
        let _ = writeln!(t, "Invalid tools on this branch (returned no valid result): {}", p.banned.join(", "));
    }
    if let Some(c) = &p.target {
        let _ = writeln!(t, "Target tool: {} ({})", c.name, schema_line(&c.input_schema));
    }
    for c in &p.candidates {
        let _ = writeln!(t, "Candidate: {} [{}] score {:.3}: {} ({})", c.name, c.category, c.score, c.description, schema_line(&c.input_schema));
    }
    for f in &p.feedback {
        let _ = writeln!(t, "Feedback: {f}");
    }
    let _ = writeln!(t, "Reply with one JSON object: {{\"Thought\": ..., \"Plan\": ..., \"Actions\": [{{\"tool\": ..., \"params\": {{...}}, \"output\": \"$name\"?}}]}}");
    t
}
