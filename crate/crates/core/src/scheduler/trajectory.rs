use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::budget::{BudgetState, BudgetViolation};
use crate::executor::{FailureKind, Observation, ObservationKind};
use crate::protocol::{ActionRequest, ParseFailure, PlannerMessage};
use crate::resolver::ResolutionTrace;
use crate::router::ActionKind;
use crate::simenv::GroundingBlock;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenRole {
    Planner,
    Resolver,
    Observation,
    Environment,
}

/// Byte range `[start, end)` of the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub role: TokenRole,
    pub start: usize,
    pub end: usize,
}

/// Concatenated text of every prompt, response and observation, with the
/// role of each piece. Pieces are separated by a newline that belongs to
/// no span.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub spans: Vec<TokenSpan>,
}

impl Transcript {
    pub fn push(&mut self, role: TokenRole, piece: &str) {
        if piece.is_empty() {
            return;
        }
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let start = self.text.len();
        self.text.push_str(piece);
        self.spans.push(TokenSpan { role, start, end: self.text.len() });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Planner output that could not be parsed (after any reprompt).
    ParseFailure,
    IncompleteFinish,
    /// Finish emitted by the resolver; demoted to a note.
    ResolverFinish,
    ResolverParseFailure,
    /// The planner asked for a runtime-internal tool.
    RuntimeInternalRequested,
    DependencyCycle,
    Budget,
}

impl ViolationKind {
    /// Whether this counts against protocol validity (as opposed to cost).
    pub fn is_protocol(self) -> bool {
        !matches!(self, ViolationKind::Budget)
    }

    /// Protocol violations caused by root planner output.
    pub fn is_planner_fault(self) -> bool {
        matches!(
            self,
            ViolationKind::ParseFailure
                | ViolationKind::IncompleteFinish
                | ViolationKind::RuntimeInternalRequested
                | ViolationKind::DependencyCycle
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub round: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub kind: ViolationKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetViolation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Finished,
    MaxRounds,
    BudgetExhausted,
    ProtocolFailure,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Finished => "finished",
            Outcome::MaxRounds => "max_rounds",
            Outcome::BudgetExhausted => "budget_exhausted",
            Outcome::ProtocolFailure => "protocol_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub world_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub answer: String,
    pub basis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSource {
    Planner,
    /// A decomposition child carried over from an earlier round.
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub index: usize,
    pub action: ActionRequest,
    pub source: ActionSource,
    pub class: ActionKind,
    pub pointers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<ResolutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: u32,
    pub state_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner_message: Option<PlannerMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parse_failures: Vec<ParseFailure>,
    /// Batches of indices into `actions`.
    pub round_plan: Vec<Vec<usize>>,
    pub actions: Vec<ActionRecord>,
    pub observations: Vec<Observation>,
    pub budget_after: BudgetState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub task: TaskInfo,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    #[serde(rename = "final", default)]
    pub final_answer: Option<FinalAnswer>,
    pub outcome: Outcome,
    pub budget: BudgetState,
    pub violations: Vec<ViolationRecord>,
    pub transcript: String,
    pub token_spans: Vec<TokenSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingBlock>,
}

impl Trajectory {
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps.iter().flat_map(|s| s.observations.iter())
    }

    /// Observations of executed (or attempted) tool calls.
    pub fn tool_calls(&self) -> impl Iterator<Item = &Observation> {
        self.observations().filter(|o| o.kind == ObservationKind::Tool)
    }

    pub fn failures(&self) -> impl Iterator<Item = FailureKind> + '_ {
        self.observations().filter_map(|o| o.signal.failure)
    }

    pub fn rounds(&self) -> usize {
        self.steps.len()
    }

    pub fn answer(&self) -> Option<&str> {
        self.final_answer.as_ref().map(|f| f.answer.as_str())
    }

    pub fn resolutions(&self) -> impl Iterator<Item = &ResolutionTrace> {
        self.steps.iter().flat_map(|s| s.actions.iter()).filter_map(|a| a.resolution.as_ref())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn from_json(text: &str) -> Result<Trajectory, serde_json::Error> {
        serde_json::from_str(text)
    }
}
