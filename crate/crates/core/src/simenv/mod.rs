//! Deterministic synthetic video world: ground-truth timeline, the
//! preprocessing pipeline (segments, frames, grounding block) and the
//! oracles behind the base tools.

mod grounding;
pub mod oracles;
mod segment;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::registry::AvailabilityContext;
use crate::value::{canonical_number, Record};

pub use grounding::{build_grounding_block, GroundingBlock, ScoredSegment};
pub use segment::{degrade_cap, sample_frames, segment_video, Segment, SegmentMethod, FRAME_CAP_LADDER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldEvent {
    pub label: String,
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Record::is_empty")]
    pub attributes: Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptUnit {
    pub t_start: f64,
    pub t_end: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorld {
    #[serde(rename = "$comment", default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub world_id: String,
    pub duration: f64,
    #[serde(default)]
    pub events: Vec<WorldEvent>,
    #[serde(default)]
    pub transcript_units: Vec<TranscriptUnit>,
    #[serde(default)]
    pub has_audio: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("world parse error: {0}")]
    Parse(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Positive-length overlap of `[a0, a1)` and `[b0, b1)`; a point interval
/// overlaps when it falls inside `[b0, b1)`.
pub fn overlaps(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    if a0 == a1 {
        return b0 <= a0 && a0 < b1;
    }
    if b0 == b1 {
        return a0 <= b0 && b0 < a1;
    }
    a0.max(b0) < a1.min(b1)
}

impl SyntheticWorld {
    pub fn new(world_id: &str, duration: f64) -> Self {
        SyntheticWorld {
            comment: None,
            world_id: world_id.to_string(),
            duration,
            events: Vec::new(),
            transcript_units: Vec::new(),
            has_audio: false,
        }
    }

    pub fn with_event(mut self, label: &str, t_start: f64, t_end: f64) -> Self {
        self.events.push(WorldEvent { label: label.to_string(), t_start, t_end, attributes: Record::new() });
        self
    }

    pub fn with_unit(mut self, t_start: f64, t_end: f64, text: &str) -> Self {
        self.transcript_units.push(TranscriptUnit { t_start, t_end, text: text.to_string() });
        self
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let w: SyntheticWorld = serde_json::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<(), WorldError> {
        if self.world_id.is_empty() {
            return Err(WorldError::Invalid("empty world_id".into()));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(WorldError::Invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        let within = |s: f64, e: f64| s.is_finite() && e.is_finite() && 0.0 <= s && s <= e && e <= self.duration;
        for ev in &self.events {
            if !within(ev.t_start, ev.t_end) {
                return Err(WorldError::Invalid(format!("event `{}` outside [0, duration]", ev.label)));
            }
        }
        for u in &self.transcript_units {
            if !within(u.t_start, u.t_end) {
                return Err(WorldError::Invalid(format!("transcript unit `{}` outside [0, duration]", u.text)));
            }
        }
        Ok(())
    }

    /// Labels visible at `t`, in event order, without duplicates.
    pub fn frame_truth(&self, t: f64) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for ev in &self.events {
            if ev.t_start <= t && t <= ev.t_end && !out.contains(&ev.label) {
                out.push(ev.label.clone());
            }
        }
        out
    }

    pub fn frame_ref(&self, t: f64) -> String {
        format!("{}@{}", self.world_id, canonical_number(t))
    }

    pub fn events_in(&self, t_start: f64, t_end: f64) -> impl Iterator<Item = &WorldEvent> {
        self.events.iter().filter(move |e| overlaps(e.t_start, e.t_end, t_start, t_end))
    }

    pub fn units_in(&self, t_start: f64, t_end: f64) -> impl Iterator<Item = &TranscriptUnit> {
        self.transcript_units.iter().filter(move |u| overlaps(u.t_start, u.t_end, t_start, t_end))
    }

    /// Length of the union of transcript units, as a fraction of duration.
    pub fn transcript_coverage(&self) -> f64 {
        let mut spans: Vec<(f64, f64)> = self.transcript_units.iter().map(|u| (u.t_start, u.t_end)).collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for (s, e) in spans {
            match cur {
                Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
                Some((cs, ce)) => {
                    total += ce - cs;
                    cur = Some((s, e));
                }
                None => cur = Some((s, e)),
            }
        }
        if let Some((cs, ce)) = cur {
            total += ce - cs;
        }
        total / self.duration
    }

    /// Event boundaries strictly inside `(0, duration)`, sorted, distinct.
    pub fn event_boundaries(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .events
            .iter()
            .flat_map(|e| [e.t_start, e.t_end])
            .filter(|&t| 0.0 < t && t < self.duration)
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    pub fn availability(&self) -> AvailabilityContext {
        let mut modalities = BTreeSet::new();
        modalities.insert("video".to_string());
        let mut indexes = BTreeSet::new();
        if self.has_audio {
            modalities.insert("audio".to_string());
        }
        if !self.transcript_units.is_empty() {
            modalities.insert("transcript".to_string());
            indexes.insert("transcript".to_string());
        }
        if !self.events.is_empty() {
            indexes.insert("knowledge_graph".to_string());
        }
        AvailabilityContext { modalities, indexes, services: BTreeSet::new() }
    }
}
