use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::segment::{sample_frames, Segment};
use crate::config::PreprocessConfig;
use crate::text::{content_tokens, coverage};
use crate::value::canonical_number;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSegment {
    pub segment: Segment,
    pub score: f64,
}

/// First-round evidence package: the best few segments for the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingBlock {
    pub segments: Vec<ScoredSegment>,
    /// `(segment id, timestamp)`.
    pub packed_frames: Vec<(usize, f64)>,
    /// Sorted content tokens of the question.
    pub built_from: String,
}

impl GroundingBlock {
    pub fn render(&self) -> String {
        let mut out = String::from("Grounding:\n");
        for s in &self.segments {
            let seg = &s.segment;
            let _ = writeln!(
                out,
                "- segment {} [{}-{}] score {}: caption \"{}\"; transcript \"{}\"",
                seg.id,
                canonical_number(seg.t_start),
                canonical_number(seg.t_end),
                canonical_number(libm::round(s.score * 1000.0) / 1000.0),
                seg.caption,
                seg.transcript
            );
        }
        let frames: Vec<String> =
            self.packed_frames.iter().map(|(id, t)| format!("{id}@{}", canonical_number(*t))).collect();
        let _ = writeln!(out, "frames: {}", frames.join(", "));
        out
    }
}

/// Scores every segment by `alpha * caption overlap + (1 - alpha) *
/// transcript overlap` with the question and keeps the top `k` (ties by id).
pub fn build_grounding_block(segments: &[Segment], question: &str, cfg: &PreprocessConfig) -> GroundingBlock {
    let q = content_tokens(question);
    let mut scored: Vec<ScoredSegment> = segments
        .iter()
        .map(|seg| {
            let cap = coverage(&q, &content_tokens(&seg.caption));
            let tr = coverage(&q, &content_tokens(&seg.transcript));
            ScoredSegment { segment: seg.clone(), score: cfg.alpha * cap + (1.0 - cfg.alpha) * tr }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.segment.id.cmp(&b.segment.id)));
    scored.truncate(cfg.grounding_top_k.min(segments.len()));
    let packed_frames = scored
        .iter()
        .flat_map(|s| {
            let seg = &s.segment;
            sample_frames(seg.t_start, seg.t_end, cfg.grounding_frame_interval, cfg.frame_cap)
                .into_iter()
                .map(move |t| (seg.id, t))
        })
        .collect();
    let built_from = q.into_iter().collect::<Vec<_>>().join(" ");
    GroundingBlock { segments: scored, packed_frames, built_from }
}
