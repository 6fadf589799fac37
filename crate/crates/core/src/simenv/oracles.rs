//! Ground-truth answers for the base tools. Every function is pure in
//! `(world, args)`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Segment, SyntheticWorld, WorldEvent};
use crate::text::{content_tokens, coverage, jaccard};
use crate::value::{record, Value};

/// Minimum query/label Jaccard for a clip-level "yes".
pub const MATCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("invalid range [{0}, {1})")]
    InvalidRange(f64, f64),
    #[error("timestamp {0} outside the video")]
    OutOfRange(f64),
}

fn check_window(world: &SyntheticWorld, t_start: f64, t_end: f64) -> Result<(), OracleError> {
    if !(0.0 <= t_start && t_start < t_end && t_end <= world.duration) {
        return Err(OracleError::InvalidRange(t_start, t_end));
    }
    Ok(())
}

fn check_time(world: &SyntheticWorld, t: f64) -> Result<(), OracleError> {
    if !(0.0 <= t && t <= world.duration) {
        return Err(OracleError::OutOfRange(t));
    }
    Ok(())
}

/// Query/label relevance used by clip QA and retrieval.
pub fn label_match(query: &str, label: &str) -> f64 {
    jaccard(&content_tokens(query), &content_tokens(label))
}

fn event_value(e: &WorldEvent) -> Value {
    Value::Record(record([
        ("label", Value::from(e.label.as_str())),
        ("t_start", Value::Real(e.t_start)),
        ("t_end", Value::Real(e.t_end)),
    ]))
}

/// `{verdict, matched_events, confidence, t_start, t_end, query}`.
pub fn clip_qa(world: &SyntheticWorld, t_start: f64, t_end: f64, query: &str) -> Result<Value, OracleError> {
    check_window(world, t_start, t_end)?;
    let mut best = 0.0f64;
    let mut matched = Vec::new();
    for e in world.events_in(t_start, t_end) {
        let s = label_match(query, &e.label);
        best = best.max(s);
        if s >= MATCH_THRESHOLD {
            matched.push(event_value(e));
        }
    }
    let verdict = if matched.is_empty() { "no" } else { "yes" };
    Ok(Value::Record(record([
        ("verdict", Value::from(verdict)),
        ("matched_events", Value::List(matched)),
        ("confidence", Value::Real(best)),
        ("t_start", Value::Real(t_start)),
        ("t_end", Value::Real(t_end)),
        ("query", Value::from(query)),
    ])))
}

/// Event-aligned windows with positive label overlap, best first (ties by
/// start time, then label); distractors with partial overlap included.
pub fn temporal_retrieval(world: &SyntheticWorld, query: &str, k: usize) -> Vec<Value> {
    let mut hits: Vec<(f64, &WorldEvent)> = world
        .events
        .iter()
        .map(|e| (label_match(query, &e.label), e))
        .filter(|(s, _)| *s > 0.0)
        .collect();
    hits.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then(a.1.t_start.total_cmp(&b.1.t_start)).then(a.1.label.cmp(&b.1.label))
    });
    hits.into_iter()
        .take(k)
        .map(|(s, e)| {
            let mut v = event_value(e);
            if let Value::Record(r) = &mut v {
                r.insert("score".into(), Value::Real(s));
            }
            v
        })
        .collect()
}

/// `{labels, frame_ref, t}`.
pub fn inspect_frame(world: &SyntheticWorld, t: f64) -> Result<Value, OracleError> {
    check_time(world, t)?;
    let labels = world.frame_truth(t).into_iter().map(Value::Str).collect();
    Ok(Value::Record(record([
        ("labels", Value::List(labels)),
        ("frame_ref", Value::Str(world.frame_ref(t))),
        ("t", Value::Real(t)),
    ])))
}

fn segment_value(s: &Segment) -> Value {
    Value::Record(record([
        ("segment_id", Value::from(s.id)),
        ("t_start", Value::Real(s.t_start)),
        ("t_end", Value::Real(s.t_end)),
        ("caption", Value::from(s.caption.as_str())),
        ("transcript", Value::from(s.transcript.as_str())),
        ("frame_times", Value::List(s.frame_times.iter().map(|&t| Value::Real(t)).collect())),
    ]))
}

fn ranked<T>(mut hits: Vec<(f64, usize, T)>, k: usize) -> Vec<(f64, T)> {
    hits.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    hits.into_iter().take(k).map(|(s, _, t)| (s, t)).collect()
}

/// Segments whose caption covers part of the query.
pub fn caption_search(segments: &[Segment], query: &str, k: usize) -> Vec<Value> {
    let q = content_tokens(query);
    let hits = segments
        .iter()
        .map(|s| (coverage(&q, &content_tokens(&s.caption)), s.id, s))
        .filter(|h| h.0 > 0.0)
        .collect();
    ranked(hits, k)
        .into_iter()
        .map(|(score, s)| {
            let mut v = segment_value(s);
            if let Value::Record(r) = &mut v {
                r.insert("score".into(), Value::Real(score));
            }
            v
        })
        .collect()
}

pub fn transcript_search(world: &SyntheticWorld, query: &str, k: usize) -> Vec<Value> {
    let q = content_tokens(query);
    let hits = world
        .transcript_units
        .iter()
        .enumerate()
        .map(|(i, u)| (coverage(&q, &content_tokens(&u.text)), i, u))
        .filter(|h| h.0 > 0.0)
        .collect();
    ranked(hits, k)
        .into_iter()
        .map(|(score, u)| {
            Value::Record(record([
                ("t_start", Value::Real(u.t_start)),
                ("t_end", Value::Real(u.t_end)),
                ("text", Value::from(u.text.as_str())),
                ("score", Value::Real(score)),
            ]))
        })
        .collect()
}

pub fn segment_lookup(world: &SyntheticWorld, segments: &[Segment], t: f64) -> Result<Value, OracleError> {
    check_time(world, t)?;
    segments
        .iter()
        .find(|s| s.contains(t))
        .or_else(|| segments.last().filter(|s| t == s.t_end))
        .map(segment_value)
        .ok_or(OracleError::OutOfRange(t))
}

/// Entities co-occurring in time with events whose label mentions `entity`.
pub fn graph_neighbors(world: &SyntheticWorld, entity: &str) -> Vec<Value> {
    let q = content_tokens(entity);
    let mut out: Vec<Value> = Vec::new();
    for anchor in world.events.iter().filter(|e| coverage(&q, &content_tokens(&e.label)) > 0.0) {
        for other in world.events_in(anchor.t_start, anchor.t_end) {
            if other.label == anchor.label {
                continue;
            }
            let v = Value::Record(record([
                ("entity", Value::from(anchor.label.as_str())),
                ("relation", Value::from("co_occurs")),
                ("related", Value::from(other.label.as_str())),
            ]));
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    out
}

pub fn window_labels(world: &SyntheticWorld, t_start: f64, t_end: f64) -> Result<Value, OracleError> {
    check_window(world, t_start, t_end)?;
    Ok(Value::List(world.events_in(t_start, t_end).map(event_value).collect()))
}

fn attribute_hits(
    world: &SyntheticWorld,
    t_start: f64,
    t_end: f64,
    attr: &str,
) -> Result<Vec<(String, f64, f64)>, OracleError> {
    check_window(world, t_start, t_end)?;
    Ok(world
        .events_in(t_start, t_end)
        .filter_map(|e| e.attributes.get(attr).and_then(Value::as_str).map(|s| (s.to_string(), e.t_start, e.t_end)))
        .collect())
}

/// On-screen text attached to events in the window.
pub fn ocr(world: &SyntheticWorld, t_start: f64, t_end: f64) -> Result<Value, OracleError> {
    let hits = attribute_hits(world, t_start, t_end, "ocr")?;
    Ok(Value::List(
        hits.into_iter()
            .map(|(text, s, e)| Value::Record(record([("text", Value::Str(text)), ("t_start", s.into()), ("t_end", e.into())])))
            .collect(),
    ))
}

/// Event boundaries strictly inside the window.
pub fn scene_changes(world: &SyntheticWorld, t_start: f64, t_end: f64) -> Result<Value, OracleError> {
    check_window(world, t_start, t_end)?;
    Ok(Value::List(
        world.event_boundaries().into_iter().filter(|&t| t_start < t && t < t_end).map(Value::Real).collect(),
    ))
}

pub fn asr_window(world: &SyntheticWorld, t_start: f64, t_end: f64) -> Result<Value, OracleError> {
    check_window(world, t_start, t_end)?;
    Ok(Value::List(
        world
            .units_in(t_start, t_end)
            .map(|u| {
                Value::Record(record([
                    ("t_start", Value::Real(u.t_start)),
                    ("t_end", Value::Real(u.t_end)),
                    ("text", Value::from(u.text.as_str())),
                ]))
            })
            .collect(),
    ))
}

/// Audio cues (event attribute `audio`) in the window matching the query;
/// an empty query matches every cue.
pub fn audio_events(world: &SyntheticWorld, t_start: f64, t_end: f64, query: &str) -> Result<Value, OracleError> {
    let open = content_tokens(query).is_empty();
    let hits = attribute_hits(world, t_start, t_end, "audio")?;
    Ok(Value::List(
        hits.into_iter()
            .filter(|(cue, _, _)| open || label_match(query, cue) >= MATCH_THRESHOLD)
            .map(|(cue, s, e)| Value::Record(record([("label", Value::Str(cue)), ("t_start", s.into()), ("t_end", e.into())])))
            .collect(),
    ))
}

pub fn audio_qa(world: &SyntheticWorld, t_start: f64, t_end: f64, query: &str) -> Result<Value, OracleError> {
    let hits = attribute_hits(world, t_start, t_end, "audio")?;
    let mut best = 0.0f64;
    let mut matched = Vec::new();
    for (cue, s, e) in hits {
        let m = label_match(query, &cue);
        best = best.max(m);
        if m >= MATCH_THRESHOLD {
            matched.push(Value::Record(record([("label", Value::Str(cue)), ("t_start", s.into()), ("t_end", e.into())])));
        }
    }
    Ok(Value::Record(record([
        ("verdict", Value::from(if matched.is_empty() { "no" } else { "yes" })),
        ("matched_events", Value::List(matched)),
        ("confidence", Value::Real(best)),
        ("t_start", Value::Real(t_start)),
        ("t_end", Value::Real(t_end)),
        ("query", Value::from(query)),
    ])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cleaning() -> SyntheticWorld {
        SyntheticWorld::new("bathroom", 400.0)
            .with_event("cleaning toilet", 10.0, 20.0)
            .with_event("cleaning toilet", 21.0, 35.0)
            .with_event("cleaning sink", 100.0, 115.0)
            .with_event("toilet paper roll", 200.0, 210.0)
            .with_event("cleaning toilet", 300.0, 310.0)
            .with_event("cleaning toilet", 312.0, 320.0)
    }

    #[test]
    fn clip_qa_verdicts() {
        let w = cleaning();
        let yes = clip_qa(&w, 10.0, 20.0, "cleaning the toilet").unwrap();
        assert_eq!(yes.get("verdict"), Some(&Value::from("yes")));
        let sink = clip_qa(&w, 100.0, 115.0, "cleaning the toilet").unwrap();
        assert_eq!(sink.get("verdict"), Some(&Value::from("no")));
        let empty = clip_qa(&w, 50.0, 60.0, "cleaning the toilet").unwrap();
        assert_eq!(empty.get("matched_events").unwrap().as_list().unwrap().len(), 0);
        assert_eq!(clip_qa(&w, 20.0, 20.0, "x"), Err(OracleError::InvalidRange(20.0, 20.0)));
    }

    #[test]
    fn retrieval_includes_distractors() {
        let w = cleaning();
        let hits = temporal_retrieval(&w, "cleaning the toilet", 6);
        assert_eq!(hits.len(), 6);
        let labels: Vec<&str> = hits.iter().map(|h| h.get("label").unwrap().as_str().unwrap()).collect();
        assert!(labels.contains(&"cleaning sink") && labels.contains(&"toilet paper roll"));
        assert_eq!(temporal_retrieval(&w, "cleaning the toilet", 1).len(), 1);
        assert!(temporal_retrieval(&w, "oven", 5).is_empty());
    }

    #[test]
    fn frames() {
        let w = cleaning();
        let f = inspect_frame(&w, 15.0).unwrap();
        assert_eq!(f.get("labels").unwrap().as_list().unwrap(), [Value::from("cleaning toilet")]);
        assert_eq!(f.get("frame_ref"), Some(&Value::from("bathroom@15")));
        assert_eq!(inspect_frame(&w, 401.0), Err(OracleError::OutOfRange(401.0)));
    }
}
