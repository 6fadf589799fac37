//! Behavior statistics over trajectories, recomputed from the raw steps.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::registry::{ToolKind, ToolRegistry};
use crate::rl::{answer_reward, AnswerEvaluator};
use crate::scheduler::Trajectory;

/// Upper-inclusive bucket edges for call and round counts.
pub const BUCKETS: [(usize, Option<usize>, &str); 5] =
    [(0, Some(0), "0"), (1, Some(4), "1-4"), (5, Some(8), "5-8"), (9, Some(12), "9-12"), (13, None, "13+")];

pub fn bucket_of(n: usize) -> &'static str {
    BUCKETS.iter().find(|(lo, hi, _)| n >= *lo && hi.is_none_or(|h| n <= h)).map_or("13+", |b| b.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub label: String,
    pub tool_calls: usize,
    pub ok_calls: usize,
    pub rounds: usize,
    pub success_rate: Option<f64>,
    /// `None` without a gold answer.
    pub correct: Option<bool>,
    pub base_calls: usize,
    pub meta_calls: usize,
    pub category_calls: BTreeMap<String, usize>,
}

/// A prediction counts as correct when its answer reward is at least 0.5.
pub fn trace_stats(label: &str, traj: &Trajectory, registry: Option<&ToolRegistry>) -> TraceStats {
    let calls: Vec<_> = traj.tool_calls().collect();
    let ok = calls.iter().filter(|o| o.is_success()).count();
    let correct = traj.task.gold_answer.as_deref().map(|gold| {
        answer_reward(traj.answer(), gold, traj.task.options.as_deref(), AnswerEvaluator::ExactMatchMcq) >= 0.5
    });
    let (mut base, mut meta) = (0, 0);
    let mut category_calls = BTreeMap::new();
    if let Some(reg) = registry {
        for o in &calls {
            if let Some(spec) = reg.get(&o.call.tool_name) {
                match spec.kind {
                    ToolKind::Base => base += 1,
                    ToolKind::Meta => meta += 1,
                }
                *category_calls.entry(spec.category.clone()).or_insert(0) += 1;
            }
        }
    }
    TraceStats {
        label: label.into(),
        tool_calls: calls.len(),
        ok_calls: ok,
        rounds: traj.rounds(),
        success_rate: (!calls.is_empty()).then(|| ok as f64 / calls.len() as f64),
        correct,
        base_calls: base,
        meta_calls: meta,
        category_calls,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    pub traces: usize,
    pub graded: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsReport {
    pub traces: Vec<TraceStats>,
    pub total_calls: usize,
    pub total_ok: usize,
    pub success_rate: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_calls: Option<f64>,
    pub mean_rounds: Option<f64>,
    pub by_calls: Vec<BucketRow>,
    pub by_rounds: Vec<BucketRow>,
    pub base_share: Option<f64>,
    pub category_share: BTreeMap<String, f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn bucket_rows(traces: &[TraceStats], key: impl Fn(&TraceStats) -> usize) -> Vec<BucketRow> {
    BUCKETS
        .iter()
        .map(|(_, _, name)| {
            let in_bucket: Vec<&TraceStats> = traces.iter().filter(|t| bucket_of(key(t)) == *name).collect();
            let graded = in_bucket.iter().filter(|t| t.correct.is_some()).count();
            let correct = in_bucket.iter().filter(|t| t.correct == Some(true)).count();
            BucketRow { bucket: (*name).into(), traces: in_bucket.len(), graded, correct, accuracy: ratio(correct, graded) }
        })
        .collect()
}

pub fn aggregate(traces: Vec<TraceStats>) -> StatsReport {
    let n = traces.len();
    let total_calls = traces.iter().map(|t| t.tool_calls).sum();
    let total_ok = traces.iter().map(|t| t.ok_calls).sum();
    let graded = traces.iter().filter(|t| t.correct.is_some()).count();
    let correct = traces.iter().filter(|t| t.correct == Some(true)).count();
    let base: usize = traces.iter().map(|t| t.base_calls).sum();
    let meta: usize = traces.iter().map(|t| t.meta_calls).sum();
    let mut cats: BTreeMap<String, usize> = BTreeMap::new();
    for t in &traces {
        for (c, k) in &t.category_calls {
            *cats.entry(c.clone()).or_insert(0) += k;
        }
    }
    let cat_total: usize = cats.values().sum();
    StatsReport {
        total_calls,
        total_ok,
        success_rate: ratio(total_ok, total_calls),
        accuracy: ratio(correct, graded),
        mean_calls: ratio(total_calls, n),
        mean_rounds: ratio(traces.iter().map(|t| t.rounds).sum(), n),
        by_calls: bucket_rows(&traces, |t| t.tool_calls),
        by_rounds: bucket_rows(&traces, |t| t.rounds),
        base_share: ratio(base, base + meta),
        category_share: cats.into_iter().map(|(c, k)| (c, k as f64 / cat_total as f64)).collect(),
        traces,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.4}"))
}

impl StatsReport {
    /// Per-trace rows followed by the two bucket tables.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trace,tool_calls,ok_calls,rounds,success_rate,correct\n");
        for t in &self.traces {
            let correct = t.correct.map_or("", |c| if c { "1" } else { "0" });
            let _ = writeln!(out, "{},{},{},{},{},{}", csv_field(&t.label), t.tool_calls, t.ok_calls, t.rounds, opt(t.success_rate), correct);
        }
        for (name, rows) in [("tool_calls", &self.by_calls), ("rounds", &self.by_rounds)] {
            let _ = writeln!(out, "\nbucket_by,bucket,traces,graded,correct,accuracy");
            for r in rows {
                let _ = writeln!(out, "{name},{},{},{},{},{}", r.bucket, r.traces, r.graded, r.correct, opt(r.accuracy));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "traces: {}", self.traces.len());
        let _ = writeln!(out, "tool calls: {} ({} ok, success rate {})", self.total_calls, self.total_ok, shown(self.success_rate));
        let _ = writeln!(out, "mean calls: {}  mean rounds: {}", shown(self.mean_calls), shown(self.mean_rounds));
        let _ = writeln!(out, "accuracy: {}", shown(self.accuracy));
        if let Some(b) = self.base_share {
            let _ = writeln!(out, "base share: {b:.4}  meta share: {:.4}", 1.0 - b);
        }
        for (c, s) in &self.category_share {
            let _ = writeln!(out, "  {c}: {s:.4}");
        }
        out
    }
}

fn shown(x: Option<f64>) -> String {
    x.map_or(String::from("n/a"), |v| format!("{v:.4}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.into()
    }
}
