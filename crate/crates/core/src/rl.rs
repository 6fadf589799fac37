//! Reward and advantage numerics over recorded trajectories: the
//! trajectory reward, group-relative advantages, the clipped per-token
//! objective term, planner-token masking and data-source reweighting.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::executor::{cache_key, ObservationKind};
use crate::scheduler::{Outcome, TokenRole, TokenSpan, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("no gold answer for the trajectory")]
    MissingGold,
    #[error("a group needs at least two rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("trajectory has no token spans")]
    MissingSpans,
    #[error("weight and reward keys differ")]
    KeyMismatch,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerEvaluator {
    /// Letter match for multiple choice; normalized exact match otherwise.
    ExactMatchMcq,
    /// Token F1 after normalization.
    TokenF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub lambda_valid: f64,
    pub lambda_cost: f64,
    pub epsilon: f64,
    pub eps_low: f64,
    pub eps_high: f64,
    pub answer_evaluator: AnswerEvaluator,
    /// Identical calls at or above this count are repeated probing.
    pub probe_threshold: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda_valid: 0.1,
            lambda_cost: 0.1,
            epsilon: 1e-8,
            eps_low: 0.2,
            eps_high: 0.2,
            answer_evaluator: AnswerEvaluator::ExactMatchMcq,
            probe_threshold: 3,
        }
    }
}

impl RewardConfig {
    pub fn check(&self) -> Result<(), RlError> {
        let small = |x: f64| (0.0..=0.5).contains(&x);
        if !small(self.lambda_valid) || !small(self.lambda_cost) {
            return Err(RlError::InvalidConfig("auxiliary weights must lie in [0, 0.5]".into()));
        }
        if !(self.epsilon >= 0.0 && self.eps_low > 0.0 && self.eps_high > 0.0) {
            return Err(RlError::InvalidConfig("epsilon must be >= 0 and clip bounds > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub r_ans: f64,
    pub c_valid: u8,
    pub c_cost: u8,
    pub total: f64,
}

impl TrajectoryScore {
    pub fn new(r_ans: f64, c_valid: bool, c_cost: bool, cfg: &RewardConfig) -> Self {
        let (v, c) = (u8::from(c_valid), u8::from(c_cost));
        TrajectoryScore { r_ans, c_valid: v, c_cost: c, total: r_ans + cfg.lambda_valid * f64::from(v) - cfg.lambda_cost * f64::from(c) }
    }
}

/// Lowercase alphanumeric words, articles dropped.
fn norm_words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '.')
        .map(|w| w.trim_matches('.').to_lowercase())
        .filter(|w| !w.is_empty() && !matches!(w.as_str(), "a" | "an" | "the"))
        .map(|w| match w.parse::<f64>() {
            Ok(x) => crate::value::canonical_number(x),
            Err(_) => w,
        })
        .collect()
}

pub fn normalize_answer(text: &str) -> String {
    norm_words(text).join(" ")
}

/// Option letter named by `text`: a bare letter, `(B)`, `B.`, `B)`,
/// `answer: B`, `answer is B`, or the exact text of an option.
pub fn extract_choice(text: &str, options: &[String]) -> Option<usize> {
    let n = options.len();
    let letter = |c: char| {
        let c = c.to_ascii_uppercase();
        c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize).filter(|&i| i < n)
    };
    let t = text.trim();
    let norm = normalize_answer(t);
    if let Some(i) = options.iter().position(|o| normalize_answer(o) == norm) {
        return Some(i);
    }
    let mut chars = t.chars();
    match (chars.next(), chars.next(), chars.next()) {
        (Some(c), None, _) => return letter(c),
        (Some('('), Some(c), Some(')')) => return letter(c),
        (Some(c), Some('.' | ')' | ':'), _) => return letter(c),
        _ => {}
    }
    let lower = t.to_lowercase();
    for key in ["answer is", "answer:", "option"] {
        if let Some(pos) = lower.rfind(key) {
            let rest = t[pos + key.len()..].trim_start().trim_start_matches('(');
            let mut rc = rest.chars();
            if let Some(c) = rc.next() {
                if rc.next().is_none_or(|d| !d.is_alphanumeric()) {
                    return letter(c);
                }
            }
        }
    }
    None
}

/// Token-level F1 between normalized answers.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let p = norm_words(prediction);
    let g = norm_words(gold);
    if p.is_empty() || g.is_empty() {
        return f64::from(u8::from(p == g));
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for w in &g {
        *counts.entry(w).or_default() += 1;
    }
    let mut common = 0i64;
    for w in &p {
        if let Some(c) = counts.get_mut(w.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Answer reward in `[0, 1]`.
pub fn answer_reward(prediction: Option<&str>, gold: &str, options: Option<&[String]>, evaluator: AnswerEvaluator) -> f64 {
    let Some(pred) = prediction else { return 0.0 };
    let r = match (evaluator, options) {
        (AnswerEvaluator::ExactMatchMcq, Some(opts)) if !opts.is_empty() => {
            let p = extract_choice(pred, opts);
            f64::from(u8::from(p.is_some() && p == extract_choice(gold, opts)))
        }
        (AnswerEvaluator::ExactMatchMcq, _) => f64::from(u8::from(normalize_answer(pred) == normalize_answer(gold))),
        (AnswerEvaluator::TokenF1, _) => token_f1(pred, gold),
    };
    r.clamp(0.0, 1.0)
}

/// Whether the planner kept to the wire format, action syntax and the
/// finish protocol throughout.
pub fn protocol_valid(traj: &Trajectory) -> bool {
    traj.steps.iter().all(|s| s.parse_failures.is_empty())
        && traj.outcome != Outcome::ProtocolFailure
        && !traj.violations.iter().any(|v| v.kind.is_planner_fault())
}

/// Largest number of times one identical call (tool + final args) was issued.
pub fn max_repeated_calls(traj: &Trajectory) -> usize {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for o in traj.tool_calls() {
        *counts.entry(cache_key(&o.call.tool_name, &o.call.final_args, &traj.task.world_id)).or_default() += 1;
    }
    counts.values().copied().max().unwrap_or(0)
}

/// Clearly ineffective: no progress at all, repeated probing, or
/// termination at the round limit.
pub fn cost_penalized(traj: &Trajectory, cfg: &RewardConfig) -> bool {
    let any_ok = traj.observations().any(|o| o.kind == ObservationKind::Tool && o.is_success());
    let empty_progress = !any_ok && traj.final_answer.is_none();
    empty_progress || max_repeated_calls(traj) >= cfg.probe_threshold || traj.outcome == Outcome::MaxRounds
}

/// Scores with the configured evaluator. `gold` overrides the gold answer
/// recorded in the trajectory.
pub fn score_trajectory(traj: &Trajectory, gold: Option<&str>, cfg: &RewardConfig) -> Result<TrajectoryScore, RlError> {
    let gold = gold.or(traj.task.gold_answer.as_deref()).ok_or(RlError::MissingGold)?;
    let r_ans = answer_reward(traj.answer(), gold, traj.task.options.as_deref(), cfg.answer_evaluator);
    Ok(TrajectoryScore::new(r_ans, protocol_valid(traj), cost_penalized(traj, cfg), cfg))
}

/// Scores with a caller-supplied open-ended evaluator (output clamped).
pub fn score_with(
    traj: &Trajectory,
    gold: &str,
    cfg: &RewardConfig,
    evaluator: &dyn Fn(&str, &str) -> f64,
) -> TrajectoryScore {
    let r_ans = traj.answer().map_or(0.0, |a| evaluator(a, gold).clamp(0.0, 1.0));
    TrajectoryScore::new(r_ans, protocol_valid(traj), cost_penalized(traj, cfg), cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub group: String,
    pub rewards: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
    pub skipped: bool,
}

impl GroupBatch {
    pub fn new(group: &str, rewards: Vec<f64>) -> Self {
        GroupBatch { group: group.to_string(), rewards, advantages: None, skipped: false }
    }
}

/// Standardizes rewards within the group with population σ. Groups whose
/// rewards are all identical carry no signal and are skipped.
pub fn group_advantages(mut batch: GroupBatch, epsilon: f64) -> Result<GroupBatch, RlError> {
    let g = batch.rewards.len();
    if g < 2 {
        return Err(RlError::GroupTooSmall(g));
    }
    let first = batch.rewards[0];
    if batch.rewards.iter().all(|&r| r == first) {
        batch.skipped = true;
        batch.advantages = None;
        return Ok(batch);
    }
    let n = g as f64;
    let mean = batch.rewards.iter().sum::<f64>() / n;
    let var = batch.rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    batch.advantages = Some(batch.rewards.iter().map(|r| (r - mean) / (sd + epsilon)).collect());
    batch.skipped = false;
    Ok(batch)
}

/// `min(ρ·Â, clip(ρ, 1 − ε_low, 1 + ε_high)·Â)`.
pub fn clipped_term(rho: f64, advantage: f64, eps_low: f64, eps_high: f64) -> f64 {
    let clipped = rho.clamp(1.0 - eps_low, 1.0 + eps_high);
    (rho * advantage).min(clipped * advantage)
}

/// Spans that receive gradient: planner output only.
pub fn planner_token_mask(traj: &Trajectory) -> Result<Vec<TokenSpan>, RlError> {
    if traj.token_spans.is_empty() {
        return Err(RlError::MissingSpans);
    }
    Ok(traj.token_spans.iter().filter(|s| s.role == TokenRole::Planner).copied().collect())
}

/// Moves sampling mass away from sources the policy already solves.
///
/// Target weight ∝ `w · (1 − r)` with `r` the average reward clamped to
/// `[0, 1]`; the new weight is `smoothing · old + (1 − smoothing) ·
/// target`; then every weight is lifted to at least `floor` and the rest
/// rescaled so the total stays 1. If every source is solved the old
/// weights are kept as the target.
pub fn update_source_weights(
    weights: &BTreeMap<String, f64>,
    avg_rewards: &BTreeMap<String, f64>,
    smoothing: f64,
    floor: f64,
) -> Result<BTreeMap<String, f64>, RlError> {
    if weights.len() != avg_rewards.len() || weights.keys().any(|k| !avg_rewards.contains_key(k)) {
        return Err(RlError::KeyMismatch);
    }
    if weights.is_empty() {
        return Ok(BTreeMap::new());
    }
    let total: f64 = weights.values().sum();
    if weights.values().any(|w| !w.is_finite() || *w < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(RlError::InvalidWeights("weights must be non-negative and sum to 1".into()));
    }
    if !(0.0..=1.0).contains(&smoothing) || floor < 0.0 || floor * weights.len() as f64 > 1.0 + 1e-12 {
        return Err(RlError::InvalidWeights("smoothing must be in [0, 1] and floor·n <= 1".into()));
    }
    let raw: Vec<f64> = weights
        .iter()
        .map(|(k, w)| {
            let r = avg_rewards[k];
            let r = if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 };
            w * (1.0 - r)
        })
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    let target: Vec<f64> =
        if raw_sum > 0.0 { raw.iter().map(|x| x / raw_sum).collect() } else { weights.values().copied().collect() };
    let mixed: Vec<f64> =
        weights.values().zip(&target).map(|(old, t)| smoothing * old + (1.0 - smoothing) * t).collect();
    let fixed = apply_floor(&mixed, floor);
    Ok(weights.keys().cloned().zip(fixed).collect())
}

/// Lifts entries below `floor` to exactly `floor` and rescales the others
/// to fill the remaining mass, repeating until nothing falls below.
fn apply_floor(w: &[f64], floor: f64) -> Vec<f64> {
    let n = w.len();
    let mut pinned = alloc::vec![false; n];
    loop {
        let free_mass = 1.0 - floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_sum: f64 = w.iter().zip(&pinned).filter(|(_, p)| !**p).map(|(x, _)| x).sum();
        let free_n = pinned.iter().filter(|&&p| !p).count();
        let out: Vec<f64> = w
            .iter()
            .zip(&pinned)
            .map(|(x, &p)| {
                if p {
                    floor
                } else if free_sum > 0.0 {
                    x / free_sum * free_mass
                } else {
                    free_mass / free_n as f64
                }
            })
            .collect();
        let mut changed = false;
        for i in 0..n {
            if !pinned[i] && out[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}
