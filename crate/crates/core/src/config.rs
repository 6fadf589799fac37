//! Runtime knobs. Every field has a default; JSON config files may set
//! any subset.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub max_root_rounds: u32,
    /// Policy rounds per resolver invocation.
    pub max_resolver_rounds: u32,
    pub max_depth: u32,
    /// Simulated seconds.
    pub max_wall_clock: f64,
    /// Sum of `budget_cost` over executed calls. `None` = unlimited.
    pub max_tool_cost: Option<u64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            max_root_rounds: 15,
            max_resolver_rounds: 3,
            max_depth: 5,
            max_wall_clock: 480.0,
            max_tool_cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub w_name: f64,
    pub w_tags: f64,
    pub w_desc: f64,
    pub k: usize,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig { w_name: 0.5, w_tags: 0.3, w_desc: 0.2, k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_segment: f64,
    pub min_segment: f64,
    pub max_segment: f64,
    pub hard_cap: f64,
    /// Fraction of the duration the transcript must cover for ASR cuts.
    pub asr_min_coverage: f64,
    pub frame_interval: f64,
    pub frame_cap: usize,
    pub grounding_top_k: usize,
    pub grounding_frame_interval: f64,
    /// Weight of caption overlap against transcript overlap.
    pub alpha: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            target_segment: 30.0,
            min_segment: 15.0,
            max_segment: 45.0,
            hard_cap: 60.0,
            asr_min_coverage: 0.4,
            frame_interval: 6.0,
            frame_cap: 8,
            grounding_top_k: 3,
            grounding_frame_interval: 5.0,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub budget: BudgetConfig,
    pub routing: RoutingConfig,
    pub preprocess: PreprocessConfig,
    pub max_parallel: usize,
    pub merge_tolerance: f64,
    /// Reprompts allowed after an unparseable planner message.
    pub reprompts: u32,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            budget: BudgetConfig::default(),
            routing: RoutingConfig::default(),
            preprocess: PreprocessConfig::default(),
            max_parallel: 4,
            merge_tolerance: 2.0,
            reprompts: 1,
        }
    }
}
