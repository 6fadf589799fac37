use serde::{Deserialize, Serialize};

use crate::config::BudgetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BudgetEvent {
    RootRound,
    /// `used` = policy rounds already spent by this resolver invocation.
    ResolverRound { used: u32 },
    /// Entering a resolver invocation at `depth` (root-delegated = 0).
    Recursion { depth: u32 },
    ToolCall { cost: u32 },
    Tick { seconds: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetLimit {
    RootRounds,
    ResolverRounds,
    Depth,
    WallClock,
    ToolCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{limit:?} budget exceeded: {attempted} > {max}")]
pub struct BudgetViolation {
    pub limit: BudgetLimit,
    pub max: f64,
    pub attempted: f64,
}

/// Counters against the configured maxima. Every counter stays at or
/// below its maximum: a violating event is refused, except the clock,
/// which saturates at the maximum and is then marked exhausted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub limits: BudgetConfig,
    pub root_rounds_used: u32,
    /// Most rounds any single resolver invocation used.
    pub resolver_rounds_peak: u32,
    pub resolver_rounds_total: u32,
    /// Deepest recursion level entered, counting the root-delegated
    /// invocation as level 1.
    pub depth_reached: u32,
    pub wall_clock_used: f64,
    pub tool_cost_used: u64,
    pub clock_exhausted: bool,
}

impl BudgetState {
    pub fn new(limits: &BudgetConfig) -> Self {
        BudgetState {
            limits: limits.clone(),
            root_rounds_used: 0,
            resolver_rounds_peak: 0,
            resolver_rounds_total: 0,
            depth_reached: 0,
            wall_clock_used: 0.0,
            tool_cost_used: 0,
            clock_exhausted: false,
        }
    }

    pub fn remaining_clock(&self) -> f64 {
        (self.limits.max_wall_clock - self.wall_clock_used).max(0.0)
    }

    pub fn remaining_cost(&self) -> Option<u64> {
        self.limits.max_tool_cost.map(|m| m.saturating_sub(self.tool_cost_used))
    }

    pub fn root_rounds_left(&self) -> u32 {
        self.limits.max_root_rounds.saturating_sub(self.root_rounds_used)
    }

    pub fn enforce(&mut self, event: BudgetEvent) -> Result<(), BudgetViolation> {
        let over = |limit, max: f64, attempted: f64| Err(BudgetViolation { limit, max, attempted });
        match event {
            BudgetEvent::RootRound => {
                let next = self.root_rounds_used + 1;
                if next > self.limits.max_root_rounds {
                    return over(BudgetLimit::RootRounds, self.limits.max_root_rounds.into(), next.into());
                }
                self.root_rounds_used = next;
            }
            BudgetEvent::ResolverRound { used } => {
                let next = used + 1;
                if next > self.limits.max_resolver_rounds {
                    return over(BudgetLimit::ResolverRounds, self.limits.max_resolver_rounds.into(), next.into());
                }
                self.resolver_rounds_total += 1;
                self.resolver_rounds_peak = self.resolver_rounds_peak.max(next);
            }
            BudgetEvent::Recursion { depth } => {
                if depth >= self.limits.max_depth {
                    return over(BudgetLimit::Depth, self.limits.max_depth.into(), (depth + 1).into());
                }
                self.depth_reached = self.depth_reached.max(depth + 1);
            }
            BudgetEvent::ToolCall { cost } => {
                let next = self.tool_cost_used + u64::from(cost);
                if let Some(max) = self.limits.max_tool_cost {
                    if next > max {
                        return over(BudgetLimit::ToolCost, max as f64, next as f64);
                    }
                }
                self.tool_cost_used = next;
            }
            BudgetEvent::Tick { seconds } => {
                let max = self.limits.max_wall_clock;
                let next = self.wall_clock_used + seconds.max(0.0);
                if next > max {
                    self.wall_clock_used = max;
                    self.clock_exhausted = true;
                    return over(BudgetLimit::WallClock, max, next);
                }
                self.wall_clock_used = next;
                if next >= max {
                    self.clock_exhausted = true;
                }
            }
        }
        Ok(())
    }
}
