//! Scenario files and flags, and running one episode from them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toolground_core::backend::SimBackend;
use toolground_core::config::RuntimeConfig;
use toolground_core::planner::{PlannerPolicy, ScriptedPlanner};
use toolground_core::resolver::{ResolverPolicy, RuleTable, RuleTablePolicy, ScriptedResolver};
use toolground_core::scheduler::{run_episode_with, EpisodeInputs, Objective, Trajectory};
use toolground_core::simenv::build_grounding_block;

use crate::chat::{ChatEndpoint, ChatPlanner, ChatResolver};
use crate::io::{self, IoError};
use crate::runner::ThreadedRunner;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("config error: {0}")]
    Config(String),
}

fn config_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

/// Where one role's replies come from. Each source field excludes the
/// others.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyFields {
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Extra rule table merged over the built-in one (resolver only).
    pub rules: Option<PathBuf>,
    /// Keep replaying the last scripted reply.
    pub repeat_last: Option<bool>,
}

impl PolicyFields {
    fn overlay(self, over: PolicyFields) -> PolicyFields {
        // A source set in the file replaces every source from the flags.
        let file_has_source = over.script.is_some() || over.endpoint.is_some() || over.rules.is_some();
        let (script, endpoint, rules) = if file_has_source {
            (over.script, over.endpoint, over.rules)
        } else {
            (self.script, self.endpoint, self.rules)
        };
        PolicyFields {
            script,
            endpoint,
            rules,
            model: over.model.or(self.model),
            repeat_last: over.repeat_last.or(self.repeat_last),
        }
    }

    fn rebase(&mut self, dir: &Path) {
        for p in [&mut self.script, &mut self.rules].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetOverrides {
    pub max_root_rounds: Option<u32>,
    pub max_resolver_rounds: Option<u32>,
    pub max_depth: Option<u32>,
    pub max_wall_clock: Option<f64>,
    pub max_tool_cost: Option<u64>,
}

impl BudgetOverrides {
    fn overlay(self, over: BudgetOverrides) -> BudgetOverrides {
        BudgetOverrides {
            max_root_rounds: over.max_root_rounds.or(self.max_root_rounds),
            max_resolver_rounds: over.max_resolver_rounds.or(self.max_resolver_rounds),
            max_depth: over.max_depth.or(self.max_depth),
            max_wall_clock: over.max_wall_clock.or(self.max_wall_clock),
            max_tool_cost: over.max_tool_cost.or(self.max_tool_cost),
        }
    }
}

/// Scenario settings as they arrive from flags or a JSON file; every
/// field may be absent until the two are merged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFields {
    #[serde(rename = "$comment", skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub world: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub question: Option<String>,
    pub options: Option<Vec<String>>,
    pub gold: Option<String>,
    pub planner: PolicyFields,
    pub resolver: PolicyFields,
    pub budget: BudgetOverrides,
    pub max_parallel: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ScenarioFields {
    /// Reads a scenario file; relative paths inside it are taken relative
    /// to the file's directory.
    pub fn from_file(path: &Path) -> Result<ScenarioFields, IoError> {
        let mut f: ScenarioFields = io::read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [&mut f.world, &mut f.manifest, &mut f.output].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        f.planner.rebase(dir);
        f.resolver.rebase(dir);
        Ok(f)
    }

    /// Fields present in `over` win.
    pub fn overlay(self, over: ScenarioFields) -> ScenarioFields {
        ScenarioFields {
            comment: over.comment.or(self.comment),
            world: over.world.or(self.world),
            manifest: over.manifest.or(self.manifest),
            question: over.question.or(self.question),
            options: over.options.or(self.options),
            gold: over.gold.or(self.gold),
            planner: self.planner.overlay(over.planner),
            resolver: self.resolver.overlay(over.resolver),
            budget: self.budget.overlay(over.budget),
            max_parallel: over.max_parallel.or(self.max_parallel),
            seed: over.seed.or(self.seed),
            output: over.output.or(self.output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Script { path: PathBuf, repeat_last: bool },
    Endpoint { url: String, model: String },
    /// Built-in rule table, optionally extended from a file.
    Rules(Option<PathBuf>),
}

impl PolicySource {
    fn from_fields(role: &str, f: &PolicyFields, allow_rules: bool) -> Result<Option<PolicySource>, ScenarioError> {
        let set = [f.script.is_some(), f.endpoint.is_some(), f.rules.is_some()].iter().filter(|b| **b).count();
        if set > 1 {
            return Err(config_err(format!("{role}: script, endpoint and rules are mutually exclusive")));
        }
        if f.rules.is_some() && !allow_rules {
            return Err(config_err(format!("{role}: rule tables only apply to the resolver")));
        }
        Ok(if let Some(p) = &f.script {
            Some(PolicySource::Script { path: p.clone(), repeat_last: f.repeat_last.unwrap_or(false) })
        } else if let Some(u) = &f.endpoint {
            Some(PolicySource::Endpoint { url: u.clone(), model: f.model.clone().unwrap_or_else(|| "default".into()) })
        } else {
            f.rules.as_ref().map(|r| PolicySource::Rules(Some(r.clone())))
        })
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub world: PathBuf,
    pub manifest: Option<PathBuf>,
    pub objective: Objective,
    pub planner: PolicySource,
    pub resolver: PolicySource,
    pub runtime: RuntimeConfig,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl TryFrom<ScenarioFields> for ScenarioConfig {
    type Error = ScenarioError;

    fn try_from(f: ScenarioFields) -> Result<Self, Self::Error> {
        let world = f.world.ok_or_else(|| config_err("no world file given"))?;
        let question = f.question.ok_or_else(|| config_err("no question given"))?;
        let planner = PolicySource::from_fields("planner", &f.planner, false)?
            .ok_or_else(|| config_err("planner: give a script or an endpoint"))?;
        let resolver = PolicySource::from_fields("resolver", &f.resolver, true)?.unwrap_or(PolicySource::Rules(None));
        let mut objective = Objective::new(&question);
        if let Some(o) = f.options.filter(|o| !o.is_empty()) {
            objective = objective.with_options(o);
        }
        if let Some(g) = &f.gold {
            objective = objective.with_gold(g);
        }
        let mut runtime = RuntimeConfig::default();
        let b = &mut runtime.budget;
        let o = f.budget;
        b.max_root_rounds = o.max_root_rounds.unwrap_or(b.max_root_rounds);
        b.max_resolver_rounds = o.max_resolver_rounds.unwrap_or(b.max_resolver_rounds);
        b.max_depth = o.max_depth.unwrap_or(b.max_depth);
        b.max_wall_clock = o.max_wall_clock.unwrap_or(b.max_wall_clock);
        b.max_tool_cost = o.max_tool_cost.or(b.max_tool_cost);
        if b.max_wall_clock.is_nan() || b.max_wall_clock <= 0.0 {
            return Err(config_err("max_wall_clock must be positive"));
        }
        if let Some(p) = f.max_parallel {
            if p == 0 {
                return Err(config_err("max_parallel must be at least 1"));
            }
            runtime.max_parallel = p;
        }
        Ok(ScenarioConfig {
            world,
            manifest: f.manifest,
            objective,
            planner,
            resolver,
            runtime,
            seed: f.seed.unwrap_or(0),
            output: f.output,
        })
    }
}

fn api_key() -> Option<String> {
    std::env::var("TOOLGROUND_API_KEY").ok().filter(|k| !k.is_empty())
}

fn planner_policy(src: &PolicySource) -> Result<Box<dyn PlannerPolicy>, ScenarioError> {
    Ok(match src {
        PolicySource::Script { path, repeat_last } => {
            let text = io::read_text(path)?;
            let p = ScriptedPlanner::from_json(&text).map_err(|e| IoError::Parse { path: path.clone(), msg: e.to_string() })?;
            Box::new(if *repeat_last { p.repeat_last() } else { p })
        }
        PolicySource::Endpoint { url, model } => Box::new(ChatPlanner(ChatEndpoint::new(url, model).with_api_key(api_key()))),
        PolicySource::Rules(_) => return Err(config_err("planner: rule tables only apply to the resolver")),
    })
}

fn resolver_policy(src: &PolicySource) -> Result<Box<dyn ResolverPolicy>, ScenarioError> {
    Ok(match src {
        PolicySource::Script { path, repeat_last } => {
            let text = io::read_text(path)?;
            let r = ScriptedResolver::from_json(&text).map_err(|e| IoError::Parse { path: path.clone(), msg: e.to_string() })?;
            Box::new(if *repeat_last { r.repeat_last() } else { r })
        }
        PolicySource::Endpoint { url, model } => Box::new(ChatResolver(ChatEndpoint::new(url, model).with_api_key(api_key()))),
        PolicySource::Rules(None) => Box::new(RuleTablePolicy::default()),
        PolicySource::Rules(Some(path)) => {
            let text = io::read_text(path)?;
            let extra = RuleTable::from_json(&text).map_err(|e| IoError::Parse { path: path.clone(), msg: e.to_string() })?;
            Box::new(RuleTablePolicy::new(RuleTable::default_table().merged(extra)))
        }
    })
}

/// Runs the scenario and writes the trace if an output path is set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trajectory, ScenarioError> {
    let registry = io::load_registry(cfg.manifest.as_deref())?;
    let world = io::load_world(&cfg.world)?;
    let mut planner = planner_policy(&cfg.planner)?;
    let mut resolver = resolver_policy(&cfg.resolver)?;
    let backend = SimBackend::new(&world, &registry, &cfg.runtime);
    let grounding = build_grounding_block(backend.segments(), &cfg.objective.question, &cfg.runtime.preprocess);
    let runner = ThreadedRunner::new(cfg.runtime.max_parallel);
    let inputs = EpisodeInputs {
        objective: &cfg.objective,
        registry: &registry,
        backend: &backend,
        runner: &runner,
        config: &cfg.runtime,
        seed: cfg.seed,
        grounding: Some(grounding),
    };
    let traj = run_episode_with(inputs, planner.as_mut(), resolver.as_mut());
    if let Some(out) = &cfg.output {
        io::write_trace(out, &traj)?;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(planner: PolicyFields) -> ScenarioFields {
        ScenarioFields {
            world: Some("w.json".into()),
            question: Some("q".into()),
            planner,
            ..Default::default()
        }
    }

    #[test]
    fn sources_are_exclusive() {
        let both = PolicyFields { script: Some("s".into()), endpoint: Some("http://x".into()), ..Default::default() };
        let err = ScenarioConfig::try_from(fields(both)).unwrap_err();
        assert!(err.to_string().contains("mutually exclusive"));
    }

    #[test]
    fn planner_needs_a_source() {
        assert!(ScenarioConfig::try_from(fields(PolicyFields::default())).is_err());
    }

    #[test]
    fn file_overrides_flags() {
        let flags = ScenarioFields {
            seed: Some(1),
            budget: BudgetOverrides { max_root_rounds: Some(3), max_depth: Some(2), ..Default::default() },
            ..fields(PolicyFields { script: Some("a".into()), ..Default::default() })
        };
        let file = ScenarioFields {
            seed: Some(9),
            budget: BudgetOverrides { max_root_rounds: Some(7), ..Default::default() },
            planner: PolicyFields { endpoint: Some("http://h".into()), ..Default::default() },
            ..Default::default()
        };
        let cfg = ScenarioConfig::try_from(flags.overlay(file)).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.runtime.budget.max_root_rounds, 7);
        assert_eq!(cfg.runtime.budget.max_depth, 2);
        assert!(matches!(cfg.planner, PolicySource::Endpoint { .. }));
        assert_eq!(cfg.resolver, PolicySource::Rules(None));
    }
}
