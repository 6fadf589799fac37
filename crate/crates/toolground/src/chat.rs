//! Planner and resolver policies backed by an OpenAI-style
//! `/chat/completions` endpoint.

use std::time::Duration;

use serde_json::json;
use toolground_core::planner::{PlannerPolicy, PlannerPrompt};
use toolground_core::resolver::{PolicyError, ResolverPolicy, ResolverPrompt};

const PLANNER_SYSTEM: &str = "You are the root planner of a video question answering agent. \
Reply with one JSON object with keys Thought, Plan, Evidence, Actions and Finish. \
Actions is a list of {\"tool\", \"description\", \"params\", \"output\"}; params may reference \
earlier results with $pointers. Emit Finish {\"chain_complete\": true, \"completion_basis\", \"answer\"} \
only when the evidence chain is complete, and never together with Actions.";

const RESOLVER_SYSTEM: &str = "You ground one abstract action into executable tools. \
Reply with one JSON object with keys Thought, Plan and Actions. Never emit Finish. \
An empty Actions list declines.";

#[derive(Debug, Clone)]
pub struct ChatEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_tokens: Option<u32>,
}

impl ChatEndpoint {
    pub fn new(url: &str, model: &str) -> Self {
        ChatEndpoint {
            url: url.to_string(),
            model: model.to_string(),
            api_key: None,
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            max_tokens: None,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    /// Sends one system+user exchange and returns the first choice's text.
    pub fn complete(&self, system: &str, user: &str, seed: Option<u64>) -> Result<String, PolicyError> {
        let mut body = json!({
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(s) = seed {
            body["seed"] = json!(s);
        }
        if let Some(m) = self.max_tokens {
            body["max_tokens"] = json!(m);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let mut req = agent.post(&self.url);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| PolicyError(format!("{}: {e}", self.url)))?;
        let v: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| PolicyError(format!("{}: bad response body: {e}", self.url)))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| PolicyError(format!("{}: response has no choices[0].message.content", self.url)))
    }
}

/// Root planner policy over a chat endpoint.
#[derive(Debug, Clone)]
pub struct ChatPlanner(pub ChatEndpoint);

impl PlannerPolicy for ChatPlanner {
    fn respond(&mut self, prompt: &PlannerPrompt<'_>) -> Result<String, PolicyError> {
        self.0.complete(PLANNER_SYSTEM, &prompt.text, Some(prompt.seed))
    }
}

/// Resolver policy over a chat endpoint.
#[derive(Debug, Clone)]
pub struct ChatResolver(pub ChatEndpoint);

impl ResolverPolicy for ChatResolver {
    fn respond(&mut self, prompt: &ResolverPrompt) -> Result<String, PolicyError> {
        self.0.complete(RESOLVER_SYSTEM, &prompt.text, None)
    }
}
