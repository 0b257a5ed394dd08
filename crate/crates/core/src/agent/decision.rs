use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{AgentId, AgentSnapshot};
use crate::seed::rng_from_seed;
use crate::value::ValueMap;

/// Reserved action name: take no outgoing edge.
pub const SKIP_ACTION: &str = "skip";

/// The event that triggered a decision, as seen by the deciding agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerView {
    pub event_type: String,
    pub source: Option<AgentId>,
    pub payload: ValueMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    /// Action (node) at which the decision is taken.
    pub node: String,
    pub agent: AgentSnapshot,
    pub partner: Option<AgentSnapshot>,
    pub trigger: TriggerView,
    pub environment: ValueMap,
    /// Scenario-computed quantities the decision depends on.
    pub features: ValueMap,
    /// Target actions of the outgoing edges of `node`.
    pub allowed_actions: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub action_name: String,
    pub payload: ValueMap,
    pub raw_text: Option<String>,
}

impl DecisionResponse {
    pub fn action(name: &str) -> Self {
        DecisionResponse { action_name: name.to_string(), payload: ValueMap::new(), raw_text: None }
    }

    pub fn skip() -> Self {
        Self::action(SKIP_ACTION)
    }

    pub fn is_skip(&self) -> bool {
        self.action_name == SKIP_ACTION
    }

    pub fn with(mut self, key: &str, value: impl Into<crate::value::Value>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }

    /// Canonical text rendering, the same contract remote backends answer in.
    pub fn to_text(&self) -> String {
        let mut out = format!("ACTION: {}", self.action_name);
        for (k, v) in &self.payload {
            out.push_str(&format!("\n{k}: {v}"));
        }
        out
    }
}

/// What a failed remote decision should do to the replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    #[default]
    AbortReplicate,
    FallbackToRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionFailure {
    Timeout,
    Transport,
    Parse,
    InvalidAction,
}

impl fmt::Display for DecisionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionFailure::Timeout => "timeout",
            DecisionFailure::Transport => "transport",
            DecisionFailure::Parse => "parse",
            DecisionFailure::InvalidAction => "invalid_action",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("decision failed ({failure}): {message}")]
pub struct DecisionError {
    pub failure: DecisionFailure,
    pub message: String,
    pub fallback: FallbackPolicy,
}

impl DecisionError {
    pub fn new(failure: DecisionFailure, message: impl Into<String>, fallback: FallbackPolicy) -> Self {
        DecisionError { failure, message: message.into(), fallback }
    }
}

/// Reject responses that do not label an outgoing edge of the current node.
pub fn check_response(
    request: &DecisionRequest,
    response: &DecisionResponse,
    fallback: FallbackPolicy,
) -> Result<(), DecisionError> {
    if response.is_skip() || request.allowed_actions.contains(&response.action_name) {
        Ok(())
    } else {
        Err(DecisionError::new(
            DecisionFailure::InvalidAction,
            format!(
                "`{}` is not an outgoing action of `{}` (allowed: {})",
                response.action_name,
                request.node,
                request.allowed_actions.join(", ")
            ),
            fallback,
        ))
    }
}

pub trait DecisionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn decide(&self, request: &DecisionRequest) -> Result<DecisionResponse, DecisionError>;
}

pub type RuleFn = dyn Fn(&DecisionRequest) -> DecisionResponse + Send + Sync;

/// Scenario-specific deterministic rules: a pure function of the request
/// (including its seed).
#[derive(Clone)]
pub struct RuleBackend {
    name: String,
    rule: Arc<RuleFn>,
}

impl RuleBackend {
    pub fn new(name: impl Into<String>, rule: impl Fn(&DecisionRequest) -> DecisionResponse + Send + Sync + 'static) -> Self {
        RuleBackend { name: name.into(), rule: Arc::new(rule) }
    }
}

impl fmt::Debug for RuleBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RuleBackend").field("name", &self.name).finish()
    }
}

impl DecisionBackend for RuleBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&self, request: &DecisionRequest) -> Result<DecisionResponse, DecisionError> {
        let response = (self.rule)(request);
        check_response(request, &response, FallbackPolicy::AbortReplicate)?;
        Ok(response)
    }
}

/// Uniformly random choice among the allowed actions, seeded by the request.
/// Payload fields are left to the handler's scenario defaults.
#[derive(Debug, Clone, Default)]
pub struct StochasticBackend;

impl DecisionBackend for StochasticBackend {
    fn name(&self) -> &str {
        "stochastic"
    }

    fn decide(&self, request: &DecisionRequest) -> Result<DecisionResponse, DecisionError> {
        if request.allowed_actions.is_empty() {
            return Ok(DecisionResponse::skip());
        }
        let mut rng = rng_from_seed(request.seed);
        let i = rng.random_range(0..request.allowed_actions.len());
        Ok(DecisionResponse::action(&request.allowed_actions[i]))
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn request(allowed: &[&str], seed: u64) -> DecisionRequest {
        let snap = AgentSnapshot {
            id: AgentId(0),
            agent_type: "A".into(),
            fields: ValueMap::new(),
            redacted: BTreeSet::new(),
        };
        DecisionRequest {
            node: "n".into(),
            agent: snap,
            partner: None,
            trigger: TriggerView { event_type: "round_start".into(), source: None, payload: ValueMap::new() },
            environment: ValueMap::new(),
            features: ValueMap::new(),
            allowed_actions: allowed.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

}
