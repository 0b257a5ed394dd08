//! Agents: profiles, sliding-window memory and pluggable decision backends.

mod decision;
mod memory;
mod prompt;
mod record;
mod remote;

pub use decision::{
    check_response, DecisionBackend, DecisionError, DecisionFailure, DecisionRequest, DecisionResponse,
    FallbackPolicy, RuleBackend, StochasticBackend, TriggerView, SKIP_ACTION,
};
pub use memory::{MemoryEntry, MemoryWindow, OutOfOrder};
pub use prompt::{render_prompt, PromptError};
pub use record::{check_profile, AgentId, AgentRecord, AgentSnapshot, ProfileError};
pub use remote::{parse_action_text, RemoteBackend, RemoteConfig, DEFAULT_TEMPLATE, ENDPOINT_ENV, TOKEN_ENV};
