//! The contract between the kernel and a scenario implementation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{SimEvent, Target};
use super::SimulationResult;
use crate::agent::{
    AgentId, AgentRecord, AgentSnapshot, DecisionBackend, DecisionError, DecisionRequest, DecisionResponse,
    FallbackPolicy, ProfileError, RemoteBackend, RemoteConfig, RuleBackend, StochasticBackend, TriggerView,
    DEFAULT_TEMPLATE,
};
use crate::behavior_graph::{
    build_graph, validate, ActionNode, AgentTypeSpec, BehaviorGraph, NodeId, Relationship, ScenarioSpec,
    ValidationReport,
};
use crate::kernel::bus::{check_payload, SchemaViolation};
use crate::seed::SimRng;
use crate::value::ValueMap;
use crate::vr2t::TranscriptRecord;

/// Per-round metric values keyed by metric id.
pub type MetricsSnapshot = BTreeMap<String, f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no scenario model registered as `{0}`")]
    UnknownModel(String),
    #[error("scenario `{scenario}`: {message}")]
    Config { scenario: String, message: String },
    #[error("unknown termination predicate `{0}`")]
    UnknownPredicate(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message}")]
pub struct HandlerError {
    pub message: String,
}

impl HandlerError {
    pub fn new(message: impl Into<String>) -> Self {
        HandlerError { message: message.into() }
    }
}

impl From<DecisionError> for HandlerError {
    fn from(e: DecisionError) -> Self {
        HandlerError::new(e.to_string())
    }
}

impl From<SchemaViolation> for HandlerError {
    fn from(e: SchemaViolation) -> Self {
        HandlerError::new(e.to_string())
    }
}

impl From<ProfileError> for HandlerError {
    fn from(e: ProfileError) -> Self {
        HandlerError::new(e.to_string())
    }
}

/// Initial agents, their relationships and extra subscriptions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: Vec<AgentRecord>,
    pub relationships: Vec<Relationship>,
    pub subscriptions: Vec<(String, AgentId)>,
}

/// Undirected weighted agent graph; parallel edges are merged by summing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    adjacency: BTreeMap<AgentId, Vec<(AgentId, f64)>>,
}

impl Topology {
    pub fn from_relationships<'a>(
        agents: impl IntoIterator<Item = AgentId>,
        relationships: impl IntoIterator<Item = &'a Relationship>,
    ) -> Self {
        let mut merged: BTreeMap<AgentId, BTreeMap<AgentId, f64>> =
            agents.into_iter().map(|a| (a, BTreeMap::new())).collect();
        for r in relationships {
            let (a, b) = (AgentId(r.a), AgentId(r.b));
            if a == b {
                continue;
            }
            *merged.entry(a).or_default().entry(b).or_insert(0.0) += r.weight;
            *merged.entry(b).or_default().entry(a).or_insert(0.0) += r.weight;
        }
        Topology {
            adjacency: merged.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        }
    }

    pub fn neighbors(&self, agent: AgentId) -> &[(AgentId, f64)] {
        self.adjacency.get(&agent).map_or(&[], Vec::as_slice)
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Each undirected edge once, as `(low, high, weight)`.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId, f64)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |(b, _)| a < *b).map(move |&(b, w)| (a, b, w)))
    }

    pub fn weight(&self, a: AgentId, b: AgentId) -> f64 {
        self.neighbors(a).iter().find(|(n, _)| *n == b).map_or(0.0, |&(_, w)| w)
    }
}

/// Public views of all agents at the last round barrier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub views: BTreeMap<AgentId, AgentSnapshot>,
}

impl Snapshot {
    pub fn get(&self, id: AgentId) -> Option<&AgentSnapshot> {
        self.views.get(&id)
    }
}

/// A scenario implementation: population generation, action handlers,
/// decision rules and metrics.
pub trait ScenarioModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn populate(&self, spec: &ScenarioSpec, seed: u64) -> Result<Population, ModelError>;

    /// Run the handler for `ctx.node` on `agent` in response to `event`.
    fn handle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent) -> Result<(), HandlerError>;

    /// The scenario's deterministic decision rule.
    fn rule(&self) -> RuleBackend;

    fn metrics(&self, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> MetricsSnapshot;

    fn predicate(&self, name: &str, world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> Result<bool, ModelError> {
        let _ = (world, agents);
        Err(ModelError::UnknownPredicate(name.to_string()))
    }

    /// Per-decision observation records for analysis (e.g. regression samples).
    fn observations(&self, result: &SimulationResult) -> Vec<ValueMap> {
        let _ = result;
        Vec::new()
    }

    /// Prompt templates for text backends, keyed by action name.
    fn prompt_templates(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Which decision backend drives agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Rule,
    Stochastic,
    Remote(RemoteConfig),
}

/// Immutable scenario definition shared by every execution context.
pub struct ScenarioRuntime {
    pub spec: ScenarioSpec,
    pub graph: BehaviorGraph,
    pub model: Arc<dyn ScenarioModel>,
    pub backend_kind: BackendKind,
    backend: Arc<dyn DecisionBackend>,
    rule: RuleBackend,
    fallback: FallbackPolicy,
    templates: BTreeMap<String, String>,
    types: BTreeMap<String, AgentTypeSpec>,
}

impl std::fmt::Debug for ScenarioRuntime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioRuntime")
            .field("scenario", &self.spec.name)
            .field("model", &self.model.name())
            .field("backend", &self.backend_kind)
            .finish()
    }
}

impl ScenarioRuntime {
    /// Build and validate the graph; invalid graphs are rejected with their report.
    pub fn new(spec: ScenarioSpec, model: Arc<dyn ScenarioModel>, backend_kind: BackendKind) -> Result<Self, ValidationReport> {
        let graph = build_graph(&spec);
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(report);
        }
        let rule = model.rule();
        let templates = model.prompt_templates();
        let (backend, fallback): (Arc<dyn DecisionBackend>, FallbackPolicy) = match &backend_kind {
            BackendKind::Rule => (Arc::new(rule.clone()), FallbackPolicy::AbortReplicate),
            BackendKind::Stochastic => (Arc::new(StochasticBackend), FallbackPolicy::AbortReplicate),
            BackendKind::Remote(cfg) => {
                let mut cfg = cfg.clone();
                for (k, v) in &templates {
                    cfg.templates.entry(k.clone()).or_insert_with(|| v.clone());
                }
                let fallback = cfg.fallback;
                (Arc::new(RemoteBackend::new(cfg)), fallback)
            }
        };
        let types = spec.agent_types.iter().map(|t| (t.name.clone(), t.clone())).collect();
        Ok(ScenarioRuntime { spec, graph, model, backend_kind, backend, rule, fallback, templates, types })
    }

    pub fn agent_type(&self, name: &str) -> Option<&AgentTypeSpec> {
        self.types.get(name)
    }

    pub fn backend(&self) -> &dyn DecisionBackend {
        self.backend.as_ref()
    }
}

/// Everything a handler can see besides its own agent. Built once per simulation.
#[derive(Debug)]
pub struct World {
    pub runtime: Arc<ScenarioRuntime>,
    pub topology: Topology,
    pub master_seed: u64,
}

impl World {
    pub fn spec(&self) -> &ScenarioSpec {
        &self.runtime.spec
    }

    pub fn graph(&self) -> &BehaviorGraph {
        &self.runtime.graph
    }
}

/// Event emitted by a handler, not yet sequenced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub source: AgentId,
    pub parent_seq: u64,
    pub event_type: String,
    pub target: Target,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub payload: ValueMap,
}

pub struct HandlerContext<'a> {
    pub round: u32,
    pub agent_id: AgentId,
    pub node: &'a ActionNode,
    pub event: &'a SimEvent,
    pub world: &'a World,
    pub environment: &'a ValueMap,
    snapshot: &'a Snapshot,
    rng: &'a mut SimRng,
    emissions: &'a mut Vec<Emission>,
    transcripts: Option<&'a mut Vec<TranscriptRecord>>,
}

impl<'a> HandlerContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        round: u32,
        agent_id: AgentId,
        node: &'a ActionNode,
        event: &'a SimEvent,
        world: &'a World,
        environment: &'a ValueMap,
        snapshot: &'a Snapshot,
        rng: &'a mut SimRng,
        emissions: &'a mut Vec<Emission>,
        transcripts: Option<&'a mut Vec<TranscriptRecord>>,
    ) -> Self {
        HandlerContext { round, agent_id, node, event, world, environment, snapshot, rng, emissions, transcripts }
    }

    pub fn rng(&mut self) -> &mut SimRng {
        self.rng
    }

    pub fn spec(&self) -> &'a ScenarioSpec {
        self.world.spec()
    }

    /// Public view of another agent as of the last barrier.
    pub fn peer(&self, id: AgentId) -> Option<&'a AgentSnapshot> {
        self.snapshot.get(id)
    }

    pub fn neighbors(&self, id: AgentId) -> &'a [(AgentId, f64)] {
        self.world.topology.neighbors(id)
    }

    pub fn allowed_actions(&self) -> Vec<String> {
        let graph = self.world.graph();
        let mut names: Vec<String> = graph
            .outgoing(self.node.id)
            .filter_map(|e| graph.node(e.to_node).map(|n| n.action_name.clone()))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn request(&mut self, agent: &AgentRecord, partner: Option<AgentId>, features: ValueMap) -> DecisionRequest {
        use rand::RngCore;
        DecisionRequest {
            node: self.node.action_name.clone(),
            agent: agent.self_view(),
            partner: partner.and_then(|p| self.snapshot.get(p).cloned()),
            trigger: TriggerView {
                event_type: self.event.event_type.clone(),
                source: self.event.source.agent(),
                payload: self.event.payload.clone(),
            },
            environment: self.environment.clone(),
            features,
            allowed_actions: self.allowed_actions(),
            seed: self.rng.next_u64(),
        }
    }

    /// Ask the configured backend for the next action. Remote failures fall
    /// back to the scenario rule when the backend is configured to.
    pub fn decide(&mut self, agent: &AgentRecord, partner: Option<AgentId>, features: ValueMap) -> Result<DecisionResponse, HandlerError> {
        let request = self.request(agent, partner, features);
        let runtime = &self.world.runtime;
        let response = match runtime.backend.decide(&request) {
            Ok(r) => r,
            Err(e) if e.fallback == FallbackPolicy::FallbackToRule && runtime.fallback == FallbackPolicy::FallbackToRule => {
                runtime.rule.decide(&request)?
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(sink) = self.transcripts.as_deref_mut() {
            let template = runtime.templates.get(&request.node).map_or(DEFAULT_TEMPLATE, String::as_str);
            let prompt = crate::agent::render_prompt(template, &request)
                .or_else(|_| crate::agent::render_prompt(DEFAULT_TEMPLATE, &request))
                .unwrap_or_default();
            let graph = runtime.graph();
            let required_fields = graph
                .outgoing(self.node.id)
                .find(|e| graph.node(e.to_node).is_some_and(|n| n.action_name == response.action_name))
                .map(|e| e.payload_schema.keys().cloned().collect())
                .unwrap_or_default();
            sink.push(TranscriptRecord {
                round: self.round,
                agent: agent.id.0,
                node: request.node.clone(),
                prompt,
                response: response.raw_text.clone().unwrap_or_else(|| response.to_text()),
                allowed_actions: request.allowed_actions.clone(),
                required_fields,
            });
        }
        Ok(response)
    }

    /// Emit an event along the edge from the current node to `to_action`.
    pub fn emit(&mut self, to_action: &str, target: Target, payload: ValueMap) -> Result<(), HandlerError> {
        let graph = self.world.graph();
        let edge = graph
            .outgoing(self.node.id)
            .find(|e| graph.node(e.to_node).is_some_and(|n| n.action_name == to_action))
            .ok_or_else(|| {
                HandlerError::new(format!("`{}` has no outgoing edge to `{to_action}`", self.node.action_name))
            })?;
        check_payload(&edge.event_type, &payload, &edge.payload_schema)?;
        self.emissions.push(Emission {
            source: self.agent_id,
            parent_seq: self.event.seq,
            event_type: edge.event_type.clone(),
            target,
            from_node: edge.from_node,
            to_node: edge.to_node,
            payload,
        });
        Ok(())
    }
}

impl ScenarioRuntime {
    pub(crate) fn graph(&self) -> &BehaviorGraph {
        &self.graph
    }
}
