//! Round scheduler and the single-node executor.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bus::{EventBus, SchemaViolation};
use super::event::{EventMeta, SimEvent, Source, SubscriptionTable, Target, ROUND_START};
use super::model::{Emission, HandlerContext, MetricsSnapshot, ModelError, Population, ScenarioRuntime, Snapshot, Topology, World};
use crate::agent::{check_profile, AgentId, AgentRecord, MemoryEntry, ProfileError};
use crate::behavior_graph::NodeId;
use crate::seed::{agent_round_seed, rng_from_seed};
use crate::value::ValueMap;
use crate::vr2t::TranscriptRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("round {round}: handler `{node}` failed for agent {agent} on event seq {seq}: {message}")]
    Handler { round: u32, agent: AgentId, seq: u64, node: String, message: String },
    #[error(transparent)]
    Schema(#[from] SchemaViolation),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("population: {0}")]
    Population(String),
    #[error("execution: {0}")]
    Execution(String),
}

/// A due event and the agents it is delivered to, in ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub event: SimEvent,
    pub recipients: Vec<AgentId>,
}

/// Everything an executor needs for one round.
#[derive(Debug)]
pub struct RoundInput<'a> {
    pub round: u32,
    pub environment: &'a ValueMap,
    pub snapshot: &'a Snapshot,
    pub deliveries: &'a [Delivery],
    /// Agents whose public view changed at the previous barrier.
    pub changed: &'a [AgentId],
}

/// What one agent did during a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: AgentId,
    pub handled: u32,
    pub terminal_arrivals: u32,
    pub emissions: Vec<Emission>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<TranscriptRecord>,
}

/// Runs the handlers of one round for a set of owned agents.
pub trait Executor {
    fn execute(
        &mut self,
        world: &World,
        input: &RoundInput<'_>,
        agents: &mut BTreeMap<AgentId, AgentRecord>,
    ) -> Result<Vec<AgentOutcome>, KernelError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub parallel: bool,
    pub record_transcripts: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { parallel: true, record_transcripts: false }
    }
}

/// In-process executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalExecutor {
    pub options: ExecOptions,
}

impl LocalExecutor {
    pub fn sequential() -> Self {
        LocalExecutor { options: ExecOptions { parallel: false, record_transcripts: false } }
    }
}

impl Executor for LocalExecutor {
    fn execute(
        &mut self,
        world: &World,
        input: &RoundInput<'_>,
        agents: &mut BTreeMap<AgentId, AgentRecord>,
    ) -> Result<Vec<AgentOutcome>, KernelError> {
        execute_agents(world, input, agents, self.options)
    }
}

/// Group deliveries into per-agent inboxes (seq order) for the agents in `owned`.
fn inboxes<'a>(
    deliveries: &'a [Delivery],
    owned: &BTreeMap<AgentId, AgentRecord>,
) -> BTreeMap<AgentId, Vec<&'a SimEvent>> {
    let mut boxes: BTreeMap<AgentId, Vec<&SimEvent>> = BTreeMap::new();
    for d in deliveries {
        for r in &d.recipients {
            if owned.contains_key(r) {
                boxes.entry(*r).or_default().push(&d.event);
            }
        }
    }
    boxes
}

fn run_agent(
    world: &World,
    input: &RoundInput<'_>,
    agent: &mut AgentRecord,
    events: &[&SimEvent],
    record_transcripts: bool,
) -> Result<AgentOutcome, KernelError> {
    let graph = world.graph();
    let mut rng = rng_from_seed(agent_round_seed(world.master_seed, agent.id.0, input.round));
    let mut emissions = Vec::new();
    let mut transcripts = Vec::new();
    let mut handled = 0;
    let mut terminal_arrivals = 0;
    for event in events {
        let nodes: Vec<NodeId> = match event.to_node {
            Some(n) => vec![n],
            None => graph.start_nodes_for(&agent.agent_type).map(|n| n.id).collect(),
        };
        for node_id in nodes {
            let Some(node) = graph.node(node_id) else { continue };
            if node.agent_type != agent.agent_type {
                continue;
            }
            agent.current_node = Some(node_id);
            let mut ctx = HandlerContext::new(
                input.round,
                agent.id,
                node,
                event,
                world,
                input.environment,
                input.snapshot,
                &mut rng,
                &mut emissions,
                record_transcripts.then_some(&mut transcripts),
            );
            world.runtime.model.handle(&mut ctx, agent, event).map_err(|e| KernelError::Handler {
                round: input.round,
                agent: agent.id,
                seq: event.seq,
                node: node.action_name.clone(),
                message: e.message,
            })?;
            handled += 1;
            if node.is_terminal {
                terminal_arrivals += 1;
            }
        }
        if event.event_type != ROUND_START {
            let digest = serde_json::to_string(&event.payload).unwrap_or_default();
            // rounds are delivered in order, so this cannot be out of order
            let _ = agent.remember(MemoryEntry::new(input.round, event.event_type.clone(), digest));
        }
    }
    Ok(AgentOutcome { agent: agent.id, handled, terminal_arrivals, emissions, transcripts })
}

/// Run every owned agent's inbox for `input.round`. Results are in ascending
/// agent id whatever the parallelism; the first failing agent (by id) wins.
pub fn execute_agents(
    world: &World,
    input: &RoundInput<'_>,
    agents: &mut BTreeMap<AgentId, AgentRecord>,
    options: ExecOptions,
) -> Result<Vec<AgentOutcome>, KernelError> {
    let boxes = inboxes(input.deliveries, agents);
    let mut work: Vec<(AgentRecord, Vec<&SimEvent>)> = boxes
        .into_iter()
        .map(|(id, evs)| (agents.remove(&id).expect("inbox for owned agent"), evs))
        .collect();
    let results: Vec<Result<AgentOutcome, KernelError>> = if options.parallel {
        work.par_iter_mut()
            .map(|(agent, evs)| run_agent(world, input, agent, evs, options.record_transcripts))
            .collect()
    } else {
        work.iter_mut()
            .map(|(agent, evs)| run_agent(world, input, agent, evs, options.record_transcripts))
            .collect()
    };
    for (agent, _) in work {
        agents.insert(agent.id, agent);
    }
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub events_processed: u64,
    pub handler_invocations: u64,
    pub terminal_arrivals: u64,
    pub metrics: MetricsSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub scenario: String,
    pub master_seed: u64,
    /// Metrics of the initial population (round 0).
    pub initial: MetricsSnapshot,
    pub rounds: Vec<RoundRecord>,
    pub stopped_by: StopReason,
    pub final_agents: Vec<AgentRecord>,
    pub events: Vec<SimEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcripts: Vec<TranscriptRecord>,
}

impl SimulationResult {
    /// `(round, metrics)` including round 0.
    pub fn series(&self) -> impl Iterator<Item = (u32, &MetricsSnapshot)> {
        std::iter::once((0, &self.initial)).chain(self.rounds.iter().map(|r| (r.round, &r.metrics)))
    }

    pub fn metric(&self, id: &str) -> Vec<f64> {
        self.series().filter_map(|(_, m)| m.get(id).copied()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

/// A simulation in progress: owns the agent registry, the bus and the log.
pub struct Simulation {
    world: Arc<World>,
    agents: BTreeMap<AgentId, AgentRecord>,
    snapshot: Snapshot,
    subscriptions: SubscriptionTable,
    environment: ValueMap,
    bus: EventBus,
    round: u32,
    max_rounds: u32,
    log: Vec<SimEvent>,
    rounds: Vec<RoundRecord>,
    initial: MetricsSnapshot,
    changed: Vec<AgentId>,
    transcripts: Vec<TranscriptRecord>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("scenario", &self.world.spec().name)
            .field("round", &self.round)
            .field("agents", &self.agents.len())
            .finish()
    }
}

impl Simulation {
    pub fn new(runtime: Arc<ScenarioRuntime>, population: Population, master_seed: u64) -> Result<Self, KernelError> {
        let mut agents = BTreeMap::new();
        for a in population.agents {
            let spec = runtime
                .agent_type(&a.agent_type)
                .ok_or_else(|| KernelError::Population(format!("agent {} has unknown type `{}`", a.id, a.agent_type)))?;
            check_profile(a.id, spec, &a.profile)?;
            if agents.insert(a.id, a).is_some() {
                return Err(KernelError::Population("duplicate agent id".into()));
            }
        }
        for r in &population.relationships {
            for end in [r.a, r.b] {
                if !agents.contains_key(&AgentId(end)) {
                    return Err(KernelError::Population(format!("relationship references unknown agent {end}")));
                }
            }
        }
        let topology = Topology::from_relationships(agents.keys().copied(), &population.relationships);
        let mut subscriptions = SubscriptionTable::default();
        for a in agents.values() {
            if runtime.graph.start_nodes_for(&a.agent_type).next().is_some() {
                subscriptions.subscribe(ROUND_START, a.id);
            }
        }
        for (event_type, agent) in &population.subscriptions {
            subscriptions.subscribe(event_type, *agent);
        }
        let max_rounds = runtime.spec.termination.max_rounds;
        let environment = runtime.spec.environment.clone();
        let world = Arc::new(World { runtime, topology, master_seed });
        let snapshot = Snapshot {
            views: agents
                .values()
                .map(|a| (a.id, a.public_view(world.runtime.agent_type(&a.agent_type).expect("checked above"))))
                .collect(),
        };
        let initial = world.runtime.model.metrics(&world, &agents);
        Ok(Simulation {
            world,
            agents,
            snapshot,
            subscriptions,
            environment,
            bus: EventBus::new(),
            round: 0,
            max_rounds,
            log: Vec::new(),
            rounds: Vec::new(),
            initial,
            changed: Vec::new(),
            transcripts: Vec::new(),
        })
    }

    /// Generate the population from the scenario model and `population_seed`.
    pub fn populate(runtime: Arc<ScenarioRuntime>, population_seed: u64, master_seed: u64) -> Result<Self, KernelError> {
        let population = runtime.model.populate(&runtime.spec, population_seed)?;
        Self::new(runtime, population, master_seed)
    }

    pub fn set_max_rounds(&mut self, rounds: u32) {
        self.max_rounds = rounds;
    }

    pub fn max_rounds(&self) -> u32 {
        self.max_rounds
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn agents(&self) -> &BTreeMap<AgentId, AgentRecord> {
        &self.agents
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn environment(&self) -> &ValueMap {
        &self.environment
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.log
    }

    pub fn publish(&mut self, event: SimEvent) -> Result<u64, KernelError> {
        let schema = match (event.source, event.to_node) {
            (Source::Agent(_), Some(to)) => self
                .world
                .graph()
                .incoming(to)
                .find(|e| e.event_type == event.event_type)
                .map(|e| e.payload_schema.clone())
                .unwrap_or_default(),
            _ => BTreeMap::new(),
        };
        let seq = self.bus.publish(event.clone(), &schema)?;
        let mut logged = event;
        logged.seq = seq;
        self.log.push(logged);
        Ok(seq)
    }

    fn recipients(&self, event: &SimEvent) -> Vec<AgentId> {
        match event.target {
            Target::Agent(a) => {
                if self.agents.contains_key(&a) {
                    vec![a]
                } else {
                    Vec::new()
                }
            }
            Target::Broadcast => {
                let agent_type = event.to_node.and_then(|n| self.world.graph().node(n)).map(|n| n.agent_type.as_str());
                self.agents
                    .values()
                    .filter(|a| agent_type.is_none_or(|t| a.agent_type == t))
                    .map(|a| a.id)
                    .collect()
            }
            Target::Subscription => self.subscriptions.subscribers(&event.event_type).collect(),
        }
    }

    fn predicate_holds(&self) -> Result<bool, KernelError> {
        match &self.world.spec().termination.predicate {
            None => Ok(false),
            Some(name) => Ok(self.world.runtime.model.predicate(name, &self.world, &self.agents)?),
        }
    }

    /// Deliver every event due this round, then commit emissions for the next.
    pub fn run_round(&mut self, executor: &mut dyn Executor) -> Result<RoundRecord, KernelError> {
        let round = self.round + 1;
        if self.subscriptions.has_subscribers(ROUND_START) {
            self.publish(SimEvent {
                seq: 0,
                round,
                event_type: ROUND_START.to_string(),
                source: Source::Env,
                target: Target::Subscription,
                to_node: None,
                payload: ValueMap::new(),
                meta: EventMeta::default(),
            })?;
        }
        let mut due = self.bus.drain_round(round);
        due.sort_by_key(|e| e.seq);
        let deliveries: Vec<Delivery> = due
            .into_iter()
            .map(|event| {
                let recipients = self.recipients(&event);
                Delivery { event, recipients }
            })
            .collect();
        let changed = std::mem::take(&mut self.changed);
        let outcomes = {
            let input = RoundInput {
                round,
                environment: &self.environment,
                snapshot: &self.snapshot,
                deliveries: &deliveries,
                changed: &changed,
            };
            executor.execute(&self.world, &input, &mut self.agents)?
        };
        let mut record = RoundRecord {
            round,
            events_processed: deliveries.len() as u64,
            handler_invocations: 0,
            terminal_arrivals: 0,
            metrics: MetricsSnapshot::new(),
        };
        let mut outcomes = outcomes;
        outcomes.sort_by_key(|o| o.agent);
        for outcome in outcomes {
            record.handler_invocations += u64::from(outcome.handled);
            record.terminal_arrivals += u64::from(outcome.terminal_arrivals);
            for em in outcome.emissions {
                self.publish(SimEvent {
                    seq: 0,
                    round: round + 1,
                    event_type: em.event_type,
                    source: Source::Agent(em.source),
                    target: em.target,
                    to_node: Some(em.to_node),
                    payload: em.payload,
                    meta: EventMeta { parent_seq: Some(em.parent_seq), wall_time_ms: 0 },
                })?;
            }
            self.transcripts.extend(outcome.transcripts);
            if outcome.handled > 0 {
                let agent = &self.agents[&outcome.agent];
                let spec = self.world.runtime.agent_type(&agent.agent_type).expect("validated type");
                let view = agent.public_view(spec);
                if self.snapshot.views.get(&agent.id) != Some(&view) {
                    self.snapshot.views.insert(agent.id, view);
                    self.changed.push(agent.id);
                }
            }
        }
        self.round = round;
        record.metrics = self.world.runtime.model.metrics(&self.world, &self.agents);
        self.rounds.push(record.clone());
        Ok(record)
    }

    /// Run until the termination predicate holds or `max_rounds` is reached.
    pub fn run_until_termination(&mut self, executor: &mut dyn Executor) -> Result<StopReason, KernelError> {
        loop {
            if self.predicate_holds()? {
                return Ok(StopReason::Predicate);
            }
            if self.round >= self.max_rounds {
                return Ok(StopReason::MaxRounds);
            }
            self.run_round(executor)?;
        }
    }

    pub fn into_result(self, stopped_by: StopReason) -> SimulationResult {
        SimulationResult {
            scenario: self.world.spec().name.clone(),
            master_seed: self.world.master_seed,
            initial: self.initial,
            rounds: self.rounds,
            stopped_by,
            final_agents: self.agents.into_values().collect(),
            events: self.log,
            transcripts: self.transcripts,
        }
    }

    /// Convenience: run to termination and return the result.
    pub fn run(mut self, executor: &mut dyn Executor) -> Result<SimulationResult, KernelError> {
        let stop = self.run_until_termination(executor)?;
        Ok(self.into_result(stop))
    }
}
