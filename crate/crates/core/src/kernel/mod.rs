//! Event bus, round scheduler and the single-node execution loop.

mod bus;
mod engine;
mod event;
mod model;

pub use bus::{check_payload, EventBus, SchemaViolation};
pub use engine::{
    execute_agents, AgentOutcome, Delivery, ExecOptions, Executor, KernelError, LocalExecutor, RoundInput,
    RoundRecord, Simulation, SimulationResult, StopReason,
};
pub use event::{
    read_event_log, write_event_log, EventLogRecord, EventMeta, SimEvent, Source, SubscriptionTable, Target,
    ROUND_START,
};
pub use model::{
    BackendKind, Emission, HandlerContext, HandlerError, MetricsSnapshot, ModelError, Population, ScenarioModel,
    ScenarioRuntime, Snapshot, Topology, World,
};
