//! Scenario specs, behavior graphs and their validation.

mod graph;
mod spec;
mod validate;

pub use graph::{build_graph, ActionNode, BehaviorGraph, EventEdge, GraphError, NodeId};
pub use spec::{
    parse_scenario, ActionSpec, AgentTypeSpec, Domain, EventSpec, FieldKind, ParseError, ProfileField,
    Relationship, ScenarioSpec, Termination, Visibility, DEFAULT_MEMORY_CAPACITY,
};
pub use validate::{
    can_reach_terminal, reachable_from_starts, traversal_order, validate, Finding, FindingCode, InvalidGraph,
    Location, Severity, Status, ValidationReport,
};
