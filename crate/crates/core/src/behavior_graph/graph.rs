use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spec::{FieldKind, ScenarioSpec};

/// Dense node id, assigned in sorted `(agent_type, action_name)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionNode {
    pub id: NodeId,
    pub agent_type: String,
    pub action_name: String,
    pub handler_ref: String,
    pub is_start: bool,
    pub is_terminal: bool,
    pub reads: BTreeSet<String>,
    pub emits: BTreeSet<String>,
}

impl ActionNode {
    pub fn new(id: u32, agent_type: &str, action_name: &str) -> Self {
        ActionNode {
            id: NodeId(id),
            agent_type: agent_type.to_string(),
            action_name: action_name.to_string(),
            handler_ref: action_name.to_string(),
            is_start: false,
            is_terminal: false,
            reads: BTreeSet::new(),
            emits: BTreeSet::new(),
        }
    }

    pub fn start(mut self) -> Self {
        self.is_start = true;
        self
    }

    pub fn terminal(mut self) -> Self {
        self.is_terminal = true;
        self
    }

    pub fn reading(mut self, fields: &[&str]) -> Self {
        self.reads.extend(fields.iter().map(|s| s.to_string()));
        self
    }

    pub fn emitting(mut self, events: &[&str]) -> Self {
        self.emits.extend(events.iter().map(|s| s.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventEdge {
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub event_type: String,
    pub payload_schema: BTreeMap<String, FieldKind>,
}

impl EventEdge {
    pub fn new(from: u32, to: u32, event_type: &str) -> Self {
        EventEdge {
            from_node: NodeId(from),
            to_node: NodeId(to),
            event_type: event_type.to_string(),
            payload_schema: BTreeMap::new(),
        }
    }

    pub fn with_field(mut self, name: &str, kind: FieldKind) -> Self {
        self.payload_schema.insert(name.to_string(), kind);
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("edge `{event_type}` references missing node {node}")]
    DanglingEndpoint { event_type: String, node: NodeId },
    #[error("duplicate event type `{event_type}` between nodes {from} and {to}")]
    DuplicateEdge { event_type: String, from: NodeId, to: NodeId },
}

/// Directed graph of agent-typed actions linked by typed events.
///
/// Nodes are kept sorted by id and edges by `(from, to, event_type)`, so the
/// serialized form of a graph is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorGraph {
    nodes: Vec<ActionNode>,
    edges: Vec<EventEdge>,
}

impl BehaviorGraph {
    pub fn new(mut nodes: Vec<ActionNode>, mut edges: Vec<EventEdge>) -> Result<Self, GraphError> {
        nodes.sort_by_key(|n| n.id);
        for pair in nodes.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GraphError::DuplicateNode(pair[0].id));
            }
        }
        let ids: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
        let mut keys = BTreeSet::new();
        for e in &edges {
            for node in [e.from_node, e.to_node] {
                if !ids.contains(&node) {
                    return Err(GraphError::DanglingEndpoint { event_type: e.event_type.clone(), node });
                }
            }
            if !keys.insert((e.from_node, e.to_node, e.event_type.as_str())) {
                return Err(GraphError::DuplicateEdge {
                    event_type: e.event_type.clone(),
                    from: e.from_node,
                    to: e.to_node,
                });
            }
        }
        edges.sort_by(|a, b| {
            (a.from_node, a.to_node, &a.event_type).cmp(&(b.from_node, b.to_node, &b.event_type))
        });
        Ok(BehaviorGraph { nodes, edges })
    }

    pub fn nodes(&self) -> &[ActionNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[EventEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&ActionNode> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn node_by_name(&self, action_name: &str) -> Option<&ActionNode> {
        self.nodes.iter().find(|n| n.action_name == action_name)
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &EventEdge> {
        self.edges.iter().filter(move |e| e.from_node == id)
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &EventEdge> {
        self.edges.iter().filter(move |e| e.to_node == id)
    }

    pub fn start_nodes(&self) -> impl Iterator<Item = &ActionNode> {
        self.nodes.iter().filter(|n| n.is_start)
    }

    /// Start nodes for agents of `agent_type`, ascending by id.
    pub fn start_nodes_for<'a>(&'a self, agent_type: &'a str) -> impl Iterator<Item = &'a ActionNode> {
        self.nodes.iter().filter(move |n| n.is_start && n.agent_type == agent_type)
    }

    /// Edge leaving `from` with type `event_type` whose target action belongs to `agent_type`.
    pub fn edge_for(&self, from: NodeId, event_type: &str, agent_type: Option<&str>) -> Option<&EventEdge> {
        self.outgoing(from).find(|e| {
            e.event_type == event_type
                && agent_type.is_none_or(|t| self.node(e.to_node).is_some_and(|n| n.agent_type == t))
        })
    }

    /// Successor adjacency, each list sorted ascending and deduplicated.
    pub fn successors(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for e in &self.edges {
            adj.entry(e.from_node).or_default().push(e.to_node);
        }
        for list in adj.values_mut() {
            list.sort();
            list.dedup();
        }
        adj
    }

    pub fn predecessors(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for e in &self.edges {
            adj.entry(e.to_node).or_default().push(e.from_node);
        }
        for list in adj.values_mut() {
            list.sort();
            list.dedup();
        }
        adj
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// One node per declared action, one edge per declared event.
pub fn build_graph(spec: &ScenarioSpec) -> BehaviorGraph {
    let mut actions: Vec<_> = spec.actions.iter().collect();
    actions.sort_by(|a, b| (&a.agent_type, &a.name).cmp(&(&b.agent_type, &b.name)));
    let mut ids = BTreeMap::new();
    let nodes: Vec<ActionNode> = actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let id = NodeId(i as u32);
            ids.insert(a.name.as_str(), id);
            ActionNode {
                id,
                agent_type: a.agent_type.clone(),
                action_name: a.name.clone(),
                handler_ref: a.handler.clone(),
                is_start: a.is_start,
                is_terminal: a.is_terminal,
                reads: a.reads.clone(),
                emits: a.emits.clone(),
            }
        })
        .collect();
    let edges = spec
        .events
        .iter()
        .map(|e| EventEdge {
            from_node: ids[e.from_action.as_str()],
            to_node: ids[e.to_action.as_str()],
            event_type: e.event_type.clone(),
            payload_schema: e.payload_schema.clone(),
        })
        .collect();
    BehaviorGraph::new(nodes, edges).expect("parsed specs satisfy graph invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior_graph::parse_scenario;

    #[test]
    fn single_action_builds_single_node() {
        let spec = parse_scenario(
            "name = \"m\"\ndomain = \"law\"\n[termination]\nmax_rounds = 1\n[[agent_types]]\nname = \"P\"\n\
             [[actions]]\nagent_type = \"P\"\nname = \"act\"\nstart = true\nterminal = true\n",
        )
        .unwrap();
        let g = build_graph(&spec);
        assert_eq!(g.nodes().len(), 1);
        assert!(g.edges().is_empty());
        assert_eq!(g.nodes()[0].id, NodeId(0));
    }

    #[test]
    fn duplicate_node_rejected() {
        let err = BehaviorGraph::new(vec![ActionNode::new(0, "A", "x"), ActionNode::new(0, "A", "y")], vec![])
            .unwrap_err();
        assert_eq!(err, GraphError::DuplicateNode(NodeId(0)));
    }

    #[test]
    fn dangling_edge_rejected() {
        let err = BehaviorGraph::new(vec![ActionNode::new(0, "A", "x")], vec![EventEdge::new(0, 3, "e")])
            .unwrap_err();
        assert!(matches!(err, GraphError::DanglingEndpoint { node: NodeId(3), .. }));
    }

    #[test]
    fn duplicate_edge_type_between_pair_rejected() {
        let nodes = vec![ActionNode::new(0, "A", "x"), ActionNode::new(1, "A", "y")];
        let err = BehaviorGraph::new(nodes.clone(), vec![EventEdge::new(0, 1, "e"), EventEdge::new(0, 1, "e")])
            .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdge { .. }));
        // the same type towards a different target is fine
        let nodes3 = [nodes, vec![ActionNode::new(2, "A", "z")]].concat();
        BehaviorGraph::new(nodes3, vec![EventEdge::new(0, 1, "e"), EventEdge::new(0, 2, "e")]).unwrap();
    }
}
