use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{BehaviorGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// Stable finding codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingCode {
    NoStartNode,
    UnreachableNode,
    NoTerminalReachable,
    MissingPayloadField,
    DanglingEventType,
    CycleWithoutExit,
}

impl FindingCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingCode::NoStartNode => "no_start_node",
            FindingCode::UnreachableNode => "unreachable_node",
            FindingCode::NoTerminalReachable => "no_terminal_reachable",
            FindingCode::MissingPayloadField => "missing_payload_field",
            FindingCode::DanglingEventType => "dangling_event_type",
            FindingCode::CycleWithoutExit => "cycle_without_exit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Graph,
    Node(NodeId),
    Edge { from: NodeId, to: NodeId, event_type: String },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Graph => f.write_str("graph"),
            Location::Node(n) => write!(f, "node:{n}"),
            Location::Edge { from, to, event_type } => write!(f, "edge:{from}->{to}:{event_type}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.severity, self.code.as_str(), self.location, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: Status,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(findings: Vec<Finding>) -> Self {
        let status = if findings.iter().any(|f| f.severity == Severity::Error) {
            Status::Invalid
        } else {
            Status::Valid
        };
        ValidationReport { status, findings }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Status::Valid
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    /// Line-oriented rendering: `severity code location message` per finding.
    pub fn render(&self) -> String {
        self.findings.iter().map(|f| format!("{f}\n")).collect()
    }
}

fn bfs(seeds: impl IntoIterator<Item = NodeId>, adj: &BTreeMap<NodeId, Vec<NodeId>>) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    for s in seeds {
        if seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Nodes reachable from any start node (starts included).
pub fn reachable_from_starts(graph: &BehaviorGraph) -> BTreeSet<NodeId> {
    bfs(graph.start_nodes().map(|n| n.id), &graph.successors())
}

/// Nodes from which some terminal node is reachable (terminals included).
pub fn can_reach_terminal(graph: &BehaviorGraph) -> BTreeSet<NodeId> {
    bfs(
        graph.nodes().iter().filter(|n| n.is_terminal).map(|n| n.id),
        &graph.predecessors(),
    )
}

/// Structural and semantic checks. Never aborts; all problems become findings.
pub fn validate(graph: &BehaviorGraph) -> ValidationReport {
    let mut findings = Vec::new();
    let succ = graph.successors();

    if graph.start_nodes().next().is_none() {
        findings.push(Finding {
            severity: Severity::Error,
            code: FindingCode::NoStartNode,
            location: Location::Graph,
            message: "graph declares no start node".into(),
        });
    }

    let reachable = reachable_from_starts(graph);
    for n in graph.nodes() {
        if !reachable.contains(&n.id) {
            findings.push(Finding {
                severity: Severity::Error,
                code: FindingCode::UnreachableNode,
                location: Location::Node(n.id),
                message: format!("unreachable node `{}`", n.action_name),
            });
        }
    }

    let exits = can_reach_terminal(graph);
    for s in graph.start_nodes() {
        if !exits.contains(&s.id) {
            findings.push(Finding {
                severity: Severity::Error,
                code: FindingCode::NoTerminalReachable,
                location: Location::Node(s.id),
                message: format!("no terminal reachable from start `{}`", s.action_name),
            });
        }
    }

    for e in graph.edges() {
        let Some(target) = graph.node(e.to_node) else { continue };
        for field in &target.reads {
            if !e.payload_schema.contains_key(field) {
                findings.push(Finding {
                    severity: Severity::Error,
                    code: FindingCode::MissingPayloadField,
                    location: Location::Edge {
                        from: e.from_node,
                        to: e.to_node,
                        event_type: e.event_type.clone(),
                    },
                    message: format!(
                        "`{}` reads `{field}` but the `{}` payload does not carry it",
                        target.action_name, e.event_type
                    ),
                });
            }
        }
    }

    for n in graph.nodes() {
        for emitted in &n.emits {
            if !graph.outgoing(n.id).any(|e| &e.event_type == emitted) {
                findings.push(Finding {
                    severity: Severity::Error,
                    code: FindingCode::DanglingEventType,
                    location: Location::Node(n.id),
                    message: format!("`{}` emits `{emitted}` but no edge carries it", n.action_name),
                });
            }
        }
    }

    // Cycles with no exit to a terminal. Cycle membership by self-reachability,
    // strongly connected groups by mutual reachability.
    let closure: BTreeMap<NodeId, BTreeSet<NodeId>> = graph
        .nodes()
        .iter()
        .map(|n| (n.id, bfs(succ[&n.id].iter().copied(), &succ)))
        .collect();
    let mut assigned = BTreeSet::new();
    for n in graph.nodes() {
        if assigned.contains(&n.id) || !closure[&n.id].contains(&n.id) || exits.contains(&n.id) {
            continue;
        }
        let component: Vec<NodeId> = closure[&n.id]
            .iter()
            .copied()
            .filter(|m| closure[m].contains(&n.id))
            .collect();
        assigned.extend(component.iter().copied());
        findings.push(Finding {
            severity: Severity::Warning,
            code: FindingCode::CycleWithoutExit,
            location: Location::Node(n.id),
            message: format!(
                "cycle through {} node(s) starting at `{}` never reaches a terminal",
                component.len(),
                n.action_name
            ),
        });
    }

    ValidationReport::from_findings(findings)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("graph is invalid: {0} error finding(s)")]
pub struct InvalidGraph(pub usize);

/// Breadth-first order from the start nodes, ties broken by ascending node id.
pub fn traversal_order(graph: &BehaviorGraph) -> Result<Vec<NodeId>, InvalidGraph> {
    let report = validate(graph);
    if !report.is_valid() {
        return Err(InvalidGraph(report.errors().count()));
    }
    let succ = graph.successors();
    let mut order = Vec::with_capacity(graph.nodes().len());
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<NodeId> = graph.start_nodes().map(|n| n.id).collect();
    seen.extend(queue.iter().copied());
    while let Some(n) = queue.pop_front() {
        order.push(n);
        for &m in &succ[&n] {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    Ok(order)
}
