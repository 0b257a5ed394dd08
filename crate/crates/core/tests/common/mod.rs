#![allow(dead_code)]

use std::sync::Arc;

use onesim::behavior_graph::{
    build_graph, parse_scenario, ActionNode, BehaviorGraph, EventEdge, FieldKind, FindingCode, Location, NodeId,
};
use onesim::kernel::{BackendKind, LocalExecutor, ScenarioRuntime, Simulation, SimulationResult};
use onesim::scenarios;

pub struct CorpusEntry {
    pub name: &'static str,
    pub graph: BehaviorGraph,
    /// Every finding the validator must report, and nothing else.
    pub expected: Vec<(FindingCode, Location)>,
}

fn g(nodes: Vec<ActionNode>, edges: Vec<EventEdge>) -> BehaviorGraph {
    BehaviorGraph::new(nodes, edges).expect("well-formed corpus graph")
}

fn n(id: u32, name: &str) -> ActionNode {
    ActionNode::new(id, "A", name)
}

fn edge_loc(from: u32, to: u32, event: &str) -> Location {
    Location::Edge { from: NodeId(from), to: NodeId(to), event_type: event.into() }
}

fn entry(name: &'static str, graph: BehaviorGraph, expected: Vec<(FindingCode, Location)>) -> CorpusEntry {
    CorpusEntry { name, graph, expected }
}

/// Ten valid graphs followed by ten with one planted defect each.
pub fn graph_corpus() -> Vec<CorpusEntry> {
    use FindingCode::*;
    let pg = build_graph(&parse_scenario(scenarios::bundled("public_goods").unwrap()).unwrap());
    vec![
        entry("single", g(vec![n(0, "s").start().terminal()], vec![]), vec![]),
        entry(
            "chain",
            g(vec![n(0, "s").start(), n(1, "a"), n(2, "t").terminal()], vec![EventEdge::new(0, 1, "e1"), EventEdge::new(1, 2, "e2")]),
            vec![],
        ),
        entry(
            "diamond",
            g(
                vec![n(0, "s").start(), n(1, "a"), n(2, "b"), n(3, "t").terminal()],
                vec![EventEdge::new(0, 1, "l"), EventEdge::new(0, 2, "r"), EventEdge::new(1, 3, "j"), EventEdge::new(2, 3, "j")],
            ),
            vec![],
        ),
        entry(
            "two_types",
            g(
                vec![
                    ActionNode::new(0, "A", "a_start").start(),
                    ActionNode::new(1, "A", "a_end").terminal(),
                    ActionNode::new(2, "B", "b_start").start(),
                    ActionNode::new(3, "B", "b_end").terminal(),
                ],
                vec![EventEdge::new(0, 1, "x"), EventEdge::new(2, 3, "y"), EventEdge::new(0, 3, "x")],
            ),
            vec![],
        ),
        entry(
            "payload_carried",
            g(
                vec![n(0, "s").start().emitting(&["offer"]), n(1, "t").terminal().reading(&["amount", "round"])],
                vec![EventEdge::new(0, 1, "offer").with_field("amount", FieldKind::Int).with_field("round", FieldKind::Int)],
            ),
            vec![],
        ),
        entry(
            "loop_with_exit",
            g(
                vec![n(0, "s").start(), n(1, "work"), n(2, "t").terminal()],
                vec![EventEdge::new(0, 1, "go"), EventEdge::new(1, 1, "again"), EventEdge::new(1, 2, "done")],
            ),
            vec![],
        ),
        entry(
            "axelrod_shape",
            g(
                vec![
                    n(0, "select_partner").start().emitting(&["partner_selected"]),
                    n(1, "interact").reading(&["partner"]).emitting(&["interaction"]),
                    n(2, "update_culture").terminal().reading(&["feature"]),
                ],
                vec![
                    EventEdge::new(0, 1, "partner_selected").with_field("partner", FieldKind::Int),
                    EventEdge::new(1, 2, "interaction").with_field("partner", FieldKind::Int).with_field("feature", FieldKind::Text),
                ],
            ),
            vec![],
        ),
        entry(
            "converging_starts",
            g(
                vec![n(0, "s1").start(), n(1, "s2").start(), n(2, "merge"), n(3, "t").terminal()],
                vec![EventEdge::new(0, 2, "m"), EventEdge::new(1, 2, "m"), EventEdge::new(2, 3, "f")],
            ),
            vec![],
        ),
        entry(
            "fan_out",
            g(
                (0..6).map(|i| if i == 0 { n(0, "s").start() } else { n(i, &format!("t{i}")).terminal() }).collect(),
                (1..6).map(|i| EventEdge::new(0, i, &format!("e{i}"))).collect(),
            ),
            vec![],
        ),
        entry("public_goods", pg, vec![]),
        // planted defects
        entry(
            "isolated_node",
            g(vec![n(0, "s").start(), n(1, "t").terminal(), n(2, "orphan").terminal()], vec![EventEdge::new(0, 1, "e")]),
            vec![(UnreachableNode, Location::Node(NodeId(2)))],
        ),
        entry(
            "unreachable_feeder",
            g(
                vec![n(0, "s").start(), n(1, "t").terminal(), n(2, "feeder")],
                vec![EventEdge::new(0, 1, "e"), EventEdge::new(2, 1, "e")],
            ),
            vec![(UnreachableNode, Location::Node(NodeId(2)))],
        ),
        entry(
            "dead_end",
            g(vec![n(0, "s").start(), n(1, "a"), n(2, "b")], vec![EventEdge::new(0, 1, "e"), EventEdge::new(1, 2, "e")]),
            vec![(NoTerminalReachable, Location::Node(NodeId(0)))],
        ),
        entry(
            "dead_end_second_type",
            g(
                vec![
                    ActionNode::new(0, "A", "a_start").start(),
                    ActionNode::new(1, "A", "a_end").terminal(),
                    ActionNode::new(2, "B", "b_start").start(),
                    ActionNode::new(3, "B", "b_mid"),
                ],
                vec![EventEdge::new(0, 1, "x"), EventEdge::new(2, 3, "y")],
            ),
            vec![(NoTerminalReachable, Location::Node(NodeId(2)))],
        ),
        entry(
            "missing_field",
            g(vec![n(0, "s").start(), n(1, "t").terminal().reading(&["amount"])], vec![EventEdge::new(0, 1, "offer")]),
            vec![(MissingPayloadField, edge_loc(0, 1, "offer"))],
        ),
        entry(
            "wrong_field",
            g(
                vec![n(0, "s").start(), n(1, "m").reading(&["partner"]), n(2, "t").terminal()],
                vec![EventEdge::new(0, 1, "pick").with_field("peer", FieldKind::Int), EventEdge::new(1, 2, "done")],
            ),
            vec![(MissingPayloadField, edge_loc(0, 1, "pick"))],
        ),
        entry(
            "dangling_emit",
            g(vec![n(0, "s").start().emitting(&["ghost"]), n(1, "t").terminal()], vec![EventEdge::new(0, 1, "e")]),
            vec![(DanglingEventType, Location::Node(NodeId(0)))],
        ),
        entry(
            "dangling_emit_mid",
            g(
                vec![n(0, "s").start().emitting(&["e"]), n(1, "m").emitting(&["e", "extra"]), n(2, "t").terminal()],
                vec![EventEdge::new(0, 1, "e"), EventEdge::new(1, 2, "e")],
            ),
            vec![(DanglingEventType, Location::Node(NodeId(1)))],
        ),
        entry(
            "exitless_cycle",
            g(
                vec![n(0, "s").start(), n(1, "t").terminal(), n(2, "p"), n(3, "q")],
                vec![EventEdge::new(0, 1, "done"), EventEdge::new(0, 2, "loop"), EventEdge::new(2, 3, "ping"), EventEdge::new(3, 2, "pong")],
            ),
            vec![(CycleWithoutExit, Location::Node(NodeId(2)))],
        ),
        // without a start node nothing is reachable, so each node is also reported
        entry(
            "no_start",
            g(vec![n(0, "a"), n(1, "t").terminal()], vec![EventEdge::new(0, 1, "e")]),
            vec![
                (NoStartNode, Location::Graph),
                (UnreachableNode, Location::Node(NodeId(0))),
                (UnreachableNode, Location::Node(NodeId(1))),
            ],
        ),
    ]
}

pub fn runtime(name: &str) -> Arc<ScenarioRuntime> {
    scenarios::load(scenarios::bundled(name).expect("bundled scenario"), BackendKind::Rule).expect("valid scenario")
}

pub fn run_local(runtime: Arc<ScenarioRuntime>, population_seed: u64, master_seed: u64, rounds: Option<u32>) -> SimulationResult {
    let mut sim = Simulation::populate(runtime, population_seed, master_seed).expect("populate");
    if let Some(r) = rounds {
        sim.set_max_rounds(r);
    }
    sim.run(&mut LocalExecutor::default()).expect("run")
}
