mod common;

use std::collections::BTreeSet;

use onesim::behavior_graph::{build_graph, parse_scenario, traversal_order, validate, Severity, Status};
use onesim::scenarios::{self, SCENARIOS};

#[test]
fn corpus_findings_match_exactly() {
    for entry in common::graph_corpus() {
        let report = validate(&entry.graph);
        let got: BTreeSet<_> = report.findings.iter().map(|f| (f.code.as_str(), f.location.to_string())).collect();
        let want: BTreeSet<_> = entry.expected.iter().map(|(c, l)| (c.as_str(), l.to_string())).collect();
        assert_eq!(got, want, "{}", entry.name);
    }
}

#[test]
fn status_follows_error_severity() {
    for entry in common::graph_corpus() {
        let report = validate(&entry.graph);
        let has_error = report.findings.iter().any(|f| f.severity == Severity::Error);
        assert_eq!(report.status == Status::Invalid, has_error, "{}", entry.name);
        assert_eq!(report.is_valid(), !has_error);
        assert_eq!(traversal_order(&entry.graph).is_ok(), !has_error, "{}", entry.name);
    }
}

#[test]
fn validation_is_deterministic() {
    for entry in common::graph_corpus() {
        assert_eq!(validate(&entry.graph), validate(&entry.graph), "{}", entry.name);
    }
}

#[test]
fn traversal_visits_each_node_once() {
    for entry in common::graph_corpus() {
        if let Ok(order) = traversal_order(&entry.graph) {
            let unique: BTreeSet<_> = order.iter().collect();
            assert_eq!(unique.len(), order.len(), "{}", entry.name);
            assert_eq!(order.len(), entry.graph.nodes().len(), "{}", entry.name);
        }
    }
}

#[test]
fn bundled_scenarios_validate() {
    for (name, text) in SCENARIOS {
        let spec = parse_scenario(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let report = validate(&build_graph(&spec));
        assert!(report.is_valid(), "{name}: {}", report.render());
        assert!(scenarios::load(text, onesim::kernel::BackendKind::Rule).is_ok(), "{name}");
    }
}

#[test]
fn render_lists_one_line_per_finding() {
    let corpus = common::graph_corpus();
    let broken = corpus.iter().find(|e| e.name == "dangling_emit").unwrap();
    let report = validate(&broken.graph);
    let text = report.render();
    assert_eq!(text.lines().count(), report.findings.len());
    for (line, f) in text.lines().zip(&report.findings) {
        assert!(line.starts_with(&format!("{} {}", f.severity, f.code.as_str())), "{line}");
    }
}
