mod common;

use std::fs;
use std::path::Path;

use onesim::analysis::run_analyses;
use onesim::experiment::{load_results, parse_plan, run_experiment, write_result_set, ExperimentPlan, RunOptions};
use onesim::report::{
    build_report, check_quality, report_from_dir, Block, Figure, GAP_MARKER, MAX_SCORE, PASS_THRESHOLD, QUALITY_FILE,
    REPORT_FILE, REQUIRED_SECTIONS,
};
use onesim::scenarios::bundled_plan;

use common::runtime;

fn bundled(name: &str, rounds: Option<u32>) -> ExperimentPlan {
    let mut plan = parse_plan(bundled_plan(name).unwrap()).unwrap();
    if rounds.is_some() {
        plan.rounds = rounds;
    }
    plan
}

fn results_dir(plan: &ExperimentPlan, scenario: &str, dir: &Path) {
    let rs = run_experiment(plan, runtime(scenario), &RunOptions::default()).unwrap();
    write_result_set(dir, &rs).unwrap();
}

#[test]
fn sections_appear_in_order() {
    let dir = tempfile::tempdir().unwrap();
    results_dir(&bundled("axelrod_plan", Some(4)), "axelrod", dir.path());
    let loaded = load_results(dir.path()).unwrap();
    let plan = &loaded.manifest.plan;
    let analyses = run_analyses(plan, &loaded.tidy, &loaded.observations);
    let report = build_report(plan, &loaded.manifest, &loaded.tidy, &analyses);
    let titles: Vec<&str> = report.sections.iter().map(|s| s.title.as_str()).collect();
    assert_eq!(titles, REQUIRED_SECTIONS);
    assert_eq!(report.figures.len(), 4);
    assert!(report.figures.iter().all(|f| f.svg.is_some()));
    let q = check_quality(&report);
    assert!(q.passed, "{:?}", q.notes);
    assert_eq!(q.scores.validation, MAX_SCORE);
}

#[test]
fn empty_analyses_give_gaps_and_zero_scores() {
    let dir = tempfile::tempdir().unwrap();
    results_dir(&bundled("axelrod_plan", Some(2)), "axelrod", dir.path());
    let loaded = load_results(dir.path()).unwrap();
    let report = build_report(&loaded.manifest.plan, &loaded.manifest, &loaded.tidy, &[]);
    assert!(report.gap_count() >= 2);
    assert!(report.to_markdown().contains(GAP_MARKER));
    let q = check_quality(&report);
    assert!(!q.passed);
    assert_eq!(
        [q.scores.technical_rigor, q.scores.clarity, q.scores.validation, q.scores.writing_quality],
        [0, 0, 0, 0]
    );
}

#[test]
fn figure_without_data_costs_two_validation_points() {
    let dir = tempfile::tempdir().unwrap();
    results_dir(&bundled("axelrod_plan", Some(3)), "axelrod", dir.path());
    let loaded = load_results(dir.path()).unwrap();
    let plan = &loaded.manifest.plan;
    let analyses = run_analyses(plan, &loaded.tidy, &loaded.observations);
    let mut report = build_report(plan, &loaded.manifest, &loaded.tidy, &analyses);
    let before = check_quality(&report).scores.validation;
    report.figures.push(Figure { file: "figures/x.svg".into(), caption: "x".into(), svg: None });
    report.sections[3].blocks.push(Block::Figure(report.figures.len() - 1));
    assert_eq!(check_quality(&report).scores.validation, before - 2);

    let out = tempfile::tempdir().unwrap();
    report.emit(out.path()).unwrap();
    let md = fs::read_to_string(out.path().join(REPORT_FILE)).unwrap();
    assert!(md.contains(GAP_MARKER));
    assert!(!out.path().join("figures/x.svg").exists());
    assert!(report.dangling_links(out.path()).is_empty());
}

#[test]
fn report_emission_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    results_dir(&bundled("classroom_plan", Some(8)), "classroom", dir.path());
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = report_from_dir(dir.path(), a.path(), false).unwrap();
    let rb = report_from_dir(dir.path(), b.path(), false).unwrap();
    assert!(ra.emitted && rb.emitted);
    for f in [REPORT_FILE, QUALITY_FILE] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(ra.scaffold.dangling_links(a.path()).is_empty());
}

#[test]
fn factorial_report_has_cells_and_effects() {
    let dir = tempfile::tempdir().unwrap();
    results_dir(&bundled("pg_plan", None), "public_goods", dir.path());
    let out = tempfile::tempdir().unwrap();
    let r = report_from_dir(dir.path(), out.path(), false).unwrap();
    assert!(r.emitted, "{:?}", r.quality.notes);
    let cells = r.scaffold.tables.iter().find(|t| t.file.ends_with("contribution_effects_cells.csv")).unwrap();
    assert_eq!(cells.rows.len(), 6);
    let effects = r.scaffold.tables.iter().find(|t| t.file.ends_with("contribution_effects_effects.csv")).unwrap();
    assert_eq!(effects.rows.len(), 2);
    assert!(out.path().join(&cells.file).exists());
}

#[test]
fn failing_report_is_withheld_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = bundled("axelrod_plan", Some(2));
    plan.analyses.clear();
    results_dir(&plan, "axelrod", dir.path());
    let out = tempfile::tempdir().unwrap();
    let r = report_from_dir(dir.path(), out.path(), false).unwrap();
    assert!(!r.emitted);
    assert!(r.quality.scores.technical_rigor < PASS_THRESHOLD);
    assert!(!out.path().join(REPORT_FILE).exists());
    assert!(out.path().join(QUALITY_FILE).exists());
    let forced = report_from_dir(dir.path(), out.path(), true).unwrap();
    assert!(forced.emitted);
    assert!(out.path().join(REPORT_FILE).exists());
}
