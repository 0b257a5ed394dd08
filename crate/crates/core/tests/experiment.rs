mod common;

use std::fs;
use std::path::Path;

use onesim::experiment::{
    apply_interventions, factorial_groups, load_results, parse_plan, run_experiment, selected_count, write_result_set,
    ExecutionMode, Factor, GroupSpec, InterventionError, InterventionSpec, Modification, Paradigm, PlanError,
    Predicate, RunOptions, Selector, MANIFEST_FILE, METRICS_FILE, TIDY_FILE,
};
use onesim::scenarios::bundled_plan;
use onesim::Value;
use proptest::prelude::*;

use common::runtime;

fn set_level(pct: f64, predicate: Option<Predicate>) -> GroupSpec {
    GroupSpec {
        name: "g".into(),
        hypothesis: None,
        interventions: vec![InterventionSpec {
            selector: Selector { agent_type: Some("Leader".into()), predicate, percentage: pct },
            modification: Modification { field: "level".into(), value: Value::Int(99) },
        }],
    }
}

fn tiny_plan(rounds: u32) -> String {
    format!(
        "name = \"tiny\"\nscenario = \"axelrod\"\nreplicates = 2\nbase_seed = 7\nrounds = {rounds}\n\
         metrics = [\"local_convergence\"]\n[[groups]]\nname = \"baseline\"\n"
    )
}

proptest! {
    #[test]
    fn selected_count_rounds_half_up(pct in 0.1f64..=100.0, matching in 0usize..500) {
        let n = selected_count(pct, matching);
        let exact = pct / 100.0 * matching as f64;
        prop_assert!(n <= matching);
        prop_assert!((n as f64 - exact).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn interventions_modify_the_selected_share(pct in 1f64..=100.0, seed in 0u64..50) {
        let rt = runtime("public_goods");
        let mut pop = rt.model.populate(&rt.spec, seed).unwrap();
        let leaders = pop.agents.iter().filter(|a| a.agent_type == "Leader").count();
        let modified = apply_interventions(&mut pop, &rt.spec, &set_level(pct, None)).unwrap();
        prop_assert_eq!(modified.len(), selected_count(pct, leaders));
        let changed = pop.agents.iter().filter(|a| a.get("level") == Some(&Value::Int(99))).count();
        prop_assert_eq!(changed, modified.len());
        let smallest: Vec<_> = pop.agents.iter().filter(|a| a.agent_type == "Leader").map(|a| a.id).take(modified.len()).collect();
        prop_assert_eq!(modified.into_iter().collect::<Vec<_>>(), smallest);
    }
}

#[test]
fn predicate_narrows_the_match() {
    let rt = runtime("public_goods");
    let mut pop = rt.model.populate(&rt.spec, 0).unwrap();
    let pred: Predicate = toml::from_str("field = \"mechanism\"\nop = \"==\"\nvalue = \"forced\"").unwrap();
    let forced = pop.agents.iter().filter(|a| pred.matches(a.get("mechanism").unwrap_or(&Value::Int(0)))).count();
    let modified = apply_interventions(&mut pop, &rt.spec, &set_level(100.0, Some(pred))).unwrap();
    assert_eq!(modified.len(), forced);
}

#[test]
fn unknown_fields_are_rejected() {
    let rt = runtime("public_goods");
    let mut pop = rt.model.populate(&rt.spec, 0).unwrap();
    let mut g = set_level(50.0, None);
    g.interventions[0].modification.field = "charisma".into();
    assert!(matches!(apply_interventions(&mut pop, &rt.spec, &g), Err(InterventionError::UnknownField { .. })));
    g.interventions[0].selector.agent_type = Some("Ghost".into());
    assert!(matches!(apply_interventions(&mut pop, &rt.spec, &g), Err(InterventionError::UnknownAgentType { .. })));
}

#[test]
fn factorial_names_and_count() {
    let factors = vec![
        Factor { name: "a".into(), agent_type: None, field: "x".into(), levels: vec![Value::from("p"), Value::from("q")] },
        Factor { name: "b".into(), agent_type: None, field: "y".into(), levels: vec![Value::Int(1), Value::Int(2), Value::Int(3)] },
    ];
    let names: Vec<String> = factorial_groups(&factors).into_iter().map(|g| g.name).collect();
    assert_eq!(names.len(), 6);
    assert_eq!(names[0], "a-p_b-1");
    assert_eq!(names[5], "a-q_b-3");
}

#[test]
fn bundled_plans_parse_with_expected_paradigms() {
    let cases = [("axelrod_plan", Paradigm::Inductive), ("pg_plan", Paradigm::Abductive), ("classroom_plan", Paradigm::Deductive)];
    for (name, paradigm) in cases {
        let plan = parse_plan(bundled_plan(name).unwrap()).unwrap();
        assert_eq!(plan.paradigm, paradigm, "{name}");
        plan.validate().unwrap();
    }
    assert_eq!(parse_plan(bundled_plan("pg_plan").unwrap()).unwrap().groups.len(), 6);
}

#[test]
fn malformed_plans_are_rejected() {
    assert!(matches!(parse_plan("name = "), Err(PlanError::Syntax(_))));
    assert!(matches!(parse_plan("name = \"x\"\nbogus = 1\n[[groups]]\nname = \"a\""), Err(PlanError::Syntax(_))));
    assert!(matches!(parse_plan("name = \"x\"\nreplicates = 0\n[[groups]]\nname = \"a\""), Err(PlanError::Invalid(_))));
    assert!(matches!(parse_plan("name = \"x\"\n[[groups]]\nname = \"a\"\n[[groups]]\nname = \"a\""), Err(PlanError::Invalid(_))));
    assert!(matches!(parse_plan("name = \"x\"\nparadigm = \"deductive\"\n[[groups]]\nname = \"a\""), Err(PlanError::Invalid(_))));
    assert!(matches!(parse_plan("name = \"x\"\n[[groups]]\nname = \"../a\""), Err(PlanError::Invalid(_))));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn output_tree_round_trips_and_is_deterministic() {
    let plan = parse_plan(&tiny_plan(3)).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let rs = run_experiment(&plan, runtime("axelrod"), &RunOptions::default()).unwrap();
    assert!(rs.is_complete());
    write_result_set(a.path(), &rs).unwrap();
    let seq = RunOptions { parallel_runs: false, ..RunOptions::default() };
    write_result_set(b.path(), &run_experiment(&plan, runtime("axelrod"), &seq).unwrap()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));

    assert!(a.path().join(MANIFEST_FILE).exists());
    assert!(a.path().join(TIDY_FILE).exists());
    for r in 0..2 {
        assert!(a.path().join("baseline").join(r.to_string()).join(METRICS_FILE).exists());
    }
    let loaded = load_results(a.path()).unwrap();
    assert_eq!(loaded.manifest.runs.len(), 2);
    assert_eq!(loaded.tidy, rs.tidy_rows());
}

#[test]
fn replicates_differ_but_share_population_seed_across_groups() {
    let text = format!("{}[[groups]]\nname = \"other\"\n", tiny_plan(2));
    let plan = parse_plan(&text).unwrap();
    let rs = run_experiment(&plan, runtime("axelrod"), &RunOptions::default()).unwrap();
    let a0 = rs.run("baseline", 0).unwrap();
    let a1 = rs.run("baseline", 1).unwrap();
    let b0 = rs.run("other", 0).unwrap();
    assert_ne!(a0.seed, a1.seed);
    assert_ne!(a0.seed, b0.seed);
    assert_eq!(a0.population_seed, b0.population_seed);
    assert_eq!(a0.result.initial, b0.result.initial);
}

#[test]
fn distributed_mode_matches_local() {
    let plan = parse_plan(&tiny_plan(3)).unwrap();
    let local = run_experiment(&plan, runtime("axelrod"), &RunOptions::default()).unwrap();
    let dist = RunOptions { mode: ExecutionMode::Distributed(2), ..RunOptions::default() };
    let remote = run_experiment(&plan, runtime("axelrod"), &dist).unwrap();
    assert_eq!(local.tidy_rows(), remote.tidy_rows());
    for (l, r) in local.runs.iter().zip(&remote.runs) {
        assert_eq!(l.result.to_json(), r.result.to_json());
    }
}
