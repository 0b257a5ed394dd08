mod common;

use std::collections::BTreeMap;

use onesim::behavior_graph::FieldKind;
use onesim::kernel::{check_payload, read_event_log, write_event_log, LocalExecutor, SchemaViolation, Simulation, Source};
use onesim::scenarios::{allocate_units, conservation_residual, pg_payoff, softmax, Tokens};
use onesim::seed::rng_from_seed;
use onesim::{Value, ValueMap};
use proptest::prelude::*;

use common::{run_local, runtime};

#[test]
fn runs_are_reproducible_for_every_scenario() {
    for name in ["axelrod", "public_goods", "classroom", "null"] {
        let a = run_local(runtime(name), 3, 11, Some(4));
        let b = run_local(runtime(name), 3, 11, Some(4));
        assert_eq!(a.to_json(), b.to_json(), "{name}");
    }
}

#[test]
fn sequential_and_parallel_executors_agree() {
    let mut seq = Simulation::populate(runtime("axelrod"), 5, 9).unwrap();
    seq.set_max_rounds(10);
    let a = seq.run(&mut LocalExecutor::sequential()).unwrap();
    let b = run_local(runtime("axelrod"), 5, 9, Some(10));
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn different_seeds_diverge() {
    let a = run_local(runtime("axelrod"), 1, 1, Some(5));
    let b = run_local(runtime("axelrod"), 1, 2, Some(5));
    assert_ne!(a.events, b.events);
}

#[test]
fn emissions_land_in_a_later_round() {
    let r = run_local(runtime("public_goods"), 0, 0, Some(3));
    let by_seq: BTreeMap<u64, u32> = r.events.iter().map(|e| (e.seq, e.round)).collect();
    assert_eq!(by_seq.len(), r.events.len());
    let mut checked = 0;
    for e in &r.events {
        if let (Source::Agent(_), Some(p)) = (e.source, e.meta.parent_seq) {
            checked += 1;
            assert!(by_seq[&p] < e.round, "event {} in round {} has parent in round {}", e.seq, e.round, by_seq[&p]);
        }
    }
    assert!(checked > 0);
}

#[test]
fn event_log_round_trips() {
    let r = run_local(runtime("axelrod"), 0, 0, Some(2));
    let text = write_event_log(&r.events);
    let records = read_event_log(&text).unwrap();
    assert_eq!(records.len(), r.events.len());
    for (rec, e) in records.iter().zip(&r.events) {
        assert_eq!((rec.seq, rec.round, &rec.event_type, &rec.payload), (e.seq, e.round, &e.event_type, &e.payload));
    }
    assert_eq!(write_event_log(&r.events), text);
}

#[test]
fn round_count_respects_limit() {
    let r = run_local(runtime("null"), 0, 0, Some(7));
    assert_eq!(r.rounds.len(), 7);
    assert_eq!(r.rounds.last().unwrap().round, 7);
}

#[test]
fn payload_schema_is_enforced() {
    let schema: BTreeMap<String, FieldKind> = [("amount".to_string(), FieldKind::Int)].into_iter().collect();
    let mut p = ValueMap::new();
    assert!(matches!(check_payload("offer", &p, &schema), Err(SchemaViolation::MissingField { .. })));
    p.insert("amount".into(), Value::from("three"));
    assert!(matches!(check_payload("offer", &p, &schema), Err(SchemaViolation::WrongKind { .. })));
    p.insert("amount".into(), Value::Int(3));
    assert!(check_payload("offer", &p, &schema).is_ok());
    p.insert("note".into(), Value::from("x"));
    assert!(matches!(check_payload("offer", &p, &schema), Err(SchemaViolation::UndeclaredField { .. })));
}

proptest! {
    #[test]
    fn public_goods_conserves_tokens(c in prop::collection::vec(0i64..=10, 1..12), num in 1i64..40, den in 1i64..10) {
        let m = Tokens::new(num, den);
        let payoffs = pg_payoff(&c, 10, m).unwrap();
        prop_assert_eq!(conservation_residual(&c, &payoffs, 10, m), Tokens::from_integer(0));
        let n = c.len() as i64;
        let sum: Tokens = payoffs.iter().copied().sum();
        prop_assert_eq!(sum, Tokens::from_integer(n * 10) + (m - 1) * Tokens::from_integer(c.iter().sum::<i64>()));
    }

    #[test]
    fn out_of_range_contributions_rejected(c in 11i64..100) {
        prop_assert!(pg_payoff(&[0, c], 10, Tokens::new(8, 5)).is_err());
    }

    #[test]
    fn allocation_spends_exact_budget(values in prop::collection::vec(-5f64..5.0, 1..30), tau in 0f64..3.0, budget in 0u32..50, seed: u64) {
        let counts = allocate_units(&values, tau, budget, &mut rng_from_seed(seed));
        prop_assert_eq!(counts.len(), values.len());
        prop_assert_eq!(counts.iter().sum::<u32>(), budget);
        let p = softmax(&values, tau);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
