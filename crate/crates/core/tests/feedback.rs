use onesim::experiment::{parse_plan, run_experiment, RunOptions};
use onesim::kernel::BackendKind;
use onesim::scenarios;
use onesim::vr2t::{
    dpo_gradient, dpo_loss, dpo_margin, emit_dpo_dataset, emit_sft_dataset, parse_dpo_dataset, parse_sft_dataset,
    read_tuples, run_pipeline, sft_loss, write_tuples, DpoInputs, LossError, RuleReasoner, RuleRefiner, RuleScorer,
    TranscriptRecord, Verifier, DEFAULT_THRESHOLD,
};
use proptest::prelude::*;

fn record(response: &str) -> TranscriptRecord {
    TranscriptRecord {
        round: 1,
        agent: 0,
        node: "select_partner".into(),
        prompt: "pick a partner".into(),
        response: response.into(),
        allowed_actions: vec!["interact".into()],
        required_fields: vec!["partner".into()],
    }
}

fn fixture() -> Vec<TranscriptRecord> {
    [
        "ACTION: interact\npartner: 1",
        "ACTION: interact\npartner: 2",
        "ACTION: skip",
        "ACTION: interact\npartner: 3\nreason: shared taste",
        "ACTION: interact\npartner: 4",
        "ACTION: interact\npartner: 5",
        "I would rather interact with agent 6",
        "ACTION: fly\npartner: 7",
        "ACTION: interact",
        "",
    ]
    .into_iter()
    .map(record)
    .collect()
}

#[test]
fn exactly_the_low_scorers_are_refined() {
    let records = fixture();
    let tuples = run_pipeline(&records, DEFAULT_THRESHOLD, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
    assert_eq!(tuples.len(), 10);
    let low = tuples.iter().filter(|t| t.score < DEFAULT_THRESHOLD).count();
    assert_eq!(low, 4);
    assert_eq!(tuples.iter().filter(|t| t.refined.is_some()).count(), 4);
    for t in &tuples {
        assert_eq!(t.refined.is_some(), t.score < DEFAULT_THRESHOLD);
        assert!(!t.explanation.is_empty());
    }
    let scorer = RuleScorer::default();
    for (t, r) in tuples.iter().zip(&records) {
        if let Some(refined) = &t.refined {
            let again = scorer.verify(&TranscriptRecord { response: refined.clone(), ..r.clone() });
            assert!(again.score >= DEFAULT_THRESHOLD, "{refined:?} scores {}", again.score);
        }
    }
}

#[test]
fn datasets_follow_refinements() {
    let tuples = run_pipeline(&fixture(), DEFAULT_THRESHOLD, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
    let sft = parse_sft_dataset(&emit_sft_dataset(&tuples)).unwrap();
    let dpo = parse_dpo_dataset(&emit_dpo_dataset(&tuples)).unwrap();
    assert_eq!(sft.len(), 4);
    assert_eq!(dpo.len(), 4);
    for (s, d) in sft.iter().zip(&dpo) {
        assert_eq!(s.completion, d.chosen);
        assert_ne!(d.chosen, d.rejected);
        assert_eq!(s.prompt, d.prompt);
    }
}

#[test]
fn tuples_survive_disk_round_trip() {
    let tuples = run_pipeline(&fixture(), 0.9, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tuples.jsonl");
    write_tuples(&path, &tuples).unwrap();
    assert_eq!(read_tuples(&path).unwrap(), tuples);
}

#[test]
fn threshold_outside_unit_interval_is_rejected() {
    assert!(run_pipeline(&fixture(), 1.5, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).is_err());
    let none = run_pipeline(&fixture(), 0.0, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
    assert!(none.iter().all(|t| t.refined.is_none()));
}

#[test]
fn rule_transcripts_pass_and_stochastic_ones_are_refined() {
    let plan = parse_plan(
        "name = \"t\"\nscenario = \"axelrod\"\nrounds = 2\nmetrics = [\"local_convergence\"]\n[[groups]]\nname = \"g\"\n",
    )
    .unwrap();
    let opts = RunOptions { record_transcripts: true, ..RunOptions::default() };
    for (kind, expect_refined) in [(BackendKind::Rule, false), (BackendKind::Stochastic, true)] {
        let rt = scenarios::load(scenarios::bundled("axelrod").unwrap(), kind.clone()).unwrap();
        let rs = run_experiment(&plan, rt, &opts).unwrap();
        let transcripts = &rs.runs[0].result.transcripts;
        assert!(!transcripts.is_empty());
        let tuples = run_pipeline(transcripts, DEFAULT_THRESHOLD, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
        let refined = tuples.iter().filter(|t| t.refined.is_some()).count();
        assert_eq!(refined > 0, expect_refined, "{kind:?}: {refined} refined");
    }
}

#[test]
fn sft_loss_is_mean_negative_log_likelihood() {
    assert_eq!(sft_loss(&[vec![-1.0, -2.0], vec![-3.0]]).unwrap(), 3.0);
    assert_eq!(sft_loss(&[]), Err(LossError::Empty));
    assert_eq!(sft_loss(&[vec![f64::NAN]]), Err(LossError::NonFinite));
}

fn inputs() -> impl Strategy<Value = DpoInputs> {
    (-50f64..0.0, -50f64..0.0, -50f64..0.0, -50f64..0.0, 0.01f64..2.0).prop_map(|(a, b, c, d, beta)| DpoInputs {
        policy_preferred: a,
        reference_preferred: b,
        policy_dispreferred: c,
        reference_dispreferred: d,
        beta,
    })
}

proptest! {
    #[test]
    fn dpo_loss_is_softplus_of_negative_margin(x in inputs()) {
        let loss = dpo_loss(&x).unwrap();
        let m = dpo_margin(&x);
        let expected = (-x.beta * m).exp().ln_1p();
        prop_assert!(loss >= 0.0);
        prop_assert!((loss - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn dpo_gradient_pushes_preferred_up(x in inputs()) {
        let g = dpo_gradient(&x).unwrap();
        prop_assert!(g.policy_preferred <= 0.0);
        prop_assert!(g.policy_dispreferred >= 0.0);
        prop_assert!((g.policy_preferred + g.policy_dispreferred).abs() < 1e-12);
    }

    #[test]
    fn dpo_loss_decreases_with_margin(x in inputs(), bump in 0.1f64..5.0) {
        let better = DpoInputs { policy_preferred: x.policy_preferred + bump, ..x };
        prop_assert!(dpo_loss(&better).unwrap() <= dpo_loss(&x).unwrap());
    }
}
