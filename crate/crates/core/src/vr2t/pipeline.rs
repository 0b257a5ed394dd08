use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{parse_action_text, DecisionResponse, RemoteBackend, SKIP_ACTION};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// One decision as it was put to a backend and answered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: u32,
    pub agent: u64,
    pub node: String,
    pub prompt: String,
    pub response: String,
    pub allowed_actions: Vec<String>,
    /// Payload fields the edge of the chosen action declares.
    #[serde(default)]
    pub required_fields: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ActionValid,
    SchemaConforms,
    LengthBounds,
}

impl Check {
    pub fn as_str(&self) -> &'static str {
        match self {
            Check::ActionValid => "action_valid",
            Check::SchemaConforms => "schema_conforms",
            Check::LengthBounds => "length_bounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub failed: Vec<Check>,
}

pub trait Verifier: Sync {
    fn verify(&self, record: &TranscriptRecord) -> Verdict;
}

pub trait Reasoner: Sync {
    fn explain(&self, record: &TranscriptRecord, verdict: &Verdict) -> String;
}

pub trait Refiner: Sync {
    fn refine(&self, record: &TranscriptRecord, verdict: &Verdict) -> Result<String, String>;
}

/// Weighted mechanical checks. Weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleScorer {
    pub action_weight: f64,
    pub schema_weight: f64,
    pub length_weight: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for RuleScorer {
    fn default() -> Self {
        RuleScorer { action_weight: 0.4, schema_weight: 0.4, length_weight: 0.2, min_len: 8, max_len: 1000 }
    }
}

fn action_of(record: &TranscriptRecord) -> Option<DecisionResponse> {
    parse_action_text(&record.response)
}

fn action_ok(record: &TranscriptRecord, parsed: Option<&DecisionResponse>) -> bool {
    parsed.is_some_and(|r| r.action_name == SKIP_ACTION || record.allowed_actions.contains(&r.action_name))
}

fn schema_ok(record: &TranscriptRecord, parsed: Option<&DecisionResponse>) -> bool {
    match parsed {
        Some(r) if r.action_name == SKIP_ACTION => true,
        Some(r) => record.required_fields.iter().all(|f| r.payload.contains_key(f)),
        None => false,
    }
}

impl Verifier for RuleScorer {
    fn verify(&self, record: &TranscriptRecord) -> Verdict {
        let parsed = action_of(record);
        let len = record.response.chars().count();
        let mut score = 0.0;
        let mut failed = Vec::new();
        for (check, ok, w) in [
            (Check::ActionValid, action_ok(record, parsed.as_ref()), self.action_weight),
            (Check::SchemaConforms, schema_ok(record, parsed.as_ref()), self.schema_weight),
            (Check::LengthBounds, (self.min_len..=self.max_len).contains(&len), self.length_weight),
        ] {
            if ok {
                score += w;
            } else {
                failed.push(check);
            }
        }
        Verdict { score: score.clamp(0.0, 1.0), failed }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleReasoner;

impl Reasoner for RuleReasoner {
    fn explain(&self, record: &TranscriptRecord, verdict: &Verdict) -> String {
        if verdict.failed.is_empty() {
            return "all checks passed".to_string();
        }
        let parts: Vec<String> = verdict
            .failed
            .iter()
            .map(|c| match c {
                Check::ActionValid => format!(
                    "response does not name one of the allowed actions ({})",
                    record.allowed_actions.join(", ")
                ),
                Check::SchemaConforms => {
                    format!("payload lacks required fields ({})", record.required_fields.join(", "))
                }
                Check::LengthBounds => "response length is out of bounds".to_string(),
            })
            .collect();
        parts.join("; ")
    }
}

/// Rewrites a response into the canonical `ACTION:` form: keeps a valid action
/// (else the first allowed one), keeps known payload values and fills missing
/// required fields with `unknown`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleRefiner;

impl Refiner for RuleRefiner {
    fn refine(&self, record: &TranscriptRecord, _verdict: &Verdict) -> Result<String, String> {
        let parsed = action_of(record);
        let action = match &parsed {
            Some(r) if action_ok(record, Some(r)) => r.action_name.clone(),
            _ => record
                .allowed_actions
                .first()
                .cloned()
                .ok_or_else(|| "no allowed action to refine towards".to_string())?,
        };
        let mut refined = DecisionResponse::action(&action);
        if action != SKIP_ACTION {
            for f in &record.required_fields {
                let v = parsed
                    .as_ref()
                    .and_then(|p| p.payload.get(f).cloned())
                    .unwrap_or_else(|| "unknown".into());
                refined.payload.insert(f.clone(), v);
            }
        }
        let text = refined.to_text();
        if text == record.response {
            return Err("refinement reproduces the original response".to_string());
        }
        Ok(text)
    }
}

/// Scores with a remote model: the reply must contain `SCORE: <0..1>`.
pub struct JudgeScorer {
    pub backend: RemoteBackend,
    pub template: String,
}

impl Verifier for JudgeScorer {
    fn verify(&self, record: &TranscriptRecord) -> Verdict {
        let prompt = self.template.replace("{prompt}", &record.prompt).replace("{response}", &record.response);
        let score = self
            .backend
            .complete(&prompt, record.agent ^ u64::from(record.round))
            .ok()
            .and_then(|text| {
                text.lines()
                    .find_map(|l| l.trim().strip_prefix("SCORE:").and_then(|s| s.trim().parse::<f64>().ok()))
            })
            .filter(|s| s.is_finite())
            .map_or(0.0, |s| s.clamp(0.0, 1.0));
        Verdict { score, failed: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackTuple {
    pub prompt: String,
    pub response: String,
    pub score: f64,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<String>,
    /// Set when the record fell below threshold but refinement failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_error: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
}

/// Score every record, explain it, and refine exactly those scoring below `theta`.
pub fn run_pipeline(
    records: &[TranscriptRecord],
    theta: f64,
    verifier: &dyn Verifier,
    reasoner: &dyn Reasoner,
    refiner: &dyn Refiner,
) -> Result<Vec<FeedbackTuple>, PipelineError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(PipelineError::Threshold(theta));
    }
    Ok(records
        .par_iter()
        .map(|rec| {
            let verdict = verifier.verify(rec);
            let explanation = reasoner.explain(rec, &verdict);
            let (refined, refine_error) = if verdict.score < theta {
                match refiner.refine(rec, &verdict) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e)),
                }
            } else {
                (None, None)
            };
            FeedbackTuple {
                prompt: rec.prompt.clone(),
                response: rec.response.clone(),
                score: verdict.score,
                explanation,
                refined,
                refine_error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(response: &str) -> TranscriptRecord {
        TranscriptRecord {
            round: 1,
            agent: 0,
            node: "select_partner".into(),
            prompt: "choose".into(),
            response: response.into(),
            allowed_actions: vec!["interact".into()],
            required_fields: vec!["partner".into()],
        }
    }

    #[test]
    fn scorer_weights() {
        let s = RuleScorer::default();
        assert_eq!(s.verify(&record("ACTION: interact\npartner: 3")).score, 1.0);
        let v = s.verify(&record("ACTION: interact"));
        assert!((v.score - 0.6).abs() < 1e-12);
        assert_eq!(v.failed, vec![Check::SchemaConforms]);
        assert!((s.verify(&record("ACTION: fly\npartner: 1")).score - 0.6).abs() < 1e-12);
        assert_eq!(s.verify(&record("ACTION: skip")).score, 1.0);
    }

    #[test]
    fn refiner_repairs() {
        let r = RuleRefiner.refine(&record("ACTION: fly\npartner: 4"), &Verdict { score: 0.2, failed: vec![] }).unwrap();
        assert_eq!(r, "ACTION: interact\npartner: 4");
        let r = RuleRefiner.refine(&record("hmm"), &Verdict { score: 0.0, failed: vec![] }).unwrap();
        assert_eq!(r, "ACTION: interact\npartner: unknown");
        assert!(RuleRefiner.refine(&record("ACTION: interact\npartner: 4"), &Verdict { score: 0.0, failed: vec![] }).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let recs = vec![record("ACTION: interact"), record("nonsense"), record("ACTION: interact\npartner: 1")];
        let none = run_pipeline(&recs, 0.0, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
        assert!(none.iter().all(|t| t.refined.is_none()));
        let all = run_pipeline(&recs[..2], 1.0, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).unwrap();
        assert!(all.iter().all(|t| t.refined.is_some()));
        assert!(run_pipeline(&recs, 1.5, &RuleScorer::default(), &RuleReasoner, &RuleRefiner).is_err());
    }
}
