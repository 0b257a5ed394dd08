//! Line-delimited JSON datasets for supervised and preference fine-tuning.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::FeedbackTuple;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpoRecord {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

/// A refined response preferred over the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    pub prompt: String,
    pub preferred: String,
    pub dispreferred: String,
}

pub fn preference_pairs(tuples: &[FeedbackTuple]) -> Vec<PreferencePair> {
    tuples
        .iter()
        .filter_map(|t| {
            let refined = t.refined.as_ref()?;
            (refined != &t.response).then(|| PreferencePair {
                prompt: t.prompt.clone(),
                preferred: refined.clone(),
                dispreferred: t.response.clone(),
            })
        })
        .collect()
}

fn lines<T: Serialize>(records: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// One `{prompt, completion}` line per refined tuple.
pub fn emit_sft_dataset(tuples: &[FeedbackTuple]) -> String {
    lines(tuples.iter().filter_map(|t| {
        t.refined.as_ref().map(|r| SftRecord { prompt: t.prompt.clone(), completion: r.clone() })
    }))
}

/// One `{prompt, chosen, rejected}` line per refined tuple.
pub fn emit_dpo_dataset(tuples: &[FeedbackTuple]) -> String {
    lines(preference_pairs(tuples).into_iter().map(|p| DpoRecord {
        prompt: p.prompt,
        chosen: p.preferred,
        rejected: p.dispreferred,
    }))
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

pub fn parse_sft_dataset(text: &str) -> Result<Vec<SftRecord>, serde_json::Error> {
    parse(text)
}

pub fn parse_dpo_dataset(text: &str) -> Result<Vec<DpoRecord>, serde_json::Error> {
    parse(text)
}

/// Persist tuples for human review; edited files are read back with [`read_tuples`].
pub fn write_tuples(path: &Path, tuples: &[FeedbackTuple]) -> io::Result<()> {
    fs::write(path, lines(tuples.iter()))
}

pub fn read_tuples(path: &Path) -> io::Result<Vec<FeedbackTuple>> {
    let text = fs::read_to_string(path)?;
    parse(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
