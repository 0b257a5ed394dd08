//! On-disk layout: `<out>/<group>/<replicate>/{metrics.csv, events.log,
//! observations.jsonl, manifest.json}` plus a top-level `manifest.json` and
//! `tidy.csv` covering every run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::plan::ExperimentPlan;
use super::run::{ResultSet, RunFailure, RunRecord};
use crate::analysis::{read_tidy_csv, tidy_rows, write_tidy_csv, TidyRow};
use crate::kernel::{write_event_log, StopReason};
use crate::value::ValueMap;
use crate::vr2t::TranscriptRecord;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVENTS_FILE: &str = "events.log";
pub const OBSERVATIONS_FILE: &str = "observations.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const TIDY_FILE: &str = "tidy.csv";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, text: &str) -> Result<(), OutputError> {
    fs::write(path, text).map_err(io_err(path))
}

fn read(path: &Path) -> Result<String, OutputError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>, OutputError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| OutputError::Format { path: path.to_path_buf(), message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub group: String,
    pub replicate: u32,
    pub seed: u64,
    pub population_seed: u64,
    pub scenario: String,
    pub rounds: u32,
    pub stopped_by: StopReason,
    pub modified_agents: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub plan: ExperimentPlan,
    pub scenario: String,
    pub runs: Vec<RunManifest>,
    pub failures: Vec<RunFailure>,
}

pub fn run_dir(out: &Path, group: &str, replicate: u32) -> PathBuf {
    out.join(group).join(replicate.to_string())
}

/// Write one run's files and return its manifest.
pub fn write_run(out: &Path, run: &RunRecord) -> Result<RunManifest, OutputError> {
    let dir = run_dir(out, &run.group, run.replicate);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join(METRICS_FILE), &write_tidy_csv(&tidy_rows(&run.group, run.replicate, &run.result)))?;
    write(&dir.join(EVENTS_FILE), &write_event_log(&run.result.events))?;
    write(&dir.join(OBSERVATIONS_FILE), &jsonl(&run.observations))?;
    let mut files = vec![METRICS_FILE.to_string(), EVENTS_FILE.to_string(), OBSERVATIONS_FILE.to_string()];
    if !run.result.transcripts.is_empty() {
        write(&dir.join(TRANSCRIPTS_FILE), &jsonl(&run.result.transcripts))?;
        files.push(TRANSCRIPTS_FILE.to_string());
    }
    let manifest = RunManifest {
        group: run.group.clone(),
        replicate: run.replicate,
        seed: run.seed,
        population_seed: run.population_seed,
        scenario: run.result.scenario.clone(),
        rounds: run.result.rounds.len() as u32,
        stopped_by: run.result.stopped_by,
        modified_agents: run.modified_agents,
        files,
    };
    write(&dir.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;
    Ok(manifest)
}

pub fn write_result_set(out: &Path, set: &ResultSet) -> Result<ExperimentManifest, OutputError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let runs = set.runs.iter().map(|r| write_run(out, r)).collect::<Result<Vec<_>, _>>()?;
    write(&out.join(TIDY_FILE), &write_tidy_csv(&set.tidy_rows()))?;
    let manifest =
        ExperimentManifest { plan: set.plan.clone(), scenario: set.scenario.clone(), runs, failures: set.failures.clone() };
    write(&out.join(MANIFEST_FILE), &(serde_json::to_string_pretty(&manifest).expect("serializable") + "\n"))?;
    Ok(manifest)
}

/// A results directory read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedResults {
    pub root: PathBuf,
    pub manifest: ExperimentManifest,
    pub tidy: Vec<TidyRow>,
    pub observations: BTreeMap<(String, u32), Vec<ValueMap>>,
}

impl LoadedResults {
    pub fn transcripts(&self, group: &str, replicate: u32) -> Result<Vec<TranscriptRecord>, OutputError> {
        let path = run_dir(&self.root, group, replicate).join(TRANSCRIPTS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        parse_jsonl(&path, &read(&path)?)
    }
}

pub fn load_results(root: &Path) -> Result<LoadedResults, OutputError> {
    let path = root.join(MANIFEST_FILE);
    let manifest: ExperimentManifest = serde_json::from_str(&read(&path)?)
        .map_err(|e| OutputError::Format { path: path.clone(), message: e.to_string() })?;
    let tidy_path = root.join(TIDY_FILE);
    let tidy = read_tidy_csv(&read(&tidy_path)?)
        .map_err(|e| OutputError::Format { path: tidy_path, message: e.to_string() })?;
    let mut observations = BTreeMap::new();
    for run in &manifest.runs {
        let path = run_dir(root, &run.group, run.replicate).join(OBSERVATIONS_FILE);
        let rows = if path.exists() { parse_jsonl(&path, &read(&path)?)? } else { Vec::new() };
        observations.insert((run.group.clone(), run.replicate), rows);
    }
    Ok(LoadedResults { root: root.to_path_buf(), manifest, tidy, observations })
}
