use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::intervene::{apply_interventions, check_intervention, InterventionError};
use super::plan::ExperimentPlan;
use crate::analysis::{tidy_rows, TidyRow};
use crate::distributed::{run_simulation_distributed, DistributedConfig};
use crate::kernel::{ExecOptions, LocalExecutor, ScenarioRuntime, Simulation, SimulationResult};
use crate::seed::group_replicate_seed;
use crate::value::ValueMap;

/// Group name reserved for deriving the population seed shared by all groups.
pub const POPULATION_STREAM: &str = "__population__";

/// Seed for generating replicate `replicate`'s population. It does not depend
/// on the group, so groups of one replicate differ only by their interventions.
pub fn population_seed(base_seed: u64, replicate: u32) -> u64 {
    group_replicate_seed(base_seed, POPULATION_STREAM, replicate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Local,
    /// In-process master with this many loopback workers.
    Distributed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: ExecutionMode,
    /// Run groups and replicates concurrently.
    pub parallel_runs: bool,
    pub record_transcripts: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { mode: ExecutionMode::Local, parallel_runs: true, record_transcripts: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub group: String,
    pub replicate: u32,
    pub seed: u64,
    pub population_seed: u64,
    pub modified_agents: usize,
    pub result: SimulationResult,
    pub observations: Vec<ValueMap>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub group: String,
    pub replicate: u32,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Intervention(#[from] InterventionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub plan: ExperimentPlan,
    pub scenario: String,
    /// In plan group order, then replicate.
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl ResultSet {
    pub fn run(&self, group: &str, replicate: u32) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.group == group && r.replicate == replicate)
    }

    pub fn group_runs<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.group == group)
    }

    /// Values of `metric` keyed by (group, replicate, round).
    pub fn metric_series(&self, metric: &str) -> BTreeMap<(String, u32, u32), f64> {
        let mut out = BTreeMap::new();
        for r in &self.runs {
            for (round, m) in r.result.series() {
                if let Some(v) = m.get(metric) {
                    out.insert((r.group.clone(), r.replicate, round), *v);
                }
            }
        }
        out
    }

    pub fn tidy_rows(&self) -> Vec<TidyRow> {
        self.runs.iter().flat_map(|r| tidy_rows(&r.group, r.replicate, &r.result)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_one(
    plan: &ExperimentPlan,
    runtime: &Arc<ScenarioRuntime>,
    group_index: usize,
    replicate: u32,
    options: &RunOptions,
) -> Result<RunRecord, RunFailure> {
    let group = &plan.groups[group_index];
    let seed = group_replicate_seed(plan.base_seed, &group.name, replicate);
    let population_seed = population_seed(plan.base_seed, replicate);
    let fail = |error: String| RunFailure { group: group.name.clone(), replicate, seed, error };
    let mut population = runtime.model.populate(&runtime.spec, population_seed).map_err(|e| fail(e.to_string()))?;
    let modified = apply_interventions(&mut population, &runtime.spec, group).map_err(|e| fail(e.to_string()))?;
    let mut sim = Simulation::new(runtime.clone(), population, seed).map_err(|e| fail(e.to_string()))?;
    if let Some(rounds) = plan.rounds {
        sim.set_max_rounds(rounds);
    }
    let result = match options.mode {
        ExecutionMode::Local => {
            let mut exec = LocalExecutor {
                options: ExecOptions { parallel: true, record_transcripts: options.record_transcripts },
            };
            sim.run(&mut exec).map_err(|e| fail(e.to_string()))?
        }
        ExecutionMode::Distributed(workers) => {
            let config = DistributedConfig {
                record_transcripts: options.record_transcripts,
                ..DistributedConfig::with_workers(workers)
            };
            run_simulation_distributed(sim, &config).map_err(|e| fail(e.to_string()))?
        }
    };
    let observations = runtime.model.observations(&result);
    Ok(RunRecord {
        group: group.name.clone(),
        replicate,
        seed,
        population_seed,
        modified_agents: modified.len(),
        result,
        observations,
    })
}

/// Run every (group, replicate) of `plan`. Aborted runs are collected in
/// `failures`; the rest of the set is still returned.
pub fn run_experiment(
    plan: &ExperimentPlan,
    runtime: Arc<ScenarioRuntime>,
    options: &RunOptions,
) -> Result<ResultSet, ExperimentError> {
    for g in &plan.groups {
        for i in &g.interventions {
            check_intervention(&runtime.spec, &g.name, i)?;
        }
    }
    let jobs: Vec<(usize, u32)> =
        (0..plan.groups.len()).flat_map(|g| (0..plan.replicates).map(move |r| (g, r))).collect();
    let parallel = options.parallel_runs && options.mode == ExecutionMode::Local;
    let outcomes: Vec<Result<RunRecord, RunFailure>> = if parallel {
        jobs.par_iter().map(|&(g, r)| run_one(plan, &runtime, g, r, options)).collect()
    } else {
        jobs.iter().map(|&(g, r)| run_one(plan, &runtime, g, r, options)).collect()
    };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(ResultSet { plan: plan.clone(), scenario: runtime.spec.name.clone(), runs, failures })
}
