//! Experiment harness: paradigm selection, group interventions, seeded
//! replication and result storage.

mod intervene;
mod output;
mod plan;
mod run;

pub use intervene::{apply_interventions, check_intervention, selected_count, InterventionError};
pub use output::{
    load_results, run_dir, write_result_set, write_run, ExperimentManifest, LoadedResults, OutputError, RunManifest,
    EVENTS_FILE, MANIFEST_FILE, METRICS_FILE, OBSERVATIONS_FILE, TIDY_FILE, TRANSCRIPTS_FILE,
};
pub use plan::{
    factorial_groups, parse_plan, select_paradigm, AnalysisKind, AnalysisSpec, CmpOp, ExperimentPlan, Factor, GroupSpec,
    InterventionSpec, Modification, Operand, Paradigm, PlanError, Predicate, ResearchContext, Selector,
};
pub use run::{
    population_seed, run_experiment, ExecutionMode, ExperimentError, ResultSet, RunFailure, RunOptions, RunRecord,
    POPULATION_STREAM,
};
