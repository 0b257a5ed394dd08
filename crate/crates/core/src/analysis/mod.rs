//! Metric computations over simulation outputs and a small statistics registry.

mod culture;
mod registry;
mod stats;
mod tidy;

pub use culture::{
    adjacent_pairs, cluster_sizes, diversity, diversity_vectors, dominant_share, high_sim_fraction,
    identical_pair_count, local_convergence, similarity, CultureGrid, MetricError,
};
pub use stats::{
    mean, ols_simple, pearson, ranks, rmse, sample_variance, spearman, transition_matrix, welch_t, OlsResult,
    StatError, StatResult, TransitionMatrix,
};
pub use tidy::{read_tidy_csv, tidy_rows, write_tidy_csv, TidyRow};
pub use registry::{
    compare_groups, factor_codes, factor_effects, final_values, phase_transitions, replicate_mean_series, run_analyses,
    run_analysis, terciles, time_series, AnalysisOutcome, AnalysisResult, CellSummary, FactorEffect, GroupSummary,
    Observations, PairTest,
};
