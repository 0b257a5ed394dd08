//! Report scaffolds built from experiment results.

mod quality;
mod scaffold;
pub mod svg;

use std::fs;
use std::path::Path;

use thiserror::Error;

pub use quality::{check_quality, QualityCheck, QualityScores, MAX_SCORE, PASS_THRESHOLD};
pub use scaffold::{build_report, Block, Figure, ReportScaffold, Section, Table, GAP_MARKER, REPORT_FILE, REQUIRED_SECTIONS};

use crate::analysis::run_analyses;
use crate::experiment::{load_results, OutputError};

pub const QUALITY_FILE: &str = "quality.json";
pub const ANALYSES_FILE: &str = "analyses.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Results(#[from] OutputError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub scaffold: ReportScaffold,
    pub quality: QualityCheck,
    /// False when the quality check failed and `force` was not set.
    pub emitted: bool,
}

/// Load an experiment directory, run its declared analyses and write the
/// report into `out`. The analyses and the quality check are always written;
/// the report itself only if the check passed or `force` is set.
pub fn report_from_dir(results: &Path, out: &Path, force: bool) -> Result<ReportOutput, ReportError> {
    let loaded = load_results(results)?;
    let plan = &loaded.manifest.plan;
    let analyses = run_analyses(plan, &loaded.tidy, &loaded.observations);
    let scaffold = build_report(plan, &loaded.manifest, &loaded.tidy, &analyses);
    let quality = check_quality(&scaffold);
    fs::create_dir_all(out)?;
    let emitted = quality.passed || force;
    if emitted {
        scaffold.emit(out)?;
    }
    fs::write(out.join(ANALYSES_FILE), serde_json::to_string_pretty(&analyses)?)?;
    fs::write(out.join(QUALITY_FILE), serde_json::to_string_pretty(&quality)?)?;
    Ok(ReportOutput { scaffold, quality, emitted })
}
