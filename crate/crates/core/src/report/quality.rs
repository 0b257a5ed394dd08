use serde::{Deserialize, Serialize};

use super::scaffold::{Block, ReportScaffold, REQUIRED_SECTIONS};

/// Minimum score on every dimension for a report to pass.
pub const PASS_THRESHOLD: u8 = 3;
pub const MAX_SCORE: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScores {
    pub technical_rigor: u8,
    pub clarity: u8,
    pub validation: u8,
    pub writing_quality: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityCheck {
    pub scores: QualityScores,
    pub passed: bool,
    pub notes: Vec<String>,
}

fn undefined_stats(report: &ReportScaffold) -> usize {
    let in_tables = report.tables.iter().flat_map(|t| &t.rows).flatten().filter(|c| *c == "undefined").count();
    let in_text = report
        .sections
        .iter()
        .flat_map(|s| &s.blocks)
        .filter_map(|b| match b {
            Block::Text(t) => Some(t.matches("undefined").count()),
            _ => None,
        })
        .sum::<usize>();
    in_tables + in_text
}

fn clamp(v: i64) -> u8 {
    v.clamp(0, i64::from(MAX_SCORE)) as u8
}

/// Score a report on four 0..=5 dimensions.
///
/// * technical rigor: floor(5 x completed / declared analyses)
/// * clarity: floor(5 x non-empty required sections / 6)
/// * validation: 5 minus 2 per figure without data
/// * writing quality: 5 minus one per gap marker and per undefined statistic
///
/// A report with no sections or no completed analysis scores 0 everywhere.
pub fn check_quality(report: &ReportScaffold) -> QualityCheck {
    let mut notes = Vec::new();
    if report.sections.is_empty() || report.analyses_completed == 0 {
        notes.push("no sections or no completed analysis".to_string());
        let zero = QualityScores { technical_rigor: 0, clarity: 0, validation: 0, writing_quality: 0 };
        return QualityCheck { scores: zero, passed: false, notes };
    }
    let rigor = 5 * report.analyses_completed / report.analyses_declared.max(1);
    if report.analyses_completed < report.analyses_declared {
        notes.push(format!("{} of {} analyses completed", report.analyses_completed, report.analyses_declared));
    }
    let present = REQUIRED_SECTIONS
        .iter()
        .filter(|name| report.sections.iter().any(|s| s.title == **name && !s.is_empty()))
        .count();
    for name in REQUIRED_SECTIONS.iter().filter(|name| !report.sections.iter().any(|s| s.title == **name && !s.is_empty())) {
        notes.push(format!("section `{name}` missing or empty"));
    }
    let missing_figures = report.figures.iter().filter(|f| f.svg.is_none()).count();
    if missing_figures > 0 {
        notes.push(format!("{missing_figures} figure(s) without data"));
    }
    let gaps = report.gap_count();
    let undefined = undefined_stats(report);
    if gaps > 0 {
        notes.push(format!("{gaps} gap marker(s)"));
    }
    if undefined > 0 {
        notes.push(format!("{undefined} undefined statistic(s)"));
    }
    let scores = QualityScores {
        technical_rigor: clamp(rigor as i64),
        clarity: clamp((5 * present / REQUIRED_SECTIONS.len()) as i64),
        validation: clamp(5 - 2 * missing_figures as i64),
        writing_quality: clamp(5 - gaps as i64 - undefined as i64),
    };
    let passed = [scores.technical_rigor, scores.clarity, scores.validation, scores.writing_quality]
        .iter()
        .all(|&s| s >= PASS_THRESHOLD);
    QualityCheck { scores, passed, notes }
}
