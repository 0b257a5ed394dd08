use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::svg::line_chart;
use crate::analysis::{replicate_mean_series, AnalysisOutcome, AnalysisResult, TidyRow};
use crate::experiment::{AnalysisKind, ExperimentManifest, ExperimentPlan, Paradigm};

pub const GAP_MARKER: &str = "**GAP**";
pub const REPORT_FILE: &str = "report.md";
pub const REQUIRED_SECTIONS: [&str; 6] = ["Research question", "Paradigm", "Methods", "Results", "Limitations", "Conclusion"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    /// Path relative to the report directory.
    pub file: String,
    pub caption: String,
    /// `None` when there was no data to draw.
    pub svg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub file: String,
    pub caption: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
    }

    fn to_markdown(&self) -> String {
        let mut s = format!("| {} |\n|{}\n", self.header.join(" | "), " --- |".repeat(self.header.len()));
        for r in &self.rows {
            let _ = writeln!(s, "| {} |", r.join(" | "));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Block {
    Text(String),
    Gap(String),
    Figure(usize),
    Table(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub blocks: Vec<Block>,
}

impl Section {
    fn new(title: &str) -> Self {
        Section { title: title.to_string(), blocks: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportScaffold {
    pub title: String,
    pub paradigm: Paradigm,
    pub sections: Vec<Section>,
    pub figures: Vec<Figure>,
    pub tables: Vec<Table>,
    pub analyses_declared: usize,
    pub analyses_completed: usize,
}

/// Four decimals, or `undefined` for non-finite values.
fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "undefined".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), num)
}

struct Builder {
    figures: Vec<Figure>,
    tables: Vec<Table>,
}

impl Builder {
    fn figure(&mut self, id: &str, caption: String, series: &[(String, Vec<(u32, f64)>)], metric: &str) -> Block {
        let pts: Vec<(String, Vec<(f64, f64)>)> =
            series.iter().map(|(g, p)| (g.clone(), p.iter().map(|&(r, v)| (f64::from(r), v)).collect())).collect();
        let svg = pts.iter().any(|(_, p)| !p.is_empty()).then(|| line_chart(&caption, "round", metric, &pts));
        self.figures.push(Figure { file: format!("figures/{id}.svg"), caption, svg });
        Block::Figure(self.figures.len() - 1)
    }

    fn table(&mut self, id: &str, caption: String, header: &[&str], rows: Vec<Vec<String>>) -> Block {
        self.tables.push(Table {
            file: format!("tables/{id}.csv"),
            caption,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
        });
        Block::Table(self.tables.len() - 1)
    }

    fn analysis(&mut self, a: &AnalysisResult, out: &mut Vec<Block>) {
        let Some(outcome) = &a.outcome else {
            out.push(Block::Gap(format!("analysis `{}` has no result: {}", a.id, a.gap.as_deref().unwrap_or("not run"))));
            return;
        };
        match outcome {
            AnalysisOutcome::CompareGroups { metric, summaries, tests } => {
                let rows = summaries
                    .iter()
                    .map(|s| {
                        vec![s.group.clone(), s.hypothesis.clone().unwrap_or_default(), s.n.to_string(), num(s.mean), opt(s.sd)]
                    })
                    .collect();
                out.push(self.table(
                    &a.id,
                    format!("Final `{metric}` by group"),
                    &["group", "hypothesis", "n", "mean", "sd"],
                    rows,
                ));
                if let Some(best) = summaries.iter().max_by(|x, y| x.mean.total_cmp(&y.mean)) {
                    out.push(Block::Text(format!(
                        "Group `{}` has the highest mean final `{metric}` ({}, n = {}).",
                        best.group,
                        num(best.mean),
                        best.n
                    )));
                }
                if !tests.is_empty() {
                    let rows = tests
                        .iter()
                        .map(|t| match &t.test {
                            Some(s) => vec![t.a.clone(), t.b.clone(), num(s.estimate), opt(s.df), opt(s.p_value)],
                            None => vec![t.a.clone(), t.b.clone(), "n/a".into(), "n/a".into(), "n/a".into()],
                        })
                        .collect();
                    out.push(self.table(
                        &format!("{}_tests", a.id),
                        format!("Welch t-tests on final `{metric}`"),
                        &["group_a", "group_b", "t", "df", "p"],
                        rows,
                    ));
                    for t in tests.iter().filter(|t| t.test.is_none()) {
                        out.push(Block::Text(format!(
                            "The test of `{}` against `{}` is undefined: {}.",
                            t.a,
                            t.b,
                            t.error.as_deref().unwrap_or("unknown")
                        )));
                    }
                }
            }
            AnalysisOutcome::TimeSeries { metric, series } => {
                out.push(self.figure(&a.id, format!("Replicate mean of `{metric}` per round"), series, metric));
                for (g, pts) in series {
                    if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
                        out.push(Block::Text(format!(
                            "`{metric}` in `{g}` moves from {} at round {} to {} at round {}.",
                            num(first.1),
                            first.0,
                            num(last.1),
                            last.0
                        )));
                    }
                }
            }
            AnalysisOutcome::FactorEffects { target, cells, effects } => {
                let mut header: Vec<&str> = vec!["group"];
                let names: Vec<String> = cells.first().map(|c| c.levels.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default();
                header.extend(names.iter().map(String::as_str));
                header.extend(["n", "mean"]);
                let rows = cells
                    .iter()
                    .map(|c| {
                        let mut r = vec![c.group.clone()];
                        r.extend(c.levels.iter().map(|(_, v)| v.to_string()));
                        r.extend([c.n.to_string(), num(c.mean)]);
                        r
                    })
                    .collect();
                out.push(self.table(&format!("{}_cells", a.id), format!("Mean `{target}` per condition"), &header, rows));
                let rows = effects
                    .iter()
                    .map(|e| vec![e.factor.clone(), num(e.beta_standardized), num(e.r_squared), opt(e.p_value), e.n.to_string()])
                    .collect();
                out.push(self.table(
                    &format!("{}_effects", a.id),
                    format!("Standardized effects on `{target}`"),
                    &["factor", "beta", "r_squared", "p", "n"],
                    rows,
                ));
                if let Some(top) = effects.iter().max_by(|x, y| x.beta_standardized.abs().total_cmp(&y.beta_standardized.abs())) {
                    out.push(Block::Text(format!(
                        "`{}` has the largest standardized effect on `{target}` (beta = {}).",
                        top.factor,
                        num(top.beta_standardized)
                    )));
                }
            }
            AnalysisOutcome::Transitions { target, matrix } => {
                let labels = ["low", "mid", "high"];
                let rows = matrix
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut row = vec![labels.get(i).map_or_else(|| i.to_string(), |l| l.to_string())];
                        match r {
                            Some(p) => row.extend(p.iter().map(|v| num(*v))),
                            None => row.extend(std::iter::repeat_n("undefined".to_string(), matrix.rows.len())),
                        }
                        row
                    })
                    .collect();
                out.push(self.table(
                    &a.id,
                    format!("Early-to-late `{target}` tercile transitions"),
                    &["from", "to_low", "to_mid", "to_high"],
                    rows,
                ));
                let diag: Vec<f64> = matrix.rows.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|p| p[i])).collect();
                if !diag.is_empty() {
                    out.push(Block::Text(format!(
                        "Mean probability of staying in the same tercile: {}.",
                        num(diag.iter().sum::<f64>() / diag.len() as f64)
                    )));
                }
            }
        }
    }
}

fn priority(paradigm: Paradigm, kind: AnalysisKind) -> u8 {
    let lead = match paradigm {
        Paradigm::Deductive => AnalysisKind::CompareGroups,
        Paradigm::Inductive => AnalysisKind::TimeSeries,
        Paradigm::Abductive => AnalysisKind::FactorEffects,
    };
    u8::from(kind != lead)
}

/// Lay out a report. Figures and tables are carried in the scaffold and
/// written by [`ReportScaffold::emit`].
pub fn build_report(
    plan: &ExperimentPlan,
    manifest: &ExperimentManifest,
    tidy: &[TidyRow],
    analyses: &[AnalysisResult],
) -> ReportScaffold {
    let mut b = Builder { figures: Vec::new(), tables: Vec::new() };
    let mut question = Section::new("Research question");
    if plan.context.question.trim().is_empty() {
        question.blocks.push(Block::Gap("the plan states no research question".into()));
    } else {
        question.blocks.push(Block::Text(plan.context.question.trim().to_string()));
    }

    let mut paradigm = Section::new("Paradigm");
    paradigm.blocks.push(Block::Text(match plan.paradigm {
        Paradigm::Deductive => "Deductive design. Each group encodes one competing hypothesis and the groups are compared on the declared metrics.".into(),
        Paradigm::Inductive => "Inductive design. The runs are observed without a guiding hypothesis and the report follows the emergent metric trajectories.".into(),
        Paradigm::Abductive => format!(
            "Abductive design. A full factorial over {} is run so that candidate mechanisms can be read off the factor effects.",
            plan.factors.iter().map(|f| format!("`{}`", f.name)).collect::<Vec<_>>().join(" and ")
        ),
    }));

    let mut methods = Section::new("Methods");
    methods.blocks.push(Block::Text(format!(
        "Scenario `{}`; {} group(s) x {} replicate(s); base seed {}.",
        manifest.scenario,
        plan.groups.len(),
        plan.replicates,
        plan.base_seed
    )));
    let rows = plan
        .groups
        .iter()
        .map(|g| {
            let ivs: Vec<String> = g
                .interventions
                .iter()
                .map(|i| {
                    let who = i.selector.agent_type.as_deref().unwrap_or("all agents");
                    let filter = i
                        .selector
                        .predicate
                        .as_ref()
                        .map(|p| format!(" where {} {:?} {:?}", p.field, p.op, p.value))
                        .unwrap_or_default();
                    format!("{}% of {who}{filter}: {} = {}", i.selector.percentage, i.modification.field, i.modification.value)
                })
                .collect();
            vec![g.name.clone(), g.hypothesis.clone().unwrap_or_default(), ivs.join("; ")]
        })
        .collect();
    methods.blocks.push(b.table("groups", "Groups and interventions".into(), &["group", "hypothesis", "interventions"], rows));
    let rows = manifest
        .runs
        .iter()
        .map(|r| {
            vec![r.group.clone(), r.replicate.to_string(), r.seed.to_string(), r.rounds.to_string(), format!("{:?}", r.stopped_by)]
        })
        .collect();
    methods.blocks.push(b.table("runs", "Runs".into(), &["group", "replicate", "seed", "rounds", "stopped_by"], rows));

    let mut results = Section::new("Results");
    let mut ordered: Vec<&AnalysisResult> = analyses.iter().collect();
    ordered.sort_by_key(|a| priority(plan.paradigm, a.kind));
    for a in &ordered {
        results.blocks.push(Block::Text(format!("### {}", a.id)));
        b.analysis(a, &mut results.blocks);
    }
    if plan.paradigm == Paradigm::Inductive {
        let covered: Vec<&str> =
            analyses.iter().filter(|a| a.kind == AnalysisKind::TimeSeries).map(|a| a.target.as_str()).collect();
        for metric in plan.metrics.iter().filter(|m| !covered.contains(&m.as_str())) {
            let series: Vec<_> = replicate_mean_series(tidy, metric).into_iter().collect();
            results.blocks.push(Block::Text(format!("### {metric}")));
            results.blocks.push(b.figure(&format!("emergent_{metric}"), format!("Replicate mean of `{metric}` per round"), &series, metric));
        }
    }
    if analyses.is_empty() {
        results.blocks.push(Block::Gap("no analyses were supplied".into()));
    }

    let mut limitations = Section::new("Limitations");
    limitations.blocks.push(Block::Text(
        "Agents follow the scenario decision rules; populations are synthetic draws from the scenario generator.".into(),
    ));
    if manifest.failures.is_empty() {
        limitations.blocks.push(Block::Text(format!("All {} runs completed.", manifest.runs.len())));
    } else {
        for f in &manifest.failures {
            limitations
                .blocks
                .push(Block::Text(format!("Run `{}`/{} (seed {}) aborted: {}.", f.group, f.replicate, f.seed, f.error)));
        }
    }

    let mut conclusion = Section::new("Conclusion");
    if analyses.is_empty() {
        conclusion.blocks.push(Block::Gap("nothing to conclude without analyses".into()));
    }
    for a in &ordered {
        conclusion.blocks.push(Block::Text(format!("- [ ] Interpretation of `{}` pending author review.", a.id)));
    }

    ReportScaffold {
        title: format!("Report: {}", plan.name),
        paradigm: plan.paradigm,
        sections: vec![question, paradigm, methods, results, limitations, conclusion],
        figures: b.figures,
        tables: b.tables,
        analyses_declared: analyses.len(),
        analyses_completed: analyses.iter().filter(|a| a.outcome.is_some()).count(),
    }
}

impl ReportScaffold {
    pub fn gap_count(&self) -> usize {
        self.sections.iter().flat_map(|s| &s.blocks).filter(|b| matches!(b, Block::Gap(_))).count()
            + self.figures.iter().filter(|f| f.svg.is_none()).count()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("# {}\n", self.title);
        for sec in &self.sections {
            let _ = write!(s, "\n## {}\n", sec.title);
            for block in &sec.blocks {
                s.push('\n');
                match block {
                    Block::Text(t) => {
                        s.push_str(t);
                        s.push('\n');
                    }
                    Block::Gap(reason) => {
                        let _ = writeln!(s, "{GAP_MARKER}: {reason}");
                    }
                    Block::Figure(i) => {
                        let f = &self.figures[*i];
                        match f.svg {
                            Some(_) => {
                                let _ = writeln!(s, "![{}]({})", f.caption, f.file);
                            }
                            None => {
                                let _ = writeln!(s, "{GAP_MARKER}: figure `{}` has no data", f.file);
                            }
                        }
                    }
                    Block::Table(i) => {
                        let t = &self.tables[*i];
                        let _ = writeln!(s, "{} ([csv]({}))\n", t.caption, t.file);
                        s.push_str(&t.to_markdown());
                    }
                }
            }
        }
        s
    }

    /// Write figures, tables and `report.md` under `dir`.
    pub fn emit(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir.join("figures"))?;
        fs::create_dir_all(dir.join("tables"))?;
        for f in &self.figures {
            if let Some(svg) = &f.svg {
                fs::write(dir.join(&f.file), svg)?;
            }
        }
        for t in &self.tables {
            fs::write(dir.join(&t.file), t.to_csv())?;
        }
        let path = dir.join(REPORT_FILE);
        fs::write(&path, self.to_markdown())?;
        Ok(path)
    }

    /// Relative paths linked from the Markdown that do not exist under `dir`.
    pub fn dangling_links(&self, dir: &Path) -> Vec<String> {
        let md = self.to_markdown();
        let mut missing = Vec::new();
        for part in md.split("](").skip(1) {
            if let Some(end) = part.find(')') {
                let link = &part[..end];
                if !dir.join(link).exists() {
                    missing.push(link.to_string());
                }
            }
        }
        missing
    }
}
