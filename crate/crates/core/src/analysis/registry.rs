//! Plan-declared analyses evaluated over stored experiment outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{mean, ols_simple, pearson, sample_variance, transition_matrix, welch_t, StatResult, TransitionMatrix};
use super::tidy::TidyRow;
use crate::experiment::{AnalysisKind, AnalysisSpec, ExperimentPlan, GroupSpec};
use crate::value::{Value, ValueMap};

pub type Observations = BTreeMap<(String, u32), Vec<ValueMap>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub hypothesis: Option<String>,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: String,
    pub b: String,
    pub test: Option<StatResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub group: String,
    pub levels: Vec<(String, Value)>,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEffect {
    pub factor: String,
    pub beta_standardized: f64,
    pub r_squared: f64,
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalysisOutcome {
    CompareGroups { metric: String, summaries: Vec<GroupSummary>, tests: Vec<PairTest> },
    /// Replicate-mean trajectory of each group.
    TimeSeries { metric: String, series: Vec<(String, Vec<(u32, f64)>)> },
    FactorEffects { target: String, cells: Vec<CellSummary>, effects: Vec<FactorEffect> },
    Transitions { target: String, matrix: TransitionMatrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub id: String,
    pub kind: AnalysisKind,
    pub target: String,
    pub outcome: Option<AnalysisOutcome>,
    /// Why the analysis could not be completed.
    pub gap: Option<String>,
}

/// Final recorded value of `metric` for every (group, replicate).
pub fn final_values(tidy: &[TidyRow], metric: &str) -> BTreeMap<(String, u32), f64> {
    let mut last: BTreeMap<(String, u32), (u32, f64)> = BTreeMap::new();
    for r in tidy.iter().filter(|r| r.metric == metric) {
        let e = last.entry((r.group.clone(), r.replicate)).or_insert((r.round, r.value));
        if r.round >= e.0 {
            *e = (r.round, r.value);
        }
    }
    last.into_iter().map(|(k, (_, v))| (k, v)).collect()
}

/// Mean of `metric` over replicates at each round, per group.
pub fn replicate_mean_series(tidy: &[TidyRow], metric: &str) -> BTreeMap<String, Vec<(u32, f64)>> {
    let mut acc: BTreeMap<(String, u32), (f64, usize)> = BTreeMap::new();
    for r in tidy.iter().filter(|r| r.metric == metric) {
        let e = acc.entry((r.group.clone(), r.round)).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    let mut out: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    for ((g, round), (sum, n)) in acc {
        out.entry(g).or_default().push((round, sum / n as f64));
    }
    out
}

fn selected_groups<'a>(plan: &'a ExperimentPlan, spec: &AnalysisSpec) -> Vec<&'a GroupSpec> {
    if spec.groups.is_empty() {
        plan.groups.iter().collect()
    } else {
        plan.groups.iter().filter(|g| spec.groups.contains(&g.name)).collect()
    }
}

pub fn compare_groups(plan: &ExperimentPlan, spec: &AnalysisSpec, tidy: &[TidyRow]) -> Result<AnalysisOutcome, String> {
    let finals = final_values(tidy, &spec.target);
    let groups = selected_groups(plan, spec);
    let mut values: Vec<(&GroupSpec, Vec<f64>)> = Vec::new();
    for g in groups {
        let v: Vec<f64> = finals.iter().filter(|((name, _), _)| *name == g.name).map(|(_, v)| *v).collect();
        if v.is_empty() {
            return Err(format!("no `{}` values for group `{}`", spec.target, g.name));
        }
        values.push((g, v));
    }
    let summaries = values
        .iter()
        .map(|(g, v)| GroupSummary {
            group: g.name.clone(),
            hypothesis: g.hypothesis.clone(),
            n: v.len(),
            mean: mean(v),
            sd: (v.len() >= 2).then(|| sample_variance(v).sqrt()),
        })
        .collect();
    let mut tests = Vec::new();
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let (test, error) = match welch_t(&values[i].1, &values[j].1) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            tests.push(PairTest { a: values[i].0.name.clone(), b: values[j].0.name.clone(), test, error });
        }
    }
    Ok(AnalysisOutcome::CompareGroups { metric: spec.target.clone(), summaries, tests })
}

pub fn time_series(plan: &ExperimentPlan, spec: &AnalysisSpec, tidy: &[TidyRow]) -> Result<AnalysisOutcome, String> {
    let mut all = replicate_mean_series(tidy, &spec.target);
    let series: Vec<(String, Vec<(u32, f64)>)> =
        selected_groups(plan, spec).iter().filter_map(|g| all.remove(&g.name).map(|s| (g.name.clone(), s))).collect();
    if series.is_empty() {
        return Err(format!("metric `{}` was not recorded", spec.target));
    }
    Ok(AnalysisOutcome::TimeSeries { metric: spec.target.clone(), series })
}

/// Numeric code of each factor for `group`: the assigned value when numeric,
/// else its position among the factor's levels.
pub fn factor_codes(plan: &ExperimentPlan, group: &GroupSpec) -> Option<Vec<(String, Value, f64)>> {
    plan.factors
        .iter()
        .map(|f| {
            let v = group
                .interventions
                .iter()
                .find(|i| i.modification.field == f.field && i.selector.agent_type == f.agent_type)?
                .modification
                .value
                .clone();
            let code = match &v {
                Value::Int(_) | Value::Real(_) => v.as_real()?,
                other => f.levels.iter().position(|l| l == other)? as f64,
            };
            Some((f.name.clone(), v, code))
        })
        .collect()
}

/// Standardized effect of each factor on observation column `target`, pooled
/// over the replicates in `replicates` (all when `None`).
pub fn factor_effects(
    plan: &ExperimentPlan,
    observations: &Observations,
    target: &str,
    replicates: Option<&[u32]>,
) -> Result<AnalysisOutcome, String> {
    if plan.factors.is_empty() {
        return Err("plan declares no factors".into());
    }
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); plan.factors.len()];
    let mut y = Vec::new();
    let mut cells = Vec::new();
    for g in &plan.groups {
        let codes = factor_codes(plan, g).ok_or_else(|| format!("group `{}` does not set every factor", g.name))?;
        let mut cell = Vec::new();
        for ((name, rep), rows) in observations {
            if *name != g.name || replicates.is_some_and(|r| !r.contains(rep)) {
                continue;
            }
            for row in rows {
                let v = row
                    .get(target)
                    .and_then(Value::as_real)
                    .ok_or_else(|| format!("observation lacks numeric `{target}`"))?;
                cell.push(v);
                y.push(v);
                for (x, (_, _, c)) in xs.iter_mut().zip(&codes) {
                    x.push(*c);
                }
            }
        }
        if cell.is_empty() {
            return Err(format!("no observations for group `{}`", g.name));
        }
        cells.push(CellSummary {
            group: g.name.clone(),
            levels: codes.into_iter().map(|(n, v, _)| (n, v)).collect(),
            n: cell.len(),
            mean: mean(&cell),
        });
    }
    let mut effects = Vec::new();
    for (f, x) in plan.factors.iter().zip(&xs) {
        let ols = ols_simple(x, &y).map_err(|e| format!("factor `{}`: {e}", f.name))?;
        let p_value = pearson(x, &y).ok().and_then(|r| r.p_value);
        effects.push(FactorEffect {
            factor: f.name.clone(),
            beta_standardized: ols.beta_standardized,
            r_squared: ols.r_squared,
            p_value,
            n: ols.n,
        });
    }
    Ok(AnalysisOutcome::FactorEffects { target: target.to_string(), cells, effects })
}

/// Tercile level (0 low, 1 mid, 2 high) of each value; ties broken by position.
pub fn terciles(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; values.len()];
    for (pos, &i) in idx.iter().enumerate() {
        out[i] = pos * 3 / values.len();
    }
    out
}

/// Early-to-late tercile transitions of a cumulative quantity. Rows carry the
/// total in `target` and the early-phase share in `<target>_early`; terciles
/// are taken within each `unit` value (e.g. classroom) and phase.
pub fn phase_transitions<'a>(
    rows: impl IntoIterator<Item = &'a ValueMap>,
    target: &str,
    unit: &str,
) -> Result<TransitionMatrix, String> {
    let early_key = format!("{target}_early");
    let mut by_unit: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rows {
        let (Some(total), Some(early)) =
            (row.get(target).and_then(Value::as_real), row.get(&early_key).and_then(Value::as_real))
        else {
            continue;
        };
        let key = row.get(unit).map_or_else(String::new, ToString::to_string);
        let e = by_unit.entry(key).or_default();
        e.0.push(early);
        e.1.push(total - early);
    }
    if by_unit.is_empty() {
        return Err(format!("no observations carry `{target}` and `{early_key}`"));
    }
    let mut series = Vec::new();
    for (early, late) in by_unit.values() {
        series.extend(terciles(early).into_iter().zip(terciles(late)).map(|(a, b)| vec![a, b]));
    }
    transition_matrix(&series, 3, 1).map_err(|e| e.to_string())
}

pub fn run_analysis(plan: &ExperimentPlan, spec: &AnalysisSpec, tidy: &[TidyRow], observations: &Observations) -> AnalysisResult {
    let outcome = match spec.kind {
        AnalysisKind::CompareGroups => compare_groups(plan, spec, tidy),
        AnalysisKind::TimeSeries => time_series(plan, spec, tidy),
        AnalysisKind::FactorEffects => factor_effects(plan, observations, &spec.target, None),
        AnalysisKind::Transitions => {
            let groups = selected_groups(plan, spec);
            let rows = observations.iter().filter(|((g, _), _)| groups.iter().any(|s| &s.name == g)).flat_map(|(_, r)| r);
            phase_transitions(rows, &spec.target, "classroom")
                .map(|matrix| AnalysisOutcome::Transitions { target: spec.target.clone(), matrix })
        }
    };
    let (outcome, gap) = match outcome {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e)),
    };
    AnalysisResult { id: spec.id.clone(), kind: spec.kind, target: spec.target.clone(), outcome, gap }
}

pub fn run_analyses(plan: &ExperimentPlan, tidy: &[TidyRow], observations: &Observations) -> Vec<AnalysisResult> {
    plan.analyses.iter().map(|a| run_analysis(plan, a, tidy, observations)).collect()
}
