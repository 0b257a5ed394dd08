//! Experiment plans: groups, interventions and replication settings.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Inductive,
    Deductive,
    Abductive,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Inductive => "inductive",
            Paradigm::Deductive => "deductive",
            Paradigm::Abductive => "abductive",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResearchContext {
    #[serde(default)]
    pub question: String,
    #[serde(default)]
    pub has_competing_theories: bool,
    #[serde(default)]
    pub has_unexplained_observation: bool,
    #[serde(default)]
    pub has_prior_theory: bool,
}

/// Competing theories call for deduction, an unexplained observation for
/// abduction, and anything else for induction.
pub fn select_paradigm(ctx: &ResearchContext) -> Paradigm {
    if ctx.has_competing_theories {
        Paradigm::Deductive
    } else if ctx.has_unexplained_observation {
        Paradigm::Abductive
    } else {
        Paradigm::Inductive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "in")]
    In,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    One(Value),
    Many(Vec<Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub field: String,
    pub op: CmpOp,
    pub value: Operand,
}

fn numeric_cmp(a: &Value, b: &Value) -> Option<std::cmp::Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        _ => a.as_real()?.partial_cmp(&b.as_real()?),
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        _ => numeric_cmp(a, b) == Some(std::cmp::Ordering::Equal),
    }
}

impl Predicate {
    pub fn matches(&self, value: &Value) -> bool {
        use std::cmp::Ordering;
        match (self.op, &self.value) {
            (CmpOp::Eq, Operand::One(v)) => values_equal(value, v),
            (CmpOp::Lt, Operand::One(v)) => numeric_cmp(value, v) == Some(Ordering::Less),
            (CmpOp::Gt, Operand::One(v)) => numeric_cmp(value, v) == Some(Ordering::Greater),
            (CmpOp::In, Operand::Many(vs)) => vs.iter().any(|v| values_equal(value, v)),
            _ => false,
        }
    }
}

fn hundred() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub agent_type: Option<String>,
    pub predicate: Option<Predicate>,
    /// Share of the matching agents to modify, in (0, 100].
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modification {
    pub field: String,
    pub value: Value,
}

/// Written in plans as `{ agent_type, predicate, percentage, set = { field, value } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawIntervention", into = "RawIntervention")]
pub struct InterventionSpec {
    pub selector: Selector,
    pub modification: Modification,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntervention {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agent_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicate: Option<Predicate>,
    #[serde(default = "hundred")]
    percentage: f64,
    set: Modification,
}

impl From<RawIntervention> for InterventionSpec {
    fn from(r: RawIntervention) -> Self {
        InterventionSpec {
            selector: Selector { agent_type: r.agent_type, predicate: r.predicate, percentage: r.percentage },
            modification: r.set,
        }
    }
}

impl From<InterventionSpec> for RawIntervention {
    fn from(i: InterventionSpec) -> Self {
        RawIntervention {
            agent_type: i.selector.agent_type,
            predicate: i.selector.predicate,
            percentage: i.selector.percentage,
            set: i.modification,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<String>,
    #[serde(default)]
    pub interventions: Vec<InterventionSpec>,
}

/// One factor of an abductive design: each level assigns `field` on the selected agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub name: String,
    pub agent_type: Option<String>,
    pub field: String,
    pub levels: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    /// Final-round metric per group with Welch tests between groups.
    CompareGroups,
    /// Metric trajectory over rounds.
    TimeSeries,
    /// Standardized effect of each factor on an observation column.
    FactorEffects,
    /// Early-to-late tercile transitions of a scenario quantity.
    Transitions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub id: String,
    pub kind: AnalysisKind,
    /// Metric id, or observation column for factor effects.
    pub target: String,
    #[serde(default)]
    pub groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub paradigm: Paradigm,
    pub context: ResearchContext,
    /// Bundled scenario name or path relative to the plan file.
    pub scenario: Option<String>,
    pub groups: Vec<GroupSpec>,
    pub factors: Vec<Factor>,
    pub replicates: u32,
    pub base_seed: u64,
    pub rounds: Option<u32>,
    pub metrics: Vec<String>,
    pub analyses: Vec<AnalysisSpec>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("plan syntax error: {0}")]
    Syntax(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    name: String,
    paradigm: Option<Paradigm>,
    #[serde(default)]
    context: ResearchContext,
    scenario: Option<String>,
    #[serde(default = "one")]
    replicates: i64,
    #[serde(default)]
    base_seed: u64,
    rounds: Option<u32>,
    #[serde(default)]
    metrics: Vec<String>,
    #[serde(default)]
    groups: Vec<GroupSpec>,
    #[serde(default)]
    factors: Vec<Factor>,
    #[serde(default)]
    analyses: Vec<AnalysisSpec>,
}

fn one() -> i64 {
    1
}

fn slug(v: &Value) -> String {
    v.to_string().chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

/// Full factorial over `factors`, first factor varying slowest.
pub fn factorial_groups(factors: &[Factor]) -> Vec<GroupSpec> {
    let mut groups = vec![GroupSpec { name: String::new(), hypothesis: None, interventions: Vec::new() }];
    for f in factors {
        let mut next = Vec::with_capacity(groups.len() * f.levels.len());
        for g in &groups {
            for level in &f.levels {
                let mut g = g.clone();
                if !g.name.is_empty() {
                    g.name.push('_');
                }
                g.name.push_str(&format!("{}-{}", f.name, slug(level)));
                g.interventions.push(InterventionSpec {
                    selector: Selector { agent_type: f.agent_type.clone(), predicate: None, percentage: 100.0 },
                    modification: Modification { field: f.field.clone(), value: level.clone() },
                });
                next.push(g);
            }
        }
        groups = next;
    }
    groups
}

fn valid_group_name(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        let invalid = |m: String| Err(PlanError::Invalid(m));
        if self.replicates < 1 {
            return invalid("replicates must be at least 1".into());
        }
        if self.groups.is_empty() {
            return invalid("plan declares no groups".into());
        }
        let mut names = BTreeSet::new();
        for g in &self.groups {
            if !valid_group_name(&g.name) {
                return invalid(format!("group name `{}` must be non-empty and use [A-Za-z0-9_.-]", g.name));
            }
            if !names.insert(&g.name) {
                return invalid(format!("duplicate group `{}`", g.name));
            }
            for i in &g.interventions {
                let p = i.selector.percentage;
                if !(p > 0.0 && p <= 100.0) {
                    return invalid(format!("group `{}`: percentage {p} outside (0, 100]", g.name));
                }
                if let Some(pred) = &i.selector.predicate {
                    if (pred.op == CmpOp::In) != matches!(pred.value, Operand::Many(_)) {
                        return invalid(format!("group `{}`: `in` takes a list and other operators a scalar", g.name));
                    }
                }
            }
        }
        match self.paradigm {
            Paradigm::Deductive if self.groups.len() < 2 => invalid("deductive plans need at least two groups".into()),
            Paradigm::Abductive if self.factors.is_empty() => invalid("abductive plans need factors".into()),
            Paradigm::Abductive if self.groups != factorial_groups(&self.factors) => {
                invalid("abductive groups must be the full factorial of the declared factors".into())
            }
            _ => Ok(()),
        }?;
        for a in &self.analyses {
            for g in &a.groups {
                if !names.contains(g) {
                    return invalid(format!("analysis `{}` names unknown group `{g}`", a.id));
                }
            }
        }
        Ok(())
    }
}

/// Parse a plan document. Abductive plans list factors and get their groups
/// generated; a missing paradigm is chosen from the research context.
pub fn parse_plan(text: &str) -> Result<ExperimentPlan, PlanError> {
    let raw: RawPlan = toml::from_str(text).map_err(|e| PlanError::Syntax(e.to_string()))?;
    let paradigm = raw.paradigm.unwrap_or_else(|| select_paradigm(&raw.context));
    let groups = if paradigm == Paradigm::Abductive && raw.groups.is_empty() {
        factorial_groups(&raw.factors)
    } else {
        raw.groups
    };
    let plan = ExperimentPlan {
        name: raw.name,
        paradigm,
        context: raw.context,
        scenario: raw.scenario,
        groups,
        factors: raw.factors,
        replicates: u32::try_from(raw.replicates).map_err(|_| PlanError::Invalid("replicates must be at least 1".into()))?,
        base_seed: raw.base_seed,
        rounds: raw.rounds,
        metrics: raw.metrics,
        analyses: raw.analyses,
    };
    plan.validate()?;
    Ok(plan)
}
