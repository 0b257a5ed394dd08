//! Synthetic classrooms: each teacher spends a fixed budget of attention
//! units per round, drawn from a softmax over one student attribute.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, weighted::WeightedIndex};

use super::{config_error, field_int, field_text};
use crate::agent::{AgentId, AgentRecord, DecisionResponse, RuleBackend};
use crate::analysis::{phase_transitions, spearman, TransitionMatrix};
use crate::behavior_graph::{Relationship, ScenarioSpec};
use crate::kernel::{
    HandlerContext, HandlerError, MetricsSnapshot, ModelError, Population, ScenarioModel, SimEvent,
    SimulationResult, Target, World,
};
use crate::seed::{mix, rng_from_seed};
use crate::value::{Value, ValueMap};

pub const TEACHER: &str = "Teacher";
pub const STUDENT: &str = "Student";
pub const HYPOTHESES: [&str; 3] = ["expression", "merit", "elite"];

/// Student attribute a hypothesis scores attention by.
pub fn hypothesis_field(hypothesis: &str) -> Option<&'static str> {
    match hypothesis {
        "expression" => Some("expression"),
        "merit" => Some("achievement"),
        "elite" => Some("ses"),
        _ => None,
    }
}

/// `softmax(values / tau)`, computed stably. `tau == 0` puts all mass on the
/// maxima, shared equally.
pub fn softmax(values: &[f64], tau: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if tau <= 0.0 {
        let top = values.iter().filter(|&&v| v == max).count() as f64;
        return values.iter().map(|&v| if v == max { 1.0 / top } else { 0.0 }).collect();
    }
    let w: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|x| x / z).collect()
}

/// Draw `budget` indivisible units with probabilities `softmax(values / tau)`.
/// The counts always sum to `budget`.
pub fn allocate_units(values: &[f64], tau: f64, budget: u32, rng: &mut impl Rng) -> Vec<u32> {
    let mut counts = vec![0u32; values.len()];
    if values.is_empty() {
        return counts;
    }
    let p = softmax(values, tau);
    match WeightedIndex::new(&p) {
        Ok(dist) => {
            for _ in 0..budget {
                counts[dist.sample(rng)] += 1;
            }
        }
        // every weight underflowed: the maxima take everything
        Err(_) => counts[0] = budget,
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassroomConfig {
    pub classrooms: usize,
    pub class_size: usize,
    pub budget: u32,
    pub tau: f64,
    pub phase_split: u32,
    /// Planted weights of expression, achievement and ses in the hidden truth.
    pub truth_weights: [f64; 3],
}

impl ClassroomConfig {
    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self, ModelError> {
        let classrooms = spec.population.get(TEACHER).copied().unwrap_or(0) as usize;
        let students = spec.population.get(STUDENT).copied().unwrap_or(0) as usize;
        if classrooms == 0 || students == 0 || students % classrooms != 0 {
            return Err(config_error(spec, format!("{students} students do not divide into {classrooms} classrooms")));
        }
        let truth_weights = [
            spec.env_real("truth_expression", 0.349),
            spec.env_real("truth_achievement", 0.034),
            spec.env_real("truth_ses", 0.029),
        ];
        if truth_weights.iter().map(|w| w * w).sum::<f64>() > 1.0 {
            return Err(config_error(spec, "truth weights must have squared sum at most 1"));
        }
        Ok(ClassroomConfig {
            classrooms,
            class_size: students / classrooms,
            budget: spec.env_int("budget", 50).max(0) as u32,
            tau: spec.env_real("tau", 1.0),
            phase_split: spec.env_int("phase_split", 15).max(0) as u32,
            truth_weights,
        })
    }
}

fn real(a: &AgentRecord, field: &str) -> f64 {
    a.get(field).and_then(Value::as_real).unwrap_or(0.0)
}

fn by_classroom(agents: &BTreeMap<AgentId, AgentRecord>) -> BTreeMap<i64, Vec<&AgentRecord>> {
    let mut out: BTreeMap<i64, Vec<&AgentRecord>> = BTreeMap::new();
    for a in agents.values().filter(|a| a.agent_type == STUDENT) {
        out.entry(a.get("classroom").and_then(Value::as_int).unwrap_or(-1)).or_default().push(a);
    }
    out
}

/// Mean over classrooms of Spearman's rho between cumulative attention and
/// `field`; classrooms where rho is undefined (e.g. no attention yet) are skipped.
pub fn mean_classroom_rho(agents: &BTreeMap<AgentId, AgentRecord>, field: &str) -> Option<f64> {
    let rhos: Vec<f64> = by_classroom(agents)
        .values()
        .filter_map(|students| {
            let att: Vec<f64> = students.iter().map(|s| real(s, "attention")).collect();
            let other: Vec<f64> = students.iter().map(|s| real(s, field)).collect();
            spearman(&att, &other).ok().map(|r| r.estimate)
        })
        .collect();
    (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64)
}

/// Early-to-late attention-tercile transitions, terciles taken per classroom per phase.
pub fn attention_transitions(agents: &[AgentRecord]) -> Result<TransitionMatrix, String> {
    let rows: Vec<&ValueMap> = agents.iter().filter(|a| a.agent_type == STUDENT).map(|a| &a.profile).collect();
    phase_transitions(rows, "attention", "classroom")
}

fn rule_backend() -> RuleBackend {
    RuleBackend::new("classroom", |req| match req.node.as_str() {
        "allocate_attention" => DecisionResponse::action("receive_attention"),
        _ => DecisionResponse::skip(),
    })
}

const TEACHER_TEMPLATE: &str = "You teach classroom {self.classroom} and will distribute {env.budget} units of \
attention among your students this round.\nReply `ACTION: receive_attention` to proceed or `ACTION: skip`.";

#[derive(Debug, Clone, Copy, Default)]
pub struct ClassroomModel;

impl ScenarioModel for ClassroomModel {
    fn name(&self) -> &'static str {
        "classroom"
    }

    fn populate(&self, spec: &ScenarioSpec, seed: u64) -> Result<Population, ModelError> {
        let cfg = ClassroomConfig::from_spec(spec)?;
        let teacher_t = spec.agent_type(TEACHER).ok_or_else(|| config_error(spec, "missing Teacher type"))?;
        let student_t = spec.agent_type(STUDENT).ok_or_else(|| config_error(spec, "missing Student type"))?;
        let mut rng = rng_from_seed(mix(&[seed, 0xC1A5]));
        let [we, wa, ws] = cfg.truth_weights;
        let residual = (1.0 - we * we - wa * wa - ws * ws).sqrt();
        let mut agents = Vec::new();
        let mut relationships = Vec::new();
        let stride = cfg.class_size as u64 + 1;
        for c in 0..cfg.classrooms as u64 {
            let teacher = c * stride;
            let profile: ValueMap = [
                ("hypothesis".to_string(), Value::from("expression")),
                ("classroom".to_string(), Value::Int(c as i64)),
            ]
            .into_iter()
            .collect();
            agents.push(AgentRecord::new(AgentId(teacher), teacher_t, profile)?);
            for k in 1..stride {
                let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
                let (e, a, s, noise) = (z(), z(), z(), z());
                let profile: ValueMap = [
                    ("classroom".to_string(), Value::Int(c as i64)),
                    ("expression".to_string(), Value::Real(e)),
                    ("achievement".to_string(), Value::Real(a)),
                    ("ses".to_string(), Value::Real(s)),
                    ("truth".to_string(), Value::Real(we * e + wa * a + ws * s + residual * noise)),
                    ("attention".to_string(), Value::Real(0.0)),
                    ("attention_early".to_string(), Value::Real(0.0)),
                ]
                .into_iter()
                .collect();
                agents.push(AgentRecord::new(AgentId(teacher + k), student_t, profile)?);
                relationships.push(Relationship { a: teacher, b: teacher + k, weight: 1.0 });
            }
        }
        Ok(Population { agents, relationships, subscriptions: Vec::new() })
    }

    fn handle(&self, ctx: &mut HandlerContext<'_>, agent: &mut AgentRecord, event: &SimEvent) -> Result<(), HandlerError> {
        let cfg = ClassroomConfig::from_spec(ctx.spec()).map_err(|e| HandlerError::new(e.to_string()))?;
        match ctx.node.action_name.as_str() {
            "allocate_attention" => {
                let hypothesis = field_text(&agent.profile, "hypothesis")?;
                let field = hypothesis_field(&hypothesis)
                    .ok_or_else(|| HandlerError::new(format!("unknown hypothesis `{hypothesis}`")))?;
                if ctx.decide(agent, None, ValueMap::new())?.is_skip() {
                    return Ok(());
                }
                let students: Vec<AgentId> = ctx.neighbors(agent.id).iter().map(|&(s, _)| s).collect();
                let values: Vec<f64> = students
                    .iter()
                    .map(|s| ctx.peer(*s).and_then(|v| v.get(field)).and_then(Value::as_real).unwrap_or(0.0))
                    .collect();
                let round = ctx.round;
                let units = allocate_units(&values, cfg.tau, cfg.budget, ctx.rng());
                for (s, u) in students.into_iter().zip(units) {
                    if u == 0 {
                        continue;
                    }
                    let payload = [
                        ("units".to_string(), Value::Int(i64::from(u))),
                        ("round".to_string(), Value::Int(i64::from(round))),
                    ]
                    .into_iter()
                    .collect();
                    ctx.emit("receive_attention", Target::Agent(s), payload)?;
                }
                Ok(())
            }
            "receive_attention" => {
                let units = field_int(&event.payload, "units")? as f64;
                let allocated_in = field_int(&event.payload, "round")?;
                let spec = ctx.spec().agent_type(STUDENT).expect("validated type");
                agent.set_field(spec, "attention", Value::Real(real(agent, "attention") + units))?;
                if allocated_in <= i64::from(cfg.phase_split) {
                    agent.set_field(spec, "attention_early", Value::Real(real(agent, "attention_early") + units))?;
                }
                Ok(())
            }
            other => Err(HandlerError::new(format!("no classroom handler for `{other}`"))),
        }
    }

    fn rule(&self) -> RuleBackend {
        rule_backend()
    }

    fn metrics(&self, _world: &World, agents: &BTreeMap<AgentId, AgentRecord>) -> MetricsSnapshot {
        let mut m = MetricsSnapshot::new();
        let total: f64 = agents.values().filter(|a| a.agent_type == STUDENT).map(|a| real(a, "attention")).sum();
        m.insert("attention_total".into(), total);
        for (metric, field) in [
            ("spearman_truth", "truth"),
            ("rho_expression", "expression"),
            ("rho_achievement", "achievement"),
            ("rho_ses", "ses"),
        ] {
            if let Some(r) = mean_classroom_rho(agents, field) {
                m.insert(metric.into(), r);
            }
        }
        m
    }

    fn observations(&self, result: &SimulationResult) -> Vec<ValueMap> {
        result
            .final_agents
            .iter()
            .filter(|a| a.agent_type == STUDENT)
            .map(|a| {
                let mut row: ValueMap = a.profile.clone();
                row.insert("student".into(), Value::Int(a.id.0 as i64));
                row
            })
            .collect()
    }

    fn prompt_templates(&self) -> BTreeMap<String, String> {
        [("allocate_attention".to_string(), TEACHER_TEMPLATE.to_string())].into_iter().collect()
    }
}
